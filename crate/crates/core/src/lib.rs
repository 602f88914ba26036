pub mod eval;
pub mod frame_lab;
pub mod labeling;
pub mod microqr;
pub mod seed;
pub mod steps;
