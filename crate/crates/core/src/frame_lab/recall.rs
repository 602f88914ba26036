//! Recall of symbol reading as a function of printed size.

use super::degrade::{degrade, DegradationSpec, InvalidDegradation};
use super::detect::detect_and_decode;
use super::draw_symbol;
use super::raster::{BBox, Raster};
use super::scene::{module_px, symbol_for, QUIET_ZONE};
use crate::seed;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallStudy {
    pub sizes_cm: Vec<u8>,
    pub grid: Vec<DegradationSpec>,
    /// Frames per (size, grid cell).
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_px_per_cm")]
    pub px_per_cm: f64,
}

fn default_px_per_cm() -> f64 {
    12.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallRow {
    pub size_cm: u8,
    pub decoded: usize,
    pub total: usize,
    pub recall_pct: f64,
    /// Recall per grid cell, in grid order.
    pub per_spec_pct: Vec<f64>,
}

impl RecallStudy {
    /// Gaussian blur sweep from sharp to about one 2 cm module.
    pub fn default_blur_grid() -> Vec<DegradationSpec> {
        [0.0, 0.4, 0.8, 1.2, 1.6, 2.0].into_iter().map(DegradationSpec::gaussian).collect()
    }

    pub fn with_defaults(trials: usize, seed: u64) -> Self {
        Self { sizes_cm: vec![1, 2, 3], grid: Self::default_blur_grid(), trials, seed, px_per_cm: default_px_per_cm() }
    }
}

fn trial_payload(rng: &mut impl Rng) -> String {
    match rng.gen_range(0..3) {
        0 => format!("{}", rng.gen_range(0..100_000u32)),
        1 => format!("GP{}", rng.gen_range(0..1000u32)),
        _ => (0..rng.gen_range(2..=4)).map(|_| (b'A' + rng.gen_range(0..26)) as char).collect(),
    }
}

/// Recall per size. Trial `t` uses the same payload, placement and
/// degradation seed for every size and grid cell.
pub fn recall_study(study: &RecallStudy) -> Result<Vec<RecallRow>, InvalidDegradation> {
    for g in &study.grid {
        g.validate()?;
    }
    let trials: Vec<(String, usize, usize, u64)> = (0..study.trials)
        .map(|t| {
            let s = seed::derive(study.seed, t as u64);
            let mut rng = seed::rng(s);
            let payload = trial_payload(&mut rng);
            (payload, rng.gen_range(0..8), rng.gen_range(0..8), s)
        })
        .collect();
    let mut rows = Vec::new();
    for &size in &study.sizes_cm {
        let mut per_spec = Vec::with_capacity(study.grid.len());
        let mut decoded = 0;
        for spec in &study.grid {
            let mut ok = 0;
            for (payload, ox, oy, s) in &trials {
                let sym = symbol_for(payload).expect("trial payloads fit M2");
                let m = module_px(size as f64, study.px_per_cm, sym.side());
                let label = (sym.side() + 2 * QUIET_ZONE) * m;
                let n = label + 24;
                let mut frame = Raster::filled(n, n, 190);
                let at = (8 + ox + QUIET_ZONE * m) as f64;
                draw_symbol(&mut frame, &sym, at, (8 + oy + QUIET_ZONE * m) as f64, m as f64, QUIET_ZONE);
                let frame = degrade(&frame, spec, *s)?;
                let roi = BBox::new(0, 0, frame.width(), frame.height());
                if detect_and_decode(&frame, Some(&roi)).iter().any(|d| d.name.as_deref() == Some(payload.as_str())) {
                    ok += 1;
                }
            }
            decoded += ok;
            per_spec.push(100.0 * ok as f64 / study.trials.max(1) as f64);
        }
        let total = study.trials * study.grid.len();
        rows.push(RecallRow {
            size_cm: size,
            decoded,
            total,
            recall_pct: if total == 0 { 0.0 } else { 100.0 * decoded as f64 / total as f64 },
            per_spec_pct: per_spec,
        });
    }
    Ok(rows)
}
