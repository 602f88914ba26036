//! Synthetic egocentric scenes: textured objects carrying a Micro QR label,
//! one touched object per frame following a hand script.

use super::degrade::{degrade, DegradationSpec, InvalidDegradation};
use super::raster::{BBox, Raster};
use super::{draw_symbol, Detection};
use crate::microqr::{encode, CodecError, EcLevel, Payload, SymbolMatrix, Version};
use crate::seed;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

pub const QUIET_ZONE: usize = 2;
const BACKGROUND: u8 = 190;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub name: String,
    pub qr_size_cm: u8,
    pub feature_seed: u64,
    /// Text stored in the symbol; the name itself when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
}

impl SceneObject {
    pub fn payload_text(&self) -> &str {
        self.payload.as_deref().unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    #[serde(default = "default_px_per_cm")]
    pub px_per_cm: f64,
}

fn default_px_per_cm() -> f64 {
    12.0
}

impl Default for Camera {
    fn default() -> Self {
        Self { width: 320, height: 240, px_per_cm: default_px_per_cm() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub objects: Vec<SceneObject>,
    pub frames: usize,
    pub fps: f64,
    #[serde(default)]
    pub camera: Camera,
    /// Touched object per frame, `null` for none; repeated cyclically.
    pub hand_script: Vec<Option<String>>,
    /// Per-frame degradation, repeated cyclically; empty means none.
    #[serde(default)]
    pub degradation: Vec<DegradationSpec>,
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("frames must be >= 1")]
    NoFrames,
    #[error("fps must be finite and > 0")]
    BadFps,
    #[error("duplicate object name {0:?}")]
    DuplicateName(String),
    #[error("object {0:?}: qr_size_cm must be 1, 2 or 3")]
    BadSize(String),
    #[error("hand script names unknown object {0:?}")]
    UnknownObject(String),
    #[error("camera: {0}")]
    BadCamera(String),
    #[error("object {name:?}: {source}")]
    Payload { name: String, source: CodecError },
    #[error(transparent)]
    Degradation(#[from] InvalidDegradation),
}

/// Hand-object detector stand-in: the touched object and its box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandEvent {
    pub frame: usize,
    pub name: Option<String>,
    pub bbox: Option<BBox>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub frames: Vec<Raster>,
    pub truth: Vec<Detection>,
    pub hand_trace: Vec<HandEvent>,
}

/// M2-L when the payload fits, otherwise the smallest symbol that does.
pub fn symbol_for(payload: &str) -> Result<SymbolMatrix, CodecError> {
    let p = Payload::auto(payload)?;
    match encode(&p, Version::M2, EcLevel::L, None) {
        Err(CodecError::CapacityExceeded { .. } | CodecError::InvalidPayload(_)) => {
            let (v, e) = p
                .smallest_fit()
                .ok_or(CodecError::CapacityExceeded { needed_bits: p.data().len() * 8, available_bits: 128 })?;
            encode(&p, v, e, None)
        }
        r => r,
    }
}

/// Whole pixels per module for a symbol of `side` modules printed at
/// `size_cm`.
pub fn module_px(size_cm: f64, px_per_cm: f64, side: usize) -> usize {
    ((size_cm * px_per_cm / side as f64).round() as usize).max(1)
}

struct Prepared {
    symbol: SymbolMatrix,
    module: usize,
    obj_w: usize,
    obj_h: usize,
    texture: Texture,
}

/// Two superposed gratings: a coarse one that survives blur and a fine one.
#[derive(Clone, Copy)]
struct Texture {
    base: f64,
    waves: [(f64, f64, f64, f64, f64); 2],
}

impl Texture {
    fn from_seed(s: u64) -> Self {
        let mut rng = seed::rng(seed::derive(s, 0x7e47));
        let mut wave = |period: std::ops::Range<f64>, amp: std::ops::Range<f64>| {
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            (
                theta.cos(),
                theta.sin(),
                rng.gen_range(period),
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(amp),
            )
        };
        let waves = [wave(18.0..40.0, 30.0..60.0), wave(4.0..10.0, 15.0..35.0)];
        Texture { base: rng.gen_range(60.0..160.0), waves }
    }

    fn at(&self, x: f64, y: f64) -> u8 {
        let v: f64 = self
            .waves
            .iter()
            .map(|&(c, s, period, phase, amp)| amp * ((x * c + y * s) / period * std::f64::consts::TAU + phase).sin())
            .sum();
        (self.base + v).round().clamp(0.0, 255.0) as u8
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.frames == 0 {
            return Err(SceneError::NoFrames);
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(SceneError::BadFps);
        }
        let mut names = BTreeSet::new();
        for o in &self.objects {
            if !names.insert(o.name.as_str()) {
                return Err(SceneError::DuplicateName(o.name.clone()));
            }
            if !(1..=3).contains(&o.qr_size_cm) {
                return Err(SceneError::BadSize(o.name.clone()));
            }
        }
        for n in self.hand_script.iter().flatten() {
            if !names.contains(n.as_str()) {
                return Err(SceneError::UnknownObject(n.clone()));
            }
        }
        let c = &self.camera;
        if c.width == 0 || c.height == 0 || !(c.px_per_cm.is_finite() && c.px_per_cm > 0.0) {
            return Err(SceneError::BadCamera("width, height and px_per_cm must be positive".into()));
        }
        for d in &self.degradation {
            d.validate()?;
        }
        Ok(())
    }

    pub fn touched(&self, frame: usize) -> Option<&SceneObject> {
        if self.hand_script.is_empty() {
            return None;
        }
        let name = self.hand_script[frame % self.hand_script.len()].as_ref()?;
        self.objects.iter().find(|o| &o.name == name)
    }

    fn prepare(&self, o: &SceneObject) -> Result<Prepared, SceneError> {
        let symbol =
            symbol_for(o.payload_text()).map_err(|source| SceneError::Payload { name: o.name.clone(), source })?;
        let module = module_px(o.qr_size_cm as f64, self.camera.px_per_cm, symbol.side());
        let label = (symbol.side() + 2 * QUIET_ZONE) * module;
        let (obj_w, obj_h) = ((2 * label).max(48), (label * 3 / 2).max(36));
        if obj_w + 2 > self.camera.width || obj_h + 2 > self.camera.height {
            return Err(SceneError::BadCamera(format!("object {:?} ({obj_w}x{obj_h} px) does not fit", o.name)));
        }
        Ok(Prepared { symbol, module, obj_w, obj_h, texture: Texture::from_seed(o.feature_seed) })
    }
}

/// Renders every frame of the scene. Frame `i` depends only on (spec,
/// seed, i).
pub fn synth_scene(spec: &SceneSpec, seed: u64) -> Result<Scene, SceneError> {
    spec.validate()?;
    let prepared = spec.objects.iter().map(|o| spec.prepare(o)).collect::<Result<Vec<_>, _>>()?;
    let mut frames = Vec::with_capacity(spec.frames);
    let mut truth = Vec::new();
    let mut hand_trace = Vec::with_capacity(spec.frames);
    for i in 0..spec.frames {
        let (frame, touched) = render_frame(spec, &prepared, seed, i)?;
        match touched {
            Some((name, obj_box, sym_box)) => {
                truth.push(Detection::positive(i, sym_box, name.clone()));
                hand_trace.push(HandEvent { frame: i, name: Some(name), bbox: Some(obj_box) });
            }
            None => hand_trace.push(HandEvent { frame: i, name: None, bbox: None }),
        }
        frames.push(frame);
    }
    Ok(Scene { frames, truth, hand_trace })
}

type Touch = Option<(String, BBox, BBox)>;

fn render_frame(spec: &SceneSpec, prepared: &[Prepared], seed: u64, i: usize) -> Result<(Raster, Touch), SceneError> {
    let cam = &spec.camera;
    let fseed = seed::derive(seed, i as u64);
    let mut rng = seed::rng(fseed);
    let mut frame = Raster::filled(cam.width, cam.height, BACKGROUND);
    let mut touch = None;
    if let Some(obj) = spec.touched(i) {
        let idx = spec.objects.iter().position(|o| o.name == obj.name).expect("validated");
        let p = &prepared[idx];
        let ox = rng.gen_range(1..=cam.width - p.obj_w - 1);
        let oy = rng.gen_range(1..=cam.height - p.obj_h - 1);
        for y in 0..p.obj_h {
            for x in 0..p.obj_w {
                frame.set(ox + x, oy + y, p.texture.at(x as f64, y as f64));
            }
        }
        let side_px = p.symbol.side() * p.module;
        let label = side_px + 2 * QUIET_ZONE * p.module;
        let lx = ox + (p.obj_w - label) / 2 + QUIET_ZONE * p.module;
        let ly = oy + (p.obj_h - label) / 2 + QUIET_ZONE * p.module;
        draw_symbol(&mut frame, &p.symbol, lx as f64, ly as f64, p.module as f64, QUIET_ZONE);
        touch = Some((obj.name.clone(), BBox::new(ox, oy, p.obj_w, p.obj_h), BBox::new(lx, ly, side_px, side_px)));
    }
    if spec.degradation.is_empty() {
        return Ok((frame, touch));
    }
    let d = &spec.degradation[i % spec.degradation.len()];
    let out = degrade(&frame, d, fseed)?;
    if (out.width(), out.height()) != (frame.width(), frame.height()) {
        let (sx, sy) = (out.width() as f64 / frame.width() as f64, out.height() as f64 / frame.height() as f64);
        let scale_box = |b: BBox| {
            BBox::covering(
                b.x as f64 * sx,
                b.y as f64 * sy,
                (b.x + b.w) as f64 * sx,
                (b.y + b.h) as f64 * sy,
                out.width(),
                out.height(),
            )
            .expect("scaled box is non-empty")
        };
        touch = touch.map(|(n, o, s)| (n, scale_box(o), scale_box(s)));
    }
    Ok((out, touch))
}
