//! Synthetic capture degradations: defocus, motion blur, downscaling and a
//! mid-gray occluder.

use super::raster::Raster;
use crate::seed;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DegradationSpec {
    /// Gaussian standard deviation in pixels.
    pub gaussian_sigma: f64,
    /// Motion-blur streak length in pixels.
    pub motion_len: f64,
    /// Streak direction in radians.
    pub motion_angle: f64,
    /// Fraction of the raster area hidden by the occluder.
    pub occlusion_fraction: f64,
    /// Output size relative to the input, in (0, 1].
    pub scale: f64,
}

impl Default for DegradationSpec {
    fn default() -> Self {
        Self { gaussian_sigma: 0.0, motion_len: 0.0, motion_angle: 0.0, occlusion_fraction: 0.0, scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid degradation: {0}")]
pub struct InvalidDegradation(pub &'static str);

/// Gray level painted by the occluder.
pub const OCCLUDER_GRAY: u8 = 128;

impl DegradationSpec {
    pub fn gaussian(sigma: f64) -> Self {
        Self { gaussian_sigma: sigma, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), InvalidDegradation> {
        let finite = [self.gaussian_sigma, self.motion_len, self.motion_angle, self.occlusion_fraction, self.scale]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(InvalidDegradation("non-finite field"));
        }
        if self.gaussian_sigma < 0.0 {
            return Err(InvalidDegradation("gaussian_sigma < 0"));
        }
        if self.motion_len < 0.0 {
            return Err(InvalidDegradation("motion_len < 0"));
        }
        if !(0.0..=1.0).contains(&self.occlusion_fraction) {
            return Err(InvalidDegradation("occlusion_fraction outside [0, 1]"));
        }
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            return Err(InvalidDegradation("scale outside (0, 1]"));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.gaussian_sigma == 0.0 && self.motion_len == 0.0 && self.occlusion_fraction == 0.0 && self.scale == 1.0
    }
}

/// Applies blur, motion blur, rescale and occlusion in that order.
pub fn degrade(raster: &Raster, spec: &DegradationSpec, seed: u64) -> Result<Raster, InvalidDegradation> {
    spec.validate()?;
    let mut out = raster.clone();
    if spec.gaussian_sigma > 0.0 {
        out = gaussian_blur(&out, spec.gaussian_sigma);
    }
    if spec.motion_len > 0.0 {
        out = motion_blur(&out, spec.motion_len, spec.motion_angle);
    }
    if spec.scale < 1.0 {
        out = rescale(&out, spec.scale);
    }
    if spec.occlusion_fraction > 0.0 {
        occlude(&mut out, spec.occlusion_fraction, seed);
    }
    Ok(out)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let k: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = k.iter().sum();
    k.into_iter().map(|v| v / sum).collect()
}

/// Separable Gaussian truncated at 3σ, clamp-to-edge borders.
pub fn gaussian_blur(raster: &Raster, sigma: f64) -> Raster {
    let (w, h) = (raster.width(), raster.height());
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as i64;
    let src = raster.to_f64();
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * src[y * w + (x as i64 + i as i64 - r).clamp(0, w as i64 - 1) as usize])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * tmp[(y as i64 + i as i64 - r).clamp(0, h as i64 - 1) as usize * w + x])
                .sum();
        }
    }
    Raster::from_f64(w, h, &out)
}

/// Averages bilinear samples along a centered segment of `len` pixels.
pub fn motion_blur(raster: &Raster, len: f64, angle: f64) -> Raster {
    let (w, h) = (raster.width(), raster.height());
    let n = len.ceil() as usize + 1;
    let (dx, dy) = (angle.cos(), angle.sin());
    let offsets: Vec<f64> = (0..n).map(|i| -len / 2.0 + len * i as f64 / (n - 1) as f64).collect();
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let s: f64 = offsets.iter().map(|&t| raster.sample(x as f64 + t * dx, y as f64 + t * dy)).sum();
            out[y * w + x] = s / n as f64;
        }
    }
    Raster::from_f64(w, h, &out)
}

/// Bilinear resampling to `round(scale · size)` pixels per axis.
pub fn rescale(raster: &Raster, scale: f64) -> Raster {
    let nw = ((raster.width() as f64 * scale).round() as usize).max(1);
    let nh = ((raster.height() as f64 * scale).round() as usize).max(1);
    let sx = raster.width() as f64 / nw as f64;
    let sy = raster.height() as f64 / nh as f64;
    let mut out = Vec::with_capacity(nw * nh);
    for y in 0..nh {
        for x in 0..nw {
            out.push(raster.sample((x as f64 + 0.5) * sx - 0.5, (y as f64 + 0.5) * sy - 0.5));
        }
    }
    Raster::from_f64(nw, nh, &out)
}

/// Paints a seeded rectangle covering `fraction` of the area with mid-gray.
pub fn occlude(raster: &mut Raster, fraction: f64, seed: u64) {
    let (w, h) = (raster.width(), raster.height());
    let target = fraction * (w * h) as f64;
    let mut rng = seed::rng(seed::derive(seed, 0x0cc1));
    let aspect: f64 = rng.gen_range(0.5..2.0);
    let mut rw = ((target * aspect).sqrt().round() as usize).clamp(1, w);
    let mut rh = ((target / rw as f64).round() as usize).clamp(1, h);
    if rh == h {
        rw = ((target / h as f64).round() as usize).clamp(1, w);
    } else if rw == w {
        rh = ((target / w as f64).round() as usize).clamp(1, h);
    }
    let x0 = rng.gen_range(0..=w - rw);
    let y0 = rng.gen_range(0..=h - rh);
    for y in y0..y0 + rh {
        for x in x0..x0 + rw {
            raster.set(x, y, OCCLUDER_GRAY);
        }
    }
}
