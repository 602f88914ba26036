//! Raster substrate: symbol rendering, degradations, symbol location and
//! decoding, synthetic scenes and the recall-by-size study.

mod degrade;
mod detect;
mod locate;
mod raster;
mod recall;
mod scene;

pub use degrade::{
    degrade, gaussian_blur, motion_blur, occlude, rescale, DegradationSpec, InvalidDegradation, OCCLUDER_GRAY,
};
pub use detect::{classify_failure, detect_and_decode, detect_and_decode_with, sample_candidate};
pub use locate::{locate_candidates, locate_symbols, otsu_threshold, SymbolCandidate, Threshold};
pub use raster::{BBox, Raster, RasterError};
pub use recall::{recall_study, RecallRow, RecallStudy};
pub use scene::{
    module_px, symbol_for, synth_scene, Camera, HandEvent, Scene, SceneError, SceneObject, SceneSpec, QUIET_ZONE,
};

use crate::microqr::SymbolMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureCause {
    Blur,
    Occlusion,
    Unreadable,
}

/// One symbol sighting. `name` is set for positive detections and
/// `decode_failure` for negative ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "frame")]
    pub frame_idx: usize,
    pub bbox: BBox,
    pub name: Option<String>,
    #[serde(rename = "failure")]
    pub decode_failure: Option<FailureCause>,
}

impl Detection {
    pub fn positive(frame_idx: usize, bbox: BBox, name: impl Into<String>) -> Self {
        Self { frame_idx, bbox, name: Some(name.into()), decode_failure: None }
    }

    pub fn negative(frame_idx: usize, bbox: BBox, cause: FailureCause) -> Self {
        Self { frame_idx, bbox, name: None, decode_failure: Some(cause) }
    }

    pub fn is_positive(&self) -> bool {
        self.name.is_some()
    }
}

/// Integer-pitch rendering: dark modules 0, light 255, with a light quiet
/// zone of `quiet_zone` modules.
pub fn rasterize_symbol(symbol: &SymbolMatrix, module_px: usize, quiet_zone: usize) -> Raster {
    assert!(module_px >= 1, "module_px must be >= 1");
    let side = symbol.side();
    let n = (side + 2 * quiet_zone) * module_px;
    let mut r = Raster::filled(n, n, 255);
    for row in 0..side {
        for col in 0..side {
            if symbol.get(row, col) {
                for dy in 0..module_px {
                    for dx in 0..module_px {
                        r.set((col + quiet_zone) * module_px + dx, (row + quiet_zone) * module_px + dy, 0);
                    }
                }
            }
        }
    }
    r
}

/// Draws `symbol` (plus a light quiet zone) onto `frame` with its top-left
/// module corner at continuous position (x, y) and a possibly fractional
/// module pitch. Partially covered pixels get their 4×4 supersampled
/// coverage.
pub fn draw_symbol(frame: &mut Raster, symbol: &SymbolMatrix, x: f64, y: f64, module: f64, quiet_zone: usize) {
    let side = symbol.side() as f64;
    let q = quiet_zone as f64;
    let Some(area) = BBox::covering(
        x - q * module,
        y - q * module,
        x + (side + q) * module,
        y + (side + q) * module,
        frame.width(),
        frame.height(),
    ) else {
        return;
    };
    const SS: usize = 4;
    for py in area.y..area.y + area.h {
        for px in area.x..area.x + area.w {
            let old = frame.get(px, py) as f64;
            let mut acc = 0.0;
            for sy in 0..SS {
                for sx in 0..SS {
                    let u = (px as f64 + (sx as f64 + 0.5) / SS as f64 - x) / module;
                    let v = (py as f64 + (sy as f64 + 0.5) / SS as f64 - y) / module;
                    acc += if u < -q || v < -q || u >= side + q || v >= side + q {
                        old
                    } else if u < 0.0 || v < 0.0 || u >= side || v >= side {
                        255.0
                    } else if symbol.get(v as usize, u as usize) {
                        0.0
                    } else {
                        255.0
                    };
                }
            }
            frame.set(px, py, (acc / (SS * SS) as f64).round() as u8);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::microqr::{encode, EcLevel, Payload, Version};

    fn gp1() -> SymbolMatrix {
        encode(&Payload::auto("GP1").unwrap(), Version::M2, EcLevel::L, None).unwrap()
    }

    #[test]
    fn rasterized_size() {
        let sym = encode(&Payload::auto("7").unwrap(), Version::M1, EcLevel::DetectOnly, None).unwrap();
        let r = rasterize_symbol(&sym, 4, 2);
        assert_eq!((r.width(), r.height()), (60, 60));
    }

    #[test]
    fn sampling_module_centers_recovers_symbol() {
        let sym = gp1();
        for px in [1, 3, 5] {
            let r = rasterize_symbol(&sym, px, 2);
            let side = sym.side();
            let back: Vec<bool> = (0..side * side)
                .map(|i| r.get((i % side + 2) * px + px / 2, (i / side + 2) * px + px / 2) < 128)
                .collect();
            assert_eq!(back, sym.modules());
        }
    }

    #[test]
    fn draw_matches_rasterize_on_integer_grid() {
        let sym = gp1();
        let r = rasterize_symbol(&sym, 3, 2);
        let mut f = Raster::filled(r.width(), r.height(), 77);
        draw_symbol(&mut f, &sym, 6.0, 6.0, 3.0, 2);
        assert_eq!(f, r);
    }

    #[test]
    fn detection_json_shape() {
        let d = Detection::negative(3, BBox::new(1, 2, 3, 4), FailureCause::Blur);
        assert_eq!(serde_json::to_string(&d).unwrap(), r#"{"frame":3,"bbox":[1,2,3,4],"name":null,"failure":"blur"}"#);
        let p = Detection::positive(0, BBox::new(0, 0, 1, 1), "GP1");
        let back: Detection = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
    }
}
