use super::locate::{locate_candidates, otsu_threshold, SymbolCandidate, Threshold};
use super::raster::{BBox, Raster};
use super::{Detection, FailureCause, OCCLUDER_GRAY};
use crate::microqr::{decode, SymbolMatrix};

/// Grid offsets tried per candidate, in module units.
const SHIFTS: [(f64, f64); 5] = [(0.0, 0.0), (0.2, 0.0), (-0.2, 0.0), (0.0, 0.2), (0.0, -0.2)];

/// Samples a `side`×`side` module grid at module centers, shifted by
/// (dx, dy) modules.
pub fn sample_candidate(
    raster: &Raster,
    cand: &SymbolCandidate,
    side: usize,
    dx: f64,
    dy: f64,
    threshold: u8,
) -> SymbolMatrix {
    let mut sym = SymbolMatrix::new(side).expect("candidate sides are Micro QR sides");
    for r in 0..side {
        for c in 0..side {
            let (x, y) = cand.module_center(r, c);
            let v = raster.sample(x + dx * cand.module_w - 0.5, y + dy * cand.module_h - 0.5);
            sym.set(r, c, v <= threshold as f64);
        }
    }
    sym
}

fn try_decode(raster: &Raster, cand: &SymbolCandidate, threshold: Threshold) -> Option<(BBox, String)> {
    for side in std::iter::once(cand.side).chain(cand.alternatives.iter().copied()) {
        let Some(bbox) = cand.bbox_for_side(side, raster) else { continue };
        let levels = match threshold {
            Threshold::Fixed(t) => vec![t],
            Threshold::Otsu => vec![otsu_threshold(raster, &bbox), cand.threshold],
        };
        for t in levels {
            for (dx, dy) in SHIFTS {
                if let Ok(d) = decode(&sample_candidate(raster, cand, side, dx, dy, t)) {
                    return Some((bbox, d.text_lossy()));
                }
            }
        }
    }
    None
}

/// Guesses why a region failed to decode: a flat mid-gray patch means an
/// occluder, a high share of mid-tones means blur.
pub fn classify_failure(raster: &Raster, bbox: &BBox) -> FailureCause {
    let mut flat_gray = 0usize;
    for y in bbox.y..bbox.y + bbox.h {
        for x in bbox.x..bbox.x + bbox.w {
            let g = |x: usize, y: usize| raster.get(x, y) == OCCLUDER_GRAY;
            if g(x, y)
                && (x == 0 || g(x - 1, y))
                && (y == 0 || g(x, y - 1))
                && (x + 1 == raster.width() || g(x + 1, y))
                && (y + 1 == raster.height() || g(x, y + 1))
            {
                flat_gray += 1;
            }
        }
    }
    let n = bbox.area() as f64;
    if flat_gray as f64 >= 0.05 * n {
        return FailureCause::Occlusion;
    }
    let t = otsu_threshold(raster, bbox) as f64;
    let (mut s0, mut n0, mut s1, mut n1) = (0.0, 0usize, 0.0, 0usize);
    for y in bbox.y..bbox.y + bbox.h {
        for x in bbox.x..bbox.x + bbox.w {
            let v = raster.get(x, y) as f64;
            if v <= t {
                s0 += v;
                n0 += 1;
            } else {
                s1 += v;
                n1 += 1;
            }
        }
    }
    if n0 == 0 || n1 == 0 {
        return FailureCause::Unreadable;
    }
    let (m0, m1) = (s0 / n0 as f64, s1 / n1 as f64);
    let band = (m0 + 0.25 * (m1 - m0), m1 - 0.25 * (m1 - m0));
    let mid = (bbox.y..bbox.y + bbox.h)
        .flat_map(|y| (bbox.x..bbox.x + bbox.w).map(move |x| (x, y)))
        .filter(|&(x, y)| {
            let v = raster.get(x, y) as f64;
            v > band.0 && v < band.1
        })
        .count();
    if m1 - m0 < 96.0 || mid as f64 > 0.2 * n {
        FailureCause::Blur
    } else {
        FailureCause::Unreadable
    }
}

/// Locates and decodes symbols with Otsu binarization. `name` carries the
/// raw payload text; mapping payloads to object names is the caller's job.
pub fn detect_and_decode(raster: &Raster, roi: Option<&BBox>) -> Vec<Detection> {
    detect_and_decode_with(raster, roi, 0, Threshold::Otsu)
}

/// With an ROI, yields the decoded symbols inside it or else exactly one
/// negative detection. Without one, failed candidates that do not overlap
/// a decoded symbol become negatives.
pub fn detect_and_decode_with(
    raster: &Raster,
    roi: Option<&BBox>,
    frame_idx: usize,
    threshold: Threshold,
) -> Vec<Detection> {
    let region = match roi {
        Some(r) if r.fits_in(raster.width(), raster.height()) => *r,
        Some(_) => return Vec::new(),
        None => raster.full_bbox(),
    };
    let mut positives: Vec<Detection> = Vec::new();
    let mut failed: Vec<BBox> = Vec::new();
    for cand in locate_candidates(raster, &region, threshold) {
        match try_decode(raster, &cand, threshold) {
            Some((bbox, text)) => {
                if !positives.iter().any(|p| p.bbox.iou(&bbox) > 0.5) {
                    positives.push(Detection::positive(frame_idx, bbox, text));
                }
            }
            None => failed.extend(cand.bbox(raster)),
        }
    }
    if roi.is_some() {
        if positives.is_empty() {
            let bbox = failed.first().copied().unwrap_or(region);
            return vec![Detection::negative(frame_idx, bbox, classify_failure(raster, &region))];
        }
        return positives;
    }
    let negatives: Vec<Detection> = failed
        .into_iter()
        .filter(|b| positives.iter().all(|p| p.bbox.intersection(b) == 0))
        .map(|b| Detection::negative(frame_idx, b, classify_failure(raster, &b)))
        .collect();
    positives.extend(negatives);
    positives
}
