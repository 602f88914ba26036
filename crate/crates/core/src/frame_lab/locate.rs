//! Finder-pattern search for axis-aligned Micro QR symbols.
//!
//! Rows of the binarized region are scanned for dark/light runs in the
//! 1:1:3:1:1 ratio, each hit is confirmed by a vertical and a second
//! horizontal cross-check through its center, and the symbol size is read
//! off the timing pattern that leaves the finder along row 0 and column 0.

use super::raster::{BBox, Raster};

/// Binarization threshold: pixels at or below it are dark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Threshold {
    /// Otsu over the region being examined.
    #[default]
    Otsu,
    Fixed(u8),
}

impl Threshold {
    pub fn resolve(self, raster: &Raster, region: &BBox) -> u8 {
        match self {
            Threshold::Fixed(t) => t,
            Threshold::Otsu => otsu_threshold(raster, region),
        }
    }
}

/// Otsu's threshold over the pixels of `region`.
pub fn otsu_threshold(raster: &Raster, region: &BBox) -> u8 {
    let mut hist = [0u64; 256];
    for y in region.y..region.y + region.h {
        for x in region.x..region.x + region.w {
            hist[raster.get(x, y) as usize] += 1;
        }
    }
    let total: u64 = hist.iter().sum();
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0u64, 0.0);
    let (mut best_t, mut best_var) = (127u8, -1.0);
    for (t, &count) in hist.iter().enumerate().take(255) {
        w0 += count;
        sum0 += t as f64 * count as f64;
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let m0 = sum0 / w0 as f64;
        let m1 = (sum_all - sum0) / w1 as f64;
        let var = w0 as f64 * w1 as f64 * (m0 - m1) * (m0 - m1);
        if var > best_var {
            best_var = var;
            best_t = t as u8;
        }
    }
    best_t
}

/// Geometry of a located symbol in continuous pixel coordinates (pixel
/// `i` spans `[i, i+1)`).
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolCandidate {
    pub x0: f64,
    pub y0: f64,
    pub module_w: f64,
    pub module_h: f64,
    /// Side read from the timing pattern.
    pub side: usize,
    /// Other plausible sides, most likely first.
    pub alternatives: Vec<usize>,
    pub threshold: u8,
}

impl SymbolCandidate {
    pub fn bbox(&self, raster: &Raster) -> Option<BBox> {
        self.bbox_for_side(self.side, raster)
    }

    pub fn bbox_for_side(&self, side: usize, raster: &Raster) -> Option<BBox> {
        BBox::covering(
            self.x0,
            self.y0,
            self.x0 + side as f64 * self.module_w,
            self.y0 + side as f64 * self.module_h,
            raster.width(),
            raster.height(),
        )
    }

    /// Module center in continuous coordinates.
    pub fn module_center(&self, row: usize, col: usize) -> (f64, f64) {
        (self.x0 + (col as f64 + 0.5) * self.module_w, self.y0 + (row as f64 + 0.5) * self.module_h)
    }
}

struct Binary<'a> {
    raster: &'a Raster,
    region: BBox,
    threshold: u8,
}

impl Binary<'_> {
    fn dark(&self, x: i64, y: i64) -> Option<bool> {
        let r = &self.region;
        if x < r.x as i64 || y < r.y as i64 || x >= (r.x + r.w) as i64 || y >= (r.y + r.h) as i64 {
            return None;
        }
        Some(self.raster.get(x as usize, y as usize) <= self.threshold)
    }

    /// Bilinear intensity at a continuous point inside the region.
    fn level_at(&self, x: f64, y: f64) -> Option<f64> {
        let r = &self.region;
        if x < r.x as f64 || y < r.y as f64 || x >= (r.x + r.w) as f64 || y >= (r.y + r.h) as f64 {
            return None;
        }
        Some(self.raster.sample(x - 0.5, y - 0.5))
    }
}

fn ratio_ok(runs: [f64; 5]) -> bool {
    let total: f64 = runs.iter().sum();
    if total < 6.0 {
        return false;
    }
    let u = total / 7.0;
    let tol = 0.5 * u + 0.5;
    (runs[0] - u).abs() <= tol
        && (runs[1] - u).abs() <= tol
        && (runs[2] - 3.0 * u).abs() <= 1.25 * u + 0.5
        && (runs[3] - u).abs() <= tol
        && (runs[4] - u).abs() <= tol
}

/// Walks outward from `center` (inside the middle dark run) along one
/// line. Returns the outer extents `[start, end)` of the five runs.
fn cross_check(center: i64, at: impl Fn(i64) -> Option<bool>) -> Option<(f64, f64)> {
    if at(center) != Some(true) {
        return None;
    }
    let run = |from: i64, step: i64, want: bool| -> i64 {
        let mut p = from;
        while at(p) == Some(want) {
            p += step;
        }
        p
    };
    // positions just past each run boundary
    let c0 = run(center, -1, true);
    let b0 = run(c0, -1, false);
    let a0 = run(b0, -1, true);
    let c1 = run(center, 1, true);
    let d1 = run(c1, 1, false);
    let e1 = run(d1, 1, true);
    let runs = [(b0 - a0) as f64, (c0 - b0) as f64, (c1 - c0 - 1) as f64, (d1 - c1) as f64, (e1 - d1) as f64];
    if runs.iter().any(|&r| r <= 0.0) || !ratio_ok(runs) {
        return None;
    }
    Some(((a0 + 1) as f64, e1 as f64))
}

#[derive(Debug, Clone)]
struct FinderHit {
    left: f64,
    right: f64,
    top: f64,
    bottom: f64,
    count: usize,
}

impl FinderHit {
    fn center(&self) -> (f64, f64) {
        ((self.left + self.right) / 2.0, (self.top + self.bottom) / 2.0)
    }
    fn width(&self) -> f64 {
        self.right - self.left
    }
    fn height(&self) -> f64 {
        self.bottom - self.top
    }
}

fn scan_finders(bin: &Binary) -> Vec<FinderHit> {
    let r = bin.region;
    let mut hits: Vec<FinderHit> = Vec::new();
    for y in r.y..r.y + r.h {
        // run-length encode the row
        let mut runs: Vec<(bool, usize, usize)> = Vec::new();
        for x in r.x..r.x + r.w {
            let d = bin.dark(x as i64, y as i64).unwrap();
            match runs.last_mut() {
                Some((c, _, len)) if *c == d => *len += 1,
                _ => runs.push((d, x, 1)),
            }
        }
        for i in 0..runs.len().saturating_sub(4) {
            if !runs[i].0 {
                continue;
            }
            let lens = [0, 1, 2, 3, 4].map(|k| runs[i + k].2 as f64);
            if !ratio_ok(lens) {
                continue;
            }
            let cx = runs[i + 2].1 as i64 + runs[i + 2].2 as i64 / 2;
            let Some((top, bottom)) = cross_check(y as i64, |p| bin.dark(cx, p)) else {
                continue;
            };
            let cy = ((top + bottom) / 2.0).floor() as i64;
            let Some((left, right)) = cross_check(cx, |p| bin.dark(p, cy)) else {
                continue;
            };
            let (w, h) = (right - left, bottom - top);
            if w / h > 2.0 || h / w > 2.0 {
                continue;
            }
            let hit = FinderHit { left, right, top, bottom, count: 1 };
            let (hx, hy) = hit.center();
            if let Some(existing) = hits.iter_mut().find(|e| {
                let (ex, ey) = e.center();
                (ex - hx).abs() < e.width().max(w) / 4.0 && (ey - hy).abs() < e.height().max(h) / 4.0
            }) {
                let n = existing.count as f64;
                existing.left = (existing.left * n + left) / (n + 1.0);
                existing.right = (existing.right * n + right) / (n + 1.0);
                existing.top = (existing.top * n + top) / (n + 1.0);
                existing.bottom = (existing.bottom * n + bottom) / (n + 1.0);
                existing.count += 1;
            } else {
                hits.push(hit);
            }
        }
    }
    hits
}

/// Reads the timing pattern leaving the finder: `level(k)` is the
/// intensity at module `k` along the line. Each step of the pattern must
/// get darker from an odd module to the next even one; comparing
/// neighbours rather than thresholding keeps the edge row readable when
/// blur mixes it with the quiet zone. Returns the implied side.
fn timing_side(level: impl Fn(usize) -> Option<f64>) -> Option<usize> {
    const STEP: f64 = 8.0;
    let mut side = None;
    for c in (8..=16).step_by(2) {
        match (level(c - 1), level(c)) {
            (Some(light), Some(dark)) if light - dark > STEP => side = Some(c + 1),
            _ => break,
        }
    }
    side.filter(|&s| s >= 11)
}

/// Re-measures the finder at the level halfway between its dark core and
/// the surrounding light, where blur leaves edges in place.
fn refine(bin: &Binary, hit: &FinderHit) -> FinderHit {
    let (cx, cy) = hit.center();
    let (ix, iy) = (cx.floor() as i64, cy.floor() as i64);
    let r = bin.region;
    let core = bin.raster.get(ix as usize, iy as usize) as u16;
    let reach = hit.width() / 7.0 * 2.0;
    let from = ((hit.left - reach).floor() as i64).max(r.x as i64);
    let to = ((hit.right + reach).ceil() as i64).min((r.x + r.w) as i64);
    let light = (from..to).map(|x| bin.raster.get(x as usize, iy as usize) as u16).max().unwrap_or(255);
    let local = Binary { raster: bin.raster, region: r, threshold: ((core + light) / 2) as u8 };
    let refined = cross_check(iy, |p| local.dark(ix, p)).and_then(|(top, bottom)| {
        let my = ((top + bottom) / 2.0).floor() as i64;
        cross_check(ix, |p| local.dark(p, my)).map(|(left, right)| FinderHit {
            left,
            right,
            top,
            bottom,
            count: hit.count,
        })
    });
    refined.unwrap_or_else(|| hit.clone())
}

fn candidate_from_hit(bin: &Binary, hit: &FinderHit) -> Option<SymbolCandidate> {
    let hit = &refine(bin, hit);
    let mw = hit.width() / 7.0;
    let mh = hit.height() / 7.0;
    let (x0, y0) = (hit.left, hit.top);
    let row = timing_side(|k| bin.level_at(x0 + (k as f64 + 0.5) * mw, y0 + 0.5 * mh));
    let col = timing_side(|k| bin.level_at(x0 + 0.5 * mw, y0 + (k as f64 + 0.5) * mh));
    let side = match (row, col) {
        (Some(a), Some(b)) => a.max(b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => return None,
    };
    let mut alternatives: Vec<usize> = [row, col].into_iter().flatten().filter(|&s| s != side).collect();
    let mut rest: Vec<usize> =
        [11, 13, 15, 17].into_iter().filter(|s| *s != side && !alternatives.contains(s)).collect();
    rest.sort_by_key(|&s| (s as i64 - side as i64).abs());
    alternatives.extend(rest);
    Some(SymbolCandidate { x0, y0, module_w: mw, module_h: mh, side, alternatives, threshold: bin.threshold })
}

fn candidates_at(raster: &Raster, region: &BBox, threshold: u8) -> Vec<(FinderHit, SymbolCandidate)> {
    let bin = Binary { raster, region: *region, threshold };
    scan_finders(&bin).into_iter().filter_map(|h| candidate_from_hit(&bin, &h).map(|c| (h, c))).collect()
}

/// Candidate symbols inside `region`, top-left-most first. With Otsu the
/// region is binarized twice, at the Otsu level and at the mid-range
/// level, since a large light background drags Otsu upward once the
/// symbol is blurred.
pub fn locate_candidates(raster: &Raster, region: &BBox, threshold: Threshold) -> Vec<SymbolCandidate> {
    if !region.fits_in(raster.width(), raster.height()) {
        return Vec::new();
    }
    let levels = match threshold {
        Threshold::Fixed(t) => vec![t],
        Threshold::Otsu => {
            let otsu = otsu_threshold(raster, region);
            let (lo, hi) = (region.y..region.y + region.h)
                .flat_map(|y| (region.x..region.x + region.w).map(move |x| (x, y)))
                .fold((255u8, 0u8), |(lo, hi), (x, y)| {
                    let v = raster.get(x, y);
                    (lo.min(v), hi.max(v))
                });
            let mid = ((lo as u16 + hi as u16) / 2) as u8;
            if mid == otsu {
                vec![otsu]
            } else {
                vec![otsu, mid]
            }
        }
    };
    let mut cands: Vec<(FinderHit, SymbolCandidate)> = Vec::new();
    for t in levels {
        for (hit, cand) in candidates_at(raster, region, t) {
            let (hx, hy) = hit.center();
            let dup = cands.iter().any(|(h, _)| {
                let (ex, ey) = h.center();
                (ex - hx).abs() < h.width() / 4.0 && (ey - hy).abs() < h.height() / 4.0
            });
            if !dup {
                cands.push((hit, cand));
            }
        }
    }
    cands.sort_by(|a, b| (a.1.x0 + a.1.y0).total_cmp(&(b.1.x0 + b.1.y0)));
    // a finder-like blob inside an accepted symbol is data, not a new symbol
    let mut accepted: Vec<SymbolCandidate> = Vec::new();
    for (hit, cand) in cands {
        let (cx, cy) = hit.center();
        let inside = accepted.iter().any(|a| {
            cx >= a.x0 && cy >= a.y0 && cx < a.x0 + a.side as f64 * a.module_w && cy < a.y0 + a.side as f64 * a.module_h
        });
        if !inside {
            accepted.push(cand);
        }
    }
    accepted
}

/// Bounding boxes of candidate symbols in the whole raster.
pub fn locate_symbols(raster: &Raster) -> Vec<BBox> {
    locate_candidates(raster, &raster.full_bbox(), Threshold::Otsu).iter().filter_map(|c| c.bbox(raster)).collect()
}
