//! Object labeling: appearance descriptors, the name → mean-feature
//! dictionary built from decoded detections, and dictionary linking of the
//! detections whose symbol could not be read.

use crate::frame_lab::{BBox, Detection, Raster};
use crate::seed;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use thiserror::Error;

pub const DESCRIPTOR_DIM: usize = 80;
const PATCH: usize = 8;
const ORIENT_BINS: usize = 16;
const SUB: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum LabelingError {
    #[error("bbox {0:?} is narrower or shorter than 2 px")]
    DegenerateBBox(BBox),
    #[error("bbox {0:?} is not inside the raster")]
    BBoxOutside(BBox),
    #[error("no positive detections to build a dictionary from")]
    NoPositives,
    #[error("feature dimension {got} does not match {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("feature values must be finite")]
    NonFinite,
    #[error("feature file: {0}")]
    BadFeatureFile(String),
    #[error("{detections} detections but {features} feature vectors")]
    CountMismatch { detections: usize, features: usize },
}

/// Unit-length appearance vector (the zero vector for a flat patch).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(Vec<f64>);

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize_in_place(v: &mut [f64]) {
    let n = norm(v);
    if n > 0.0 && (n - 1.0).abs() > 1e-12 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

impl FeatureVector {
    /// L2-normalizes `values`; a vector already of unit length is kept
    /// bit-for-bit.
    pub fn new(mut values: Vec<f64>) -> Result<Self, LabelingError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LabelingError::NonFinite);
        }
        normalize_in_place(&mut values);
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Cosine similarity; 0 when either side is the zero vector.
    pub fn cosine(&self, other: &FeatureVector) -> f64 {
        cosine(&self.0, &other.0)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

/// Mean-removed 8×8 intensity patch (each cell the mean of SUB×SUB
/// bilinear samples) plus a 16-bin magnitude-weighted gradient
/// orientation histogram. Each block is normalized on its own before the
/// concatenation is, so neither dominates.
pub fn extract_feature(raster: &Raster, bbox: &BBox) -> Result<FeatureVector, LabelingError> {
    if bbox.w < 2 || bbox.h < 2 {
        return Err(LabelingError::DegenerateBBox(*bbox));
    }
    if !bbox.fits_in(raster.width(), raster.height()) {
        return Err(LabelingError::BBoxOutside(*bbox));
    }
    let mut v = Vec::with_capacity(DESCRIPTOR_DIM);
    let (cw, ch) = (bbox.w as f64 / PATCH as f64, bbox.h as f64 / PATCH as f64);
    for i in 0..PATCH {
        for j in 0..PATCH {
            let mut acc = 0.0;
            for si in 0..SUB {
                for sj in 0..SUB {
                    let x = bbox.x as f64 + (j as f64 + (sj as f64 + 0.5) / SUB as f64) * cw - 0.5;
                    let y = bbox.y as f64 + (i as f64 + (si as f64 + 0.5) / SUB as f64) * ch - 0.5;
                    acc += raster.sample(x, y);
                }
            }
            v.push(acc / (SUB * SUB) as f64 / 255.0);
        }
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| {
        *x -= mean;
        if x.abs() < 1e-12 {
            *x = 0.0;
        }
    });
    let mut hist = [0.0f64; ORIENT_BINS];
    let px = |x: usize, y: usize| raster.get(x, y) as f64;
    for y in bbox.y..bbox.y + bbox.h {
        for x in bbox.x..bbox.x + bbox.w {
            let (xl, xr) = (x.max(bbox.x + 1) - 1, (x + 1).min(bbox.x + bbox.w - 1));
            let (yu, yd) = (y.max(bbox.y + 1) - 1, (y + 1).min(bbox.y + bbox.h - 1));
            let gx = (px(xr, y) - px(xl, y)) / (xr - xl) as f64;
            let gy = (px(x, yd) - px(x, yu)) / (yd - yu) as f64;
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let angle = gy.atan2(gx).rem_euclid(std::f64::consts::TAU);
            let bin = ((angle / std::f64::consts::TAU * ORIENT_BINS as f64) as usize).min(ORIENT_BINS - 1);
            hist[bin] += mag;
        }
    }
    let mut intensity = v;
    normalize_in_place(&mut intensity);
    let mut grad = hist.to_vec();
    normalize_in_place(&mut grad);
    intensity.extend(grad);
    FeatureVector::new(intensity)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictEntry {
    pub mean: FeatureVector,
    pub count: usize,
}

/// Serialized as `{"dim": D, "entries": {name: {"mean": [...], "count": n}}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectDictionary {
    pub dim: usize,
    pub entries: BTreeMap<String, DictEntry>,
}

impl ObjectDictionary {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&DictEntry> {
        self.entries.get(name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("dictionary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Averages the features of positive detections per decoded name and
/// renormalizes the means. Negatives are ignored.
pub fn build_dictionary<'a>(
    stream: impl IntoIterator<Item = (&'a Detection, &'a FeatureVector)>,
) -> Result<ObjectDictionary, LabelingError> {
    let mut sums: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
    let mut dim = None;
    for (det, feat) in stream {
        let Some(name) = &det.name else { continue };
        let d = *dim.get_or_insert(feat.dim());
        if feat.dim() != d {
            return Err(LabelingError::DimMismatch { expected: d, got: feat.dim() });
        }
        let (sum, count) = sums.entry(name.clone()).or_insert_with(|| (vec![0.0; d], 0));
        sum.iter_mut().zip(feat.values()).for_each(|(s, v)| *s += v);
        *count += 1;
    }
    let dim = dim.ok_or(LabelingError::NoPositives)?;
    let entries = sums
        .into_iter()
        .map(|(name, (sum, count))| {
            let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
            (name, DictEntry { mean: FeatureVector::new(mean).expect("mean of finite values"), count })
        })
        .collect();
    Ok(ObjectDictionary { dim, entries })
}

#[derive(Debug, Clone, PartialEq)]
pub enum LinkOutcome {
    Labeled {
        name: String,
        similarity: f64,
    },
    /// The best match fell below the requested minimum similarity.
    Unlabeled {
        best: String,
        similarity: f64,
    },
}

impl LinkOutcome {
    pub fn name(&self) -> Option<&str> {
        match self {
            LinkOutcome::Labeled { name, .. } => Some(name),
            LinkOutcome::Unlabeled { .. } => None,
        }
    }
}

/// Highest-cosine dictionary entry; ties go to the lexicographically
/// smallest name.
pub fn link(feature: &FeatureVector, dict: &ObjectDictionary, min_similarity: Option<f64>) -> LinkOutcome {
    assert!(!dict.is_empty(), "link needs a non-empty dictionary");
    let mut best: Option<(&String, f64)> = None;
    // BTreeMap iterates names in order, so a strict > keeps the smallest on ties
    for (name, entry) in &dict.entries {
        let s = feature.cosine(&entry.mean);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((name, s));
        }
    }
    let (name, similarity) = best.expect("non-empty");
    match min_similarity {
        Some(min) if similarity < min => LinkOutcome::Unlabeled { best: name.clone(), similarity },
        _ => LinkOutcome::Labeled { name: name.clone(), similarity },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    QrDecoded,
    DictionaryLinked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDetection {
    pub detection: Detection,
    pub assigned_name: String,
    pub source: LabelSource,
    pub similarity: f64,
}

/// Positives keep their decoded name; negatives are linked. Negatives that
/// stay below `min_similarity` are dropped.
pub fn label_detections(
    detections: &[Detection],
    features: &[FeatureVector],
    dict: &ObjectDictionary,
    min_similarity: Option<f64>,
) -> Result<Vec<LabeledDetection>, LabelingError> {
    if detections.len() != features.len() {
        return Err(LabelingError::CountMismatch { detections: detections.len(), features: features.len() });
    }
    Ok(detections
        .iter()
        .zip(features)
        .filter_map(|(det, feat)| match &det.name {
            Some(name) => Some(LabeledDetection {
                detection: det.clone(),
                assigned_name: name.clone(),
                source: LabelSource::QrDecoded,
                similarity: 1.0,
            }),
            None => match link(feat, dict, min_similarity) {
                LinkOutcome::Labeled { name, similarity } => Some(LabeledDetection {
                    detection: det.clone(),
                    assigned_name: name,
                    source: LabelSource::DictionaryLinked,
                    similarity,
                }),
                LinkOutcome::Unlabeled { .. } => None,
            },
        })
        .collect())
}

/// Object names seen in one sampled frame; `frame` indexes the source video.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameNames {
    pub frame: usize,
    pub names: Vec<String>,
}

/// Source frames kept when sampling `n_frames` at `sample_fps` from a
/// `video_fps` stream: frame ⌊j·video_fps/sample_fps⌋ for j = 0, 1, …
pub fn sampled_frames(n_frames: usize, video_fps: f64, sample_fps: f64) -> Vec<usize> {
    let stride = (video_fps / sample_fps).max(1.0);
    let mut out = Vec::new();
    let mut j = 0usize;
    loop {
        let f = (j as f64 * stride + 1e-9).floor() as usize;
        if f >= n_frames {
            break;
        }
        if out.last() != Some(&f) {
            out.push(f);
        }
        j += 1;
    }
    out
}

/// Per-sampled-frame sorted, deduplicated name sets.
pub fn label_video(
    detections: &[Detection],
    features: &[FeatureVector],
    dict: &ObjectDictionary,
    n_frames: usize,
    video_fps: f64,
    sample_fps: f64,
    min_similarity: Option<f64>,
) -> Result<Vec<FrameNames>, LabelingError> {
    let labeled = label_detections(detections, features, dict, min_similarity)?;
    let mut by_frame: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for l in labeled {
        by_frame.entry(l.detection.frame_idx).or_default().insert(l.assigned_name);
    }
    Ok(sampled_frames(n_frames, video_fps, sample_fps)
        .into_iter()
        .map(|f| FrameNames {
            frame: f,
            names: by_frame.remove(&f).map(|s| s.into_iter().collect()).unwrap_or_default(),
        })
        .collect())
}

/// Text feature file: a header line `N D`, then N lines of D numbers.
pub fn write_features(features: &[FeatureVector]) -> String {
    let d = features.first().map_or(0, FeatureVector::dim);
    let mut out = format!("{} {}\n", features.len(), d);
    for f in features {
        let line: Vec<String> = f.values().iter().map(|v| format!("{v:?}")).collect();
        writeln!(out, "{}", line.join(" ")).expect("writing to a String");
    }
    out
}

pub fn read_features(text: &str) -> Result<Vec<FeatureVector>, LabelingError> {
    let bad = |m: String| LabelingError::BadFeatureFile(m);
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let hv: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad(format!("bad header {header:?}"))))
        .collect::<Result<_, _>>()?;
    let [n, d] = hv[..] else { return Err(bad(format!("header needs `N D`, got {header:?}"))) };
    let mut out = Vec::with_capacity(n);
    for (i, line) in lines.enumerate().take(n) {
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(format!("line {}: bad number {t:?}", i + 2))))
            .collect::<Result<_, _>>()?;
        if vals.len() != d {
            return Err(LabelingError::DimMismatch { expected: d, got: vals.len() });
        }
        out.push(FeatureVector::new(vals)?);
    }
    if out.len() != n {
        return Err(bad(format!("expected {n} vectors, found {}", out.len())));
    }
    Ok(out)
}

/// Labeled vectors around well-separated prototypes, for accuracy checks.
#[derive(Debug, Clone)]
pub struct SyntheticFixture {
    pub prototypes: Vec<(String, FeatureVector)>,
    /// (true name, noisy sample)
    pub samples: Vec<(String, FeatureVector)>,
}

/// `n_objects` unit prototypes whose pairwise cosine is at most
/// `1 - margin`, each observed `per_object` times with per-coordinate
/// Gaussian noise `noise` and renormalized.
pub fn synthetic_fixture(
    n_objects: usize,
    dim: usize,
    margin: f64,
    noise: f64,
    per_object: usize,
    seed: u64,
) -> SyntheticFixture {
    let mut rng = seed::rng(seed);
    let mut prototypes: Vec<(String, FeatureVector)> = Vec::new();
    while prototypes.len() < n_objects {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let v = FeatureVector::new(v).expect("finite");
        if prototypes.iter().all(|(_, p)| p.cosine(&v) <= 1.0 - margin) {
            prototypes.push((format!("obj{}", prototypes.len() + 1), v));
        }
    }
    let mut samples = Vec::with_capacity(n_objects * per_object);
    for _ in 0..per_object {
        for (name, p) in &prototypes {
            let v: Vec<f64> = p.values().iter().map(|x| x + noise * rng.sample::<f64, _>(StandardNormal)).collect();
            samples.push((name.clone(), FeatureVector::new(v).expect("finite")));
        }
    }
    SyntheticFixture { prototypes, samples }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    fn pos(name: &str) -> Detection {
        Detection::positive(0, BBox::new(0, 0, 2, 2), name)
    }

    #[test]
    fn flat_patch_is_zero() {
        let r = Raster::filled(20, 20, 90);
        let f = extract_feature(&r, &BBox::new(2, 3, 10, 8)).unwrap();
        assert_eq!(f.dim(), DESCRIPTOR_DIM);
        assert!(f.values().iter().all(|&v| v == 0.0));
        let mut r = r;
        r.set(5, 5, 200);
        let g = extract_feature(&r, &BBox::new(2, 3, 10, 8)).unwrap();
        assert!((norm(g.values()) - 1.0).abs() < 1e-12);
        let black = extract_feature(&Raster::filled(4, 4, 0), &BBox::new(0, 0, 4, 4)).unwrap();
        assert!(black.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn degenerate_and_outside_boxes() {
        let r = Raster::filled(10, 10, 9);
        assert!(matches!(extract_feature(&r, &BBox::new(0, 0, 1, 5)), Err(LabelingError::DegenerateBBox(_))));
        assert!(matches!(extract_feature(&r, &BBox::new(5, 5, 6, 2)), Err(LabelingError::BBoxOutside(_))));
    }

    #[test]
    fn dictionary_basics() {
        let v = fv(&[0.6, 0.8]);
        let a = pos("A");
        let d = build_dictionary([(&a, &v)]).unwrap();
        assert_eq!(d.get("A").unwrap(), &DictEntry { mean: v.clone(), count: 1 });
        let d = build_dictionary([(&a, &v), (&a, &v)]).unwrap();
        assert_eq!(d.get("A").unwrap().count, 2);
        assert!(d.get("A").unwrap().mean.values().iter().zip(v.values()).all(|(x, y)| (x - y).abs() < 1e-15));
        let neg = Detection::negative(0, BBox::new(0, 0, 2, 2), crate::frame_lab::FailureCause::Blur);
        assert_eq!(build_dictionary([(&neg, &v)]), Err(LabelingError::NoPositives));
    }

    #[test]
    fn link_examples() {
        let (a, b) = (pos("A"), pos("B"));
        let (e1, e2) = (fv(&[1.0, 0.0]), fv(&[0.0, 1.0]));
        let d = build_dictionary([(&a, &e1), (&b, &e2)]).unwrap();
        assert_eq!(link(&e2, &d, None), LinkOutcome::Labeled { name: "B".into(), similarity: 1.0 });
        assert_eq!(link(&e1, &d, None), LinkOutcome::Labeled { name: "A".into(), similarity: 1.0 });
        let diag = fv(&[1.0, 1.0]);
        assert_eq!(link(&diag, &d, None).name(), Some("A"));
        assert!(matches!(link(&diag, &d, Some(0.9)), LinkOutcome::Unlabeled { .. }));
    }

    #[test]
    fn sampling_to_ten_fps() {
        assert_eq!(sampled_frames(10, 30.0, 10.0), vec![0, 3, 6, 9]);
        assert_eq!(sampled_frames(4, 10.0, 10.0), vec![0, 1, 2, 3]);
        assert_eq!(sampled_frames(3, 5.0, 10.0), vec![0, 1, 2]);
        assert_eq!(sampled_frames(8, 25.0, 10.0), vec![0, 2, 5, 7]);
    }

    #[test]
    fn feature_file_round_trip() {
        let fs = vec![fv(&[0.1, 0.2, 0.3]), fv(&[1.0, 0.0, 0.0])];
        let text = write_features(&fs);
        let back = read_features(&text).unwrap();
        assert_eq!(back, fs);
        assert_eq!(write_features(&back), text);
        assert!(read_features("2 3\n1 2 3\n").is_err());
        assert!(read_features("1 3\n1 2\n").is_err());
    }

    #[test]
    fn dictionary_json_round_trip() {
        let (a, b) = (pos("A"), pos("B"));
        let d = build_dictionary([(&a, &fv(&[0.3, 0.4])), (&b, &fv(&[1.0, 2.0]))]).unwrap();
        let j = d.to_json();
        assert!(j.starts_with(r#"{"dim":2,"entries":{"A":{"mean":["#));
        let back = ObjectDictionary::from_json(&j).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.to_json(), j);
    }
}
