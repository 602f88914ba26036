//! Step localization: name-embedding fusion, step/frame cost matrix and
//! one-sided Drop-DTW alignment.

mod matrix;
pub mod synth;

pub use matrix::{Matrix, MatrixError};

use crate::seed;
use matrix::{dot, norm, normalized};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StepError {
    #[error("no embedding for name {0:?}")]
    UnknownName(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding dimension must be >= 2")]
    DimTooSmall,
    #[error("{steps} steps cannot be aligned to {frames} frames")]
    Infeasible { steps: usize, frames: usize },
    #[error("timeline has {frames} frames but {name_sets} name sets")]
    NameSetCount { frames: usize, name_sets: usize },
    #[error("lambda must be finite and >= 0")]
    BadLambda,
    #[error("percentile must be in (0, 1]")]
    BadPercentile,
    #[error("drop cost must be finite")]
    BadDropCost,
    #[error("empty cost matrix")]
    EmptyCost,
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Name → vector table, serialized as `{"dim": D, "vectors": {name: [...]}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NameTable {
    pub dim: usize,
    pub vectors: BTreeMap<String, Vec<f64>>,
}

impl NameTable {
    pub fn validate(&self) -> Result<(), StepError> {
        if self.dim < 2 {
            return Err(StepError::DimTooSmall);
        }
        for v in self.vectors.values() {
            if v.len() != self.dim {
                return Err(StepError::DimensionMismatch { expected: self.dim, got: v.len() });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(StepError::Matrix(MatrixError::NonFinite));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Embedder {
    /// Ingested table; unknown names are an error.
    LoadedTable(NameTable),
    /// Deterministic pseudo-random unit vectors keyed by FNV-1a of the name.
    ToyHash { dim: usize },
}

impl Embedder {
    pub fn dim(&self) -> usize {
        match self {
            Embedder::LoadedTable(t) => t.dim,
            Embedder::ToyHash { dim } => *dim,
        }
    }
}

pub fn toy_hash(name: &str, dim: usize) -> Vec<f64> {
    let mut rng = seed::rng(seed::fnv1a64(name.as_bytes()));
    normalized((0..dim).map(|_| rng.sample(StandardNormal)).collect())
}

/// Unit vectors for `names` (a zero table vector stays zero).
pub fn embed_names<S: AsRef<str>>(names: &[S], embedder: &Embedder) -> Result<Vec<Vec<f64>>, StepError> {
    if embedder.dim() < 2 {
        return Err(StepError::DimTooSmall);
    }
    names
        .iter()
        .map(|n| {
            let n = n.as_ref();
            match embedder {
                Embedder::ToyHash { dim } => Ok(toy_hash(n, *dim)),
                Embedder::LoadedTable(t) => {
                    t.vectors.get(n).map(|v| normalized(v.clone())).ok_or_else(|| StepError::UnknownName(n.to_string()))
                }
            }
        })
        .collect()
}

/// Frame embeddings F with the object names seen in each frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTimeline {
    pub f: Matrix,
    pub names: Vec<Vec<String>>,
    pub fps: f64,
}

impl EmbeddingTimeline {
    pub fn validate(&self) -> Result<(), StepError> {
        if self.names.len() != self.f.rows() {
            return Err(StepError::NameSetCount { frames: self.f.rows(), name_sets: self.names.len() });
        }
        Ok(())
    }
}

/// V_i = F_i + λ·Σ_j e_{i,j}. Frames without names, and every frame when
/// λ = 0, are copied unchanged.
pub fn fuse(timeline: &EmbeddingTimeline, lambda: f64, embedder: &Embedder) -> Result<Matrix, StepError> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(StepError::BadLambda);
    }
    timeline.validate()?;
    let d = timeline.f.cols();
    let mut v = timeline.f.clone();
    if lambda == 0.0 {
        return Ok(v);
    }
    for (i, names) in timeline.names.iter().enumerate() {
        if names.is_empty() {
            continue;
        }
        let mut e = vec![0.0; d];
        for emb in embed_names(names, embedder)? {
            if emb.len() != d {
                return Err(StepError::DimensionMismatch { expected: d, got: emb.len() });
            }
            e.iter_mut().zip(&emb).for_each(|(a, b)| *a += b);
        }
        v.row_mut(i).iter_mut().zip(&e).for_each(|(x, e)| *x += lambda * e);
    }
    Ok(v)
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

/// C[k][n] = 1 − cos(S_k, V_n), with cos = 0 against a zero vector.
pub fn cost_matrix(v: &Matrix, s: &Matrix) -> Result<Matrix, StepError> {
    if v.cols() != s.cols() {
        return Err(StepError::DimensionMismatch { expected: s.cols(), got: v.cols() });
    }
    let mut c = Matrix::zeros(s.rows(), v.rows());
    for k in 0..s.rows() {
        for n in 0..v.rows() {
            c.set(k, n, 1.0 - cos(s.row(k), v.row(n)));
        }
    }
    Ok(c)
}

/// Nearest-rank percentile of all entries: the value at 1-based rank
/// ⌈p·K·N⌉ of the ascending sort.
pub fn drop_cost(c: &Matrix, percentile: f64) -> Result<f64, StepError> {
    if !(percentile > 0.0 && percentile <= 1.0) {
        return Err(StepError::BadPercentile);
    }
    if c.data().is_empty() {
        return Err(StepError::EmptyCost);
    }
    let mut vals = c.data().to_vec();
    vals.sort_by(f64::total_cmp);
    // the epsilon keeps e.g. 0.7·10 = 7.000000000000001 at rank 7
    let rank = ((percentile * vals.len() as f64 - 1e-9).ceil() as usize).clamp(1, vals.len());
    Ok(vals[rank - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    /// Per frame: 0-based step index, or `None` for a dropped frame.
    pub assignment: Vec<Option<usize>>,
    pub total_cost: f64,
    pub drop_cost: f64,
}

impl AlignmentResult {
    /// Σ matched costs + d per dropped frame, recomputed from the assignment.
    pub fn recompute_cost(&self, c: &Matrix) -> f64 {
        self.assignment
            .iter()
            .enumerate()
            .map(|(n, a)| match a {
                Some(k) => c.get(*k, n),
                None => self.drop_cost,
            })
            .sum()
    }
}

/// One-sided Drop-DTW: every step takes at least one frame, in order, and
/// any frame may be dropped at cost `d`.
pub fn align(c: &Matrix, d: f64) -> Result<AlignmentResult, StepError> {
    let (k_steps, n_frames) = (c.rows(), c.cols());
    if k_steps == 0 || k_steps > n_frames {
        return Err(StepError::Infeasible { steps: k_steps, frames: n_frames });
    }
    if !d.is_finite() {
        return Err(StepError::BadDropCost);
    }
    let w = n_frames + 1;
    let mut dp = vec![f64::INFINITY; (k_steps + 1) * w];
    dp[0] = 0.0;
    for n in 1..=n_frames {
        dp[n] = dp[n - 1] + d;
    }
    for k in 1..=k_steps {
        for n in 1..=n_frames {
            let cost = c.get(k - 1, n - 1);
            let here = dp[k * w + n - 1];
            let prev = dp[(k - 1) * w + n - 1];
            dp[k * w + n] = (here + d).min(here + cost).min(prev + cost);
        }
    }
    let total_cost = dp[k_steps * w + n_frames];
    let mut assignment = vec![None; n_frames];
    let (mut k, mut n) = (k_steps, n_frames);
    while n > 0 {
        if k == 0 {
            n -= 1;
            continue;
        }
        let cur = dp[k * w + n];
        let cost = c.get(k - 1, n - 1);
        let here = dp[k * w + n - 1];
        let prev = dp[(k - 1) * w + n - 1];
        if here + cost == cur {
            assignment[n - 1] = Some(k - 1);
        } else if prev + cost == cur {
            assignment[n - 1] = Some(k - 1);
            k -= 1;
        }
        n -= 1;
    }
    debug_assert_eq!(k, 0);
    Ok(AlignmentResult { assignment, total_cost, drop_cost: d })
}

/// Inclusive frame spans, one per step, in step order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentList {
    pub segments: Vec<(usize, usize)>,
}

impl SegmentList {
    pub fn is_ordered(&self) -> bool {
        self.segments.iter().all(|(s, e)| s <= e) && self.segments.windows(2).all(|w| w[0].1 < w[1].0)
    }
}

/// Segment k spans the first to the last frame matched to step k.
pub fn extract_segments(result: &AlignmentResult) -> SegmentList {
    let k_steps = result.assignment.iter().flatten().max().map_or(0, |k| k + 1);
    let mut segments = vec![(usize::MAX, 0); k_steps];
    for (n, a) in result.assignment.iter().enumerate() {
        if let Some(k) = *a {
            let s = &mut segments[k];
            s.0 = s.0.min(n);
            s.1 = s.1.max(n);
        }
    }
    SegmentList { segments }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizeConfig {
    pub lambda: f64,
    pub percentile: f64,
    pub embedder: Embedder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Localization {
    pub alignment: AlignmentResult,
    pub segments: SegmentList,
}

/// Embeds the step texts, fuses names into the frames, aligns and
/// extracts segments.
pub fn localize(
    step_texts: &[String],
    timeline: &EmbeddingTimeline,
    cfg: &LocalizeConfig,
) -> Result<Localization, StepError> {
    let s = Matrix::from_rows(&embed_names(step_texts, &cfg.embedder)?)?;
    let v = fuse(timeline, cfg.lambda, &cfg.embedder)?;
    let c = cost_matrix(&v, &s)?;
    let d = drop_cost(&c, cfg.percentile)?;
    let alignment = align(&c, d)?;
    let segments = extract_segments(&alignment);
    Ok(Localization { alignment, segments })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn toy_hash_is_deterministic_unit() {
        let a = toy_hash("GP1", 80);
        assert_eq!(a, toy_hash("GP1", 80));
        assert!((norm(&a) - 1.0).abs() < 1e-12);
        assert!(cos(&a, &toy_hash("GP2", 80)).abs() < 0.5);
        assert!(embed_names::<&str>(&[], &Embedder::ToyHash { dim: 8 }).unwrap().is_empty());
        assert_eq!(embed_names(&["x"], &Embedder::ToyHash { dim: 1 }), Err(StepError::DimTooSmall));
    }

    #[test]
    fn table_lookup() {
        let t = NameTable { dim: 2, vectors: [("a".to_string(), vec![3.0, 4.0])].into() };
        let e = Embedder::LoadedTable(t);
        assert_eq!(embed_names(&["a"], &e).unwrap(), vec![vec![0.6, 0.8]]);
        assert_eq!(embed_names(&["b"], &e), Err(StepError::UnknownName("b".into())));
    }

    #[test]
    fn drop_cost_examples() {
        assert_eq!(drop_cost(&m(&[&[0.4, 0.1], &[0.3, 0.2]]), 0.75).unwrap(), 0.3);
        assert_eq!(drop_cost(&m(&[&[0.5; 3]]), 0.75).unwrap(), 0.5);
        let ten = Matrix::new(1, 10, (1..=10).map(f64::from).collect()).unwrap();
        assert_eq!(drop_cost(&ten, 0.7).unwrap(), 7.0);
        assert_eq!(drop_cost(&ten, 1.0).unwrap(), 10.0);
        assert!(drop_cost(&ten, 0.0).is_err());
    }

    #[test]
    fn align_examples() {
        let r = align(&m(&[&[0.2]]), 5.0).unwrap();
        assert_eq!((r.assignment, r.total_cost), (vec![Some(0)], 0.2));
        let r = align(&m(&[&[0.9, 0.1]]), 0.2).unwrap();
        assert_eq!(r.assignment, vec![None, Some(0)]);
        assert!((r.total_cost - 0.3).abs() < 1e-15);
        assert_eq!(align(&m(&[&[0.1], &[0.1]]), 0.1), Err(StepError::Infeasible { steps: 2, frames: 1 }));
    }

    #[test]
    fn backtrack_prefers_continuing_the_step() {
        // frame 2 fits either step equally; walking back from the last
        // frame, staying in step 2 beats stepping down to step 1
        let c = m(&[&[0.0, 0.0, 0.5, 1.0], &[1.0, 1.0, 0.5, 0.0]]);
        let r = align(&c, 10.0).unwrap();
        assert_eq!(r.assignment, vec![Some(0), Some(0), Some(1), Some(1)]);
        // a match ties a drop: the match wins
        let r = align(&m(&[&[0.3, 0.3]]), 0.3).unwrap();
        assert_eq!(r.assignment, vec![Some(0), Some(0)]);
    }

    #[test]
    fn segments_follow_span_rule() {
        let seg = |a: Vec<Option<usize>>| {
            extract_segments(&AlignmentResult { assignment: a, total_cost: 0.0, drop_cost: 0.0 }).segments
        };
        assert_eq!(seg(vec![Some(0), Some(0), Some(1), Some(1)]), vec![(0, 1), (2, 3)]);
        assert_eq!(seg(vec![Some(0), None, Some(0), Some(1)]), vec![(0, 2), (3, 3)]);
    }

    #[test]
    fn fusion_arithmetic() {
        let e = Embedder::ToyHash { dim: 4 };
        let f = m(&[&[1.0, -0.0, 2.0, 3.0], &[0.5, 0.5, 0.5, 0.5]]);
        let tl = EmbeddingTimeline { f: f.clone(), names: vec![vec!["A".into(), "B".into()], vec![]], fps: 10.0 };
        assert_eq!(fuse(&tl, 0.0, &e).unwrap(), f);
        let v = fuse(&tl, 0.5, &e).unwrap();
        let (a, b) = (toy_hash("A", 4), toy_hash("B", 4));
        for j in 0..4 {
            assert_eq!(v.get(0, j), f.get(0, j) + 0.5 * (0.0 + a[j] + b[j]));
        }
        assert_eq!(v.row(1), f.row(1));
        assert_eq!(fuse(&tl, -1.0, &e), Err(StepError::BadLambda));
    }

    #[test]
    fn cost_conventions() {
        let c = cost_matrix(&m(&[&[1.0, 0.0], &[0.0, 2.0], &[0.0, 0.0]]), &m(&[&[3.0, 0.0]])).unwrap();
        assert_eq!(c.row(0), &[0.0, 1.0, 1.0]);
    }
}
