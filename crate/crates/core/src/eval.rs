//! Frame-level step metrics (MoF, precision, recall, tIoU) and annotation
//! agreement on the time axis.

use crate::steps::SegmentList;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("segment ({start}, {end}) of step {step} is outside [0, {n_frames})")]
    OutOfRange { step: usize, start: usize, end: usize, n_frames: usize },
    #[error("segments overlap or are out of order")]
    Unordered,
    #[error("labelings differ: {pred_frames} frames / {pred_k} steps vs {gt_frames} / {gt_k}")]
    ShapeMismatch { pred_frames: usize, pred_k: usize, gt_frames: usize, gt_k: usize },
    #[error("label {label} exceeds step count {k}")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("no frames to evaluate")]
    Empty,
    #[error("the tracks share no step")]
    NoCommonSteps,
    #[error("event ({start}, {end}) is not a finite interval with start <= end")]
    BadInterval { start: f64, end: f64 },
}

/// Per-frame step (0-based) or `None` for background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameLabeling {
    pub labels: Vec<Option<usize>>,
    pub k: usize,
}

impl FrameLabeling {
    pub fn new(labels: Vec<Option<usize>>, k: usize) -> Result<Self, EvalError> {
        if let Some(&label) = labels.iter().flatten().find(|&&l| l >= k) {
            return Err(EvalError::LabelOutOfRange { label, k });
        }
        Ok(Self { labels, k })
    }

    pub fn n_frames(&self) -> usize {
        self.labels.len()
    }
}

pub fn segments_to_frame_labels(segments: &SegmentList, n_frames: usize) -> Result<FrameLabeling, EvalError> {
    let mut labels = vec![None; n_frames];
    for (k, &(start, end)) in segments.segments.iter().enumerate() {
        if start > end || end >= n_frames {
            return Err(EvalError::OutOfRange { step: k + 1, start, end, n_frames });
        }
    }
    if !segments.is_ordered() {
        return Err(EvalError::Unordered);
    }
    for (k, &(start, end)) in segments.segments.iter().enumerate() {
        labels[start..=end].iter_mut().for_each(|l| *l = Some(k));
    }
    Ok(FrameLabeling { labels, k: segments.segments.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    /// 1-based step index.
    pub step: usize,
    pub precision: f64,
    pub recall: f64,
    pub tiou: f64,
}

/// Percentages. MoF is frame-global; the rest are macro-averaged over steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mof: f64,
    pub precision: f64,
    pub recall: f64,
    pub tiou: f64,
    pub per_step: Vec<StepMetrics>,
}

fn pct(num: usize, den: usize) -> f64 {
    100.0 * num as f64 / den as f64
}

/// Undefined ratios: a step absent from both sides scores 100; a step
/// missing on one side scores 0 on the ratio that side would define.
pub fn compute_metrics(pred: &FrameLabeling, gt: &FrameLabeling) -> Result<MetricsReport, EvalError> {
    if pred.n_frames() != gt.n_frames() || pred.k != gt.k {
        return Err(EvalError::ShapeMismatch {
            pred_frames: pred.n_frames(),
            pred_k: pred.k,
            gt_frames: gt.n_frames(),
            gt_k: gt.k,
        });
    }
    if gt.n_frames() == 0 {
        return Err(EvalError::Empty);
    }
    let agree = pred.labels.iter().zip(&gt.labels).filter(|(p, g)| p == g).count();
    let mut counts = vec![(0usize, 0usize, 0usize); gt.k]; // (pred, gt, both)
    for (p, g) in pred.labels.iter().zip(&gt.labels) {
        if let Some(p) = p {
            counts[*p].0 += 1;
        }
        if let Some(g) = g {
            counts[*g].1 += 1;
        }
        if let (Some(p), Some(g)) = (p, g) {
            if p == g {
                counts[*p].2 += 1;
            }
        }
    }
    let per_step: Vec<StepMetrics> = counts
        .iter()
        .enumerate()
        .map(|(k, &(np, ng, both))| {
            let union = np + ng - both;
            let ratio = |den: usize| {
                if den > 0 {
                    pct(both, den)
                } else if union > 0 {
                    0.0
                } else {
                    100.0
                }
            };
            StepMetrics { step: k + 1, precision: ratio(np), recall: ratio(ng), tiou: ratio(union) }
        })
        .collect();
    let mean = |f: fn(&StepMetrics) -> f64| {
        if per_step.is_empty() {
            100.0
        } else {
            per_step.iter().map(f).sum::<f64>() / per_step.len() as f64
        }
    };
    Ok(MetricsReport {
        mof: pct(agree, gt.n_frames()),
        precision: mean(|s| s.precision),
        recall: mean(|s| s.recall),
        tiou: mean(|s| s.tiou),
        per_step,
    })
}

impl MetricsReport {
    /// Fixed-width table in the order MoF, Prec., Rec., tIoU.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<6}{:>8}{:>8}{:>8}{:>8}\n", "", "MoF", "Prec.", "Rec.", "tIoU");
        writeln!(out, "{:<6}{:>8.1}{:>8.1}{:>8.1}{:>8.1}", "all", self.mof, self.precision, self.recall, self.tiou)
            .expect("writing to a String");
        for s in &self.per_step {
            writeln!(
                out,
                "{:<6}{:>8}{:>8.1}{:>8.1}{:>8.1}",
                format!("step{}", s.step),
                "",
                s.precision,
                s.recall,
                s.tiou
            )
            .expect("writing to a String");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationEvent {
    pub step_id: usize,
    pub start_sec: f64,
    pub end_sec: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnnotationTrack {
    pub events: Vec<AnnotationEvent>,
}

fn merged(mut iv: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    iv.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (s, e) in iv {
        match out.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => out.push((s, e)),
        }
    }
    out
}

fn length(iv: &[(f64, f64)]) -> f64 {
    iv.iter().map(|(s, e)| e - s).sum()
}

fn intersection(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let (mut i, mut j, mut total) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if hi > lo {
            total += hi - lo;
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    total
}

fn by_step(track: &AnnotationTrack) -> Result<BTreeMap<usize, Vec<(f64, f64)>>, EvalError> {
    let mut m: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for e in &track.events {
        if !(e.start_sec.is_finite() && e.end_sec.is_finite() && e.start_sec <= e.end_sec) {
            return Err(EvalError::BadInterval { start: e.start_sec, end: e.end_sec });
        }
        m.entry(e.step_id).or_default().push((e.start_sec, e.end_sec));
    }
    Ok(m.into_iter().map(|(k, v)| (k, merged(v))).collect())
}

/// Interval IoU per step on the time axis, macro-averaged over the steps
/// both tracks annotate, as a percentage.
pub fn agreement_tiou(a: &AnnotationTrack, b: &AnnotationTrack) -> Result<f64, EvalError> {
    let (ma, mb) = (by_step(a)?, by_step(b)?);
    let scores: Vec<f64> = ma
        .iter()
        .filter_map(|(k, ia)| mb.get(k).map(|ib| (ia, ib)))
        .map(|(ia, ib)| {
            let inter = intersection(ia, ib);
            let union = length(&merged(ia.iter().chain(ib).copied().collect()));
            if union > 0.0 {
                100.0 * (inter / union)
            } else {
                100.0
            }
        })
        .collect();
    if scores.is_empty() {
        return Err(EvalError::NoCommonSteps);
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}
