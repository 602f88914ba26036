//! Synthetic procedure timelines with known step spans.
//!
//! Step k handles object o_k; its text embedding is the normalized sum of a
//! direction shared by the whole procedure, a step-specific direction and
//! the object's name embedding, so a frame that sees o_k moves toward S_k
//! once names are fused in. Background frames sit on their own direction.

use super::{normalized, toy_hash, EmbeddingTimeline, Matrix, NameTable};
use crate::seed;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineSpec {
    pub steps: usize,
    pub dim: usize,
    /// Per-coordinate standard deviation of the frame-embedding noise.
    pub noise_sigma: f64,
    pub fps: f64,
    /// Frames per step, inclusive range.
    pub step_frames: (usize, usize),
    /// Background frames before, between and after steps, inclusive range.
    pub gap_frames: (usize, usize),
    /// Chance that a step frame lists its own object.
    pub name_rate: f64,
    /// Chance that a frame lists a random other object.
    pub mislabel_rate: f64,
    /// Name listed on every frame, carrying no step information.
    pub shared_name: Option<String>,
    /// When false, only the shared name (if any) is listed.
    pub informative_names: bool,
    /// Weight of a direction shared by all step texts, relative to the
    /// step-specific and object parts.
    pub common_weight: f64,
    /// Object handled by each step; `object-1`, `object-2`, … when empty.
    #[serde(default)]
    pub objects: Vec<String>,
}

impl Default for TimelineSpec {
    fn default() -> Self {
        Self {
            steps: 5,
            dim: 64,
            noise_sigma: 0.4,
            fps: 10.0,
            step_frames: (6, 14),
            gap_frames: (0, 5),
            name_rate: 0.8,
            mislabel_rate: 0.1,
            shared_name: None,
            informative_names: true,
            common_weight: 2.0,
            objects: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTimeline {
    pub step_texts: Vec<String>,
    pub objects: Vec<String>,
    /// Embeds step texts and object names.
    pub table: NameTable,
    pub timeline: EmbeddingTimeline,
    /// Ground-truth inclusive spans per step.
    pub gt: Vec<(usize, usize)>,
}

impl SyntheticTimeline {
    /// Ground truth per frame: step index or `None` for background.
    pub fn gt_labels(&self) -> Vec<Option<usize>> {
        let mut labels = vec![None; self.timeline.f.rows()];
        for (k, &(s, e)) in self.gt.iter().enumerate() {
            labels[s..=e].iter_mut().for_each(|l| *l = Some(k));
        }
        labels
    }
}

pub fn synth_timeline(spec: &TimelineSpec, seed: u64) -> SyntheticTimeline {
    let mut rng = seed::rng(seed);
    let objects: Vec<String> = if spec.objects.is_empty() {
        (0..spec.steps).map(|k| format!("object-{}", k + 1)).collect()
    } else {
        assert_eq!(spec.objects.len(), spec.steps, "one object per step");
        spec.objects.clone()
    };
    let step_texts: Vec<String> =
        objects.iter().enumerate().map(|(k, o)| format!("step {}: handle {o}", k + 1)).collect();
    let mut vectors = BTreeMap::new();
    let mut s_rows = Vec::new();
    let common = toy_hash("procedure", spec.dim);
    let background = toy_hash("background", spec.dim);
    for (text, obj) in step_texts.iter().zip(&objects) {
        let a = toy_hash(text, spec.dim);
        let e = toy_hash(obj, spec.dim);
        let s = normalized((0..spec.dim).map(|j| spec.common_weight * common[j] + a[j] + e[j]).collect());
        vectors.insert(text.clone(), s.clone());
        vectors.insert(obj.clone(), e);
        s_rows.push(s);
    }
    if let Some(shared) = &spec.shared_name {
        vectors.insert(shared.clone(), toy_hash(shared, spec.dim));
    }

    let mut labels: Vec<Option<usize>> = Vec::new();
    let mut gt = Vec::new();
    let gap = |rng: &mut rand_chacha::ChaCha8Rng| rng.gen_range(spec.gap_frames.0..=spec.gap_frames.1);
    for k in 0..spec.steps {
        labels.extend(std::iter::repeat_n(None, gap(&mut rng)));
        let len = rng.gen_range(spec.step_frames.0..=spec.step_frames.1).max(1);
        gt.push((labels.len(), labels.len() + len - 1));
        labels.extend(std::iter::repeat_n(Some(k), len));
    }
    labels.extend(std::iter::repeat_n(None, gap(&mut rng)));

    let n = labels.len();
    let mut f = Matrix::zeros(n, spec.dim);
    let mut names = Vec::with_capacity(n);
    for (i, label) in labels.iter().enumerate() {
        let row = f.row_mut(i);
        for (j, x) in row.iter_mut().enumerate() {
            let signal = label.map_or(background[j], |k| s_rows[k][j]);
            *x = signal + spec.noise_sigma * rng.sample::<f64, _>(StandardNormal);
        }
        let mut set = Vec::new();
        if spec.informative_names {
            if let Some(k) = label {
                if rng.gen_bool(spec.name_rate) {
                    set.push(objects[*k].clone());
                }
            }
            if rng.gen_bool(spec.mislabel_rate) {
                set.push(objects[rng.gen_range(0..spec.steps)].clone());
            }
        }
        if let Some(shared) = &spec.shared_name {
            set.push(shared.clone());
        }
        set.sort();
        set.dedup();
        names.push(set);
    }
    SyntheticTimeline {
        step_texts,
        objects,
        table: NameTable { dim: spec.dim, vectors },
        timeline: EmbeddingTimeline { f, names, fps: spec.fps },
        gt,
    }
}
