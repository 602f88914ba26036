//! Bundled synthetic fixture and the end-to-end run over it.

use crate::commands::{self, DecodeArgs, EmbedderChoice, EvalArgs, LinkArgs, LocalizeArgs};
use crate::error::Result;
use crate::files::{self, ProtocolRow, QrNameMap};
use qrsl_core::eval::MetricsReport;
use qrsl_core::frame_lab::{Camera, DegradationSpec, SceneObject, SceneSpec};
use qrsl_core::steps::synth::{synth_timeline, TimelineSpec};
use std::path::Path;

/// Object names with the payloads printed on their labels.
const OBJECTS: [(&str, &str); 5] =
    [("GP1", "1"), ("GP2", "2"), ("incubator", "7"), ("pipette", "4"), ("centrifuge", "5")];

/// Writes scene.json, qr_names.json, protocol.csv, table.json and
/// embeddings.txt. The hand script follows the ground-truth steps and every
/// third frame is defocused past reading.
pub fn write_fixture(out: &Path, seed: u64) -> Result<()> {
    let tspec = TimelineSpec { objects: OBJECTS.iter().map(|o| o.0.to_string()).collect(), ..TimelineSpec::default() };
    let st = synth_timeline(&tspec, seed);
    let scene = SceneSpec {
        objects: OBJECTS
            .iter()
            .enumerate()
            .map(|(i, (name, payload))| SceneObject {
                name: name.to_string(),
                qr_size_cm: 2,
                feature_seed: 100 + i as u64,
                payload: Some(payload.to_string()),
            })
            .collect(),
        frames: st.timeline.f.rows(),
        fps: tspec.fps,
        camera: Camera::default(),
        hand_script: st.gt_labels().iter().map(|l| l.map(|k| st.objects[k].clone())).collect(),
        degradation: vec![DegradationSpec::default(), DegradationSpec::default(), DegradationSpec::gaussian(2.5)],
    };
    let names: QrNameMap = OBJECTS.iter().map(|(n, p)| (p.to_string(), n.to_string())).collect();
    let protocol: Vec<ProtocolRow> = st
        .gt
        .iter()
        .zip(&st.step_texts)
        .enumerate()
        .map(|(k, (&(s, e), text))| {
            let (a, b) = files::frames_to_seconds(s, e, tspec.fps);
            ProtocolRow { step_index: k + 1, step_text: text.clone(), gt_start_sec: Some(a), gt_end_sec: Some(b) }
        })
        .collect();
    files::write_atomic(&out.join("scene.json"), &files::to_json_pretty(&scene))?;
    files::write_atomic(&out.join("qr_names.json"), &files::to_json_pretty(&names))?;
    files::write_atomic(&out.join("protocol.csv"), &files::to_csv(&protocol))?;
    files::write_atomic(&out.join("table.json"), &files::to_json_pretty(&st.table))?;
    files::write_atomic(&out.join("embeddings.txt"), st.timeline.f.to_text().as_bytes())
}

/// gen → decode → dict → link → localize → eval over a fixture directory.
pub fn run_pipeline(fixture: &Path, out: &Path, seed: u64, lambda: f64, percentile: f64) -> Result<MetricsReport> {
    let manifest = commands::gen(&fixture.join("scene.json"), seed, out)?;
    commands::decode(&DecodeArgs {
        frames: &out.join("frames"),
        rois: Some(&out.join("hands.jsonl")),
        names: Some(&fixture.join("qr_names.json")),
        out: &out.join("detections.jsonl"),
        features: Some(&out.join("features.txt")),
    })?;
    commands::dict(&out.join("detections.jsonl"), &out.join("features.txt"), &out.join("dictionary.json"))?;
    commands::link(&LinkArgs {
        detections: &out.join("detections.jsonl"),
        features: &out.join("features.txt"),
        dict: &out.join("dictionary.json"),
        manifest: &out.join("manifest.json"),
        sample_fps: manifest.fps,
        min_sim: None,
        out: &out.join("names.jsonl"),
    })?;
    commands::localize_cmd(&LocalizeArgs {
        protocol: &fixture.join("protocol.csv"),
        embeddings: &fixture.join("embeddings.txt"),
        names: Some(&out.join("names.jsonl")),
        fps: manifest.fps,
        lambda,
        percentile,
        embedder: EmbedderChoice::Table,
        table: Some(&fixture.join("table.json")),
        out: &out.join("segments.csv"),
    })?;
    commands::eval(&EvalArgs {
        pred: &out.join("segments.csv"),
        gt: &fixture.join("protocol.csv"),
        fps: manifest.fps,
        n_frames: manifest.n_frames,
        steps: None,
        out: Some(&out.join("metrics.json")),
    })
}
