use qrsl_core::frame_lab::Raster;
use qrsl_core::microqr::{decode, SymbolMatrix};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn qrsl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qrsl")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn ok(out: Output) -> Output {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn demo() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo")
}

fn scene_json(frames: usize, script: &str, degradation: &str) -> String {
    format!(
        r#"{{"objects": [
            {{"name": "GP1", "qr_size_cm": 2, "feature_seed": 1}},
            {{"name": "incubator", "qr_size_cm": 2, "feature_seed": 2, "payload": "7"}}
        ],
        "frames": {frames}, "fps": 10, "hand_script": {script}, "degradation": {degradation}}}"#
    )
}

fn sha(path: &Path) -> Vec<u8> {
    Sha256::digest(fs::read(path).unwrap()).to_vec()
}

#[test]
fn gen_writes_frames_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scene.json");
    fs::write(&cfg, scene_json(20, r#"["GP1", null, "incubator"]"#, "[]")).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(qrsl(&["gen", "--config", p(&cfg), "--seed", "3", "--out", p(&a)]));
    ok(qrsl(&["gen", "--config", p(&cfg), "--seed", "3", "--out", p(&b)]));
    let frames: Vec<_> = fs::read_dir(a.join("frames")).unwrap().collect();
    assert_eq!(frames.len(), 20);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["n_frames"], 20);
    assert_eq!(manifest["seed"], 3);
    for f in ["manifest.json", "truth.jsonl", "hands.jsonl", "frames/000000.pgm", "frames/000019.pgm"] {
        assert_eq!(sha(&a.join(f)), sha(&b.join(f)), "{f}");
    }
}

#[test]
fn zero_frames_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scene.json");
    fs::write(&cfg, scene_json(0, r#"["GP1"]"#, "[]")).unwrap();
    let out = qrsl(&["gen", "--config", p(&cfg), "--out", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(err["error"], "config");
}

#[test]
fn missing_input_is_an_io_error() {
    let out = qrsl(&["gen", "--config", "/nonexistent/scene.json", "--out", "/tmp/unused"]);
    assert_eq!(out.status.code(), Some(3));
}

fn lines(path: &Path) -> Vec<serde_json::Value> {
    fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn decode_names_clean_frames_and_maps_payloads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scene.json");
    fs::write(&cfg, scene_json(6, r#"["GP1", "incubator"]"#, "[]")).unwrap();
    let scene = dir.path().join("scene");
    ok(qrsl(&["gen", "--config", p(&cfg), "--out", p(&scene)]));
    let map = dir.path().join("names.json");
    fs::write(&map, r#"{"7": "incubator"}"#).unwrap();
    let dets = dir.path().join("dets.jsonl");
    let out = ok(qrsl(&[
        "decode",
        "--frames",
        p(&scene.join("frames")),
        "--detections",
        p(&scene.join("hands.jsonl")),
        "--names",
        p(&map),
        "--out",
        p(&dets),
    ]));
    let d = lines(&dets);
    assert_eq!(d.len(), 6);
    let names: Vec<&str> = d.iter().map(|x| x["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["GP1", "incubator", "GP1", "incubator", "GP1", "incubator"]);
    // GP1 has no entry in the map and passes through with a warning
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("warning: payload \"GP1\""), "{stderr}");
}

#[test]
fn decode_records_blur_failures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scene.json");
    fs::write(&cfg, scene_json(4, r#"["GP1"]"#, r#"[{}, {"gaussian_sigma": 3.0}]"#)).unwrap();
    let scene = dir.path().join("scene");
    ok(qrsl(&["gen", "--config", p(&cfg), "--out", p(&scene)]));
    let dets = dir.path().join("dets.jsonl");
    let out = ok(qrsl(&[
        "decode",
        "--frames",
        p(&scene.join("frames")),
        "--detections",
        p(&scene.join("hands.jsonl")),
        "--out",
        p(&dets),
    ]));
    let d = lines(&dets);
    assert_eq!(d[0]["name"], "GP1");
    assert_eq!(d[1]["failure"], "blur");
    assert!(d[1]["name"].is_null());
    let summary: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stderr).lines().last().unwrap()).unwrap();
    assert_eq!(summary["failures"]["blur"], 2);
    assert_eq!(summary["named"], 2);
}

#[test]
fn unreadable_frame_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames");
    fs::create_dir(&frames).unwrap();
    fs::write(frames.join("000000.pgm"), b"P5\n4 4\n255\nxx").unwrap();
    let out = qrsl(&["decode", "--frames", p(&frames), "--out", p(&dir.path().join("d.jsonl"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn encode_writes_a_decodable_symbol() {
    let dir = tempfile::tempdir().unwrap();
    let txt = dir.path().join("sym.txt");
    ok(qrsl(&["encode", "--payload", "GP1", "--version", "M2", "--ec", "L", "--out", p(&txt)]));
    let sym = SymbolMatrix::from_text(&fs::read_to_string(&txt).unwrap()).unwrap();
    assert_eq!(decode(&sym).unwrap().text, b"GP1");
    let pgm = dir.path().join("sym.pgm");
    ok(qrsl(&["encode", "--payload", "7", "--out", p(&pgm)]));
    let r = Raster::from_pgm_bytes(&fs::read(&pgm).unwrap()).unwrap();
    // M1 is 11 modules plus a 2-module quiet zone at 4 px
    assert_eq!(r.width(), (11 + 4) * 4);
    let out = qrsl(&["encode", "--payload", "TOO LONG FOR ANY MICRO QR SYMBOL AT ALL, REALLY", "--out", p(&txt)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_of_ground_truth_against_itself_is_perfect() {
    let out = ok(qrsl(&[
        "eval",
        "--pred",
        p(&demo().join("protocol.csv")),
        "--gt",
        p(&demo().join("protocol.csv")),
        "--n-frames",
        "72",
    ]));
    let table = String::from_utf8(out.stdout).unwrap();
    let all: Vec<&str> = table.lines().nth(1).unwrap().split_whitespace().collect();
    assert_eq!(all, ["all", "100.0", "100.0", "100.0", "100.0"]);
}

#[test]
fn agreement_of_identical_tracks_is_100() {
    let out = ok(qrsl(&["agreement", p(&demo().join("protocol.csv")), p(&demo().join("protocol.csv"))]));
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "100.0");
}

#[test]
fn more_steps_than_frames_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let protocol = dir.path().join("p.csv");
    fs::write(&protocol, "step_index,step_text,gt_start_sec,gt_end_sec\n1,a,,\n2,b,,\n3,c,,\n").unwrap();
    let emb = dir.path().join("f.txt");
    fs::write(&emb, "2 3\n1 0 0\n0 1 0\n").unwrap();
    let out =
        qrsl(&["localize", "--protocol", p(&protocol), "--embeddings", p(&emb), "--out", p(&dir.path().join("s.csv"))]);
    assert_eq!(out.status.code(), Some(4));
    let err: serde_json::Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(err["error"], "infeasible");
}

#[test]
fn fixture_command_reproduces_the_bundled_fixture() {
    let dir = tempfile::tempdir().unwrap();
    ok(qrsl(&["fixture", "--seed", "2", "--out", p(dir.path())]));
    for f in ["scene.json", "qr_names.json", "protocol.csv", "table.json", "embeddings.txt"] {
        assert_eq!(sha(&dir.path().join(f)), sha(&demo().join(f)), "{f}");
    }
}

fn pipeline_mof(out: &Path, lambda: &str) -> f64 {
    ok(qrsl(&["run", "--fixture", p(&demo()), "--lambda", lambda, "--out", p(out)]));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    m["mof"].as_f64().unwrap()
}

#[test]
fn fused_pipeline_is_at_least_as_good_as_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let base = pipeline_mof(&dir.path().join("l0"), "0");
    let fused = pipeline_mof(&dir.path().join("l05"), "0.5");
    assert!(fused >= base, "λ=0.5 {fused} vs λ=0 {base}");
    // the hand trace names a touched object on every step frame; decoding
    // plus linking recovers it everywhere
    let hands = lines(&dir.path().join("l05/hands.jsonl"));
    let names = lines(&dir.path().join("l05/names.jsonl"));
    for (h, n) in hands.iter().zip(&names) {
        let want: Vec<serde_json::Value> = h["name"].as_str().map(|s| vec![s.into()]).unwrap_or_default();
        assert_eq!(n["names"].as_array().unwrap(), &want, "frame {}", h["frame"]);
    }
}

#[test]
fn outputs_round_trip_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    pipeline_mof(&run, "0.5");
    // segments CSV back through eval (as prediction) and localize output
    let seg = fs::read_to_string(run.join("segments.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(seg.as_bytes());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(rdr.headers().unwrap()).unwrap();
    for r in rdr.records() {
        w.write_record(&r.unwrap()).unwrap();
    }
    assert_eq!(String::from_utf8(w.into_inner().unwrap()).unwrap(), seg);
    // dictionary, detections and names re-serialize to the same bytes
    let dict = fs::read_to_string(run.join("dictionary.json")).unwrap();
    let d = qrsl_core::labeling::ObjectDictionary::from_json(&dict).unwrap();
    assert_eq!(d.to_json(), dict);
    fn same_lines<T: serde::Serialize + serde::de::DeserializeOwned>(path: &Path) {
        let text = fs::read_to_string(path).unwrap();
        let again: String = text
            .lines()
            .map(|l| serde_json::to_string(&serde_json::from_str::<T>(l).unwrap()).unwrap() + "\n")
            .collect();
        assert_eq!(again, text, "{}", path.display());
    }
    same_lines::<qrsl_core::frame_lab::Detection>(&run.join("detections.jsonl"));
    same_lines::<qrsl_core::labeling::FrameNames>(&run.join("names.jsonl"));
    let feats = fs::read_to_string(run.join("features.txt")).unwrap();
    let parsed = qrsl_core::labeling::read_features(&feats).unwrap();
    assert_eq!(qrsl_core::labeling::write_features(&parsed), feats);
}

#[test]
fn adapt_maps_foreign_columns() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.csv");
    fs::write(&raw, "Description,Begin,Finish\n\"Add buffer, mix\",0.5,2\nSpin,2.5,4\n").unwrap();
    let map = dir.path().join("map.json");
    fs::write(&map, r#"{"step_text": "Description", "gt_start_sec": "Begin", "gt_end_sec": "Finish"}"#).unwrap();
    let out = dir.path().join("protocol.csv");
    ok(qrsl(&["adapt", "--input", p(&raw), "--mapping", p(&map), "--out", p(&out)]));
    assert_eq!(
        fs::read_to_string(&out).unwrap(),
        "step_index,step_text,gt_start_sec,gt_end_sec\n1,\"Add buffer, mix\",0.5,2.0\n2,Spin,2.5,4.0\n"
    );
    fs::write(&map, r#"{"step_text": "Nope"}"#).unwrap();
    assert_eq!(qrsl(&["adapt", "--input", p(&raw), "--mapping", p(&map), "--out", p(&out)]).status.code(), Some(2));
}

#[test]
fn bad_thread_count_is_rejected() {
    let out = Command::new(env!("CARGO_BIN_EXE_qrsl"))
        .args(["recall", "--trials", "1"])
        .env("QRSL_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
