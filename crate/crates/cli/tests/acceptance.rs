//! Acceptance report: one PASS/FAIL line per criterion, non-zero exit if
//! any fails.

use qrsl_core::eval::{
    agreement_tiou, compute_metrics, segments_to_frame_labels, AnnotationEvent, AnnotationTrack, FrameLabeling,
};
use qrsl_core::frame_lab::{rasterize_symbol, recall_study, BBox, Detection, RecallStudy};
use qrsl_core::labeling::{build_dictionary, link, synthetic_fixture, DESCRIPTOR_DIM};
use qrsl_core::microqr::{
    codeword_positions, decode, encode, params, tables, CodecError, EcLevel, Mode, Payload, SymbolMatrix, Version,
};
use qrsl_core::seed;
use qrsl_core::steps::synth::{synth_timeline, TimelineSpec};
use qrsl_core::steps::{align, localize, Embedder, LocalizeConfig, Matrix};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn combos() -> Vec<(Version, EcLevel)> {
    Version::ALL.iter().flat_map(|&v| v.ec_levels().iter().map(move |&e| (v, e))).collect()
}

const ALNUM_LETTERS: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ $%*+-./:";
const BYTE_TEXT: &[u8] = b"abcdefghijklmnopqrstuvwxyz#_~!@";

/// Payload of a random available mode and length. `text_only` keeps bytes
/// printable and letters out of digit runs so a reader returns one
/// segment of the same text.
fn random_payload(rng: &mut ChaCha8Rng, v: Version, e: EcLevel, text_only: bool) -> Payload {
    let modes: Vec<Mode> = [Mode::Numeric, Mode::Alphanumeric, Mode::Byte]
        .into_iter()
        .filter(|&m| tables::capacity(v, e, m) > 0)
        .collect();
    let mode = modes[rng.gen_range(0..modes.len())];
    let len = rng.gen_range(1..=tables::capacity(v, e, mode));
    let data: Vec<u8> = (0..len)
        .map(|_| match mode {
            Mode::Numeric => b'0' + rng.gen_range(0..10),
            Mode::Alphanumeric if text_only => ALNUM_LETTERS[rng.gen_range(0..ALNUM_LETTERS.len())],
            Mode::Alphanumeric => tables::ALPHANUMERIC[rng.gen_range(0..45)],
            Mode::Byte if text_only => BYTE_TEXT[rng.gen_range(0..BYTE_TEXT.len())],
            Mode::Byte => rng.gen(),
        })
        .collect();
    Payload::new(mode, data).unwrap()
}

fn codec_round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = seed::rng(101);
    let all = combos();
    let n = 1200;
    let mut ok = 0;
    for _ in 0..n {
        let (v, e) = all[rng.gen_range(0..all.len())];
        let p = random_payload(&mut rng, v, e, false);
        let mask = rng.gen_range(0..4u8);
        let sym = encode(&p, v, e, Some(mask)).unwrap();
        if let Ok(d) = decode(&sym) {
            if d.text == p.data() && (d.version, d.ec, d.mode, d.mask) == (v, e, p.mode(), mask) {
                ok += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(ok == n && secs < 10.0, format!("{ok}/{n} identity, {secs:.2} s (limit 10 s)"))
}

fn hex_decode(s: &str) -> Vec<u8> {
    (0..s.len()).step_by(2).map(|i| u8::from_str_radix(&s[i..i + 2], 16).unwrap()).collect()
}

/// Frozen reference symbols; plus a live reader pass when the reference
/// reader is installed.
fn codec_oracle() -> Outcome {
    let text = include_str!("../../core/tests/fixtures/microqr_oracle.txt");
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let (mut total, mut agree) = (0, 0);
    while let Some(header) = lines.next() {
        let parts: Vec<&str> = header.splitn(8, ' ').collect();
        let side: usize = lines.next().unwrap().parse().unwrap();
        let mut block = format!("{side}\n");
        for _ in 0..side {
            block.push_str(lines.next().unwrap());
            block.push('\n');
        }
        let reference = SymbolMatrix::from_text(&block).unwrap();
        let payload = hex_decode(parts[1]);
        let (v, e, mode): (Version, EcLevel, Mode) =
            (parts[2].parse().unwrap(), parts[3].parse().unwrap(), parts[4].parse().unwrap());
        let reader: Vec<String> = serde_json::from_str(parts[7]).unwrap();
        let ours = encode(&Payload::new(mode, payload.clone()).unwrap(), v, e, parts[5].parse().ok()).unwrap();
        let decoded = decode(&reference).map(|d| d.text).unwrap_or_default();
        total += 1;
        if ours == reference && decoded == payload && reader == [String::from_utf8_lossy(&payload)] {
            agree += 1;
        }
    }
    let frozen = format!("frozen {agree}/{total}");
    let pass = total >= 100 && agree == total;
    match live_reader_check() {
        Some((ok, n)) => outcome(pass && ok == n && n >= 100, format!("{frozen}, live reader {ok}/{n}")),
        None => outcome(pass, format!("{frozen}, live reader unavailable")),
    }
}

fn live_reader_check() -> Option<(usize, usize)> {
    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/oracle/microqr_oracle.py");
    let probe = Command::new("python3").args(["-c", "import zxingcpp, segno, numpy"]).output().ok()?;
    if !probe.status.success() {
        return None;
    }
    let dir = tempfile::tempdir().ok()?;
    let mut rng = seed::rng(202);
    let all = combos();
    let mut files = Vec::new();
    let mut expected = Vec::new();
    for i in 0..120 {
        let (v, e) = all[i % all.len()];
        let p = random_payload(&mut rng, v, e, true);
        let sym = encode(&p, v, e, None).unwrap();
        let path = dir.path().join(format!("{i:03}.pgm"));
        std::fs::write(&path, rasterize_symbol(&sym, 4, 2).to_pgm_bytes()).ok()?;
        files.push(path);
        expected.push(String::from_utf8(p.data().to_vec()).unwrap());
    }
    let out = Command::new("python3").arg(&script).arg("decode").args(&files).output().ok()?;
    if !out.status.success() {
        return None;
    }
    let mut texts: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for line in String::from_utf8_lossy(&out.stdout).lines() {
        let j: serde_json::Value = serde_json::from_str(line).ok()?;
        let file = j["file"].as_str()?.to_string();
        texts.insert(file, j["texts"].as_array()?.iter().filter_map(|t| t.as_str().map(String::from)).collect());
    }
    let ok = files
        .iter()
        .zip(&expected)
        .filter(|(f, want)| texts.get(&f.display().to_string()).is_some_and(|t| t == &[want.to_string()]))
        .count();
    Some((ok, files.len()))
}

fn corrupt(sym: &mut SymbolMatrix, v: Version, e: EcLevel, count: usize, rng: &mut ChaCha8Rng) {
    let positions = codeword_positions(v, e).unwrap();
    let mut idx: Vec<usize> = (0..positions.len()).collect();
    for i in 0..count {
        let j = rng.gen_range(i..idx.len());
        idx.swap(i, j);
    }
    for &w in &idx[..count] {
        let cells = &positions[w];
        let flip: u32 = rng.gen_range(1..(1u32 << cells.len()));
        for (b, &(r, c)) in cells.iter().enumerate() {
            if flip >> b & 1 == 1 {
                let bit = sym.get(r, c);
                sym.set(r, c, !bit);
            }
        }
    }
}

fn error_correction() -> Outcome {
    let mut rng = seed::rng(303);
    let mut worst_rejection = 100.0f64;
    let mut all_corrected = true;
    let mut cells = Vec::new();
    for (v, e) in combos() {
        let cap = params(v, e).unwrap().correctable;
        let mut corrected = 0;
        let mut rejected = 0;
        for _ in 0..1000 {
            let p = random_payload(&mut rng, v, e, false);
            let clean = encode(&p, v, e, None).unwrap();
            let mut sym = clean.clone();
            corrupt(&mut sym, v, e, cap, &mut rng);
            if decode(&sym).is_ok_and(|d| d.text == p.data()) {
                corrected += 1;
            }
            let mut sym = clean;
            corrupt(&mut sym, v, e, cap + 1, &mut rng);
            if matches!(
                decode(&sym),
                Err(CodecError::UncorrectableCodeword | CodecError::ChecksumMismatch | CodecError::MalformedData(_))
            ) {
                rejected += 1;
            }
        }
        all_corrected &= corrected == 1000;
        let pct = rejected as f64 / 10.0;
        worst_rejection = worst_rejection.min(pct);
        cells.push(format!("{v}-{e:?} {corrected}/1000 fixed, {pct:.1}% rejected at +1"));
    }
    outcome(
        all_corrected && worst_rejection >= 99.0,
        format!("worst rejection {worst_rejection:.1}% (need 99); {}", cells.join("; ")),
    )
}

fn recall_trend() -> Outcome {
    let rows = recall_study(&RecallStudy::with_defaults(300, 404)).unwrap();
    let by_size: Vec<f64> = rows.iter().map(|r| r.recall_pct).collect();
    let increasing = by_size.windows(2).all(|w| w[0] < w[1]);
    let monotone = rows.iter().all(|r| r.per_spec_pct.windows(2).all(|w| w[1] <= w[0]));
    let frames = rows.iter().map(|r| r.total / r.per_spec_pct.len().max(1)).min().unwrap_or(0);
    let summary: Vec<String> = rows.iter().map(|r| format!("{} cm {:.1}%", r.size_cm, r.recall_pct)).collect();
    outcome(
        increasing && monotone && frames >= 300,
        format!("{}; {} frames per size and sigma; non-increasing in sigma: {monotone}", summary.join(" < "), frames),
    )
}

fn brute_force(c: &Matrix, d: f64) -> f64 {
    let (k, n) = (c.rows(), c.cols());
    let mut best = f64::INFINITY;
    let total = (k + 1).pow(n as u32);
    for code in 0..total {
        let (mut x, mut last, mut cost, mut ok) = (code, 0, 0.0, true);
        let mut used = vec![false; k];
        for i in 0..n {
            let choice = x % (k + 1);
            x /= k + 1;
            if choice == 0 {
                cost += d;
            } else if choice < last {
                ok = false;
                break;
            } else {
                last = choice;
                used[choice - 1] = true;
                cost += c.get(choice - 1, i);
            }
        }
        if ok && used.iter().all(|&u| u) {
            best = best.min(cost);
        }
    }
    best
}

fn drop_dtw_optimality() -> Outcome {
    let mut rng = seed::rng(505);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let k = rng.gen_range(1..=3);
        let n = rng.gen_range(k..=7);
        let c = Matrix::new(k, n, (0..k * n).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let d = rng.gen::<f64>();
        worst = worst.max((align(&c, d).unwrap().total_cost - brute_force(&c, d)).abs());
    }
    outcome(worst <= 1e-9, format!("1000 instances, max |dp - exhaustive| = {worst:.1e}"))
}

fn labeling() -> Outcome {
    let (mut right, mut total, mut worst) = (0, 0, 0.0f64);
    for s in 0..5 {
        let fx = synthetic_fixture(5, DESCRIPTOR_DIM, 0.2, 0.05, 40, 606 + s);
        let dets: Vec<Detection> =
            fx.samples.iter().map(|(n, _)| Detection::positive(0, BBox::new(0, 0, 1, 1), n.clone())).collect();
        let dict = build_dictionary(dets.iter().zip(fx.samples.iter().map(|(_, v)| v))).unwrap();
        for (name, _) in &fx.prototypes {
            let members: Vec<&[f64]> = fx.samples.iter().filter(|(n, _)| n == name).map(|(_, v)| v.values()).collect();
            let mut mean = vec![0.0; DESCRIPTOR_DIM];
            for m in &members {
                mean.iter_mut().zip(*m).for_each(|(a, b)| *a += b / members.len() as f64);
            }
            let norm = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
            let got = dict.get(name).unwrap().mean.values();
            for (a, b) in got.iter().zip(&mean) {
                worst = worst.max((a - b / norm).abs());
            }
        }
        for (truth, v) in &fx.samples {
            total += 1;
            right += usize::from(link(v, &dict, None).name() == Some(truth.as_str()));
        }
    }
    outcome(right == total && worst <= 1e-9, format!("accuracy {right}/{total}, max mean error {worst:.1e}"))
}

fn mean_mof(spec: &TimelineSpec, lambda: f64) -> f64 {
    let total: f64 = (0..50u64)
        .map(|s| {
            let st = synth_timeline(spec, 700 + s);
            let cfg = LocalizeConfig { lambda, percentile: 0.75, embedder: Embedder::LoadedTable(st.table.clone()) };
            let loc = localize(&st.step_texts, &st.timeline, &cfg).unwrap();
            let pred = segments_to_frame_labels(&loc.segments, st.timeline.f.rows()).unwrap();
            let gt = FrameLabeling::new(st.gt_labels(), spec.steps).unwrap();
            compute_metrics(&pred, &gt).unwrap().mof
        })
        .sum();
    total / 50.0
}

fn fusion_benefit() -> Outcome {
    let spec = TimelineSpec { noise_sigma: 0.4, ..TimelineSpec::default() };
    let (base, fused) = (mean_mof(&spec, 0.0), mean_mof(&spec, 0.5));
    let shared = TimelineSpec { informative_names: false, shared_name: Some("hands".into()), ..spec.clone() };
    let (half, one) = (mean_mof(&shared, 0.5), mean_mof(&shared, 1.0));
    outcome(
        fused > base && half >= one,
        format!(
            "MoF λ=0 {base:.2}, λ=0.5 {fused:.2} (+{:.2}); shared name only: λ=0.5 {half:.2} vs λ=1 {one:.2}",
            fused - base
        ),
    )
}

fn metrics() -> Outcome {
    let mut rng = seed::rng(808);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let k = rng.gen_range(1..=3);
        let n = rng.gen_range(1..=12);
        let mut labels =
            || -> Vec<Option<usize>> { (0..n).map(|_| rng.gen_range(0..=k as usize).checked_sub(1)).collect() };
        let (p, g) = (labels(), labels());
        let r = compute_metrics(&FrameLabeling::new(p.clone(), k).unwrap(), &FrameLabeling::new(g.clone(), k).unwrap())
            .unwrap();
        let mof = 100.0 * (0..n).filter(|&i| p[i] == g[i]).count() as f64 / n as f64;
        let mut sums = [0.0; 3];
        for s in 0..k {
            let ps: Vec<usize> = (0..n).filter(|&i| p[i] == Some(s)).collect();
            let gs: Vec<usize> = (0..n).filter(|&i| g[i] == Some(s)).collect();
            let inter = ps.iter().filter(|i| gs.contains(i)).count() as f64;
            let union = (ps.len() + gs.len()) as f64 - inter;
            if union == 0.0 {
                sums.iter_mut().for_each(|x| *x += 100.0);
                continue;
            }
            let ratio = |den: usize| if den == 0 { 0.0 } else { 100.0 * inter / den as f64 };
            sums[0] += ratio(ps.len());
            sums[1] += ratio(gs.len());
            sums[2] += 100.0 * inter / union;
        }
        let want = [mof, sums[0] / k as f64, sums[1] / k as f64, sums[2] / k as f64];
        let got = [r.mof, r.precision, r.recall, r.tiou];
        if got.iter().zip(&want).any(|(a, b)| (a - b).abs() > 1e-9) {
            mismatches += 1;
        }
    }
    let lab = |v: &[i32]| FrameLabeling::new(v.iter().map(|&x| (x > 0).then(|| x as usize - 1)).collect(), 2).unwrap();
    let gt = lab(&[1, 1, 1, 0, 2, 2, 2, 0, 0, 0]);
    let perfect = compute_metrics(&gt, &gt).unwrap();
    let seven = compute_metrics(&lab(&[1, 1, 0, 0, 2, 2, 0, 2, 0, 0]), &gt).unwrap().mof;
    let track = |s, e| AnnotationTrack { events: vec![AnnotationEvent { step_id: 1, start_sec: s, end_sec: e }] };
    let tiou = agreement_tiou(&track(0.0, 2.0), &track(1.0, 3.0)).unwrap();
    let hand = [perfect.mof, perfect.precision, perfect.recall, perfect.tiou] == [100.0; 4]
        && seven == 70.0
        && format!("{tiou:.1}") == "33.3";
    outcome(
        mismatches == 0 && hand,
        format!(
            "{mismatches}/1000 oracle mismatches; perfect → 100, 7/10 → MoF {seven:.1}, (0,2)/(1,3) → tIoU {tiou:.1}"
        ),
    )
}

fn hash_tree(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let digest = Sha256::digest(std::fs::read(&p).unwrap());
                let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), hex);
            }
        }
    }
    out
}

fn run_fixture(out: &Path, threads: &str) -> bool {
    let fixture = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo");
    Command::new(env!("CARGO_BIN_EXE_qrsl"))
        .args(["run", "--fixture"])
        .arg(&fixture)
        .arg("--out")
        .arg(out)
        .env("QRSL_THREADS", threads)
        .output()
        .is_ok_and(|o| o.status.success())
}

fn end_to_end_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let runs = [("a", "1"), ("b", "1"), ("c", "8")];
    let mut hashes = Vec::new();
    for (name, threads) in runs {
        let out = dir.path().join(name);
        if !run_fixture(&out, threads) {
            return outcome(false, format!("pipeline run {name} with {threads} threads failed"));
        }
        hashes.push(hash_tree(&out));
    }
    let files = hashes[0].len();
    let same = hashes.windows(2).all(|w| w[0] == w[1]);
    outcome(
        same && files > 0,
        format!("{files} output files, SHA-256 identical over 2 runs and 1 vs 8 threads: {same}"),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("codec round-trip", codec_round_trip),
        ("codec oracle", codec_oracle),
        ("error correction", error_correction),
        ("recall trend", recall_trend),
        ("drop-dtw optimality", drop_dtw_optimality),
        ("labeling", labeling),
        ("fusion benefit", fusion_benefit),
        ("metrics", metrics),
        ("end-to-end determinism", end_to_end_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
