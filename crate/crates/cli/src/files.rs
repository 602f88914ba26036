//! On-disk formats and atomic writes.

use crate::error::{CliError, Context, Result};
use qrsl_core::eval::AnnotationEvent;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let name = path.file_name().ok_or_else(|| CliError::config(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).in_file(path)
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable");
    out.push(b'\n');
    out
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::config(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("serializable");
        out.push(b'\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub fps: f64,
    pub n_frames: usize,
    pub seed: u64,
}

pub fn frame_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("{i:06}.pgm"))
}

/// Payload → object name.
pub type QrNameMap = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolRow {
    pub step_index: usize,
    pub step_text: String,
    pub gt_start_sec: Option<f64>,
    pub gt_end_sec: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRow {
    pub step_index: usize,
    pub step_text: String,
    pub start_frame: usize,
    pub end_frame: usize,
    pub start_sec: f64,
    pub end_sec: f64,
}

fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = read_text(path)?;
    csv::Reader::from_reader(text.as_bytes()).deserialize().collect::<std::result::Result<_, _>>().in_file(path)
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("serializable");
    }
    w.into_inner().expect("in-memory writer")
}

pub fn read_protocol(path: &Path) -> Result<Vec<ProtocolRow>> {
    let rows: Vec<ProtocolRow> = read_csv(path)?;
    validate_protocol(&rows, path)?;
    Ok(rows)
}

/// Dense 1-based step indices; ground-truth spans increasing and disjoint.
pub fn validate_protocol(rows: &[ProtocolRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(CliError::config(format!("{}: protocol has no steps", path.display())));
    }
    let mut last_end = f64::NEG_INFINITY;
    for (i, r) in rows.iter().enumerate() {
        if r.step_index != i + 1 {
            return Err(CliError::config(format!("{}: step_index must run 1, 2, … (row {})", path.display(), i + 1)));
        }
        match (r.gt_start_sec, r.gt_end_sec) {
            (Some(s), Some(e)) => {
                if !(s.is_finite() && e.is_finite() && s <= e && s >= last_end) {
                    return Err(CliError::config(format!(
                        "{}: step {} ground truth must be increasing and non-overlapping",
                        path.display(),
                        r.step_index
                    )));
                }
                last_end = e;
            }
            (None, None) => {}
            _ => {
                return Err(CliError::config(format!("{}: step {} has only one gt time", path.display(), r.step_index)))
            }
        }
    }
    Ok(())
}

/// Inclusive frame span for [start_sec, end_sec) at `fps`.
pub fn seconds_to_frames(start_sec: f64, end_sec: f64, fps: f64) -> (usize, usize) {
    let start = (start_sec * fps + 1e-9).floor().max(0.0) as usize;
    let end = ((end_sec * fps - 1e-9).ceil() as i64 - 1).max(start as i64) as usize;
    (start, end)
}

pub fn frames_to_seconds(start: usize, end: usize, fps: f64) -> (f64, f64) {
    (start as f64 / fps, (end + 1) as f64 / fps)
}

/// Per-step spans from any of the supported CSV layouts: segment output
/// (`start_frame,end_frame`), a protocol with ground truth
/// (`gt_start_sec,gt_end_sec`) or a plain track (`start_sec,end_sec`).
pub enum Spans {
    Frames(Vec<(usize, usize, usize)>),
    Seconds(Vec<AnnotationEvent>),
}

pub fn read_spans(path: &Path) -> Result<Spans> {
    let text = read_text(path)?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().in_file(path)?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let step =
        col("step_index").ok_or_else(|| CliError::config(format!("{}: no step_index column", path.display())))?;
    let frames = col("start_frame").zip(col("end_frame"));
    let secs = col("gt_start_sec").zip(col("gt_end_sec")).or(col("start_sec").zip(col("end_sec")));
    let records: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>().in_file(path)?;
    let field = |r: &csv::StringRecord, i: usize| r.get(i).unwrap_or("").trim().to_string();
    let num = |r: &csv::StringRecord, i: usize| -> Result<Option<f64>> {
        let s = field(r, i);
        if s.is_empty() {
            return Ok(None);
        }
        s.parse::<f64>().map(Some).map_err(|_| CliError::config(format!("{}: bad number {s:?}", path.display())))
    };
    let step_of = |r: &csv::StringRecord| -> Result<usize> {
        field(r, step)
            .parse::<usize>()
            .ok()
            .filter(|&k| k >= 1)
            .ok_or_else(|| CliError::config(format!("{}: bad step_index {:?}", path.display(), field(r, step))))
    };
    if let Some((s, e)) = frames {
        let mut out = Vec::new();
        for r in &records {
            match (num(r, s)?, num(r, e)?) {
                (Some(a), Some(b)) if a >= 0.0 && b >= a && a.fract() == 0.0 && b.fract() == 0.0 => {
                    out.push((step_of(r)?, a as usize, b as usize))
                }
                _ => return Err(CliError::config(format!("{}: bad frame span", path.display()))),
            }
        }
        return Ok(Spans::Frames(out));
    }
    let (s, e) = secs.ok_or_else(|| CliError::config(format!("{}: no start/end columns", path.display())))?;
    let mut out = Vec::new();
    for r in &records {
        if let (Some(a), Some(b)) = (num(r, s)?, num(r, e)?) {
            out.push(AnnotationEvent { step_id: step_of(r)?, start_sec: a, end_sec: b });
        }
    }
    Ok(Spans::Seconds(out))
}
