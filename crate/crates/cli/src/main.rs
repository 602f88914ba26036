mod commands;
mod error;
mod files;
mod fixture;

use clap::{Parser, Subcommand};
use commands::EmbedderChoice;
use error::{CliError, Result};
use qrsl_core::microqr::{EcLevel, Version};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "qrsl", version, about = "Micro QR object labeling and procedure step localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic scene: PGM frames, truth, hand trace, manifest.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Locate and decode symbols in a directory of PGM frames.
    Decode {
        #[arg(long)]
        frames: PathBuf,
        /// JSONL of {"frame", "bbox"} regions (hand trace or detections).
        #[arg(long)]
        detections: Option<PathBuf>,
        /// JSON map from payload to object name.
        #[arg(long)]
        names: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Descriptor file, one row per output detection.
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Build the object dictionary from decoded detections.
    Dict {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Name every sampled frame, linking undecoded detections.
    Link {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        dict: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Sampling rate.
        #[arg(long, default_value_t = 10.0)]
        fps: f64,
        #[arg(long)]
        min_sim: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Align protocol steps to frame embeddings.
    Localize {
        #[arg(long)]
        protocol: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        /// JSONL of per-frame name sets, one per embedding row.
        #[arg(long)]
        names: Option<PathBuf>,
        #[arg(long, default_value_t = 10.0)]
        fps: f64,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        #[arg(long, default_value_t = 0.75)]
        percentile: f64,
        #[arg(long, value_enum, default_value_t = EmbedderChoice::Toy)]
        embedder: EmbedderChoice,
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// MoF, precision, recall and tIoU of predicted segments.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        fps: f64,
        #[arg(long)]
        n_frames: usize,
        /// Step count; the largest step index in either file by default.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Temporal IoU between two annotation tracks.
    Agreement {
        a: PathBuf,
        b: PathBuf,
        /// Used only for tracks given in frames.
        #[arg(long, default_value_t = 10.0)]
        fps: f64,
    },
    /// Encode one symbol to a PGM image or a module-grid text file.
    Encode {
        #[arg(long)]
        payload: String,
        #[arg(long)]
        version: Option<Version>,
        #[arg(long)]
        ec: Option<EcLevel>,
        #[arg(long)]
        mask: Option<u8>,
        #[arg(long, default_value_t = 4)]
        module_px: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decoding recall per printed size over the default blur grid.
    Recall {
        #[arg(long, default_value_t = 300)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the bundled synthetic fixture.
    Fixture {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run gen, decode, dict, link, localize and eval over a fixture.
    Run {
        #[arg(long)]
        fixture: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        #[arg(long, default_value_t = 0.75)]
        percentile: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Map a CSV with arbitrary column names onto the protocol layout.
    Adapt {
        #[arg(long)]
        input: PathBuf,
        /// JSON {"step_text": column, "step_index"?, "gt_start_sec"?, "gt_end_sec"?}.
        #[arg(long)]
        mapping: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("QRSL_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::config(format!("QRSL_THREADS={v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::config(e.to_string()))
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    match cli.command {
        Command::Gen { config, seed, out } => {
            let m = commands::gen(&config, seed, &out)?;
            eprintln!("wrote {} frames to {}", m.n_frames, out.display());
        }
        Command::Decode { frames, detections, names, out, features } => {
            let s = commands::decode(&commands::DecodeArgs {
                frames: &frames,
                rois: detections.as_deref(),
                names: names.as_deref(),
                out: &out,
                features: features.as_deref(),
            })?;
            for p in &s.unknown_payloads {
                eprintln!("warning: payload {p:?} is not in the name map; kept as the name");
            }
            eprintln!("{}", serde_json::to_string(&s).expect("serializable"));
        }
        Command::Dict { detections, features, out } => {
            let n = commands::dict(&detections, &features, &out)?;
            eprintln!("dictionary with {n} objects");
        }
        Command::Link { detections, features, dict, manifest, fps, min_sim, out } => {
            commands::link(&commands::LinkArgs {
                detections: &detections,
                features: &features,
                dict: &dict,
                manifest: &manifest,
                sample_fps: fps,
                min_sim,
                out: &out,
            })?;
        }
        Command::Localize { protocol, embeddings, names, fps, lambda, percentile, embedder, table, out } => {
            commands::localize_cmd(&commands::LocalizeArgs {
                protocol: &protocol,
                embeddings: &embeddings,
                names: names.as_deref(),
                fps,
                lambda,
                percentile,
                embedder,
                table: table.as_deref(),
                out: &out,
            })?;
        }
        Command::Eval { pred, gt, fps, n_frames, steps, out } => {
            let r = commands::eval(&commands::EvalArgs {
                pred: &pred,
                gt: &gt,
                fps,
                n_frames,
                steps,
                out: out.as_deref(),
            })?;
            print!("{}", r.to_table());
        }
        Command::Agreement { a, b, fps } => println!("{:.1}", commands::agreement(&a, &b, fps)?),
        Command::Encode { payload, version, ec, mask, module_px, out } => {
            let (v, e) = commands::encode_cmd(&commands::EncodeArgs {
                payload: &payload,
                version,
                ec,
                mask,
                module_px,
                out: &out,
            })?;
            eprintln!("{v:?}-{e:?}");
        }
        Command::Recall { trials, seed, out } => {
            for r in commands::recall(trials, seed, out.as_deref())? {
                let cells: Vec<String> = r.per_spec_pct.iter().map(|p| format!("{p:6.1}")).collect();
                println!("{} cm {:6.1}  [{}]", r.size_cm, r.recall_pct, cells.join(" "));
            }
        }
        Command::Fixture { seed, out } => fixture::write_fixture(&out, seed)?,
        Command::Run { fixture, seed, lambda, percentile, out } => {
            print!("{}", fixture::run_pipeline(&fixture, &out, seed, lambda, percentile)?.to_table());
        }
        Command::Adapt { input, mapping, out } => {
            let n = commands::adapt(&input, &mapping, &out)?;
            eprintln!("{n} steps");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.kind.exit_code() as u8)
        }
    }
}
