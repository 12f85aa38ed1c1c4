use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use saliency_prompt::head::{load_checkpoint, save_checkpoint};
use saliency_prompt::pipeline::{
    evaluate, heatmap, make_synthetic_scene, prepare_dataset, pretrain, read_log,
    toy_feature_extractor, write_heatmap, write_log, write_report, DatasetSpec, PseudoLabelSource,
    RunConfig, SceneSpec,
};
use saliency_prompt::pnm::read_pnm;
use saliency_prompt::proposal::{propose_masks, ProposalConfig, ProposalManifest};
use saliency_prompt::tensor::{read_tensor, write_tensor};
use saliency_prompt::{Error, Result};

#[derive(Parser)]
#[command(
    name = "saliency-prompt",
    version,
    about = "Saliency-prompt pre-training toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Toy dense features `[H, W, D]` for a PGM/PPM image or `scene:<seed>`.
    ExtractFeatures {
        input: String,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Saliency mask proposals for a `[H, W, D]` feature tensor.
    ProposeMasks {
        tensor: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Proposal settings as JSON.
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Image id stored in the manifest (defaults to the file stem).
        #[arg(long)]
        id: Option<String>,
    },
    /// Pre-train a head; also writes `<ckpt>.json` and `<ckpt>.log.jsonl`.
    Pretrain {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Class-agnostic detection AP of a checkpoint on a dataset.
    Eval {
        #[arg(short = 'k', long)]
        checkpoint: PathBuf,
        #[arg(short, long)]
        dataset: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Per-kernel mean activation maps, `200x200`.
    ExportHeatmap {
        #[arg(short = 'k', long)]
        checkpoint: PathBuf,
        #[arg(short, long)]
        dataset: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Binarize masks at this activation before averaging.
        #[arg(short, long)]
        threshold: Option<f64>,
    },
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = OsString::from(path.as_os_str());
    s.push(suffix);
    PathBuf::from(s)
}

fn config_path(ckpt: &Path) -> PathBuf {
    with_suffix(ckpt, ".json")
}

fn log_path(ckpt: &Path) -> PathBuf {
    with_suffix(ckpt, ".log.jsonl")
}

fn load_input(input: &str) -> Result<saliency_prompt::tensor::Tensor> {
    match input.strip_prefix("scene:") {
        Some(seed) => {
            let seed = seed
                .parse::<u64>()
                .map_err(|e| Error::InvalidInput(format!("scene seed {seed:?}: {e}")))?;
            Ok(make_synthetic_scene(&SceneSpec::default(), seed)?.rgb)
        }
        None => read_pnm(input),
    }
}

/// Config sidecar of a checkpoint, prepared for inference on `dataset`.
fn eval_setup(
    ckpt: &Path,
    dataset: &Path,
) -> Result<(
    saliency_prompt::head::TrainState,
    RunConfig,
    Vec<saliency_prompt::pipeline::PreparedImage>,
)> {
    let state = load_checkpoint(ckpt)?;
    let mut cfg = RunConfig::from_json_file(config_path(ckpt))?;
    if state.params.num_kernels() != cfg.num_kernels || state.params.channels() != cfg.channels {
        return Err(Error::Config(format!(
            "checkpoint {} does not match its config",
            ckpt.display()
        )));
    }
    cfg.dataset = DatasetSpec::from_json_file(dataset)?;
    cfg.pseudo_labels = PseudoLabelSource::Saliency;
    let images = prepare_dataset(&cfg, &cfg.dataset.load()?)?;
    Ok((state, cfg, images))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::ExtractFeatures { input, output } => {
            let rgb = load_input(&input)?;
            write_tensor(&output, &toy_feature_extractor(&rgb)?)
        }
        Command::ProposeMasks {
            tensor,
            output,
            config,
            id,
        } => {
            let cfg = match config {
                Some(p) => {
                    let c: ProposalConfig = saliency_prompt::pipeline::read_json(&p)?;
                    c.validate()?;
                    c
                }
                None => ProposalConfig::default(),
            };
            let x = read_tensor(&tensor)?;
            let [h, w] = match x.shape() {
                [h, w, _] => [*h, *w],
                s => {
                    return Err(Error::InvalidInput(format!(
                        "expected [H, W, D], got {s:?}"
                    )))
                }
            };
            let proposals = propose_masks(&x, &cfg)?;
            let id = id.unwrap_or_else(|| {
                tensor
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default()
            });
            ProposalManifest::from_proposals(id, h, w, &cfg, &proposals).save(&output)
        }
        Command::Pretrain { config, output } => {
            let cfg = RunConfig::from_json_file(&config)?;
            let out = pretrain(&cfg)?;
            save_checkpoint(&output, &out.state)?;
            cfg.to_json_file(config_path(&output))?;
            write_log(log_path(&output), &out.log)?;
            if let Some(last) = out.log.last() {
                eprintln!(
                    "{} steps, final loss {:.6} (step 0: {:.6})",
                    out.log.len(),
                    last.total,
                    out.log[0].total
                );
            }
            Ok(())
        }
        Command::Eval {
            checkpoint,
            dataset,
            output,
        } => {
            let (state, cfg, images) = eval_setup(&checkpoint, &dataset)?;
            let log_file = log_path(&checkpoint);
            let log = if log_file.exists() {
                read_log(&log_file)?
            } else {
                Vec::new()
            };
            let report = evaluate(&state.params, &cfg, &images, &log)?;
            write_report(&output, &report)?;
            let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
            eprintln!(
                "AP {} AP50 {} AP75 {}",
                fmt(report.detection.ap),
                fmt(report.detection.ap50),
                fmt(report.detection.ap75)
            );
            Ok(())
        }
        Command::ExportHeatmap {
            checkpoint,
            dataset,
            output,
            threshold,
        } => {
            if let Some(t) = threshold {
                if !(0.0..=1.0).contains(&t) {
                    return Err(Error::Config(format!("threshold {t} not in [0, 1]")));
                }
            }
            let (state, cfg, images) = eval_setup(&checkpoint, &dataset)?;
            write_heatmap(&output, &heatmap(&state.params, &cfg, &images, threshold)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
