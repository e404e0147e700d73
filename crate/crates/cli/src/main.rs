use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use pyrdepth_cli::bench::{cmd_bench, BenchConfig};
use pyrdepth_cli::eval::{cmd_eval, Crop, EvalConfig, PredKind};
use pyrdepth_cli::infer::{cmd_infer, InferConfig};
use pyrdepth_cli::verify::cmd_verify_loss;
use pyrdepth_cli::weights_cmd::{cmd_init_weights, cmd_inspect};
use pyrdepth_core::loss::SsimConstants;
use pyrdepth_core::{CameraModel, ExitLevel};

#[derive(Parser)]
#[command(name = "pyrdepth", version, about = "Pyramidal monocular depth estimation on the CPU")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CropArg {
    Eigen,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum PredKindArg {
    Disparity,
    Depth,
}

#[derive(Subcommand)]
enum Command {
    /// Predict a full-resolution disparity map (16-bit PNG, pixels x 256).
    Infer {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Finest level to decode: h, q, e, s16, s32 or s64.
        #[arg(long, default_value = "h")]
        exit: ExitLevel,
        #[arg(long)]
        out: PathBuf,
        /// Run at 512x256 and resize the result back to the input size.
        #[arg(long)]
        resize: bool,
        /// Also write a colour-mapped preview.
        #[arg(long)]
        preview: Option<PathBuf>,
    },
    /// Score predictions against 16-bit depth ground truth (metres x 256, 0 = invalid).
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Focal length in pixels.
        #[arg(long)]
        focal: f64,
        /// Stereo baseline in metres.
        #[arg(long)]
        baseline: f64,
        /// Maximum ground-truth depth in metres.
        #[arg(long, default_value = "80", value_parser = ["80", "50"])]
        cap: String,
        #[arg(long, value_enum, default_value = "eigen")]
        crop: CropArg,
        /// Whether prediction rasters hold disparity or depth.
        #[arg(long, value_enum, default_value = "disparity")]
        pred_kind: PredKindArg,
        /// Aggregate CSV; per-image rows go to <name>_per_image.csv alongside.
        #[arg(long)]
        out: PathBuf,
    },
    /// Time inference per exit level and report activation memory.
    Bench {
        #[arg(long)]
        weights: PathBuf,
        /// Input size as HEIGHTxWIDTH.
        #[arg(long, default_value = "256x512")]
        dims: String,
        #[arg(long, value_delimiter = ',', default_value = "h,q,e")]
        levels: Vec<ExitLevel>,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the loss-function self-check battery.
    VerifyLoss {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Replace the SSIM stabilizers with wrong values (self-test of the battery).
        #[arg(long, hide = true)]
        corrupt_ssim: bool,
    },
    /// Write seeded random weights.
    InitWeights {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// List the tensors in a weights file.
    Inspect {
        #[arg(long)]
        weights: PathBuf,
    },
}

fn parse_dims(s: &str) -> Result<(usize, usize)> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .with_context(|| format!("dimensions must look like 256x512, got `{s}`"))?;
    Ok((h.trim().parse()?, w.trim().parse()?))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Infer {
            weights,
            input,
            exit,
            out,
            resize,
            preview,
        } => cmd_infer(&InferConfig {
            weights,
            input,
            exit,
            output: out,
            resize,
            preview,
        }),
        Command::Eval {
            pred,
            gt,
            focal,
            baseline,
            cap,
            crop,
            pred_kind,
            out,
        } => {
            let cap_m: f64 = cap.parse()?;
            cmd_eval(&EvalConfig {
                pred_dir: pred,
                gt_dir: gt,
                camera: CameraModel::new(focal, baseline)?.with_depth_range(1e-3, cap_m)?,
                cap_m,
                crop: match crop {
                    CropArg::Eigen => Crop::Eigen,
                    CropArg::None => Crop::None,
                },
                pred_kind: match pred_kind {
                    PredKindArg::Disparity => PredKind::Disparity,
                    PredKindArg::Depth => PredKind::Depth,
                },
                output: out,
            })
            .map(drop)
        }
        Command::Bench {
            weights,
            dims,
            levels,
            reps,
            out,
        } => cmd_bench(&BenchConfig {
            weights,
            dims: parse_dims(&dims)?,
            levels,
            reps,
            output: out,
        })
        .map(drop),
        Command::VerifyLoss { seed, corrupt_ssim } => {
            let constants = if corrupt_ssim {
                SsimConstants { c1: 0.1, c2: 0.3 }
            } else {
                SsimConstants::default()
            };
            let report = cmd_verify_loss(seed, &constants)?;
            if !report.all_passed() {
                let names: Vec<&str> = report.failures().map(|c| c.name).collect();
                bail!("loss checks failed: {}", names.join(", "));
            }
            Ok(())
        }
        Command::InitWeights { seed, out } => cmd_init_weights(seed, &out).map(drop),
        Command::Inspect { weights } => cmd_inspect(&weights),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match pyrdepth_cli::configure_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
