mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use orbitsynth::distill::Reduction;
use orbitsynth::metrics::ApInterpolation;
use orbitsynth::{Band, Kernel};

use commands::{
    BenchRun, BenchStage, ConvertRun, DemoAssetsRun, DistillRun, EvalRun, EvalTask, FilterRun, FlowModeArg,
    Format, Run, SplitRun, SubsampleRun, SynthRun,
};
use error::CliError;

/// Synthetic long-range thermal datasets, detector evaluation, track
/// filtering and distillation tooling.
#[derive(Parser)]
#[command(name = "orbitsynth", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Master seed; every random choice of the command derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for synthesis and metric accumulation (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Write a procedural background, sprite and matching dataset config.
    DemoAssets {
        #[arg(long, default_value = "lwir")]
        band: Band,
    },
    /// Render a synthetic dataset from a config file.
    Synth {
        /// Dataset config (.json or .toml).
        #[arg(short, long)]
        config: PathBuf,
        /// Number of scenes.
        #[arg(long)]
        n: usize,
    },
    /// Convert annotations between COCO JSON and YOLO text.
    Convert {
        /// COCO file, or the directory holding `labels/` for YOLO input.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        from: Format,
        #[arg(long)]
        to: Format,
        /// COCO file supplying image names and sizes for YOLO input.
        #[arg(long)]
        template: Option<PathBuf>,
    },
    /// Split a COCO manifest into train / val / test id lists.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, num_args = 3, default_values_t = [0.75, 0.20, 0.05])]
        ratios: Vec<f64>,
    },
    /// Keep a nested fraction of a split's training ids.
    Subsample {
        /// `split.json` written by `split`.
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        fraction: f64,
    },
    /// Evaluate detections (AP) or segmentations (mIoU).
    Eval {
        #[arg(long)]
        task: EvalTask,
        /// Detections, one JSON object per line.
        #[arg(long)]
        dets: Option<PathBuf>,
        /// Predicted label maps.
        #[arg(long)]
        preds: Option<PathBuf>,
        /// COCO ground truth (det) or label maps (seg).
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, num_args = 1.., default_values_t = [0.5, 0.75])]
        iou: Vec<f64>,
        #[arg(long, default_value = "points_101")]
        interpolation: ApInterpolation,
        /// Score classes absent from both maps as 0 instead of skipping them.
        #[arg(long)]
        include_absent: bool,
    },
    /// Label detection tracks as target or background by their motion.
    Filter {
        /// Detections with `frame_index`, one JSON object per line.
        #[arg(long)]
        dets: PathBuf,
        /// Known background flow in px/frame.
        #[arg(long, num_args = 2, allow_negative_numbers = true, conflicts_with = "flow_mode")]
        flow: Option<Vec<f64>>,
        #[arg(long)]
        flow_mode: Option<FlowModeArg>,
        #[arg(long, default_value_t = 20.0)]
        gate: f64,
        #[arg(long, default_value_t = 1.0)]
        thresh: f64,
        #[arg(long, default_value_t = 1)]
        max_gap: u64,
    },
    /// Distill a mock teacher into the toy student on constant-colour images.
    DistillDemo {
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-3)]
        eta: f64,
        #[arg(long, default_value_t = 1)]
        batch: usize,
        #[arg(long, default_value_t = 8)]
        channels: usize,
        #[arg(long, default_value_t = 16)]
        images: usize,
        /// Image side in pixels.
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[arg(long, default_value = "mean_sq")]
        reduction: Reduction,
        #[arg(long, default_value = "bicubic")]
        upsample: Kernel,
    },
    /// Time a pipeline stage over repeated passes.
    Bench {
        #[arg(long, default_value = "distill")]
        stage: BenchStage,
        #[arg(long, default_value_t = orbitsynth::bench::DEFAULT_PASSES)]
        passes: usize,
        #[arg(long, default_value_t = orbitsynth::bench::DEFAULT_WARMUP)]
        warmup: usize,
        #[arg(long, default_value_t = 832)]
        width: usize,
        #[arg(long, default_value_t = 832)]
        height: usize,
    },
    /// Re-run a command from the resolved config it wrote.
    Replay {
        /// `resolved_config.json` from an earlier run.
        resolved: PathBuf,
    },
}

fn resolve(command: Command, g: &Global) -> Result<Run, CliError> {
    let seed = g.seed.unwrap_or(0);
    Ok(match command {
        Command::DemoAssets { band } => Run::DemoAssets(DemoAssetsRun { band, seed }),
        Command::Synth { config, n } => Run::Synth(SynthRun::resolve(&config, n, g.seed, g.jobs)?),
        Command::Convert {
            input,
            from,
            to,
            template,
        } => Run::Convert(ConvertRun {
            input: commands::absolute(&input)?,
            from,
            to,
            template: template.as_deref().map(commands::absolute).transpose()?,
        }),
        Command::Split { manifest, ratios } => Run::Split(SplitRun {
            manifest: commands::absolute(&manifest)?,
            ratios: (ratios[0], ratios[1], ratios[2]),
            seed,
        }),
        Command::Subsample { split, fraction } => Run::Subsample(SubsampleRun {
            split: commands::absolute(&split)?,
            fraction,
            seed,
        }),
        Command::Eval {
            task,
            dets,
            preds,
            gt,
            iou,
            interpolation,
            include_absent,
        } => {
            let predictions = match (task, dets, preds) {
                (EvalTask::Det, Some(p), None) | (EvalTask::Seg, None, Some(p)) => p,
                (EvalTask::Det, _, _) => return Err(CliError::usage("--task det needs --dets (and no --preds)")),
                (EvalTask::Seg, _, _) => return Err(CliError::usage("--task seg needs --preds (and no --dets)")),
            };
            Run::Eval(EvalRun {
                task,
                predictions: commands::absolute(&predictions)?,
                gt: commands::absolute(&gt)?,
                iou_thresholds: iou,
                interpolation,
                ignore_absent: !include_absent,
                jobs: g.jobs,
            })
        }
        Command::Filter {
            dets,
            flow,
            flow_mode,
            gate,
            thresh,
            max_gap,
        } => {
            let flow = flow.map(|v| (v[0], v[1]));
            let flow_mode = match (flow, flow_mode) {
                (Some(_), None) | (Some(_), Some(FlowModeArg::Config)) => FlowModeArg::Config,
                (None, Some(FlowModeArg::Median)) => FlowModeArg::Median,
                (None, _) => return Err(CliError::usage("give --flow VX VY or --flow-mode median")),
                (Some(_), Some(FlowModeArg::Median)) => unreachable!("clap rejects --flow with --flow-mode"),
            };
            Run::Filter(FilterRun {
                dets: commands::absolute(&dets)?,
                flow,
                flow_mode,
                gate_px: gate,
                residual_thresh_px: thresh,
                max_gap_frames: max_gap,
            })
        }
        Command::DistillDemo {
            epochs,
            eta,
            batch,
            channels,
            images,
            size,
            reduction,
            upsample,
        } => Run::DistillDemo(DistillRun::new(seed, images, size, epochs, eta, batch, channels, reduction, upsample)),
        Command::Bench {
            stage,
            passes,
            warmup,
            width,
            height,
        } => Run::Bench(BenchRun {
            stage,
            passes,
            warmup,
            width,
            height,
            seed,
        }),
        Command::Replay { resolved } => commands::read_resolved(&resolved)?,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = resolve(cli.command, &cli.global).and_then(|run| commands::execute(&run, &cli.global.out));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
