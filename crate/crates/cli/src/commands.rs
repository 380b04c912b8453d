use std::cell::Cell;
use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use orbitsynth::bench::{benchmark, InputSpec};
use orbitsynth::datasetio::{
    read_coco_file, read_jsonl, read_split_file, read_yolo, split_dataset, subsample_train, write_coco_file,
    write_split_files, write_yolo,
};
use orbitsynth::distill::{
    constant_colour_images, distill, image_loss_and_grad, loss_trace_csv, DistillConfig, MockTeacher, Reduction,
    ToyStudent, DEFAULT_KERNEL_SIZE,
};
use orbitsynth::metrics::{
    evaluate_detections, miou, miou_dataset, ApInterpolation, Detection, GroundTruth, SegReport, SegSample,
};
use orbitsynth::scenegen::{
    demo_background, demo_sprite, generate_dataset, write_demo_assets, CameraModel, DatasetConfig, LoadedAssets,
    SceneConfig, DEMO_BACKGROUND_DIMS, DEMO_BACKGROUND_GSD_M,
};
use orbitsynth::trackfilter::{
    associate_with, background_flow, classify, count_labels, group_by_frame, AssociationParams, FlowMode,
};
use orbitsynth::{Band, Error, Kernel};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const RESOLVED_CONFIG: &str = "resolved_config.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Coco,
    Yolo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalTask {
    Det,
    Seg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowModeArg {
    /// Use the flow given with `--flow`.
    Config,
    /// Component-wise median of track velocities.
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchStage {
    /// Sample and render one scene from the demo assets.
    Render,
    /// mIoU over one label map of the input size.
    Metric,
    /// Distillation loss and gradient for one input frame.
    Distill,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoAssetsRun {
    pub band: Band,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRun {
    /// Inline config with absolute asset paths.
    pub dataset: DatasetConfig,
    pub n: usize,
    pub seed: u64,
    pub jobs: usize,
}

impl SynthRun {
    pub fn resolve(config: &Path, n: usize, seed: Option<u64>, jobs: usize) -> Result<Self, CliError> {
        let mut dataset = DatasetConfig::from_path(config)?;
        let cwd = std::env::current_dir().map_err(|e| Error::Io { path: ".".into(), source: e })?;
        dataset.resolve_paths(&cwd);
        let seed = seed.unwrap_or(dataset.seed);
        dataset.seed = seed;
        Ok(SynthRun { dataset, n, seed, jobs })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvertRun {
    pub input: PathBuf,
    pub from: Format,
    pub to: Format,
    pub template: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRun {
    pub manifest: PathBuf,
    pub ratios: (f64, f64, f64),
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleRun {
    pub split: PathBuf,
    pub fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub task: EvalTask,
    pub predictions: PathBuf,
    pub gt: PathBuf,
    pub iou_thresholds: Vec<f64>,
    pub interpolation: ApInterpolation,
    pub ignore_absent: bool,
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRun {
    pub dets: PathBuf,
    pub flow: Option<(f64, f64)>,
    pub flow_mode: FlowModeArg,
    pub gate_px: f64,
    pub residual_thresh_px: f64,
    pub max_gap_frames: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillRun {
    pub images: usize,
    pub size: usize,
    pub image_seed: u64,
    pub config: DistillConfig,
}

impl DistillRun {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        seed: u64,
        images: usize,
        size: usize,
        epochs: usize,
        eta: f64,
        batch: usize,
        channels: usize,
        reduction: Reduction,
        upsample_kernel: Kernel,
    ) -> Self {
        DistillRun {
            images,
            size,
            image_seed: seed,
            config: DistillConfig {
                channels,
                kernel_size: DEFAULT_KERNEL_SIZE,
                eta,
                epochs,
                batch,
                reduction,
                upsample_kernel,
                teacher_seed: seed.wrapping_add(1),
                init_seed: seed.wrapping_add(2),
                shuffle_seed: seed.wrapping_add(3),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRun {
    pub stage: BenchStage,
    pub passes: usize,
    pub warmup: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

/// Fully resolved command; written next to the outputs and accepted by
/// `replay`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Run {
    DemoAssets(DemoAssetsRun),
    Synth(SynthRun),
    Convert(ConvertRun),
    Split(SplitRun),
    Subsample(SubsampleRun),
    Eval(EvalRun),
    Filter(FilterRun),
    DistillDemo(DistillRun),
    Bench(BenchRun),
}

pub fn absolute(path: &Path) -> Result<PathBuf, CliError> {
    std::path::absolute(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e }.into())
}

fn write(path: PathBuf, text: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(&path, text).map_err(|e| Error::Io { path, source: e }.into())
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e }.into())
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| {
        Error::Parse {
            what: path.display().to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
        .into()
    })
}

fn read_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let file = fs::File::open(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    Ok(read_jsonl(BufReader::new(file), &path.display().to_string())?)
}

fn to_json(value: &impl Serialize) -> String {
    serde_json::to_string_pretty(value).expect("value serializes") + "\n"
}

pub fn read_resolved(path: &Path) -> Result<Run, CliError> {
    parse_json(path)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::usage(format!("cannot build worker pool: {e}")))
}

pub fn execute(run: &Run, out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| Error::Io { path: out.to_path_buf(), source: e })?;
    write(out.join(RESOLVED_CONFIG), to_json(run))?;
    match run {
        Run::DemoAssets(r) => demo_assets(r, out),
        Run::Synth(r) => synth(r, out),
        Run::Convert(r) => convert(r, out),
        Run::Split(r) => split(r, out),
        Run::Subsample(r) => subsample(r, out),
        Run::Eval(r) => match r.task {
            EvalTask::Det => eval_det(r, out),
            EvalTask::Seg => eval_seg(r, out),
        },
        Run::Filter(r) => filter(r, out),
        Run::DistillDemo(r) => distill_demo(r, out),
        Run::Bench(r) => bench(r, out),
    }
}

fn demo_assets(r: &DemoAssetsRun, out: &Path) -> Result<(), CliError> {
    let cfg = write_demo_assets(out, r.band, r.seed)?;
    let path = out.join("config.json");
    write(path.clone(), to_json(&cfg))?;
    println!("wrote demo assets and {}", path.display());
    Ok(())
}

fn synth(r: &SynthRun, out: &Path) -> Result<(), CliError> {
    let manifest = generate_dataset(&r.dataset, r.n, r.seed, out, r.jobs)?;
    println!(
        "rendered {} scenes (seed {}) into {}",
        manifest.entries.len(),
        r.seed,
        out.display()
    );
    Ok(())
}

fn convert(r: &ConvertRun, out: &Path) -> Result<(), CliError> {
    let manifest = match r.from {
        Format::Coco => read_coco_file(&r.input)?,
        Format::Yolo => {
            let template = r
                .template
                .as_ref()
                .ok_or_else(|| CliError::usage("YOLO input needs --template with image names and sizes"))?;
            read_yolo(&read_coco_file(template)?, &r.input)?
        }
    };
    match r.to {
        Format::Coco => write_coco_file(&manifest, out.join("annotations.json"))?,
        Format::Yolo => {
            write_yolo(&manifest, out)?;
        }
    }
    println!(
        "converted {} images / {} annotations to {:?}",
        manifest.entries.len(),
        manifest.annotations().count(),
        r.to
    );
    Ok(())
}

fn split(r: &SplitRun, out: &Path) -> Result<(), CliError> {
    let manifest = read_coco_file(&r.manifest)?;
    let s = split_dataset(&manifest, r.ratios, r.seed)?;
    write_split_files(&s, out)?;
    println!("train {} / val {} / test {}", s.train.len(), s.val.len(), s.test.len());
    Ok(())
}

fn subsample(r: &SubsampleRun, out: &Path) -> Result<(), CliError> {
    let s = read_split_file(&r.split)?;
    let sub = subsample_train(&s, r.fraction, r.seed)?;
    write_split_files(&sub, out)?;
    println!(
        "kept {} of {} training images ({:.1}% of the full split)",
        sub.train.len(),
        s.train.len(),
        100.0 * sub.fraction_used
    );
    Ok(())
}

fn eval_det(r: &EvalRun, out: &Path) -> Result<(), CliError> {
    let manifest = read_coco_file(&r.gt)?;
    let gts: Vec<GroundTruth> = manifest.annotations().map(GroundTruth::from).collect();
    let dets: Vec<Detection> = read_lines(&r.predictions)?;
    let report = evaluate_detections(&dets, &gts, &r.iou_thresholds, r.interpolation)?;
    write(out.join("report.json"), report.to_json())?;
    write(out.join("report.csv"), report.to_csv())?;
    for row in &report.rows {
        println!("AP@{:.2} = {:.5}  (recall {:.4}, precision {:.4})", row.iou_threshold, row.ap, row.recall, row.precision);
    }
    Ok(())
}

/// Label maps for segmentation evaluation.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelMapFile {
    class_names: Vec<String>,
    images: Vec<LabelMap>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelMap {
    image_id: String,
    width: usize,
    height: usize,
    /// Row-major class ids.
    labels: Vec<u32>,
}

fn eval_seg(r: &EvalRun, out: &Path) -> Result<(), CliError> {
    let preds: LabelMapFile = parse_json(&r.predictions)?;
    let gts: LabelMapFile = parse_json(&r.gt)?;
    if preds.class_names != gts.class_names {
        return Err(CliError::usage(format!(
            "class lists differ: predictions {:?}, ground truth {:?}",
            preds.class_names, gts.class_names
        )));
    }
    let mut by_id: BTreeMap<&str, &LabelMap> = BTreeMap::new();
    for p in &preds.images {
        if by_id.insert(p.image_id.as_str(), p).is_some() {
            return Err(CliError::usage(format!("duplicate prediction for `{}`", p.image_id)));
        }
    }
    if by_id.len() != gts.images.len() {
        return Err(CliError::usage(format!(
            "{} predicted images for {} ground-truth images",
            by_id.len(),
            gts.images.len()
        )));
    }
    let samples = gts
        .images
        .iter()
        .map(|g| {
            let p = by_id
                .get(g.image_id.as_str())
                .ok_or_else(|| CliError::usage(format!("no prediction for `{}`", g.image_id)))?;
            if (p.width, p.height) != (g.width, g.height) {
                return Err(CliError::usage(format!(
                    "`{}`: prediction is {}x{}, ground truth {}x{}",
                    g.image_id, p.width, p.height, g.width, g.height
                )));
            }
            Ok(SegSample::new(g.width, g.height, p.labels.clone(), g.labels.clone(), gts.class_names.clone())?)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let result = pool(r.jobs)?.install(|| miou_dataset(&samples, r.ignore_absent))?;
    let report = SegReport {
        result,
        ignore_absent: r.ignore_absent,
        n_samples: samples.len(),
    };
    write(out.join("report.json"), report.to_json())?;
    write(out.join("report.csv"), report.to_csv())?;
    for c in &report.result.per_class {
        match c.iou {
            Some(v) => println!("{:<16} IoU {v:.5}", c.name),
            None => println!("{:<16} absent", c.name),
        }
    }
    println!("mIoU {:.5} over {} images", report.result.mean, report.n_samples);
    Ok(())
}

#[derive(Serialize)]
struct FilterSummary {
    background_velocity_px_per_frame: Option<(f64, f64)>,
    tracks: usize,
    target: usize,
    background: usize,
    unknown: usize,
}

fn filter(r: &FilterRun, out: &Path) -> Result<(), CliError> {
    let dets: Vec<Detection> = read_lines(&r.dets)?;
    let frames = group_by_frame(&dets);
    let view: Vec<(u64, &[Detection])> = frames.iter().map(|(t, d)| (*t, d.as_slice())).collect();
    let params = AssociationParams {
        gate_px: r.gate_px,
        max_gap_frames: r.max_gap_frames,
    };
    let tracks = associate_with(&view, &params)?;
    let (labeled, flow) = if tracks.is_empty() {
        (Vec::new(), None)
    } else {
        let mode = match r.flow_mode {
            FlowModeArg::Config => FlowMode::EphemerisConfig,
            FlowModeArg::Median => FlowMode::MedianOfTracks,
        };
        let flow = background_flow(&tracks, mode, r.flow)?;
        (classify(&tracks, &flow, r.residual_thresh_px)?, Some(flow.background_velocity_px_per_frame))
    };
    let counts = count_labels(&labeled);
    let summary = FilterSummary {
        background_velocity_px_per_frame: flow,
        tracks: labeled.len(),
        target: counts.target,
        background: counts.background,
        unknown: counts.unknown,
    };
    write(out.join("tracks.json"), to_json(&labeled))?;
    write(out.join("summary.json"), to_json(&summary))?;
    println!(
        "{} tracks: {} target, {} background, {} unknown",
        summary.tracks, summary.target, summary.background, summary.unknown
    );
    Ok(())
}

#[derive(Serialize)]
struct DistillSummary {
    initial_loss: f64,
    final_loss: f64,
    ratio: f64,
    epochs: usize,
}

fn distill_demo(r: &DistillRun, out: &Path) -> Result<(), CliError> {
    let c = &r.config;
    let data = constant_colour_images(r.images, r.size, r.size, r.image_seed)?;
    let teacher = MockTeacher::new(c.channels, c.teacher_seed)?;
    let mut student = ToyStudent::new(c.kernel_size, c.channels, c.init_seed)?;
    let outcome = distill(&teacher, &mut student, &data, c)?;
    let summary = DistillSummary {
        initial_loss: outcome.initial_loss,
        final_loss: outcome.final_loss,
        ratio: outcome.final_loss / outcome.initial_loss,
        epochs: outcome.trace.len(),
    };
    write(out.join("loss_trace.csv"), loss_trace_csv(&outcome.trace))?;
    write(out.join("summary.json"), to_json(&summary))?;
    println!(
        "loss {:.6e} -> {:.6e} ({:.3}% of initial) after {} epochs",
        summary.initial_loss,
        summary.final_loss,
        100.0 * summary.ratio,
        summary.epochs
    );
    Ok(())
}

fn bench(r: &BenchRun, out: &Path) -> Result<(), CliError> {
    let report = match r.stage {
        BenchStage::Distill => {
            let teacher = MockTeacher::new(8, r.seed)?;
            let student = ToyStudent::new(DEFAULT_KERNEL_SIZE, 8, r.seed.wrapping_add(1))?;
            let spec = InputSpec { width: r.width, height: r.height, channels: 3 };
            benchmark(
                |f| image_loss_and_grad(&teacher, &student, f, Reduction::MeanSq, Kernel::Bicubic),
                spec,
                r.passes,
                r.warmup,
            )?
        }
        BenchStage::Metric => {
            let n = r.width * r.height;
            let labels = |offset: usize| (0..n).map(|i| (((i * 2654435761) >> 7) + offset) as u32 % 3).collect();
            let names = vec!["background".to_string(), "body".to_string(), "panel".to_string()];
            let sample = SegSample::new(r.width, r.height, labels(0), labels(1), names)?;
            let spec = InputSpec { width: r.width, height: r.height, channels: 1 };
            benchmark(|_| miou(&sample, true), spec, r.passes, r.warmup)?
        }
        BenchStage::Render => {
            let camera = CameraModel::default();
            let (bw, bh) = DEMO_BACKGROUND_DIMS;
            let bg = demo_background(bw, bh, camera.band, r.seed)?;
            let sprite = demo_sprite(camera.band)?;
            let assets = LoadedAssets::from_parts(
                camera,
                vec![("earth".into(), bg, DEMO_BACKGROUND_GSD_M)],
                vec![("edge".into(), sprite)],
            );
            let scene = SceneConfig::default();
            let index = Cell::new(0u64);
            let spec = InputSpec {
                width: camera.width_px,
                height: camera.height_px,
                channels: camera.band.channels(),
            };
            benchmark(
                |_| {
                    let i = index.get();
                    index.set(i + 1);
                    assets.render(r.seed, i, &scene)
                },
                spec,
                r.passes,
                r.warmup,
            )?
        }
    };
    write(out.join("bench.json"), report.to_json() + "\n")?;
    println!(
        "{:?}: {} passes, mean {:.3} ms, p50 {:.3} ms, p95 {:.3} ms",
        r.stage, report.n_passes, report.mean_ms, report.p50_ms, report.p95_ms
    );
    Ok(())
}
