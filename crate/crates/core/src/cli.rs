//! Command-line front end for the `rotdet` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::PipelineConfig;
use crate::dataio::{
    assign_to_patch, format_dota, parse_dota, read_detections, tile_image, write_detections, GroundTruth, Image,
};
use crate::error::{Error, Result};
use crate::eval::{compute_ap, IouMode};
use crate::pipeline::{bench, Network};
use crate::selfcheck::run_selfcheck;

#[derive(Debug, Parser)]
#[command(name = "rotdet", version, about = "Oriented object detection toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cut images into overlapping square patches and remap their labels.
    Patch(PatchArgs),
    /// Run the detector and write one line per detection.
    Detect(DetectArgs),
    /// Score detections against ground truth.
    Eval(EvalArgs),
    /// Measure single-thread throughput.
    Bench(BenchArgs),
    /// Compare fast code paths against slow reference implementations.
    Selfcheck(SelfcheckArgs),
}

#[derive(Debug, Args)]
pub struct PatchArgs {
    /// PNM images (P5/P6).
    #[arg(required = true)]
    pub images: Vec<PathBuf>,
    /// Directory of `<stem>.txt` annotation files.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 600)]
    pub size: usize,
    #[arg(long, default_value_t = 100)]
    pub overlap: usize,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(required = true)]
    pub images: Vec<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Detection lines as written by `detect`.
    #[arg(long)]
    pub detections: PathBuf,
    /// Annotation files, or directories of `*.txt` files; the file stem is the source id.
    #[arg(long = "gt", required = true, num_args = 1..)]
    pub ground_truth: Vec<PathBuf>,
    /// Supplies the default mode and threshold.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<IouMode>,
    #[arg(long)]
    pub iou: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(required = true)]
    pub images: Vec<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelfcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn stem(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_owned)
        .ok_or_else(|| Error::Data(format!("{}: cannot derive a source id", path.display())))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn emit(out: Option<&Path>, text: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::Io { path: p.into(), source: e }),
        None => std::io::stdout()
            .write_all(text)
            .map_err(|e| Error::Io { path: "<stdout>".into(), source: e }),
    }
}

/// Ground truth from annotation files; any malformed line is an error.
pub fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruth>> {
    let parsed = parse_dota(&read_text(path)?);
    if let Some(e) = parsed.errors.into_iter().next() {
        return Err(e.into_error(&path.display().to_string()));
    }
    let source_id = stem(path)?;
    parsed
        .records
        .iter()
        .map(|r| {
            Ok(GroundTruth {
                source_id: source_id.clone(),
                class: r.class_name.clone(),
                rbox: r.rotated()?,
                difficult: r.is_difficult(),
            })
        })
        .collect()
}

fn gt_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let entries = fs::read_dir(p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
            let mut found: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "txt"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

fn run_patch(a: &PatchArgs) -> Result<()> {
    fs::create_dir_all(&a.out).map_err(|e| Error::Io { path: a.out.clone(), source: e })?;
    for path in &a.images {
        let image = Image::read(path)?;
        let source_id = stem(path)?;
        let records = match &a.labels {
            Some(dir) => {
                let label_path = dir.join(format!("{source_id}.txt"));
                let parsed = parse_dota(&read_text(&label_path)?);
                for e in &parsed.errors {
                    log::warn!("{}:{}: skipped: {}", label_path.display(), e.line, e.message);
                }
                Some(parsed.records)
            }
            None => None,
        };
        let ext = if image.channels == 1 { "pgm" } else { "ppm" };
        for mut spec in tile_image(image.width, image.height, a.size, a.overlap)? {
            spec.source_id = source_id.clone();
            let id = spec.patch_id();
            image
                .crop(spec.origin_x, spec.origin_y, spec.width, spec.height)?
                .write(a.out.join(format!("{id}.{ext}")))?;
            if let Some(records) = &records {
                let label = a.out.join(format!("{id}.txt"));
                fs::write(&label, format_dota(&assign_to_patch(records, &spec)))
                    .map_err(|e| Error::Io { path: label, source: e })?;
            }
        }
    }
    Ok(())
}

fn run_detect(a: &DetectArgs) -> Result<()> {
    let cfg = PipelineConfig::read(&a.config)?;
    let net = Network::<f32>::load(&cfg)?;
    let mut out = Vec::new();
    for path in &a.images {
        let image = Image::read(path)?;
        let dets = net.detect(&image.to_tensor(), &stem(path)?)?;
        write_detections(&dets, &mut out)?;
    }
    emit(a.out.as_deref(), &out)
}

fn run_eval(a: &EvalArgs) -> Result<()> {
    let cfg = match &a.config {
        Some(p) => PipelineConfig::read(p)?,
        None => PipelineConfig::default(),
    };
    let iou = a.iou.unwrap_or(cfg.eval_iou);
    if !(0.0..=1.0).contains(&iou) {
        return Err(Error::Config(format!("--iou must lie in [0, 1], got {iou}")));
    }
    let dets = read_detections(&read_text(&a.detections)?, &a.detections.display().to_string())?;
    let mut gts = Vec::new();
    for f in gt_files(&a.ground_truth)? {
        gts.extend(read_ground_truth(&f)?);
    }
    let report = compute_ap(&dets, &gts, iou, a.mode.unwrap_or(cfg.eval_mode));
    emit(a.out.as_deref(), report.to_text().as_bytes())
}

fn run_bench(a: &BenchArgs) -> Result<()> {
    let cfg = PipelineConfig::read(&a.config)?;
    let net = Network::<f32>::load(&cfg)?;
    let mut images = Vec::new();
    for path in &a.images {
        let bytes = fs::read(path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
        images.push((stem(path)?, bytes));
    }
    let report = bench(&net, &images, a.repeats)?;
    emit(a.out.as_deref(), report.to_text().as_bytes())
}

fn run_selfcheck_cmd(a: &SelfcheckArgs) -> Result<()> {
    let results = run_selfcheck(a.seed);
    for r in &results {
        println!("{}", r.line());
    }
    let failed: Vec<_> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Contract(format!("self-check failed: {}", failed.join(", "))))
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Patch(a) => run_patch(a),
        Command::Detect(a) => run_detect(a),
        Command::Eval(a) => run_eval(a),
        Command::Bench(a) => run_bench(a),
        Command::Selfcheck(a) => run_selfcheck_cmd(a),
    }
}
