//! Command-line entry point: experiment orchestration, configuration echo,
//! and seed management over all subsystems.
//!
//! Every run echoes its effective configuration into the output location and
//! exits 0 on success, 1 on usage errors, 2 on data errors, 3 on numerical
//! failures, with a one-line machine-parsable reason on stderr.

use crate::analysis;
use crate::continual;
use crate::corruption::{self, CorruptionConfig, CorruptionLineSet, MaskConfig};
use crate::detector::{self, DetectorHyper, DetectorNet};
use crate::error::{Error, Result};
use crate::kcore::{read_dataset, write_dataset, Dataset, ImageSlice, Volume};
use crate::phantom::{make_phantom_dataset, PhantomConfig};
use crate::recon::{self, CsConfig, MaskPolicy, MiniVarNet, ReconHyper, SenseContext};
use crate::sampling::{equispaced_mask, sample_variable_mask, SamplingMask};
use crate::seeds;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "kscope", version, about = "k-space simulation and robust reconstruction toolkit")]
struct Cli {
    /// Worker thread cap; 1 is bit-identical to any other setting.
    /// Falls back to the KSCOPE_THREADS environment variable.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Default scale preset.
    #[arg(long, global = true, value_enum, default_value = "desk")]
    profile: Profile,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Profile {
    /// CPU-friendly sizes: 128 grid, 4 coils, 3 cascades, short trainings.
    Desk,
    /// Literature-scale sizes: 640 grid, 8 cascades, 50 epochs. Impractical
    /// on most CPUs; provided for completeness.
    Paper,
}

struct Scale {
    grid: usize,
    coils: usize,
    cascades: usize,
    channels: usize,
    epochs: usize,
}

impl Profile {
    fn scale(self) -> Scale {
        match self {
            Profile::Desk => Scale { grid: 128, coils: 4, cascades: 3, channels: 16, epochs: 10 },
            Profile::Paper => Scale { grid: 640, coils: 4, cascades: 8, channels: 16, epochs: 50 },
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a randomized phantom k-space dataset.
    PhantomGen(PhantomGenArgs),
    /// Generate one sampling mask.
    Mask(MaskArgs),
    /// Corrupt a dataset and emit labeled lines.
    Corrupt(CorruptArgs),
    /// Train the corruption detector.
    TrainDetector(TrainDetectorArgs),
    /// Evaluate a trained detector (optionally against the baseline).
    EvalDetector(EvalDetectorArgs),
    /// Reconstruct a dataset with one method.
    Recon(ReconArgs),
    /// Train the cascade reconstructor.
    TrainRecon(TrainReconArgs),
    /// Run the pre-training comparison.
    Transfer(TransferArgs),
    /// Run the sequential two-task experiment over a lambda grid.
    Ewc(EwcArgs),
    /// Fisher overlap between two trained reconstructors.
    FisherOverlap(FisherOverlapArgs),
    /// k-space line correlation maps.
    Autocorr(AutocorrArgs),
    /// Render a report document into plots.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct PhantomGenArgs {
    /// JSON file mirroring the phantom configuration (flags override).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "shepp-logan")]
    family: String,
    #[arg(long, default_value_t = 4)]
    volumes: usize,
    #[arg(long, default_value_t = 4)]
    slices: usize,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    coils: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MaskArgs {
    #[arg(long, value_parser = ["variable", "fixed"])]
    mode: String,
    #[arg(long)]
    width: usize,
    #[arg(long)]
    accel: Option<f64>,
    #[arg(long, default_value_t = 16)]
    min_lines: usize,
    #[arg(long)]
    acs_fraction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CorruptArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// JSON file with {"mask": {...}, "corruption": {...}} sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct TrainDetectorArgs {
    /// Directory holding lines.json from `corrupt`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalDetectorArgs {
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    threshold: f64,
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    roc: Option<PathBuf>,
    /// Also score the non-learning cross-correlation baseline.
    #[arg(long, default_value_t = true)]
    baseline: bool,
}

#[derive(Debug, Args)]
struct ReconArgs {
    #[arg(long, value_parser = ["zf", "cs", "varnet"])]
    method: String,
    #[arg(long)]
    net: Option<PathBuf>,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long)]
    crop: Option<usize>,
    #[arg(long, default_value_t = 1e-2)]
    cs_lambda: f64,
    #[arg(long, default_value_t = 200)]
    cs_iters: usize,
}

#[derive(Debug, Args)]
struct TrainReconArgs {
    #[arg(long, value_parser = ["variable", "fixed"])]
    policy: String,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    cascades: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TransferArgs {
    #[arg(long)]
    pretrain: PathBuf,
    #[arg(long)]
    finetune: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    large: Option<PathBuf>,
    #[arg(long, default_value_t = 6)]
    pre_epochs: usize,
    #[arg(long, default_value_t = 6)]
    ft_epochs: usize,
    #[arg(long)]
    cascades: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Debug, Args)]
struct EwcArgs {
    #[arg(long = "taskA")]
    task_a: PathBuf,
    #[arg(long = "taskB")]
    task_b: PathBuf,
    #[arg(long = "evalA")]
    eval_a: Option<PathBuf>,
    #[arg(long = "evalB")]
    eval_b: Option<PathBuf>,
    /// Comma-separated grid; "inf" selects the skip-phase-2 arm.
    #[arg(long, default_value = "0,3e2,3e3,3e4,3e5,inf")]
    lambdas: String,
    #[arg(long)]
    phase1_epochs: Option<usize>,
    #[arg(long)]
    phase2_epochs: Option<usize>,
    #[arg(long)]
    cascades: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    curves: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FisherOverlapArgs {
    #[arg(long = "netA")]
    net_a: PathBuf,
    #[arg(long = "netB")]
    net_b: PathBuf,
    #[arg(long = "dataA")]
    data_a: PathBuf,
    #[arg(long = "dataB")]
    data_b: PathBuf,
    /// Optional JSON partition [{"name": ..., "indices": [...]}]; defaults
    /// to the data-consistency vs refinement split.
    #[arg(long)]
    partition: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Debug, Args)]
struct AutocorrArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 128)]
    crop: usize,
    /// Anchor columns for the per-anchor summary.
    #[arg(long, default_value = "0,21,64,97")]
    anchors: String,
    #[arg(long, default_value_t = 0.08)]
    acs_fraction: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// A report document (schema-tagged JSON).
    #[arg(long)]
    doc: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// CLI entry point; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let threads = cli
        .threads
        .or_else(|| std::env::var("KSCOPE_THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(n) = threads {
        // ignore failure: the global pool may already exist in-process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            let class = match e.exit_code() {
                1 => "usage",
                2 => "data",
                _ => "numerical",
            };
            eprintln!("error: {class}: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let scale = cli.profile.scale();
    match cli.command {
        Command::PhantomGen(a) => phantom_gen(a, &scale),
        Command::Mask(a) => mask_cmd(a),
        Command::Corrupt(a) => corrupt_cmd(a),
        Command::TrainDetector(a) => train_detector_cmd(a, &scale),
        Command::EvalDetector(a) => eval_detector_cmd(a),
        Command::Recon(a) => recon_cmd(a),
        Command::TrainRecon(a) => train_recon_cmd(a, &scale),
        Command::Transfer(a) => transfer_cmd(a, &scale),
        Command::Ewc(a) => ewc_cmd(a, &scale),
        Command::FisherOverlap(a) => fisher_overlap_cmd(a),
        Command::Autocorr(a) => autocorr_cmd(a),
        Command::Report(a) => report_cmd(a),
    }
}

fn echo_config<T: Serialize>(dir_or_file: &Path, cfg: &T) -> Result<()> {
    let path = if dir_or_file.extension().is_some() {
        dir_or_file.with_extension("config.json")
    } else {
        std::fs::create_dir_all(dir_or_file)?;
        dir_or_file.join("config.json")
    };
    std::fs::write(path, serde_json::to_vec_pretty(cfg)?)?;
    Ok(())
}

fn write_log(dir: &Path, lines: &[String]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("log.txt"), lines.join("\n") + "\n")?;
    Ok(())
}

fn phantom_gen(a: PhantomGenArgs, scale: &Scale) -> Result<()> {
    let mut cfg: PhantomConfig = match &a.config {
        Some(path) => serde_json::from_slice(&std::fs::read(path)?)?,
        None => PhantomConfig {
            grid: scale.grid,
            coils: scale.coils,
            ..PhantomConfig::default()
        },
    };
    if a.config.is_none() {
        cfg.family = a.family.clone();
    }
    if let Some(g) = a.grid {
        cfg.grid = g;
    }
    if let Some(c) = a.coils {
        cfg.coils = c;
    }
    cfg.seed = a.seed;
    cfg.validate()?;
    echo_config(&a.out, &cfg)?;
    let ds = make_phantom_dataset(&cfg, a.volumes, a.slices, Some(&a.out))?;
    write_log(
        &a.out,
        &[format!(
            "phantom-gen family={} volumes={} slices={} grid={} coils={} seed={}",
            cfg.family,
            a.volumes,
            a.slices,
            cfg.grid,
            cfg.coils,
            a.seed
        ),
        format!("wrote {} slices", ds.num_slices())],
    )
}

/// On-disk mask document: acquired indices plus the ACS range.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskDoc {
    pub width: usize,
    pub acquired_indices: Vec<usize>,
    pub acs_start: usize,
    pub acs_len: usize,
    pub acceleration: f64,
}

impl MaskDoc {
    pub fn from_mask(mask: &SamplingMask) -> Self {
        Self {
            width: mask.width(),
            acquired_indices: mask.acquired_columns(),
            acs_start: mask.acs().start,
            acs_len: mask.acs().len(),
            acceleration: mask.acceleration(),
        }
    }

    pub fn to_mask(&self) -> Result<SamplingMask> {
        SamplingMask::from_parts(
            self.width,
            &self.acquired_indices,
            self.acs_start..self.acs_start + self.acs_len,
        )
    }
}

fn mask_cmd(a: MaskArgs) -> Result<()> {
    let mask = match a.mode.as_str() {
        "variable" => {
            let acs = a.acs_fraction.unwrap_or(0.08);
            let mut rng = seeds::rng(seeds::split(a.seed, "mask"));
            sample_variable_mask(a.width, a.min_lines, acs, &mut rng)?
        }
        "fixed" => {
            let accel = a
                .accel
                .ok_or_else(|| Error::InvalidArg("--accel required for fixed masks".into()))?;
            let acs = a.acs_fraction.unwrap_or(if accel >= 8.0 { 0.04 } else { 0.08 });
            equispaced_mask(a.width, accel, acs)?
        }
        _ => unreachable!(),
    };
    echo_config(
        &a.out,
        &serde_json::json!({
            "mode": a.mode,
            "width": a.width,
            "accel": a.accel,
            "min_lines": a.min_lines,
            "acs_fraction": a.acs_fraction,
            "seed": a.seed,
        }),
    )?;
    std::fs::write(&a.out, serde_json::to_vec_pretty(&MaskDoc::from_mask(&mask))?)?;
    Ok(())
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct CorruptFileConfig {
    mask: MaskConfig,
    corruption: CorruptionConfig,
}

fn corrupt_cmd(a: CorruptArgs) -> Result<()> {
    let cfg: CorruptFileConfig = match &a.config {
        Some(path) => serde_json::from_slice(&std::fs::read(path)?)?,
        None => CorruptFileConfig::default(),
    };
    let ds = read_dataset(&a.input)?;
    let (lines, corrupted) =
        corruption::make_corruption_dataset(&ds, &cfg.mask, &cfg.corruption, a.seed)?;
    std::fs::create_dir_all(&a.out)?;
    echo_config(&a.out, &serde_json::json!({
        "input": a.input,
        "seed": a.seed,
        "mask": cfg.mask,
        "corruption": cfg.corruption,
    }))?;
    // corrupted k-space dataset grouped back into volumes
    let mut out_ds = Dataset::default();
    let mut it = corrupted.iter();
    for vol in &ds.volumes {
        let mut slices = Vec::with_capacity(vol.slices.len());
        for _ in 0..vol.slices.len() {
            slices.push(it.next().expect("slice count preserved").ks.clone());
        }
        out_ds.volumes.push(Volume {
            anatomy: vol.anatomy.clone(),
            seed: vol.seed,
            slices,
        });
    }
    write_dataset(&a.out, &out_ds)?;
    std::fs::write(a.out.join("lines.json"), serde_json::to_vec(&lines)?)?;
    let masks: Vec<MaskDoc> = corrupted.iter().map(|c| MaskDoc::from_mask(&c.mask)).collect();
    std::fs::write(a.out.join("masks.json"), serde_json::to_vec(&masks)?)?;
    write_log(
        &a.out,
        &[format!(
            "corrupt in={} slices={} lines={} corrupted_share={:.4}",
            a.input.display(),
            ds.num_slices(),
            lines.num_lines(),
            lines.corrupted_share()
        )],
    )
}

fn load_lines(dir: &Path) -> Result<CorruptionLineSet> {
    let path = dir.join("lines.json");
    if !path.exists() {
        return Err(Error::Dataset(format!("{} has no lines.json", dir.display())));
    }
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

fn train_detector_cmd(a: TrainDetectorArgs, scale: &Scale) -> Result<()> {
    let train = load_lines(&a.data)?;
    let val = a.val.as_ref().map(|p| load_lines(p)).transpose()?;
    let hyper = DetectorHyper {
        epochs: a.epochs.unwrap_or(scale.epochs * 2),
        seed: a.seed,
        ..DetectorHyper::default()
    };
    echo_config(&a.out, &hyper)?;
    let (net, log) = detector::detector_train(&train, val.as_ref(), &hyper)?;
    net.save(&a.out)?;
    std::fs::write(
        a.out.with_extension("train_log.json"),
        serde_json::to_vec_pretty(&log)?,
    )?;
    Ok(())
}

fn eval_detector_cmd(a: EvalDetectorArgs) -> Result<()> {
    let net = DetectorNet::load(&a.net)?;
    let set = load_lines(&a.data)?;
    let (scores, labels) = detector::line_scores(&net, &set)?;
    let report = detector::evaluate_classifier(&scores, &labels, a.threshold)?;
    let baseline_auroc = if a.baseline {
        let mut b_scores = Vec::new();
        for sl in &set.slices {
            for line in &sl.lines {
                b_scores.push(detector::baseline_score(
                    &line.k_h,
                    &sl.acs[line.coil],
                    &line.k_h_nominal,
                )?);
            }
        }
        Some(detector::evaluate_classifier(&b_scores, &labels, 1.5)?.auroc)
    } else {
        None
    };
    let (corr, nom): (Vec<f64>, Vec<f64>) = {
        let mut c = Vec::new();
        let mut n = Vec::new();
        for (s, l) in scores.iter().zip(labels.iter()) {
            if *l {
                c.push(*s);
            } else {
                n.push(*s);
            }
        }
        (c, n)
    };
    let doc = analysis::ReportDoc::Classifier {
        report: report.clone(),
        scores_corrupted: corr,
        scores_nominal: nom,
        baseline_auroc,
    };
    echo_config(&a.report, &serde_json::json!({
        "net": a.net, "data": a.data, "threshold": a.threshold, "baseline": a.baseline,
    }))?;
    std::fs::write(&a.report, serde_json::to_vec_pretty(&doc)?)?;
    if let Some(roc_path) = &a.roc {
        analysis::write_roc_svg(roc_path, &report.roc, report.auroc)?;
    }
    Ok(())
}

/// 8-bit PGM image normalized by the slice maximum; deterministic bytes.
fn write_pgm(path: &Path, img: &ImageSlice) -> Result<()> {
    let peak = img.max_abs();
    let scale = if peak > 0.0 { 255.0 / peak } else { 0.0 };
    let mut bytes = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    bytes.extend(img.data.iter().map(|&v| (v.abs() * scale).round().clamp(0.0, 255.0) as u8));
    std::fs::write(path, bytes)?;
    Ok(())
}

fn recon_cmd(a: ReconArgs) -> Result<()> {
    let ds = read_dataset(&a.input)?;
    let doc: MaskDoc = serde_json::from_slice(&std::fs::read(&a.mask)?)?;
    let mask = doc.to_mask()?;
    std::fs::create_dir_all(&a.out)?;
    echo_config(&a.out, &serde_json::json!({
        "method": a.method, "input": a.input, "mask": a.mask, "crop": a.crop,
        "cs_lambda": a.cs_lambda, "cs_iters": a.cs_iters, "net": a.net,
    }))?;
    let crop = a.crop.map(|c| (c, c));
    let net = match (a.method.as_str(), &a.net) {
        ("varnet", Some(p)) => Some(MiniVarNet::load(p)?),
        ("varnet", None) => {
            return Err(Error::InvalidArg("--net required for the varnet method".into()))
        }
        _ => None,
    };
    let mut per_slice = Vec::new();
    let mut log_lines = Vec::new();
    for (i, full) in ds.slices().enumerate() {
        let masked = crate::sampling::apply_mask(full, &mask)?;
        let img = match a.method.as_str() {
            "zf" => recon::zero_filled(&masked, &mask, crop)?,
            "cs" => {
                let cfg = CsConfig {
                    lambda_rel: a.cs_lambda,
                    iters: a.cs_iters,
                    ..CsConfig::default()
                };
                let (img, _) = recon::cs_recon(&masked, &mask, &cfg)?;
                match crop {
                    Some((h, w)) => img.center_crop(h, w)?,
                    None => img,
                }
            }
            "varnet" => {
                let ctx = SenseContext::for_slice(&masked);
                let (img, _) =
                    recon::minivarnet_forward(net.as_ref().unwrap(), &masked, &mask, &ctx)?;
                match crop {
                    Some((h, w)) => img.center_crop(h, w)?,
                    None => img,
                }
            }
            _ => unreachable!(),
        };
        let truth = recon::ground_truth(full)?;
        let truth = match crop {
            Some((h, w)) => truth.center_crop(h, w)?,
            None => truth,
        };
        let m = recon::recon_metrics(&img, &truth)?;
        write_pgm(&a.out.join(format!("slice_{i:04}.pgm")), &img)?;
        log_lines.push(format!(
            "slice {i}: ssim {:.4} nmse {:.5} psnr {:.2}",
            m.ssim, m.nmse, m.psnr
        ));
        per_slice.push(m);
    }
    let mean = serde_json::json!({
        "method": a.method,
        "acceleration": mask.acceleration(),
        "mean_ssim": per_slice.iter().map(|m| m.ssim).sum::<f64>() / per_slice.len() as f64,
        "mean_nmse": per_slice.iter().map(|m| m.nmse).sum::<f64>() / per_slice.len() as f64,
        "per_slice": per_slice,
    });
    let metrics_path = a.metrics.unwrap_or_else(|| a.out.join("metrics.json"));
    std::fs::write(metrics_path, serde_json::to_vec_pretty(&mean)?)?;
    write_log(&a.out, &log_lines)
}

fn train_recon_cmd(a: TrainReconArgs, scale: &Scale) -> Result<()> {
    let ds = read_dataset(&a.data)?;
    let policy = match a.policy.as_str() {
        "variable" => MaskPolicy::variable_default(),
        "fixed" => MaskPolicy::fixed_default(),
        _ => unreachable!(),
    };
    let hyper = ReconHyper {
        epochs: a.epochs.unwrap_or(scale.epochs),
        cascades: a.cascades.unwrap_or(scale.cascades),
        channels: a.channels.unwrap_or(scale.channels),
        policy,
        seed: a.seed,
        ..ReconHyper::default()
    };
    echo_config(&a.out, &hyper)?;
    let (net, log) = recon::train_recon(None, &ds, &hyper, None)?;
    net.save(&a.out)?;
    std::fs::write(
        a.out.with_extension("train_log.json"),
        serde_json::to_vec_pretty(&log)?,
    )?;
    Ok(())
}

fn transfer_cmd(a: TransferArgs, scale: &Scale) -> Result<()> {
    let pre = read_dataset(&a.pretrain)?;
    let ft = read_dataset(&a.finetune)?;
    let test = read_dataset(&a.test)?;
    let large = a.large.as_ref().map(|p| read_dataset(p)).transpose()?;
    let hyper = ReconHyper {
        cascades: a.cascades.unwrap_or(scale.cascades),
        channels: a.channels.unwrap_or(scale.channels),
        policy: MaskPolicy::fixed_default(),
        seed: a.seed,
        ..ReconHyper::default()
    };
    echo_config(&a.report, &serde_json::json!({
        "pretrain": a.pretrain, "finetune": a.finetune, "test": a.test, "large": a.large,
        "pre_epochs": a.pre_epochs, "ft_epochs": a.ft_epochs, "hyper": hyper,
    }))?;
    let report = recon::transfer_pipeline(
        &pre,
        &ft,
        &test,
        large.as_ref(),
        a.pre_epochs,
        a.ft_epochs,
        &hyper,
    )?;
    let doc = analysis::ReportDoc::Transfer { report };
    std::fs::write(&a.report, serde_json::to_vec_pretty(&doc)?)?;
    Ok(())
}

fn parse_lambdas(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            let t = t.trim();
            if t.eq_ignore_ascii_case("inf") {
                Ok(f64::INFINITY)
            } else {
                t.parse::<f64>()
                    .map_err(|_| Error::InvalidArg(format!("bad lambda value '{t}'")))
            }
        })
        .collect()
}

fn ewc_cmd(a: EwcArgs, scale: &Scale) -> Result<()> {
    let task_a = read_dataset(&a.task_a)?;
    let task_b = read_dataset(&a.task_b)?;
    let eval_a = a.eval_a.as_ref().map(|p| read_dataset(p)).transpose()?;
    let eval_b = a.eval_b.as_ref().map(|p| read_dataset(p)).transpose()?;
    let lambdas = parse_lambdas(&a.lambdas)?;
    let hyper = ReconHyper {
        epochs: a.phase1_epochs.unwrap_or(scale.epochs),
        cascades: a.cascades.unwrap_or(scale.cascades),
        channels: a.channels.unwrap_or(scale.channels),
        seed: a.seed,
        ..ReconHyper::default()
    };
    echo_config(&a.report, &serde_json::json!({
        "taskA": a.task_a, "taskB": a.task_b, "lambdas": a.lambdas,
        "phase1_epochs": hyper.epochs, "phase2_epochs": a.phase2_epochs.unwrap_or(hyper.epochs),
        "hyper": hyper,
    }))?;
    let report = continual::sequential_experiment(
        &task_a,
        &task_b,
        eval_a.as_ref().unwrap_or(&task_a),
        eval_b.as_ref().unwrap_or(&task_b),
        &lambdas,
        &hyper,
        a.phase2_epochs.unwrap_or(hyper.epochs),
    )?;
    let doc = analysis::ReportDoc::Ewc { report };
    std::fs::write(&a.report, serde_json::to_vec_pretty(&doc)?)?;
    if let Some(curves) = &a.curves {
        if let analysis::ReportDoc::Ewc { report } = &doc {
            let labels: Vec<String> = report
                .arms
                .iter()
                .filter(|arm| !arm.task_a_curve.is_empty())
                .map(|arm| format!("lambda={:.0e}", arm.lambda))
                .collect();
            let series: Vec<Vec<f64>> = report
                .arms
                .iter()
                .filter(|arm| !arm.task_a_curve.is_empty())
                .map(|arm| arm.task_a_curve.clone())
                .collect();
            analysis::write_curves_svg(curves, &labels, &series)?;
        }
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartitionDoc {
    components: Vec<PartitionComponent>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartitionComponent {
    name: String,
    indices: Vec<usize>,
}

fn fisher_overlap_cmd(a: FisherOverlapArgs) -> Result<()> {
    let net_a = MiniVarNet::load(&a.net_a)?;
    let net_b = MiniVarNet::load(&a.net_b)?;
    if net_a.params.len() != net_b.params.len() {
        return Err(Error::Shape("nets differ in parameter count".into()));
    }
    let ds_a = read_dataset(&a.data_a)?;
    let ds_b = read_dataset(&a.data_b)?;
    let policy = MaskPolicy::variable_default();
    let fa = continual::fisher_diagonal(&net_a, &ds_a, &policy, "task-a", seeds::split(a.seed, "fa"))?;
    let fb = continual::fisher_diagonal(&net_b, &ds_b, &policy, "task-b", seeds::split(a.seed, "fb"))?;
    let partition: Vec<(String, Vec<usize>)> = match &a.partition {
        Some(path) => {
            let doc: PartitionDoc = serde_json::from_slice(&std::fs::read(path)?)?;
            doc.components.into_iter().map(|c| (c.name, c.indices)).collect()
        }
        None => vec![
            ("data_consistency".to_string(), net_a.dc_param_indices()),
            ("refinement".to_string(), net_a.refinement_param_indices()),
        ],
    };
    let whole = continual::fisher_overlap(&fa, &fb)?;
    let by_component = continual::fisher_overlap_by_component(&fa, &fb, &partition)?;
    echo_config(&a.report, &serde_json::json!({
        "netA": a.net_a, "netB": a.net_b, "dataA": a.data_a, "dataB": a.data_b, "seed": a.seed,
    }))?;
    std::fs::write(
        &a.report,
        serde_json::to_vec_pretty(&serde_json::json!({
            "whole_model": whole,
            "components": by_component.iter().map(|(n, o)| serde_json::json!({"name": n, "overlap": o})).collect::<Vec<_>>(),
        }))?,
    )?;
    Ok(())
}

fn parse_indices(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidArg(format!("bad index '{t}'")))
        })
        .collect()
}

fn autocorr_cmd(a: AutocorrArgs) -> Result<()> {
    let ds = read_dataset(&a.input)?;
    let images: Result<Vec<_>> = ds
        .slices()
        .map(|s| crate::kcore::idft2(&s.coil_plane_c64(0)))
        .collect();
    let images = images?;
    let map = analysis::autocorr(&images, a.crop)?;
    std::fs::create_dir_all(&a.out)?;
    echo_config(&a.out, &serde_json::json!({
        "input": a.input, "crop": a.crop, "anchors": a.anchors, "acs_fraction": a.acs_fraction,
    }))?;
    analysis::write_correlation_svg(&a.out.join("magnitude.svg"), &map, false)?;
    analysis::write_correlation_svg(&a.out.join("phase.svg"), &map, true)?;
    let anchors = parse_indices(&a.anchors)?;
    let acs_len = ((a.acs_fraction * a.crop as f64).round() as usize).clamp(1, a.crop);
    let acs_start = (a.crop - acs_len) / 2;
    let acs = acs_start..acs_start + acs_len;
    let mut per_anchor = Vec::new();
    for &anchor in &anchors {
        if anchor >= a.crop {
            return Err(Error::InvalidArg(format!("anchor {anchor} outside crop {}", a.crop)));
        }
        let partner = map.strongest_partner(anchor);
        per_anchor.push(serde_json::json!({
            "anchor": anchor,
            "strongest_partner": partner,
            "partner_in_acs": acs.contains(&partner),
        }));
    }
    let all_in_acs = (0..a.crop)
        .filter(|&anchor| acs.contains(&map.strongest_partner(anchor)))
        .count();
    std::fs::write(
        a.out.join("summary.json"),
        serde_json::to_vec_pretty(&serde_json::json!({
            "acs_start": acs.start,
            "acs_len": acs.len(),
            "anchors": per_anchor,
            "acs_partner_share": all_in_acs as f64 / a.crop as f64,
        }))?,
    )?;
    Ok(())
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    let doc: analysis::ReportDoc = serde_json::from_slice(&std::fs::read(&a.doc)?)?;
    analysis::emit_report(&doc, &a.out)?;
    Ok(())
}
