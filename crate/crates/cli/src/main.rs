//! `fvpad` — command line front end for the face presentation-attack
//! detection toolchain: filter learning, descriptor extraction, model
//! training, scoring, protocol evaluation, bank sweeps, and timing.
//!
//! Exit codes: 0 on success, 2 on usage errors (malformed flags, missing
//! subcommand), 1 on runtime errors (bad files, failed fits).

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use fvpad_core::bsif::{extract_dense_descriptors, write_descriptor_dump, DEFAULT_STRIDE};
use fvpad_core::bundle::{load_bundle, save_bundle, ModelBundle};
use fvpad_core::config::load_config;
use fvpad_core::filterbank::{load_filter_bank, save_filter_bank};
use fvpad_core::ica::learn_filter_bank;
use fvpad_core::image::{convert_colorspace, decode_and_crop, Colorspace};
use fvpad_core::manifest::{load_manifest, Role, SampleRecord};
use fvpad_core::metrics::format_g;
use fvpad_core::protocols::{
    fit_split_models, run_protocol, run_sweep, sample_training_patches, score_with_bundle,
    time_classification, write_report, EvalReport, BANK_PATCH_TARGET,
};
use fvpad_core::splits::{ProtocolKind, ProtocolSplit};
use fvpad_core::synthetic::generate_synthetic_dataset;
use fvpad_core::FaceImage;

#[derive(Parser)]
#[command(
    name = "fvpad",
    version,
    about = "Fisher-vector face presentation-attack detection",
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn an ICA filter bank from training-image patches.
    LearnFilters(LearnFiltersArgs),
    /// Extract dense descriptors from one image into a binary dump.
    Extract(ExtractArgs),
    /// Fit PCA, mixture, and classifier on the manifest's training role and
    /// save a model bundle.
    Train(TrainArgs),
    /// Score one image with a saved model bundle.
    Score(ScoreArgs),
    /// Run the configured evaluation protocol and write a report.
    Evaluate(EvaluateArgs),
    /// Retrain over the configured filter size/count grid and report
    /// per-bank error rates.
    Sweep(SweepArgs),
    /// Time the classification path per image.
    Time(TimeArgs),
    /// Generate the synthetic PAD corpus.
    Synth(SynthArgs),
}

#[derive(Args)]
struct LearnFiltersArgs {
    /// Dataset manifest; patches are drawn from its training-role images.
    #[arg(long)]
    manifest: PathBuf,
    /// Filter side length (odd, 3..=17).
    #[arg(long)]
    size: usize,
    /// Number of filters (1..=12).
    #[arg(long)]
    filters: usize,
    /// Output bank file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Total patches to sample across the images.
    #[arg(long, default_value_t = BANK_PATCH_TARGET)]
    patches: usize,
}

#[derive(Args)]
struct ExtractArgs {
    /// Filter bank file.
    #[arg(long)]
    bank: PathBuf,
    /// Image to extract from.
    #[arg(long)]
    image: PathBuf,
    /// Output descriptor dump.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_STRIDE)]
    stride: usize,
    /// Comma-separated disc radii.
    #[arg(long, value_delimiter = ',', default_values_t = vec![4u32, 6, 8, 10])]
    radii: Vec<u32>,
    /// Working colour space: rgb, hsv, or ycbcr.
    #[arg(long, default_value = "rgb")]
    colorspace: String,
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output model bundle.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    /// Model bundle.
    #[arg(long)]
    model: PathBuf,
    /// Image to score.
    #[arg(long)]
    image: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override the configured protocol (known, loo, cross).
    #[arg(long)]
    protocol: Option<String>,
    /// Directory for the report and CSV dumps.
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Directory for the sweep report.
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TimeArgs {
    /// Model bundle.
    #[arg(long)]
    model: PathBuf,
    /// Images to time, one classification pass each.
    #[arg(required = true)]
    images: Vec<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for the generated corpus.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Bona fide images per role; attacks are three times that.
    #[arg(long, default_value_t = 40)]
    per_class: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::LearnFilters(args) => learn_filters(args),
        Command::Extract(args) => extract(args),
        Command::Train(args) => train(args),
        Command::Score(args) => score(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Sweep(args) => sweep(args),
        Command::Time(args) => time(args),
        Command::Synth(args) => synth(args),
    }
}

fn training_records(records: &[SampleRecord]) -> Vec<SampleRecord> {
    records
        .iter()
        .filter(|r| r.role == Role::Train)
        .cloned()
        .collect()
}

fn learn_filters(args: LearnFiltersArgs) -> Result<()> {
    let records = load_manifest(&args.manifest)?;
    let train = training_records(&records);
    let patches = sample_training_patches(&train, args.size, args.patches, args.seed)
        .context("sampling patches")?;
    let bank = learn_filter_bank(&patches, args.filters, args.seed).context("learning filters")?;
    save_filter_bank(&bank, &args.out)?;
    println!(
        "{}: {} filters of {}x{} from {} patches",
        args.out.display(),
        bank.n_filters(),
        bank.size(),
        bank.size(),
        patches.len()
    );
    Ok(())
}

fn extract(args: ExtractArgs) -> Result<()> {
    let bank = load_filter_bank::<f64>(&args.bank)?;
    let colorspace = Colorspace::parse(&args.colorspace)?;
    let img: FaceImage = decode_and_crop(&args.image, None)?;
    let img = convert_colorspace(&img, colorspace)?;
    let set = extract_dense_descriptors(
        &img,
        &bank,
        args.stride,
        &args.radii,
        &args.image.display().to_string(),
    )?;
    write_descriptor_dump(&set, &args.out)?;
    println!(
        "{}: {} descriptors -> {}",
        args.image.display(),
        set.descriptors.len(),
        args.out.display()
    );
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let records = load_manifest(cfg.manifest_path()?)?;
    let bank = load_filter_bank::<f64>(cfg.bank_path()?)?;
    let train = training_records(&records);
    let split = ProtocolSplit {
        name: "train".into(),
        kind: ProtocolKind::KnownAttack,
        train,
        test: Vec::new(),
    };
    let (models, _) = fit_split_models(&split, &cfg, &bank, cfg.seed)?;
    if models.pca.variance_warning() {
        eprintln!(
            "warning: projection keeps {:.3} of descriptor variance",
            models.pca.retained_variance_fraction()
        );
    }
    let bundle = ModelBundle::new(bank, models.pca, models.gmm, models.svm, cfg)?;
    save_bundle(&bundle, &args.out)?;
    println!("{}: model bundle written", args.out.display());
    Ok(())
}

fn score(args: ScoreArgs) -> Result<()> {
    let bundle = load_bundle(&args.model)?;
    let img: FaceImage = decode_and_crop(&args.image, None)?;
    let value = score_with_bundle(&bundle, &img)?;
    println!("{} {}", args.image.display(), format_g(value));
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let mut cfg = load_config(&args.config)?;
    if let Some(protocol) = &args.protocol {
        cfg.protocol = ProtocolKind::parse(protocol)?;
    }
    let records = load_manifest(cfg.manifest_path()?)?;
    let bank = load_filter_bank::<f64>(cfg.bank_path()?)?;
    let outcomes = run_protocol(&records, &cfg, &bank)?;
    for outcome in &outcomes {
        println!(
            "[split {}] d_eer={} auc={} bpcer100={}",
            outcome.name,
            format_g(outcome.metrics.d_eer),
            format_g(outcome.metrics.auc),
            format_g(outcome.metrics.bpcer100)
        );
        if outcome.pca_variance_warning {
            eprintln!(
                "warning: split {}: projection keeps <0.95 of variance",
                outcome.name
            );
        }
    }
    let report = EvalReport {
        splits: outcomes,
        sweep: None,
        timing: None,
    };
    let report_path = write_report(&args.out_dir, &report)?;
    println!("report: {}", report_path.display());
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let records = load_manifest(cfg.manifest_path()?)?;
    let outcome = run_sweep(&records, &cfg)?;
    println!(
        "{} banks: mean d_eer {} (std {})",
        outcome.entries.len(),
        format_g(outcome.mean),
        format_g(outcome.std_dev)
    );
    for (split, size, filters, eer) in &outcome.best_per_split {
        println!(
            "best_{split}: size={size} filters={filters} d_eer={}",
            format_g(*eer)
        );
    }
    let report = EvalReport {
        splits: Vec::new(),
        sweep: Some(outcome),
        timing: None,
    };
    let report_path = write_report(&args.out_dir, &report)?;
    println!("report: {}", report_path.display());
    Ok(())
}

fn time(args: TimeArgs) -> Result<()> {
    let bundle = load_bundle(&args.model)?;
    let mut images = Vec::with_capacity(args.images.len());
    for path in &args.images {
        let img: FaceImage = decode_and_crop(path, None)?;
        images.push((path.clone(), img));
    }
    let stats = time_classification(&bundle, &images)?;
    for sample in &stats.samples {
        println!(
            "{} {}x{} {} {}",
            sample.image_path.display(),
            sample.width,
            sample.height,
            sample.bucket,
            format_g(sample.seconds)
        );
    }
    println!(
        "images={} mean={} min={} max={} seconds",
        stats.samples.len(),
        format_g(stats.mean),
        format_g(stats.min),
        format_g(stats.max)
    );
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let manifest = generate_synthetic_dataset(args.seed, args.per_class, &args.out)?;
    println!("{}", manifest.display());
    Ok(())
}
