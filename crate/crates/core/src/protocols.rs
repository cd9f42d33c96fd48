//! Evaluation protocols on top of the feature pipeline: per-split training
//! and scoring, the filter size/count sweep, classification timing, and
//! plain-text report rendering.
//!
//! A split is one train/test partition produced by [`crate::splits`]. Running
//! a split fits PCA, the mixture, and the classifier on the training side
//! only, scores every test image, and summarises the scores with the
//! presentation-attack metrics. Every stage records which image paths it
//! consumed, so tests can verify that no held-out data leaks into fitting.
//!
//! All randomness is derived from the experiment seed: split `i` of a run
//! uses `seed ^ i`, sweep job `(bank, split)` uses `seed ^ job_index`, and
//! each fitting stage salts that job seed with its own constant. Results are
//! therefore independent of scheduling and thread count.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bsif::{extract_dense_descriptors, DescriptorSet, DESCRIPTOR_DIM};
use crate::bundle::ModelBundle;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::filterbank::FilterBank;
use crate::fisher::{encode_fv, normalize_fv};
use crate::gmm::{fit_gmm, GmmModel, GmmOptions};
use crate::ica::learn_filter_bank;
use crate::image::{convert_colorspace, decode_and_crop, Colorspace, FaceImage};
use crate::manifest::{Label, SampleRecord};
use crate::metrics::{bpcer_at_apcer, det_csv, format_g, DetPoint, ScoreSet};
use crate::parallel;
use crate::pca::{CovAccumulator, PcaModel};
use crate::sampling::subsample_indices;
use crate::splits::{build_splits, ProtocolSplit};
use crate::svm::{score, train_linear_svm, LinearModel, SvmOptions};

/// Stage salts keep the per-stage random streams disjoint even though they
/// all descend from one job seed.
const PCA_SALT: u64 = 0x9aa6_1d1e_27c4_83f5;
const GMM_SALT: u64 = 0x51b8_72e0_f00d_4a11;
const BANK_SALT: u64 = 0x3c69_1c1a_55aa_90d3;

/// Patches drawn per sweep job when learning a filter bank from the
/// training images. Comfortably above the 50-per-filter floor for any
/// admissible filter count.
pub const BANK_PATCH_TARGET: usize = 5000;

/// Image paths consumed by each fitting stage, recorded as the stage loads
/// them. This is the ground truth for leakage checks: a path never inserted
/// here was never seen by any estimator.
#[derive(Debug, Clone, Default)]
pub struct TrainingAudit {
    pub pca_paths: BTreeSet<PathBuf>,
    pub gmm_paths: BTreeSet<PathBuf>,
    pub svm_paths: BTreeSet<PathBuf>,
}

impl TrainingAudit {
    /// Union of the paths seen by any stage.
    pub fn fitted_paths(&self) -> BTreeSet<&Path> {
        self.pca_paths
            .iter()
            .chain(&self.gmm_paths)
            .chain(&self.svm_paths)
            .map(PathBuf::as_path)
            .collect()
    }
}

/// One scored test image.
#[derive(Debug, Clone)]
pub struct ScoreRow {
    pub image_path: PathBuf,
    pub label: Label,
    /// Instrument species for attacks, absent for bona fide samples.
    pub species: Option<String>,
    pub score: f64,
}

/// Summary metrics for one split's test scores. The BPCER fields follow the
/// standard naming: `bpcerN` is the BPCER when APCER is capped at `1/N`.
#[derive(Debug, Clone, Copy)]
pub struct SplitMetrics {
    pub d_eer: f64,
    pub eer_threshold: f64,
    pub auc: f64,
    pub bpcer10: f64,
    pub bpcer20: f64,
    pub bpcer100: f64,
}

/// Everything produced by running one split.
#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub name: String,
    pub train_images: usize,
    pub test_images: usize,
    pub metrics: SplitMetrics,
    pub det: Vec<DetPoint<f64>>,
    /// Per test image, in manifest order.
    pub rows: Vec<ScoreRow>,
    pub audit: TrainingAudit,
    pub pca_variance_warning: bool,
}

impl SplitOutcome {
    /// Test scores grouped by class.
    pub fn score_set(&self) -> ScoreSet<f64> {
        collect_scores(&self.rows)
    }
}

fn collect_scores(rows: &[ScoreRow]) -> ScoreSet<f64> {
    let mut set = ScoreSet {
        bona_fide: Vec::new(),
        attack: Vec::new(),
    };
    for row in rows {
        match row.label {
            Label::BonaFide => set.bona_fide.push(row.score),
            Label::Attack => set.attack.push(row.score),
        }
    }
    set
}

/// Decode one manifest record and convert it to the working colour space.
pub fn load_face(record: &SampleRecord, colorspace: Colorspace) -> Result<FaceImage<f64>> {
    let img = decode_and_crop::<f64>(&record.image_path, record.crop_box)?;
    convert_colorspace(&img, colorspace)
}

fn extract_record(
    record: &SampleRecord,
    cfg: &ExperimentConfig,
    bank: &FilterBank<f64>,
) -> Result<DescriptorSet<f64>> {
    let img = load_face(record, cfg.colorspace)?;
    extract_dense_descriptors(
        &img,
        bank,
        cfg.stride,
        &cfg.radii,
        &record.image_path.display().to_string(),
    )
}

/// Classify one already-converted face image: dense descriptors, PCA
/// projection, Fisher encoding, linear score.
pub fn score_face(
    img: &FaceImage<f64>,
    cfg: &ExperimentConfig,
    bank: &FilterBank<f64>,
    pca: &PcaModel<f64>,
    gmm: &GmmModel<f64>,
    svm: &LinearModel<f64>,
) -> Result<f64> {
    let set = extract_dense_descriptors(img, bank, cfg.stride, &cfg.radii, "query")?;
    let mut projected = Vec::with_capacity(set.descriptors.len());
    for d in &set.descriptors {
        projected.push(pca.project(&d.values)?);
    }
    let mut fv = encode_fv(gmm, &projected)?;
    normalize_fv(&mut fv, cfg.fv_power_norm, cfg.fv_l2_norm);
    Ok(score(svm, &fv.values)?.value)
}

/// Classify one image through a saved model bundle, converting colour spaces
/// as the bundle's configuration demands.
pub fn score_with_bundle(bundle: &ModelBundle, img: &FaceImage<f64>) -> Result<f64> {
    let converted = convert_colorspace(img, bundle.config.colorspace)?;
    score_face(
        &converted,
        &bundle.config,
        &bundle.bank,
        &bundle.pca,
        &bundle.gmm,
        &bundle.svm,
    )
}

fn require_both_classes(records: &[SampleRecord], split: &str, side: &str) -> Result<()> {
    let bona = records.iter().any(|r| r.label == Label::BonaFide);
    let attack = records.iter().any(|r| r.label == Label::Attack);
    if !bona || !attack {
        return Err(Error::Protocol(format!(
            "split {split}: {side} set must contain both bona fide and attack samples"
        )));
    }
    Ok(())
}

/// How many descriptors one image may contribute when a global cap is split
/// evenly across images; 0 means no cap.
fn per_image_quota(cap: usize, images: usize) -> usize {
    if cap == 0 || images == 0 {
        0
    } else {
        (cap / images).max(1)
    }
}

/// Fitted per-split models, exposed so callers can persist them.
#[derive(Debug, Clone)]
pub struct SplitModels {
    pub pca: PcaModel<f64>,
    pub gmm: GmmModel<f64>,
    pub svm: LinearModel<f64>,
}

/// Fit the full pipeline on the training side of `split`.
///
/// Three passes over the training images: raw descriptor covariance for PCA,
/// projected descriptors for the mixture (kept grouped per image so the same
/// projections feed the Fisher encoder), and one encoded vector per image for
/// the classifier. The audit records the paths each pass loaded.
pub fn fit_split_models(
    split: &ProtocolSplit,
    cfg: &ExperimentConfig,
    bank: &FilterBank<f64>,
    seed: u64,
) -> Result<(SplitModels, TrainingAudit)> {
    require_both_classes(&split.train, &split.name, "train")?;
    let mut audit = TrainingAudit::default();

    let mut cov = CovAccumulator::<f64>::new(DESCRIPTOR_DIM);
    let quota = per_image_quota(cfg.pca_sample_cap, split.train.len());
    for (i, record) in split.train.iter().enumerate() {
        let set = extract_record(record, cfg, bank)?;
        audit.pca_paths.insert(record.image_path.clone());
        let n = set.descriptors.len();
        match subsample_indices(n, quota, (seed ^ PCA_SALT).wrapping_add(i as u64)) {
            Some(keep) => {
                for idx in keep {
                    cov.add(&set.descriptors[idx].values);
                }
            }
            None => {
                for d in &set.descriptors {
                    cov.add(&d.values);
                }
            }
        }
    }
    let pca = cov.finish(cfg.d)?;

    let mut pool: Vec<Vec<f64>> = Vec::new();
    let mut groups: Vec<(usize, usize)> = Vec::with_capacity(split.train.len());
    for record in &split.train {
        let set = extract_record(record, cfg, bank)?;
        audit.gmm_paths.insert(record.image_path.clone());
        let start = pool.len();
        for d in &set.descriptors {
            pool.push(pca.project(&d.values)?);
        }
        groups.push((start, pool.len()));
    }
    let opts = GmmOptions {
        sample_cap: cfg.gmm_sample_cap,
        ..GmmOptions::default()
    };
    let gmm = fit_gmm(&pool, cfg.k, seed ^ GMM_SALT, &opts)?;

    let mut features = Vec::with_capacity(groups.len());
    for (record, &(a, b)) in split.train.iter().zip(&groups) {
        let mut fv = encode_fv(&gmm, &pool[a..b])?;
        normalize_fv(&mut fv, cfg.fv_power_norm, cfg.fv_l2_norm);
        features.push(fv.values);
        audit.svm_paths.insert(record.image_path.clone());
    }
    let labels: Vec<Label> = split.train.iter().map(|r| r.label).collect();
    let svm = train_linear_svm(&features, &labels, cfg.svm_c, &SvmOptions::default())?;

    Ok((SplitModels { pca, gmm, svm }, audit))
}

/// Run one split end to end: fit on train, score every test image, summarise.
pub fn run_split(
    split: &ProtocolSplit,
    cfg: &ExperimentConfig,
    bank: &FilterBank<f64>,
    seed: u64,
) -> Result<SplitOutcome> {
    require_both_classes(&split.test, &split.name, "test")?;
    let (models, audit) = fit_split_models(split, cfg, bank, seed)?;

    let mut rows = Vec::with_capacity(split.test.len());
    for record in &split.test {
        let img = load_face(record, cfg.colorspace)?;
        let value = score_face(&img, cfg, bank, &models.pca, &models.gmm, &models.svm)?;
        rows.push(ScoreRow {
            image_path: record.image_path.clone(),
            label: record.label,
            species: record.pai_species.clone(),
            score: value,
        });
    }

    let scores = collect_scores(&rows);
    let (metrics, det) = summarize_scores(&scores)?;
    Ok(SplitOutcome {
        name: split.name.clone(),
        train_images: split.train.len(),
        test_images: split.test.len(),
        metrics,
        det,
        rows,
        audit,
        pca_variance_warning: models.pca.variance_warning(),
    })
}

fn summarize_scores(scores: &ScoreSet<f64>) -> Result<(SplitMetrics, Vec<DetPoint<f64>>)> {
    let summary = scores.d_eer()?;
    let auc = scores.auc()?;
    let (bpcer10, _) = bpcer_at_apcer(&scores.bona_fide, &scores.attack, 0.10)?;
    let (bpcer20, _) = bpcer_at_apcer(&scores.bona_fide, &scores.attack, 0.05)?;
    let (bpcer100, _) = bpcer_at_apcer(&scores.bona_fide, &scores.attack, 0.01)?;
    let det = scores.det_curve()?;
    Ok((
        SplitMetrics {
            d_eer: summary.eer,
            eer_threshold: summary.threshold,
            auc,
            bpcer10,
            bpcer20,
            bpcer100,
        },
        det,
    ))
}

/// Build the protocol's splits from the manifest records and run each one.
/// Split `i` runs with seed `cfg.seed ^ i`.
pub fn run_protocol(
    records: &[SampleRecord],
    cfg: &ExperimentConfig,
    bank: &FilterBank<f64>,
) -> Result<Vec<SplitOutcome>> {
    let splits = build_splits(records, cfg.protocol)?;
    run_splits(&splits, cfg, bank)
}

/// Run a set of splits as independent jobs.
pub fn run_splits(
    splits: &[ProtocolSplit],
    cfg: &ExperimentConfig,
    bank: &FilterBank<f64>,
) -> Result<Vec<SplitOutcome>> {
    parallel::pool().install(|| {
        splits
            .par_iter()
            .enumerate()
            .map(|(i, split)| run_split(split, cfg, bank, cfg.seed ^ i as u64))
            .collect()
    })
}

/// Draw grey square patches off the records' images for filter learning.
///
/// The target count is split evenly across images; patches come from the
/// decoded (not colour-converted) image's luma plane. Images too small for
/// the patch side are skipped.
pub fn sample_training_patches(
    records: &[SampleRecord],
    size: usize,
    target: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if records.is_empty() {
        return Err(Error::InsufficientSamples { have: 0, need: 1 });
    }
    if size < 3 || size > 17 || size % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "patch side {size} must be odd and within 3..=17"
        )));
    }
    let per_image = target.div_ceil(records.len()).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut patches = Vec::with_capacity(per_image * records.len());
    for record in records {
        let img = decode_and_crop::<f64>(&record.image_path, record.crop_box)?;
        let (w, h) = (img.width(), img.height());
        if w < size || h < size {
            continue;
        }
        let grey = img.luma();
        for _ in 0..per_image {
            let x = rng.gen_range(0..=w - size);
            let y = rng.gen_range(0..=h - size);
            let mut patch = Vec::with_capacity(size * size);
            for row in y..y + size {
                patch.extend_from_slice(&grey[row * w + x..row * w + x + size]);
            }
            patches.push(patch);
        }
    }
    if patches.is_empty() {
        return Err(Error::Ica(
            "no image was large enough to sample patches from".into(),
        ));
    }
    Ok(patches)
}

/// Learn a filter bank for one sweep job from the split's training images.
fn learn_split_bank(
    split: &ProtocolSplit,
    size: u32,
    filters: u32,
    seed: u64,
) -> Result<FilterBank<f64>> {
    let patches = sample_training_patches(
        &split.train,
        size as usize,
        BANK_PATCH_TARGET,
        seed ^ BANK_SALT,
    )?;
    learn_filter_bank(&patches, filters as usize, seed ^ BANK_SALT)
}

/// One grid point of a sweep.
#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub size: u32,
    pub filters: u32,
    /// `(split name, D-EER)` in split order.
    pub per_split: Vec<(String, f64)>,
    /// Mean D-EER across the splits.
    pub mean_d_eer: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub entries: Vec<SweepEntry>,
    /// Mean of the per-entry mean D-EERs.
    pub mean: f64,
    /// Sample standard deviation (n − 1) of the per-entry mean D-EERs.
    pub std_dev: f64,
    /// `(split name, size, filters, D-EER)` of the best bank per split;
    /// ties go to the earlier grid entry.
    pub best_per_split: Vec<(String, u32, u32, f64)>,
}

/// Mean and sample standard deviation (n − 1 denominator; 0 when n < 2).
pub fn sweep_stats(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Sweep the configured size/count grid: per grid point, learn a bank from
/// each split's training images and retrain the whole pipeline.
pub fn run_sweep(records: &[SampleRecord], cfg: &ExperimentConfig) -> Result<SweepOutcome> {
    let splits = build_splits(records, cfg.protocol)?;
    run_sweep_with(&splits, cfg, |split, cfg, size, filters, seed| {
        let bank = learn_split_bank(split, size, filters, seed)?;
        Ok(run_split(split, cfg, &bank, seed)?.metrics.d_eer)
    })
}

/// Sweep driver with a pluggable per-job runner, used directly by tests that
/// plant known error rates. Jobs are `(bank, split)` pairs, numbered
/// bank-major; job `j` runs with seed `cfg.seed ^ j`.
pub fn run_sweep_with<F>(
    splits: &[ProtocolSplit],
    cfg: &ExperimentConfig,
    runner: F,
) -> Result<SweepOutcome>
where
    F: Fn(&ProtocolSplit, &ExperimentConfig, u32, u32, u64) -> Result<f64> + Sync,
{
    let grid = cfg.bank_grid();
    if grid.is_empty() {
        return Err(Error::InvalidParameter(
            "sweep grid is empty: every filter count exceeds its size budget".into(),
        ));
    }
    if splits.is_empty() {
        return Err(Error::Protocol("no splits to sweep".into()));
    }

    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|bi| (0..splits.len()).map(move |si| (bi, si)))
        .collect();
    let eers: Vec<f64> = parallel::pool().install(|| {
        jobs.par_iter()
            .map(|&(bi, si)| {
                let (size, filters) = grid[bi];
                let job = (bi * splits.len() + si) as u64;
                runner(&splits[si], cfg, size, filters, cfg.seed ^ job)
            })
            .collect::<Result<Vec<f64>>>()
    })?;

    let mut entries = Vec::with_capacity(grid.len());
    for (bi, &(size, filters)) in grid.iter().enumerate() {
        let per_split: Vec<(String, f64)> = splits
            .iter()
            .enumerate()
            .map(|(si, s)| (s.name.clone(), eers[bi * splits.len() + si]))
            .collect();
        let mean_d_eer = per_split.iter().map(|p| p.1).sum::<f64>() / per_split.len() as f64;
        entries.push(SweepEntry {
            size,
            filters,
            per_split,
            mean_d_eer,
        });
    }

    let means: Vec<f64> = entries.iter().map(|e| e.mean_d_eer).collect();
    let (mean, std_dev) = sweep_stats(&means);

    let best_per_split = splits
        .iter()
        .enumerate()
        .map(|(si, split)| {
            let best = entries
                .iter()
                .min_by(|a, b| {
                    a.per_split[si]
                        .1
                        .partial_cmp(&b.per_split[si].1)
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap();
            (
                split.name.clone(),
                best.size,
                best.filters,
                best.per_split[si].1,
            )
        })
        .collect();

    Ok(SweepOutcome {
        entries,
        mean,
        std_dev,
        best_per_split,
    })
}

/// Wall-clock measurement of the classification path for one image.
#[derive(Debug, Clone)]
pub struct TimingSample {
    pub image_path: PathBuf,
    pub width: usize,
    pub height: usize,
    pub bucket: &'static str,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TimingStats {
    pub samples: Vec<TimingSample>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Face-size bucket by the larger image side: roughly 150–200 px faces are
/// "small", 250–350 "medium", 550–700 "large"; sizes between ranges fall to
/// the nearer bucket.
pub fn size_bucket(max_side: usize) -> &'static str {
    if max_side < 250 {
        "small"
    } else if max_side < 550 {
        "medium"
    } else {
        "large"
    }
}

/// Time the classification path (descriptors through score) per image.
/// Decoding, colour conversion, and model loading are excluded: images
/// arrive decoded and the bundle is already in memory.
pub fn time_classification(
    bundle: &ModelBundle,
    images: &[(PathBuf, FaceImage<f64>)],
) -> Result<TimingStats> {
    if images.is_empty() {
        return Err(Error::InsufficientSamples { have: 0, need: 1 });
    }
    let mut samples = Vec::with_capacity(images.len());
    for (path, img) in images {
        let converted = convert_colorspace(img, bundle.config.colorspace)?;
        let started = Instant::now();
        score_face(
            &converted,
            &bundle.config,
            &bundle.bank,
            &bundle.pca,
            &bundle.gmm,
            &bundle.svm,
        )?;
        let seconds = started.elapsed().as_secs_f64();
        samples.push(TimingSample {
            image_path: path.clone(),
            width: img.width(),
            height: img.height(),
            bucket: size_bucket(img.width().max(img.height())),
            seconds,
        });
    }
    let mean = samples.iter().map(|s| s.seconds).sum::<f64>() / samples.len() as f64;
    let min = samples
        .iter()
        .map(|s| s.seconds)
        .fold(f64::INFINITY, f64::min);
    let max = samples.iter().map(|s| s.seconds).fold(0.0, f64::max);
    Ok(TimingStats {
        samples,
        mean,
        min,
        max,
    })
}

/// Full evaluation output: per-split results plus optional sweep and timing
/// sections. Reports without a timing section are deterministic given seeds.
#[derive(Debug, Clone, Default)]
pub struct EvalReport {
    pub splits: Vec<SplitOutcome>,
    pub sweep: Option<SweepOutcome>,
    pub timing: Option<TimingStats>,
}

fn scores_csv_name(split: &str) -> String {
    format!("scores_{split}.csv")
}

fn det_csv_name(split: &str) -> String {
    format!("det_{split}.csv")
}

/// CSV dump of per-image scores: `image_path,label,species,score`, one row
/// per test image in split order. The species field is empty for bona fide
/// rows.
pub fn scores_csv(rows: &[ScoreRow]) -> String {
    let mut out = String::from("image_path,label,species,score\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            row.image_path.display(),
            row.label,
            row.species.as_deref().unwrap_or(""),
            format_g(row.score),
        );
    }
    out
}

/// Render the report as plain text: one `[split ...]` section per split with
/// `key: value` lines, then optional `[sweep]` and `[timing]` sections.
pub fn render_report(report: &EvalReport) -> String {
    let mut out = String::new();
    for outcome in &report.splits {
        let scores = outcome.score_set();
        let m = &outcome.metrics;
        let _ = writeln!(out, "[split {}]", outcome.name);
        let _ = writeln!(out, "train_images: {}", outcome.train_images);
        let _ = writeln!(out, "test_images: {}", outcome.test_images);
        let _ = writeln!(out, "bona_fide_scores: {}", scores.bona_fide.len());
        let _ = writeln!(out, "attack_scores: {}", scores.attack.len());
        let _ = writeln!(out, "d_eer: {}", format_g(m.d_eer));
        let _ = writeln!(out, "eer_threshold: {}", format_g(m.eer_threshold));
        let _ = writeln!(out, "auc: {}", format_g(m.auc));
        let _ = writeln!(out, "bpcer10: {}", format_g(m.bpcer10));
        let _ = writeln!(out, "bpcer20: {}", format_g(m.bpcer20));
        let _ = writeln!(out, "bpcer100: {}", format_g(m.bpcer100));
        let _ = writeln!(
            out,
            "pca_variance_warning: {}",
            outcome.pca_variance_warning
        );
        let _ = writeln!(out, "det_csv: {}", det_csv_name(&outcome.name));
        let _ = writeln!(out, "scores_csv: {}", scores_csv_name(&outcome.name));
        out.push('\n');
    }
    if let Some(sweep) = &report.sweep {
        let _ = writeln!(out, "[sweep]");
        let _ = writeln!(out, "configurations: {}", sweep.entries.len());
        let _ = writeln!(out, "mean_d_eer: {}", format_g(sweep.mean));
        let _ = writeln!(out, "std_d_eer: {}", format_g(sweep.std_dev));
        for entry in &sweep.entries {
            let _ = writeln!(
                out,
                "bank_{}x{}_mean_d_eer: {}",
                entry.size,
                entry.filters,
                format_g(entry.mean_d_eer)
            );
        }
        for (split, size, filters, eer) in &sweep.best_per_split {
            let _ = writeln!(
                out,
                "best_{split}: size={size} filters={filters} d_eer={}",
                format_g(*eer)
            );
        }
        out.push('\n');
    }
    if let Some(timing) = &report.timing {
        let _ = writeln!(out, "[timing]");
        let _ = writeln!(out, "images: {}", timing.samples.len());
        let _ = writeln!(out, "mean_seconds: {}", format_g(timing.mean));
        let _ = writeln!(out, "min_seconds: {}", format_g(timing.min));
        let _ = writeln!(out, "max_seconds: {}", format_g(timing.max));
        for bucket in ["small", "medium", "large"] {
            let in_bucket: Vec<f64> = timing
                .samples
                .iter()
                .filter(|s| s.bucket == bucket)
                .map(|s| s.seconds)
                .collect();
            if in_bucket.is_empty() {
                continue;
            }
            let mean = in_bucket.iter().sum::<f64>() / in_bucket.len() as f64;
            let _ = writeln!(
                out,
                "bucket_{bucket}: images={} mean_seconds={}",
                in_bucket.len(),
                format_g(mean)
            );
        }
        out.push('\n');
    }
    out
}

/// Write `report.txt` plus per-split DET and score CSVs into `dir`.
/// Returns the report path.
pub fn write_report(dir: &Path, report: &EvalReport) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for outcome in &report.splits {
        let det_path = dir.join(det_csv_name(&outcome.name));
        fs::write(&det_path, det_csv(&outcome.det)?).map_err(|e| Error::io(&det_path, e))?;
        let scores_path = dir.join(scores_csv_name(&outcome.name));
        fs::write(&scores_path, scores_csv(&outcome.rows))
            .map_err(|e| Error::io(&scores_path, e))?;
    }
    let report_path = dir.join("report.txt");
    fs::write(&report_path, render_report(report)).map_err(|e| Error::io(&report_path, e))?;
    Ok(report_path)
}
