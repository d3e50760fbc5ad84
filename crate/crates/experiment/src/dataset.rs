//! On-disk datasets and the single-model jobs behind the `train`, `predict`
//! and `evaluate` subcommands.
//!
//! A dataset directory holds `manifest.json` and one record per snapshot
//! pair under `snapshots/`, named `setSSS_snapIII.json`.

use std::fs;
use std::path::{Path, PathBuf};

use fdd_core::extraction::ExtractionResult;
use fdd_core::metrics::{MeanStderr, RateContext};
use fdd_core::record::{read_json, write_json, ChannelRecord, SnapshotRecord, FORMAT_VERSION};
use fdd_core::scenario::{generate_scenario, MsSampleSet, ScenarioConfig};
use fdd_core::Complex64;
use fdd_nn::{Model, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::pipeline::{dl_snr, mix_seed, predict_dl, score, set_features, train_method, FeatureConfig, SnapshotFeatures};
use crate::plan::{LinkSettings, Method};
use crate::run::ResultRow;
use crate::split::split_indices;
use crate::{ExperimentError, Result, Stage};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SNAPSHOT_DIR: &str = "snapshots";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub generator_version: String,
    pub seed: u64,
    pub sample_sets: usize,
    pub snapshots_per_set: usize,
    pub config: ScenarioConfig,
}

fn out_err(path: &Path, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::stage(Stage::Output, format!("{}: {e}", path.display()))
}

pub fn snapshot_path(dir: &Path, set: usize, snap: usize) -> PathBuf {
    dir.join(SNAPSHOT_DIR).join(format!("set{set:03}_snap{snap:03}.json"))
}

/// Generates `config` and writes it as a dataset directory.
pub fn generate_dataset(config: &ScenarioConfig, dir: &Path) -> Result<DatasetManifest> {
    let sets = generate_scenario(config).map_err(|e| ExperimentError::stage(Stage::Generate, e))?;
    fs::create_dir_all(dir.join(SNAPSHOT_DIR)).map_err(|e| out_err(dir, e))?;
    for set in &sets {
        for (i, snap) in set.snapshots.iter().enumerate() {
            let path = snapshot_path(dir, set.index, i);
            write_json(&path, &SnapshotRecord::new(set.index, i, config.processing_delay, snap)).map_err(|e| out_err(&path, e))?;
        }
    }
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        generator_version: env!("CARGO_PKG_VERSION").into(),
        seed: config.seed,
        sample_sets: config.sample_sets,
        snapshots_per_set: config.snapshots_per_set,
        config: config.clone(),
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| out_err(&path, e))?;
    Ok(manifest)
}

/// Reads a dataset directory back into sample sets. Latent geometry is not
/// stored, so `latents` and `churned` are empty.
pub fn load_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<MsSampleSet>)> {
    let gen_err = |p: &Path, e: fdd_core::Error| ExperimentError::stage(Stage::Generate, format!("{}: {e}", p.display()));
    let mpath = dir.join(MANIFEST_FILE);
    let manifest: DatasetManifest = read_json(&mpath).map_err(|e| gen_err(&mpath, e))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(ExperimentError::stage(Stage::Generate, format!("unsupported dataset version {}", manifest.format_version)));
    }
    let mut sets = Vec::with_capacity(manifest.sample_sets);
    for s in 0..manifest.sample_sets {
        let mut snapshots = Vec::with_capacity(manifest.snapshots_per_set);
        for i in 0..manifest.snapshots_per_set {
            let path = snapshot_path(dir, s, i);
            let rec: SnapshotRecord = read_json(&path).map_err(|e| gen_err(&path, e))?;
            snapshots.push(rec.to_snapshot().map_err(|e| gen_err(&path, e))?);
        }
        sets.push(MsSampleSet { index: s, churned: Vec::new(), latents: Vec::new(), snapshots });
    }
    Ok((manifest, sets))
}

/// Per-snapshot extraction output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionRecord {
    pub format_version: u32,
    pub set_index: usize,
    pub snapshot_index: usize,
    pub q: usize,
    pub tpg: MethodExtraction,
    pub fpg: MethodExtraction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodExtraction {
    pub ul: ExtractionResult,
    /// DL target gains, one `[re, im]` list per cluster.
    pub dl_gains: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Serialize)]
struct ResidualRow {
    set: usize,
    snapshot: usize,
    method: &'static str,
    step: usize,
    residual_norm: f64,
}

fn pairs(g: &[Vec<Complex64>]) -> Vec<Vec<[f64; 2]>> {
    g.iter().map(|c| c.iter().map(|z| [z.re, z.im]).collect()).collect()
}

/// Writes `extraction/setSSS_snapIII.json` per snapshot plus
/// `residuals.csv` under `out`. Residual steps are cluster steps for fPG and
/// subpath steps (per cluster) for tPG.
pub fn extract_dataset(dir: &Path, out: &Path, q: usize, link: &LinkSettings, noise_seed: u64, tpg_noise: bool) -> Result<usize> {
    let (manifest, sets) = load_dataset(dir)?;
    let fc = FeatureConfig { link: *link, q_values: vec![q], tpg: true, fpg: true, tpg_noise, noise_seed };
    let feats = set_features(&manifest.config, &fc, &sets)?;
    let rec_dir = out.join("extraction");
    fs::create_dir_all(&rec_dir).map_err(|e| out_err(&rec_dir, e))?;
    let csv_path = out.join("residuals.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    let mut count = 0;
    for f in feats.iter().flatten() {
        let (t, p) = (&f.tpg[0], &f.fpg[0]);
        let rec = ExtractionRecord {
            format_version: FORMAT_VERSION,
            set_index: f.set,
            snapshot_index: f.snapshot,
            q,
            tpg: MethodExtraction { ul: t.ul.clone(), dl_gains: pairs(&t.dl) },
            fpg: MethodExtraction { ul: p.ul.clone(), dl_gains: pairs(&p.dl) },
        };
        let path = rec_dir.join(format!("set{:03}_snap{:03}.json", f.set, f.snapshot));
        write_json(&path, &rec).map_err(|e| out_err(&path, e))?;
        for (step, &r) in p.ul.residual_norms.iter().enumerate() {
            w.serialize(ResidualRow { set: f.set, snapshot: f.snapshot, method: "fPG", step, residual_norm: r })?;
        }
        for c in &t.ul.clusters {
            for (step, &r) in c.residual_norms.iter().enumerate() {
                w.serialize(ResidualRow { set: f.set, snapshot: f.snapshot, method: "tPG", step, residual_norm: r })?;
            }
        }
        count += 1;
    }
    w.flush()?;
    Ok(count)
}

fn default_fraction() -> f64 {
    0.25
}

fn default_mlp_divisor() -> usize {
    16
}

fn default_cnn_divisor() -> usize {
    4
}

fn default_true() -> bool {
    true
}

/// One learned method on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobConfig {
    pub dataset: PathBuf,
    pub method: Method,
    pub q: usize,
    pub r: usize,
    #[serde(default = "default_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub tpg_noise: bool,
    #[serde(default)]
    pub link: LinkSettings,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_mlp_divisor")]
    pub mlp_divisor: usize,
    #[serde(default = "default_cnn_divisor")]
    pub cnn_divisor: usize,
    /// Model file for `predict` and `evaluate`.
    #[serde(default)]
    pub model: Option<PathBuf>,
}

struct JobData {
    config: ScenarioConfig,
    train: Vec<Vec<SnapshotFeatures>>,
    test: Vec<Vec<SnapshotFeatures>>,
}

fn job_data(job: &JobConfig) -> Result<JobData> {
    if job.method == Method::DlTraining {
        return Err(ExperimentError::Plan("DL_training has no trainable model".into()));
    }
    if job.q == 0 || job.r == 0 || job.r > job.q {
        return Err(ExperimentError::Plan(format!("need 1 <= R <= Q, got Q = {}, R = {}", job.q, job.r)));
    }
    let (manifest, sets) = load_dataset(&job.dataset)?;
    let split = split_indices(sets.len(), job.test_fraction, mix_seed(job.seed, 1))?;
    let fc = FeatureConfig {
        link: job.link,
        q_values: vec![job.q],
        tpg: job.method == Method::Tpg,
        fpg: job.method == Method::Fpg,
        tpg_noise: job.tpg_noise,
        noise_seed: mix_seed(job.seed ^ 0x6e6f_6973_65, manifest.config.seed),
    };
    let pick = |idx: &[usize]| idx.iter().map(|&i| sets[i].clone()).collect::<Vec<_>>();
    let train = set_features(&manifest.config, &fc, &pick(&split.train))?;
    let test = set_features(&manifest.config, &fc, &pick(&split.test))?;
    Ok(JobData { config: manifest.config, train, test })
}

/// Trains on the training sets of `job.dataset`.
pub fn train_job(job: &JobConfig) -> Result<Model> {
    let data = job_data(job)?;
    let feats: Vec<&SnapshotFeatures> = data.train.iter().flatten().collect();
    train_method(job.method, job.q, &data.config, &feats, &job.train, (job.mlp_divisor, job.cnn_divisor))
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    model.save(path).map_err(|e| out_err(path, e))
}

pub fn load_model(path: &Path) -> Result<Model> {
    Model::load(path).map_err(|e| ExperimentError::stage(Stage::Evaluation, format!("{}: {e}", path.display())))
}

/// Predicted DL channels for every held-out snapshot, written as OFDM
/// records under `out/predictions/`.
pub fn predict_job(job: &JobConfig, model: &mut Model, out: &Path) -> Result<usize> {
    let data = job_data(job)?;
    let feats: Vec<&SnapshotFeatures> = data.test.iter().flatten().collect();
    let preds = predict_dl(model, job.method, job.q, &[job.r], &feats, &data.config.dl_carrier)?;
    let dir = out.join("predictions");
    fs::create_dir_all(&dir).map_err(|e| out_err(&dir, e))?;
    for (f, ch) in feats.iter().zip(&preds[0]) {
        let path = dir.join(format!("set{:03}_snap{:03}.json", f.set, f.snapshot));
        write_json(&path, &ChannelRecord::from(ch)).map_err(|e| out_err(&path, e))?;
    }
    Ok(feats.len())
}

/// Metric rows over the held-out snapshots, in the experiment CSV schema.
pub fn evaluate_job(job: &JobConfig, model: &mut Model) -> Result<Vec<ResultRow>> {
    let data = job_data(job)?;
    let feats: Vec<&SnapshotFeatures> = data.test.iter().flatten().collect();
    let dl = data.config.dl_carrier;
    let preds = predict_dl(model, job.method, job.q, &[job.r], &feats, &dl)?;
    let truths: Vec<_> = feats.iter().map(|f| &f.dl_true).collect();
    let rate = RateContext {
        snr_rho: dl_snr(&job.link, &dl),
        f_coh: job.link.coherence_bandwidth_hz,
        speed: data.config.ms_speed,
        f_c_dl: dl.carrier_hz,
        training_overhead: 0.0,
    };
    let s = score(&truths, &preds[0], &rate)?;
    let row = |metric: &str, samples: &[f64]| {
        let m = MeanStderr::from_samples(samples);
        ResultRow {
            experiment_id: "evaluate".into(),
            sweep_name: "R".into(),
            sweep_value: job.r as f64,
            method: job.method.as_str().into(),
            n_bs: data.config.n_bs(),
            metric: metric.into(),
            mean: m.mean,
            stderr: m.stderr,
            n: m.n,
        }
    };
    Ok(vec![
        row(crate::pipeline::METRIC_CORRELATION, &s.correlation),
        row(crate::pipeline::METRIC_SPECTRAL_EFFICIENCY, &s.spectral_efficiency),
        row(crate::pipeline::METRIC_EFFECTIVE_RATE, &s.effective_rate),
    ])
}
