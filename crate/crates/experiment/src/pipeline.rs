//! Per-point pipeline: link simulation, extraction, training and evaluation.

use fdd_core::channel::{cluster_coefficient, ofdm_from_time, reconstruct_dl, CarrierConfig, OfdmChannel, TimeDomainChannel};
use fdd_core::extraction::{extract_clusters, extract_dl_targets, select_top_q, tpg_extract, AngleGrid, DelayGrid, ExtractionResult};
use fdd_core::link::{
    complex_gaussian, dbm_to_watt, dl_observe_and_estimate, noise_variance, ul_ls_estimate, ul_ls_mse, ul_observe, PilotConfig,
};
use fdd_core::metrics::{correlation_factor, spectral_efficiency, RateContext};
use fdd_core::scenario::{generate_scenario, MsSampleSet, ScenarioConfig};
use fdd_core::Complex64;
use fdd_nn::{build_cnn_scaled, build_mlp_scaled, complex_to_real, train, Dataset, Model, Network, NetworkSpec, Tensor, TrainConfig};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::plan::{ExperimentId, ExperimentPlan, LinkSettings, Method};
use crate::split::split_indices;
use crate::{ExperimentError, Result, Stage};

pub const METRIC_CORRELATION: &str = "correlation";
pub const METRIC_SPECTRAL_EFFICIENCY: &str = "spectral_efficiency";
pub const METRIC_EFFECTIVE_RATE: &str = "effective_rate";

/// UL path gains with their DL targets for one `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSample {
    pub q: usize,
    /// UL extraction truncated to `q` subpaths per cluster.
    pub ul: ExtractionResult,
    /// `L` lists of `q` DL gains aligned with `ul`.
    pub dl: Vec<Vec<Complex64>>,
}

/// Everything the methods consume from one UL/DL snapshot pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotFeatures {
    pub set: usize,
    pub snapshot: usize,
    pub dl_time: TimeDomainChannel,
    pub dl_true: OfdmChannel,
    pub ul_estimate: OfdmChannel,
    pub dl_training: OfdmChannel,
    pub tpg: Vec<GainSample>,
    pub fpg: Vec<GainSample>,
}

impl SnapshotFeatures {
    pub fn gains(&self, method: Method, q: usize) -> Option<&GainSample> {
        let list = match method {
            Method::Tpg => &self.tpg,
            Method::Fpg => &self.fpg,
            _ => return None,
        };
        list.iter().find(|g| g.q == q)
    }
}

/// What to compute per snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub link: LinkSettings,
    pub q_values: Vec<usize>,
    pub tpg: bool,
    pub fpg: bool,
    pub tpg_noise: bool,
    pub noise_seed: u64,
}

/// splitmix64 finaliser, used to derive independent seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn uplink_pilots(link: &LinkSettings) -> PilotConfig {
    PilotConfig { n0_dbm_per_hz: link.n0_dbm_per_hz, ..PilotConfig::uplink(link.ul_tx_power_dbm) }
}

pub fn downlink_pilots(link: &LinkSettings, n_bs: usize) -> PilotConfig {
    PilotConfig { n0_dbm_per_hz: link.n0_dbm_per_hz, ..PilotConfig::downlink(link.dl_tx_power_dbm, n_bs) }
}

/// Linear DL SNR `P / (K sigma^2)`.
pub fn dl_snr(link: &LinkSettings, dl: &CarrierConfig) -> f64 {
    let sigma2 = noise_variance(link.n0_dbm_per_hz, dl.bandwidth_hz, dl.subcarriers);
    dbm_to_watt(link.dl_tx_power_dbm) / (dl.subcarriers as f64 * sigma2)
}

fn gain_samples(ext: &ExtractionResult, dl: &OfdmChannel, q_values: &[usize]) -> fdd_core::Result<Vec<GainSample>> {
    q_values
        .iter()
        .map(|&q| {
            let ul = select_top_q(ext, q)?;
            let dl = extract_dl_targets(dl, &ul, q)?.gains;
            Ok(GainSample { q, ul, dl })
        })
        .collect()
}

/// Link simulation and extraction for one snapshot. Noise is drawn from a
/// per-snapshot stream in a fixed order (UL pilots, cluster coefficients,
/// DL pilots) whatever the requested methods.
pub fn snapshot_features(cfg: &ScenarioConfig, fc: &FeatureConfig, set: &MsSampleSet, snapshot: usize) -> Result<SnapshotFeatures> {
    let snap = set.snapshots.get(snapshot).ok_or_else(|| ExperimentError::stage(Stage::LinkSim, format!("snapshot {snapshot} missing")))?;
    let n_bs = cfg.n_bs();
    let mut rng = ChaCha8Rng::seed_from_u64(fc.noise_seed);
    rng.set_stream((set.index * cfg.snapshots_per_set + snapshot) as u64);

    let ul_true = ofdm_from_time(&snap.ul);
    let dl_true = ofdm_from_time(&snap.dl);
    let ul_pilots = uplink_pilots(&fc.link);
    let ul_estimate = ul_ls_estimate(&ul_observe(&ul_true, &ul_pilots, &mut rng)).map_err(|e| ExperimentError::stage(Stage::LinkSim, e))?;

    let coeff_var = ul_ls_mse(&ul_pilots, cfg.ul_carrier.bandwidth_hz, cfg.ul_carrier.subcarriers);
    let coeffs: Vec<_> = snap
        .ul
        .clusters()
        .iter()
        .map(|c| {
            let mut a = cluster_coefficient(c, n_bs);
            for z in a.iter_mut() {
                let w = complex_gaussian(&mut rng, coeff_var);
                if fc.tpg_noise {
                    *z += w;
                }
            }
            a
        })
        .collect();
    let dl_training = dl_observe_and_estimate(&dl_true, &downlink_pilots(&fc.link, n_bs), &mut rng)
        .map_err(|e| ExperimentError::stage(Stage::LinkSim, e))?;

    let p = fc.q_values.iter().copied().max().unwrap_or(1);
    let grid = AngleGrid::for_antennas(n_bs);
    let ext_err = |e: fdd_core::Error| ExperimentError::stage(Stage::Extraction, format!("set {} snapshot {snapshot}: {e}", set.index));
    let tpg = if fc.tpg {
        let delays: Vec<f64> = snap.ul.clusters().iter().map(|c| c.delay).collect();
        let ext = tpg_extract(&delays, &coeffs, &grid, p).map_err(ext_err)?;
        gain_samples(&ext, &dl_true, &fc.q_values).map_err(ext_err)?
    } else {
        Vec::new()
    };
    let fpg = if fc.fpg {
        let dgrid = DelayGrid::for_carrier(&cfg.ul_carrier);
        let ext = extract_clusters(&ul_estimate, &dgrid, &grid, cfg.clusters, p).map_err(ext_err)?;
        gain_samples(&ext, &dl_true, &fc.q_values).map_err(ext_err)?
    } else {
        Vec::new()
    };
    Ok(SnapshotFeatures { set: set.index, snapshot, dl_time: snap.dl.clone(), dl_true, ul_estimate, dl_training, tpg, fpg })
}

/// Features of every snapshot of every set, grouped per set.
pub fn set_features(cfg: &ScenarioConfig, fc: &FeatureConfig, sets: &[MsSampleSet]) -> Result<Vec<Vec<SnapshotFeatures>>> {
    sets.par_iter()
        .map(|set| (0..set.snapshots.len()).map(|i| snapshot_features(cfg, fc, set, i)).collect::<Result<Vec<_>>>())
        .collect()
}

/// `[2, Q, L]` image with element `[q][l]` the `q`-th gain of cluster `l`.
pub fn gains_to_tensor(gains: &[Vec<Complex64>], q: usize) -> Result<Tensor> {
    let l = gains.len();
    let mut flat = vec![Complex64::new(0.0, 0.0); q * l];
    for (li, g) in gains.iter().enumerate() {
        if g.len() < q {
            return Err(ExperimentError::stage(Stage::Training, format!("cluster {li} has {} gains, need {q}", g.len())));
        }
        for qi in 0..q {
            flat[qi * l + li] = g[qi];
        }
    }
    complex_to_real(&flat, &[q, l]).map_err(|e| ExperimentError::stage(Stage::Training, e))
}

/// Inverse of [`gains_to_tensor`] on a flat `[re..., im...]` row.
pub fn row_to_gains(row: &[f64], q: usize, l: usize) -> Vec<Vec<Complex64>> {
    let m = q * l;
    (0..l).map(|li| (0..q).map(|qi| Complex64::new(row[qi * l + li], row[m + qi * l + li])).collect()).collect()
}

/// `[2, N K]` with the channel matrix flattened row-major.
pub fn channel_to_tensor(ch: &OfdmChannel) -> Result<Tensor> {
    let flat: Vec<Complex64> = ch.matrix().iter().copied().collect();
    complex_to_real(&flat, &[flat.len()]).map_err(|e| ExperimentError::stage(Stage::Training, e))
}

pub fn row_to_channel(row: &[f64], carrier: &CarrierConfig) -> Result<OfdmChannel> {
    let (n, k) = (carrier.antennas, carrier.subcarriers);
    let m = n * k;
    let matrix = Array2::from_shape_fn((n, k), |(i, j)| Complex64::new(row[i * k + j], row[m + i * k + j]));
    OfdmChannel::new(matrix, *carrier).map_err(|e| ExperimentError::stage(Stage::Evaluation, e))
}

/// Network input for `method` on one snapshot.
pub fn method_input(method: Method, q: usize, f: &SnapshotFeatures) -> Result<Tensor> {
    match method {
        Method::Ch => channel_to_tensor(&f.ul_estimate),
        Method::Tpg | Method::Fpg => {
            let g = f.gains(method, q).ok_or_else(|| missing(method, q))?;
            gains_to_tensor(&g.ul.gains(), q)
        }
        Method::DlTraining => Err(ExperimentError::stage(Stage::Training, "DL_training has no network")),
    }
}

pub fn method_target(method: Method, q: usize, f: &SnapshotFeatures) -> Result<Tensor> {
    match method {
        Method::Ch => channel_to_tensor(&f.dl_true),
        Method::Tpg | Method::Fpg => {
            let g = f.gains(method, q).ok_or_else(|| missing(method, q))?;
            gains_to_tensor(&g.dl, q)
        }
        Method::DlTraining => Err(ExperimentError::stage(Stage::Training, "DL_training has no network")),
    }
}

fn missing(method: Method, q: usize) -> ExperimentError {
    ExperimentError::stage(Stage::Training, format!("no {method} features for Q = {q}"))
}

pub fn method_dataset(method: Method, q: usize, feats: &[&SnapshotFeatures]) -> Result<Dataset> {
    let stage = |e: fdd_nn::NnError| ExperimentError::stage(Stage::Training, e);
    let inputs = feats.iter().map(|f| method_input(method, q, f)).collect::<Result<Vec<_>>>()?;
    let targets = feats.iter().map(|f| method_target(method, q, f)).collect::<Result<Vec<_>>>()?;
    let targets = Tensor::stack(&targets).map_err(stage)?;
    let shape = vec![targets.batch(), targets.row_len()];
    Dataset::new(Tensor::stack(&inputs).map_err(stage)?, targets.reshape(shape).map_err(stage)?).map_err(stage)
}

/// Network shape used for `method`: the fully connected net for CH and the
/// convolutional net for path gains.
pub fn method_network(method: Method, q: usize, cfg: &ScenarioConfig, mlp_divisor: usize, cnn_divisor: usize) -> Result<NetworkSpec> {
    let spec = match method {
        Method::Ch => build_mlp_scaled(2 * cfg.n_bs() * cfg.ul_carrier.subcarriers, mlp_divisor),
        Method::Tpg | Method::Fpg => build_cnn_scaled(q, cfg.clusters, cnn_divisor),
        Method::DlTraining => return Err(ExperimentError::stage(Stage::Training, "DL_training has no network")),
    };
    spec.map_err(|e| ExperimentError::stage(Stage::Training, e))
}

pub fn train_method(
    method: Method,
    q: usize,
    cfg: &ScenarioConfig,
    feats: &[&SnapshotFeatures],
    train_cfg: &TrainConfig,
    divisors: (usize, usize),
) -> Result<Model> {
    let data = method_dataset(method, q, feats)?;
    let spec = method_network(method, q, cfg, divisors.0, divisors.1)?;
    let net = Network::new(spec, train_cfg.seed).map_err(|e| ExperimentError::stage(Stage::Training, e))?;
    let outcome = train(net, &data, train_cfg).map_err(|e| ExperimentError::stage(Stage::Training, format!("{method} (Q = {q}): {e}")))?;
    if let Some(last) = outcome.history.last() {
        log::info!("{method} Q={q} trained on {} samples: final loss {:.4e} (validation {:?})", data.len(), last.train, last.validation);
    }
    Ok(outcome.model)
}

/// DL channel estimates from a trained model for each `r` in `r_values`.
pub fn predict_dl(
    model: &mut Model,
    method: Method,
    q: usize,
    r_values: &[usize],
    feats: &[&SnapshotFeatures],
    dl: &CarrierConfig,
) -> Result<Vec<Vec<OfdmChannel>>> {
    let eval = |e: fdd_nn::NnError| ExperimentError::stage(Stage::Evaluation, e);
    let inputs = feats.iter().map(|f| method_input(method, q, f)).collect::<Result<Vec<_>>>()?;
    let pred = model.predict(&Tensor::stack(&inputs).map_err(eval)?).map_err(eval)?;
    let width = pred.row_len();
    let mut out = vec![Vec::with_capacity(feats.len()); r_values.len()];
    for (i, f) in feats.iter().enumerate() {
        let row = &pred.data()[i * width..(i + 1) * width];
        match method {
            Method::Ch => {
                let ch = row_to_channel(row, dl)?;
                for slot in out.iter_mut() {
                    slot.push(ch.clone());
                }
            }
            _ => {
                let g = f.gains(method, q).ok_or_else(|| missing(method, q))?;
                let gains = row_to_gains(row, q, g.ul.clusters.len());
                for (slot, &r) in out.iter_mut().zip(r_values) {
                    let ch = reconstruct_dl(&g.ul.delays(), &g.ul.aods(), &gains, r, dl)
                        .map_err(|e| ExperimentError::stage(Stage::Evaluation, e))?;
                    slot.push(ch);
                }
            }
        }
    }
    Ok(out)
}

/// Per-snapshot metric samples of one evaluated series.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSamples {
    pub correlation: Vec<f64>,
    pub spectral_efficiency: Vec<f64>,
    pub effective_rate: Vec<f64>,
}

pub fn score(truths: &[&OfdmChannel], estimates: &[OfdmChannel], rate: &RateContext) -> Result<SeriesSamples> {
    let mut s = SeriesSamples { correlation: Vec::new(), spectral_efficiency: Vec::new(), effective_rate: Vec::new() };
    let eval = |e: fdd_core::Error| ExperimentError::stage(Stage::Evaluation, e);
    for (h, e) in truths.iter().zip(estimates) {
        s.correlation.push(correlation_factor(h, e).map_err(eval)?.value);
        let se = spectral_efficiency(h, e, rate.snr_rho).map_err(eval)?;
        s.spectral_efficiency.push(se);
        s.effective_rate.push(rate.effective_rate(se));
    }
    Ok(s)
}

/// One evaluated (sweep value, series) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub sweep_value: f64,
    pub label: String,
    pub samples: SeriesSamples,
}

/// Train and test features of one sweep point and geometry.
#[derive(Debug, Clone)]
pub struct PointFeatures {
    pub scenario: ScenarioConfig,
    pub link: LinkSettings,
    /// Per training set, in shuffled set order.
    pub train: Vec<Vec<SnapshotFeatures>>,
    pub test: Vec<Vec<SnapshotFeatures>>,
}

/// Which sets a point's generation draws from and with which seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleSet {
    pub geometry: usize,
    pub scenario_seed: u64,
    pub split_seed: u64,
    pub noise_seed: u64,
}

impl SampleSet {
    pub fn new(plan: &ExperimentPlan, scenario: &ScenarioConfig, geometry: usize) -> Self {
        Self {
            geometry,
            scenario_seed: scenario.seed,
            split_seed: mix_seed(plan.seed, 2 * geometry as u64 + 1),
            noise_seed: mix_seed(plan.seed ^ 0x6e6f_6973_65, scenario.seed),
        }
    }
}

fn q_values(plan: &ExperimentPlan) -> Vec<usize> {
    if plan.experiment_id == ExperimentId::RqSweep {
        plan.q_values.clone()
    } else {
        vec![plan.q]
    }
}

pub fn point_features(plan: &ExperimentPlan, value: f64, n_bs: usize, geometry: usize) -> Result<PointFeatures> {
    let (scenario, link) = plan.point(value, n_bs, geometry);
    let seeds = SampleSet::new(plan, &scenario, geometry);
    let sets = generate_scenario(&scenario).map_err(|e| ExperimentError::stage(Stage::Generate, e))?;
    let split = split_indices(sets.len(), plan.test_fraction, seeds.split_seed)?;
    let fc = FeatureConfig {
        link,
        q_values: q_values(plan),
        tpg: plan.methods.contains(&Method::Tpg),
        fpg: plan.methods.contains(&Method::Fpg),
        tpg_noise: plan.tpg_noise,
        noise_seed: seeds.noise_seed,
    };
    let pick = |idx: &[usize]| idx.iter().map(|&i| sets[i].clone()).collect::<Vec<_>>();
    let train = set_features(&scenario, &fc, &pick(&split.train))?;
    let test = set_features(&scenario, &fc, &pick(&split.test))?;
    Ok(PointFeatures { scenario, link, train, test })
}

fn series_label(plan: &ExperimentPlan, method: Method, q: usize, train_sets: Option<usize>) -> String {
    let mut label = method.as_str().to_string();
    if plan.experiment_id == ExperimentId::RqSweep {
        label.push_str(&format!("(Q={q})"));
    }
    if let Some(n) = train_sets {
        label.push_str(&format!("[sets={n}]"));
    }
    label
}

pub const PERFECT_GAINS_LABEL: &str = "perfect_gains";

/// Runs one sweep point for one geometry and returns every evaluated series.
pub fn evaluate_point(plan: &ExperimentPlan, value: f64, n_bs: usize, geometry: usize) -> Result<Vec<PointResult>> {
    let pf = point_features(plan, value, n_bs, geometry)?;
    let dl = pf.scenario.dl_carrier;
    let rho = dl_snr(&pf.link, &dl);
    let rate = |overhead: f64| RateContext {
        snr_rho: rho,
        f_coh: pf.link.coherence_bandwidth_hz,
        speed: pf.scenario.ms_speed,
        f_c_dl: dl.carrier_hz,
        training_overhead: overhead,
    };
    let test: Vec<&SnapshotFeatures> = pf.test.iter().flatten().collect();
    let truths: Vec<&OfdmChannel> = test.iter().map(|f| &f.dl_true).collect();
    let mut results = Vec::new();

    if plan.experiment_id == ExperimentId::RSweepPerfect {
        for &r in &plan.sweep_values {
            let est = test
                .iter()
                .map(|f| f.dl_time.truncated(r as usize).map(|t| ofdm_from_time(&t)))
                .collect::<fdd_core::Result<Vec<_>>>()
                .map_err(|e| ExperimentError::stage(Stage::Evaluation, e))?;
            results.push(PointResult { sweep_value: r, label: PERFECT_GAINS_LABEL.into(), samples: score(&truths, &est, &rate(0.0))? });
        }
        return Ok(results);
    }

    let counts: Vec<Option<usize>> = if plan.train_set_counts.is_empty() {
        vec![None]
    } else {
        plan.train_set_counts.iter().map(|&c| Some(c)).collect()
    };
    for (mi, &method) in plan.methods.iter().enumerate() {
        if method == Method::DlTraining {
            let est: Vec<OfdmChannel> = test.iter().map(|f| f.dl_training.clone()).collect();
            let samples = score(&truths, &est, &rate(n_bs as f64))?;
            results.push(PointResult { sweep_value: value, label: series_label(plan, method, 0, None), samples });
            continue;
        }
        let qs = if method == Method::Ch { vec![plan.q] } else { q_values(plan) };
        for &q in &qs {
            let r_values: Vec<usize> = if plan.experiment_id.sweeps_r() {
                plan.sweep_values.iter().map(|&r| r as usize).filter(|&r| method == Method::Ch || r <= q).collect()
            } else {
                vec![plan.r]
            };
            if r_values.is_empty() {
                continue;
            }
            for &count in &counts {
                let n_sets = count.unwrap_or(pf.train.len());
                if n_sets == 0 || n_sets > pf.train.len() {
                    return Err(ExperimentError::Plan(format!("{n_sets} training sets requested, {} available", pf.train.len())));
                }
                let train_feats: Vec<&SnapshotFeatures> = pf.train[..n_sets].iter().flatten().collect();
                let mut cfg = plan.train.clone();
                cfg.seed = mix_seed(plan.train.seed, ((geometry * 16 + mi) * 16 + q) as u64 * 1024 + n_sets as u64);
                let mut model = train_method(method, q, &pf.scenario, &train_feats, &cfg, (plan.mlp_divisor, plan.cnn_divisor))?;
                let preds = predict_dl(&mut model, method, q, &r_values, &test, &dl)?;
                for (est, &r) in preds.iter().zip(&r_values) {
                    let sweep_value = if plan.experiment_id.sweeps_r() { r as f64 } else { value };
                    results.push(PointResult { sweep_value, label: series_label(plan, method, q, count), samples: score(&truths, est, &rate(0.0))? });
                }
            }
        }
    }
    Ok(results)
}
