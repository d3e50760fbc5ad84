//! Experiment plans: which sweep to run, on which scenario, with which methods.

use std::fmt;
use std::path::PathBuf;

use fdd_core::scenario::{kmh_to_ms, ScenarioConfig};
use fdd_nn::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::{ExperimentError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    /// Reconstruction from the true DL path gains versus `R`.
    RSweepPerfect,
    /// Learned reconstruction versus `R` for every `Q` in `q_values`.
    RqSweep,
    /// Total bandwidth in Hz.
    BandwidthSweep,
    /// UL transmit power in dBm.
    TxpowerSweep,
    /// UL carrier in Hz; DL sits `guard_band_hz` above.
    CarrierSweep,
    /// DL minus UL carrier in Hz.
    GuardbandSweep,
    /// MS speed in km/h, optionally for several training-set sizes.
    SpeedSweep,
    /// Effective rate versus MS speed in km/h.
    EffectiveRate,
}

impl ExperimentId {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentId::RSweepPerfect => "r_sweep_perfect",
            ExperimentId::RqSweep => "rq_sweep",
            ExperimentId::BandwidthSweep => "bandwidth_sweep",
            ExperimentId::TxpowerSweep => "txpower_sweep",
            ExperimentId::CarrierSweep => "carrier_sweep",
            ExperimentId::GuardbandSweep => "guardband_sweep",
            ExperimentId::SpeedSweep => "speed_sweep",
            ExperimentId::EffectiveRate => "effective_rate",
        }
    }

    pub fn sweep_name(&self) -> &'static str {
        match self {
            ExperimentId::RSweepPerfect | ExperimentId::RqSweep => "R",
            ExperimentId::BandwidthSweep => "bandwidth_hz",
            ExperimentId::TxpowerSweep => "ul_tx_power_dbm",
            ExperimentId::CarrierSweep => "ul_carrier_hz",
            ExperimentId::GuardbandSweep => "guard_band_hz",
            ExperimentId::SpeedSweep | ExperimentId::EffectiveRate => "speed_kmh",
        }
    }

    /// Sweeps over `R` reuse one trained model per scenario.
    pub fn sweeps_r(&self) -> bool {
        matches!(self, ExperimentId::RSweepPerfect | ExperimentId::RqSweep)
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// Full UL OFDM estimate in, full DL OFDM channel out.
    #[serde(rename = "CH")]
    Ch,
    /// Path gains from time-domain cluster coefficients.
    #[serde(rename = "tPG")]
    Tpg,
    /// Path gains extracted from the UL OFDM estimate.
    #[serde(rename = "fPG")]
    Fpg,
    /// LS estimate from DL pilots, perfectly fed back.
    #[serde(rename = "DL_training")]
    DlTraining,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Ch => "CH",
            Method::Tpg => "tPG",
            Method::Fpg => "fPG",
            Method::DlTraining => "DL_training",
        }
    }

    pub fn is_learned(&self) -> bool {
        !matches!(self, Method::DlTraining)
    }

    pub fn is_path_gain(&self) -> bool {
        matches!(self, Method::Tpg | Method::Fpg)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSettings {
    pub ul_tx_power_dbm: f64,
    pub dl_tx_power_dbm: f64,
    pub n0_dbm_per_hz: f64,
    /// Coherence bandwidth for the rate computation, Hz.
    pub coherence_bandwidth_hz: f64,
}

impl Default for LinkSettings {
    fn default() -> Self {
        Self { ul_tx_power_dbm: 30.0, dl_tx_power_dbm: 30.0, n0_dbm_per_hz: -174.0, coherence_bandwidth_hz: 180e3 }
    }
}

fn default_test_fraction() -> f64 {
    0.25
}

fn default_one() -> usize {
    1
}

fn default_divisor() -> usize {
    16
}

fn default_cnn_divisor() -> usize {
    4
}

fn default_guard_band() -> f64 {
    0.3e9
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub experiment_id: ExperimentId,
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub methods: Vec<Method>,
    pub sweep_values: Vec<f64>,
    /// Empty means the scenario's own antenna count.
    #[serde(default)]
    pub n_bs_values: Vec<usize>,
    /// Path gains per cluster fed to the PG networks.
    pub q: usize,
    /// Subpaths per cluster used for the DL reconstruction.
    pub r: usize,
    /// `Q` values of an `rq_sweep`.
    #[serde(default)]
    pub q_values: Vec<usize>,
    /// Share of sample sets held out for evaluation.
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Independent scenario seeds averaged per point.
    #[serde(default = "default_one")]
    pub geometries: usize,
    /// Nested training-set sizes (in sample sets); empty means all.
    #[serde(default)]
    pub train_set_counts: Vec<usize>,
    #[serde(default)]
    pub train: TrainConfig,
    /// Hidden-width divisor of the fully connected network.
    #[serde(default = "default_divisor")]
    pub mlp_divisor: usize,
    /// Channel and width divisor of the convolutional network.
    #[serde(default = "default_cnn_divisor")]
    pub cnn_divisor: usize,
    #[serde(default)]
    pub link: LinkSettings,
    /// DL offset from the UL carrier for a `carrier_sweep`.
    #[serde(default = "default_guard_band")]
    pub guard_band_hz: f64,
    /// Add UL estimation noise to the time-domain cluster coefficients.
    #[serde(default = "default_true")]
    pub tpg_noise: bool,
    /// Split and noise seed.
    #[serde(default)]
    pub seed: u64,
    /// Output directory; the CLI's `--out` takes precedence.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentPlan {
    /// A plan with desk-scale defaults for `id`.
    pub fn desk(id: ExperimentId) -> Self {
        let scenario = ScenarioConfig::desk(8, 1);
        let (methods, sweep_values): (Vec<Method>, Vec<f64>) = match id {
            ExperimentId::RSweepPerfect => (Vec::new(), vec![1.0, 2.0, 3.0, 4.0]),
            ExperimentId::RqSweep => (vec![Method::Tpg, Method::Fpg], vec![1.0, 2.0, 3.0, 4.0]),
            ExperimentId::BandwidthSweep => (vec![Method::Ch, Method::Tpg, Method::Fpg], vec![20e6, 50e6, 100e6, 200e6]),
            ExperimentId::TxpowerSweep => (vec![Method::Ch, Method::Tpg, Method::Fpg], vec![-10.0, 0.0, 10.0, 20.0, 30.0]),
            ExperimentId::CarrierSweep => (vec![Method::Ch, Method::Tpg, Method::Fpg], vec![2.6e9, 3.5e9, 5.0e9]),
            ExperimentId::GuardbandSweep => (vec![Method::Ch, Method::Tpg, Method::Fpg], vec![0.1e9, 0.3e9, 0.5e9]),
            ExperimentId::SpeedSweep => (vec![Method::Ch, Method::Tpg, Method::Fpg], vec![10.0, 40.0, 80.0, 120.0]),
            ExperimentId::EffectiveRate => {
                (vec![Method::Ch, Method::Tpg, Method::Fpg, Method::DlTraining], vec![10.0, 40.0, 80.0, 120.0])
            }
        };
        Self {
            experiment_id: id,
            scenario,
            methods,
            sweep_values,
            n_bs_values: vec![4, 8],
            q: 2,
            r: 2,
            q_values: if id == ExperimentId::RqSweep { vec![1, 2, 4] } else { Vec::new() },
            test_fraction: default_test_fraction(),
            geometries: 1,
            train_set_counts: Vec::new(),
            train: TrainConfig { epochs: 60, ..TrainConfig::default() },
            mlp_divisor: default_divisor(),
            cnn_divisor: default_cnn_divisor(),
            link: LinkSettings::default(),
            guard_band_hz: default_guard_band(),
            tpg_noise: true,
            seed: 0,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ExperimentError::Plan(m));
        self.scenario.validate().map_err(|e| ExperimentError::Plan(e.to_string()))?;
        self.train.validate().map_err(|e| ExperimentError::Plan(e.to_string()))?;
        if self.sweep_values.is_empty() {
            return bad("sweep_values must not be empty".into());
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction {} outside (0, 1)", self.test_fraction));
        }
        if self.geometries == 0 {
            return bad("geometries must be at least 1".into());
        }
        if self.n_bs_values.contains(&0) {
            return bad("n_bs_values must be positive".into());
        }
        let p = self.scenario.subpaths;
        if self.experiment_id != ExperimentId::RqSweep && (self.q == 0 || self.q > p) {
            return bad(format!("Q = {} must lie in 1..={p}", self.q));
        }
        if self.experiment_id.sweeps_r() {
            let limit = if self.experiment_id == ExperimentId::RSweepPerfect { p } else { self.q_values.iter().copied().max().unwrap_or(0) };
            for &r in &self.sweep_values {
                if r < 1.0 || r.fract() != 0.0 || r as usize > limit {
                    return bad(format!("R = {r} must be an integer in 1..={limit}"));
                }
            }
        } else if self.r == 0 || self.r > self.q {
            return bad(format!("R = {} must lie in 1..=Q ({})", self.r, self.q));
        }
        if self.experiment_id == ExperimentId::RqSweep {
            if self.q_values.is_empty() || self.q_values.iter().any(|&q| q == 0 || q > p) {
                return bad(format!("q_values {:?} must be nonempty and within 1..={p}", self.q_values));
            }
            if self.methods.iter().any(|m| !m.is_path_gain()) {
                return bad("rq_sweep only supports tPG and fPG".into());
            }
        }
        if self.experiment_id != ExperimentId::RSweepPerfect && self.methods.is_empty() {
            return bad("methods must not be empty".into());
        }
        if self.methods.contains(&Method::DlTraining) && self.experiment_id != ExperimentId::EffectiveRate {
            return bad("DL_training is only evaluated by the effective_rate experiment".into());
        }
        if self.experiment_id == ExperimentId::SpeedSweep || self.experiment_id == ExperimentId::EffectiveRate {
            if self.sweep_values.iter().any(|&v| !(v >= 0.0)) {
                return bad("speeds must be non-negative".into());
            }
        }
        Ok(())
    }

    pub fn antenna_counts(&self) -> Vec<usize> {
        if self.n_bs_values.is_empty() {
            vec![self.scenario.n_bs()]
        } else {
            self.n_bs_values.clone()
        }
    }

    /// Scenario and link settings at one sweep value (R sweeps leave both as is).
    pub fn point(&self, value: f64, n_bs: usize, geometry: usize) -> (ScenarioConfig, LinkSettings) {
        let mut s = self.scenario.clone().with_antennas(n_bs);
        s.seed = self.scenario.seed.wrapping_add(geometry as u64 * 7919);
        let mut link = self.link;
        match self.experiment_id {
            ExperimentId::RSweepPerfect | ExperimentId::RqSweep => {}
            ExperimentId::BandwidthSweep => {
                s.ul_carrier.bandwidth_hz = value;
                s.dl_carrier.bandwidth_hz = value;
            }
            ExperimentId::TxpowerSweep => link.ul_tx_power_dbm = value,
            ExperimentId::CarrierSweep => {
                s.ul_carrier.carrier_hz = value;
                s.dl_carrier.carrier_hz = value + self.guard_band_hz;
            }
            ExperimentId::GuardbandSweep => s.dl_carrier.carrier_hz = s.ul_carrier.carrier_hz + value,
            ExperimentId::SpeedSweep | ExperimentId::EffectiveRate => s.ms_speed = kmh_to_ms(value),
        }
        (s, link)
    }
}
