//! Parametric generator of paired UL/DL sample sets.
//!
//! Every subpath carries a latent state (amplitude, within-cluster excess
//! delay, AoD, Doppler angle, initial phase). UL and DL gains are both
//! evaluated from the same latent through [`gain_at`], so the two links share
//! delays and AoDs exactly and differ only through the carrier-dependent
//! phase terms.
//!
//! Randomness comes from ChaCha8 keyed by the scenario seed. Stream 0 draws
//! the static cluster geometry shared by all sample sets; stream `s + 1`
//! drives cluster churn of sample set `s`. Sets can therefore be generated in
//! any order or in parallel with identical results.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{CarrierConfig, Cluster, Subpath, TimeDomainChannel};
use crate::{Error, Result, SPEED_OF_LIGHT};

/// Power decay of the cluster delay profile, dB per 100 ns.
pub const DECAY_DB_PER_100NS: f64 = 3.0;
/// Upper bound of the within-cluster excess delay.
pub const MAX_EXCESS_DELAY: f64 = 40e-9;
/// Default half-width of subpath AoD offsets around the cluster centre.
pub const DEFAULT_ANGULAR_SPREAD: f64 = 10.0 * PI / 180.0;

fn default_angular_spread() -> f64 {
    DEFAULT_ANGULAR_SPREAD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub ul_carrier: CarrierConfig,
    pub dl_carrier: CarrierConfig,
    /// Cluster count `L`.
    pub clusters: usize,
    /// Subpaths per cluster `P`.
    pub subpaths: usize,
    pub sample_sets: usize,
    pub snapshots_per_set: usize,
    /// Seconds between snapshots.
    pub snapshot_period: f64,
    /// DL offset `d` relative to the UL snapshot, seconds.
    pub processing_delay: f64,
    /// MS speed in m/s.
    pub ms_speed: f64,
    pub churn_min: usize,
    pub churn_max: usize,
    pub seed: u64,
    /// Half-width in radians of the subpath AoD spread around each cluster centre.
    #[serde(default = "default_angular_spread")]
    pub angular_spread: f64,
}

pub fn kmh_to_ms(kmh: f64) -> f64 {
    kmh / 3.6
}

impl ScenarioConfig {
    /// Table I data-set parameters (2.6/2.9 GHz, 100 MHz, 32 subcarriers,
    /// 7 clusters, 10 km/h, 40 ms snapshots, 5 ms processing delay, one to
    /// three churned clusters, 200 sample sets).
    pub fn table_one(n_bs: usize, subpaths: usize, seed: u64) -> Self {
        Self {
            ul_carrier: CarrierConfig { carrier_hz: 2.6e9, bandwidth_hz: 100e6, subcarriers: 32, antennas: n_bs },
            dl_carrier: CarrierConfig { carrier_hz: 2.9e9, bandwidth_hz: 100e6, subcarriers: 32, antennas: n_bs },
            clusters: 7,
            subpaths,
            sample_sets: 200,
            snapshots_per_set: 50,
            snapshot_period: 40e-3,
            processing_delay: 5e-3,
            ms_speed: kmh_to_ms(10.0),
            churn_min: 1,
            churn_max: 3,
            seed,
            angular_spread: DEFAULT_ANGULAR_SPREAD,
        }
    }

    /// Workstation-sized scenario: 4 clusters of 4 subpaths, 40 sets of 50 snapshots.
    pub fn desk(n_bs: usize, seed: u64) -> Self {
        Self {
            clusters: 4,
            subpaths: 4,
            sample_sets: 40,
            churn_min: 0,
            churn_max: 1,
            ..Self::table_one(n_bs, 4, seed)
        }
    }

    pub fn n_bs(&self) -> usize {
        self.ul_carrier.antennas
    }

    pub fn with_antennas(mut self, n_bs: usize) -> Self {
        self.ul_carrier.antennas = n_bs;
        self.dl_carrier.antennas = n_bs;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |field: &'static str, reason: String| Err(Error::Config { field, reason });
        if let Err(e) = self.ul_carrier.validate() {
            return cfg_err("ul_carrier", e.to_string());
        }
        if let Err(e) = self.dl_carrier.validate() {
            return cfg_err("dl_carrier", e.to_string());
        }
        if self.ul_carrier.subcarriers != self.dl_carrier.subcarriers {
            return cfg_err("dl_carrier", "UL and DL subcarrier counts differ".into());
        }
        if self.ul_carrier.antennas != self.dl_carrier.antennas {
            return cfg_err("dl_carrier", "UL and DL antenna counts differ".into());
        }
        if self.clusters == 0 {
            return cfg_err("clusters", "need at least one cluster".into());
        }
        if self.subpaths == 0 {
            return cfg_err("subpaths", "need at least one subpath per cluster".into());
        }
        if self.sample_sets == 0 {
            return cfg_err("sample_sets", "need at least one sample set".into());
        }
        if self.snapshots_per_set == 0 {
            return cfg_err("snapshots_per_set", "need at least one snapshot".into());
        }
        if !(self.snapshot_period > 0.0) {
            return cfg_err("snapshot_period", format!("must be positive, got {}", self.snapshot_period));
        }
        if !(self.processing_delay >= 0.0 && self.processing_delay < self.snapshot_period) {
            return cfg_err(
                "processing_delay",
                format!("must lie in [0, snapshot_period), got {}", self.processing_delay),
            );
        }
        if !(self.ms_speed >= 0.0 && self.ms_speed.is_finite()) {
            return cfg_err("ms_speed", format!("must be non-negative, got {}", self.ms_speed));
        }
        if self.churn_min > self.churn_max {
            return cfg_err("churn_min", format!("{} exceeds churn_max {}", self.churn_min, self.churn_max));
        }
        if self.churn_max > self.clusters {
            return cfg_err("churn_max", format!("{} exceeds cluster count {}", self.churn_max, self.clusters));
        }
        if !(self.angular_spread >= 0.0 && self.angular_spread < FRAC_PI_2) {
            return cfg_err("angular_spread", format!("must lie in [0, pi/2), got {}", self.angular_spread));
        }
        Ok(())
    }

    /// Delay window shared by both links.
    pub fn delay_window(&self) -> f64 {
        self.ul_carrier.delay_window().min(self.dl_carrier.delay_window())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubpathLatent {
    pub amplitude: f64,
    /// Within-cluster delay offset, seconds.
    pub excess_delay: f64,
    pub aod: f64,
    /// Angle between the subpath and the MS direction of travel.
    pub doppler_angle: f64,
    pub phase0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterLatent {
    pub delay: f64,
    /// Ordered by descending amplitude.
    pub subpaths: Vec<SubpathLatent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    /// UL observation time.
    pub t: f64,
    pub ul: TimeDomainChannel,
    /// DL channel at `t + d`.
    pub dl: TimeDomainChannel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsSampleSet {
    pub index: usize,
    /// Slots of the static geometry that were replaced for this set.
    pub churned: Vec<usize>,
    /// Latent geometry in canonical (delay) order; matches the channel cluster order.
    pub latents: Vec<ClusterLatent>,
    pub snapshots: Vec<Snapshot>,
}

/// Complex gain of one subpath at carrier `f_c` and time `t`.
pub fn gain_at(latent: &SubpathLatent, f_c: f64, t: f64, speed: f64) -> Complex64 {
    let doppler = f_c * speed / SPEED_OF_LIGHT * latent.doppler_angle.cos();
    let phase = latent.phase0 - 2.0 * PI * f_c * latent.excess_delay + 2.0 * PI * doppler * t;
    Complex64::from_polar(latent.amplitude, phase)
}

fn decay_rate() -> f64 {
    DECAY_DB_PER_100NS / 10.0 * std::f64::consts::LN_10 / 100e-9
}

/// Mean cluster power at `delay`: `E[sum_l P_l] = 1` when delays are uniform
/// over `[0, window)`.
fn cluster_power(delay: f64, window: f64, clusters: usize) -> f64 {
    let beta = decay_rate();
    let mean_decay = (1.0 - (-beta * window).exp()) / (beta * window);
    (-beta * delay).exp() / (mean_decay * clusters as f64)
}

/// Draws a fresh cluster: delay uniform over the delay window, centre AoD
/// uniform over the field of view, Rayleigh subpath amplitudes.
pub fn draw_cluster<R: Rng + ?Sized>(rng: &mut R, cfg: &ScenarioConfig) -> ClusterLatent {
    let window = cfg.delay_window();
    let delay = rng.random::<f64>() * window;
    let spread = cfg.angular_spread;
    let centre = -FRAC_PI_2 + spread + rng.random::<f64>() * (PI - 2.0 * spread);
    let sub_power = cluster_power(delay, window, cfg.clusters) / cfg.subpaths as f64;
    let mut subpaths: Vec<SubpathLatent> = (0..cfg.subpaths)
        .map(|_| {
            let u: f64 = rng.random();
            let amplitude = (sub_power * -(1.0 - u).ln()).sqrt();
            let excess_delay = rng.random::<f64>() * MAX_EXCESS_DELAY;
            let offset = (2.0 * rng.random::<f64>() - 1.0) * spread;
            let aod = (centre + offset).clamp(-FRAC_PI_2, FRAC_PI_2 - 1e-12);
            SubpathLatent {
                amplitude,
                excess_delay,
                aod,
                doppler_angle: rng.random::<f64>() * 2.0 * PI,
                phase0: rng.random::<f64>() * 2.0 * PI,
            }
        })
        .collect();
    subpaths.sort_by(|a, b| b.amplitude.total_cmp(&a.amplitude));
    ClusterLatent { delay, subpaths }
}

/// Replaces `churn_count` uniformly chosen clusters with freshly drawn ones.
/// Returns the new cluster list and the replaced slot indices (ascending).
pub fn churn_clusters<R: Rng + ?Sized>(
    static_clusters: &[ClusterLatent],
    rng: &mut R,
    churn_count: usize,
    cfg: &ScenarioConfig,
) -> (Vec<ClusterLatent>, Vec<usize>) {
    assert!(churn_count <= static_clusters.len(), "churn count exceeds cluster count");
    let mut slots = sample(rng, static_clusters.len(), churn_count).into_vec();
    slots.sort_unstable();
    let mut out = static_clusters.to_vec();
    for &slot in &slots {
        out[slot] = draw_cluster(rng, cfg);
    }
    (out, slots)
}

/// Time-domain channel of the latent geometry at carrier `carrier` and time `t`.
pub fn channel_at(latents: &[ClusterLatent], carrier: &CarrierConfig, t: f64, speed: f64) -> Result<TimeDomainChannel> {
    let clusters = latents
        .iter()
        .map(|c| Cluster {
            delay: c.delay,
            subpaths: c
                .subpaths
                .iter()
                .map(|s| Subpath { gain: gain_at(s, carrier.carrier_hz, t, speed), aod: s.aod })
                .collect(),
        })
        .collect();
    TimeDomainChannel::new(clusters, *carrier)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Static geometry shared across all sample sets of a scenario.
pub fn static_geometry(cfg: &ScenarioConfig) -> Vec<ClusterLatent> {
    let mut rng = stream_rng(cfg.seed, 0);
    (0..cfg.clusters).map(|_| draw_cluster(&mut rng, cfg)).collect()
}

fn generate_set(cfg: &ScenarioConfig, static_clusters: &[ClusterLatent], index: usize) -> Result<MsSampleSet> {
    let mut rng = stream_rng(cfg.seed, index as u64 + 1);
    let churn = rng.random_range(cfg.churn_min..=cfg.churn_max);
    let (mut latents, churned) = churn_clusters(static_clusters, &mut rng, churn, cfg);
    latents.sort_by(|a, b| a.delay.total_cmp(&b.delay));
    let snapshots = (0..cfg.snapshots_per_set)
        .map(|i| {
            let t = i as f64 * cfg.snapshot_period;
            Ok(Snapshot {
                t,
                ul: channel_at(&latents, &cfg.ul_carrier, t, cfg.ms_speed)?,
                dl: channel_at(&latents, &cfg.dl_carrier, t + cfg.processing_delay, cfg.ms_speed)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MsSampleSet { index, churned, latents, snapshots })
}

pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<Vec<MsSampleSet>> {
    cfg.validate()?;
    let static_clusters = static_geometry(cfg);
    (0..cfg.sample_sets)
        .into_par_iter()
        .map(|s| generate_set(cfg, &static_clusters, s))
        .collect()
}
