//! Pilot transmission over AWGN and least-squares channel estimation.
//!
//! UL: the MS sends one full-power pilot per subcarrier and the BS divides
//! it out. DL: the BS sends `J >= N_BS` pilot vectors per subcarrier with
//! its power split evenly across antennas, and the MS applies the LS
//! (pseudo-)inverse of the pilot matrix.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::OfdmChannel;
use crate::{invalid, linalg, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotKind {
    /// One active antenna per pilot symbol (UL: a single unit-modulus symbol per subcarrier).
    UnitDiag,
    /// Scaled DFT pilot matrix.
    Dft,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PilotConfig {
    /// Total transmit power of the sending side, dBm.
    pub tx_power_dbm: f64,
    /// Noise spectral density, dBm/Hz.
    pub n0_dbm_per_hz: f64,
    pub kind: PilotKind,
    /// DL pilot symbols per subcarrier (ignored for UL).
    pub symbols: usize,
}

impl PilotConfig {
    /// MS side: 30 dBm, -174 dBm/Hz.
    pub fn uplink(tx_power_dbm: f64) -> Self {
        Self { tx_power_dbm, n0_dbm_per_hz: -174.0, kind: PilotKind::UnitDiag, symbols: 1 }
    }

    /// BS side with `J = N_BS` DFT pilots.
    pub fn downlink(tx_power_dbm: f64, n_bs: usize) -> Self {
        Self { tx_power_dbm, n0_dbm_per_hz: -174.0, kind: PilotKind::Dft, symbols: n_bs }
    }

    pub fn tx_power_watt(&self) -> f64 {
        dbm_to_watt(self.tx_power_dbm)
    }
}

/// The pilot structure an observation was made with.
#[derive(Debug, Clone, PartialEq)]
pub enum Pilot {
    /// UL pilot symbol per subcarrier.
    Diagonal(Vec<Complex64>),
    /// DL pilot matrix `S` (`N_BS x J`), identical on every subcarrier.
    Matrix(Array2<Complex64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyObservation {
    /// UL: `N_BS x K` with column `k` equal to `s_k^* h_k + w_k`.
    /// DL: `J x K` with column `k` equal to `S^H h_k + w_k`.
    pub matrix: Array2<Complex64>,
    pub pilot: Pilot,
    pub carrier: crate::channel::CarrierConfig,
}

pub fn dbm_to_watt(p_dbm: f64) -> f64 {
    10f64.powf((p_dbm - 30.0) / 10.0)
}

/// Per-subcarrier noise power over a `f_s / K` bandwidth.
pub fn noise_variance(n0_dbm_per_hz: f64, bandwidth_hz: f64, subcarriers: usize) -> f64 {
    dbm_to_watt(n0_dbm_per_hz) * (bandwidth_hz / subcarriers as f64)
}

/// Circularly symmetric complex Gaussian sample with variance `var`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

fn channel_noise_variance(ch: &OfdmChannel, pilots: &PilotConfig) -> f64 {
    let c = ch.carrier();
    noise_variance(pilots.n0_dbm_per_hz, c.bandwidth_hz, c.subcarriers)
}

pub fn ul_observe<R: Rng + ?Sized>(ch: &OfdmChannel, pilots: &PilotConfig, rng: &mut R) -> NoisyObservation {
    let carrier = *ch.carrier();
    let var = channel_noise_variance(ch, pilots);
    let amp = pilots.tx_power_watt().sqrt();
    let symbols = vec![Complex64::new(amp, 0.0); carrier.subcarriers];
    let h = ch.matrix();
    let mut y = Array2::zeros(h.dim());
    for k in 0..carrier.subcarriers {
        let s = symbols[k].conj();
        for n in 0..carrier.antennas {
            y[[n, k]] = s * h[[n, k]] + complex_gaussian(rng, var);
        }
    }
    NoisyObservation { matrix: y, pilot: Pilot::Diagonal(symbols), carrier }
}

/// `H^H = S^-1 Y^H`, i.e. column `k` of the estimate is `y_k / s_k^*`.
pub fn ul_ls_estimate(obs: &NoisyObservation) -> Result<OfdmChannel> {
    let Pilot::Diagonal(symbols) = &obs.pilot else {
        return Err(invalid("UL LS estimation needs a diagonal pilot"));
    };
    if symbols.len() != obs.matrix.ncols() {
        return Err(Error::Shape(format!(
            "{} pilot symbols for {} subcarriers",
            symbols.len(),
            obs.matrix.ncols()
        )));
    }
    let mut est = obs.matrix.clone();
    for (k, s) in symbols.iter().enumerate() {
        if s.norm_sqr() == 0.0 {
            return Err(Error::Numeric(format!("zero pilot on subcarrier {k}")));
        }
        let inv = 1.0 / s.conj();
        est.column_mut(k).mapv_inplace(|z| z * inv);
    }
    OfdmChannel::new(est, obs.carrier)
}

/// DL pilot matrix `S` (`N_BS x J`) with per-entry power `P / N_BS`.
pub fn dl_pilot_matrix(n_bs: usize, pilots: &PilotConfig) -> Result<Array2<Complex64>> {
    let j = pilots.symbols;
    if j < n_bs {
        return Err(invalid(format!("DL training needs J >= N_BS, got J = {j} < {n_bs}")));
    }
    let amp = (pilots.tx_power_watt() / n_bs as f64).sqrt();
    Ok(match pilots.kind {
        PilotKind::Dft => Array2::from_shape_fn((n_bs, j), |(n, jj)| {
            Complex64::from_polar(amp, -2.0 * PI * (n * jj) as f64 / j as f64)
        }),
        PilotKind::UnitDiag => Array2::from_shape_fn((n_bs, j), |(n, jj)| {
            if jj % n_bs == n {
                Complex64::new(amp, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }),
    })
}

pub fn dl_observe<R: Rng + ?Sized>(ch_dl: &OfdmChannel, pilots: &PilotConfig, rng: &mut R) -> Result<NoisyObservation> {
    let carrier = *ch_dl.carrier();
    let s = dl_pilot_matrix(carrier.antennas, pilots)?;
    let var = channel_noise_variance(ch_dl, pilots);
    let sh = s.t().mapv(|z| z.conj());
    let mut y = sh.dot(ch_dl.matrix());
    y.mapv_inplace(|z| z + complex_gaussian(rng, var));
    Ok(NoisyObservation { matrix: y, pilot: Pilot::Matrix(s), carrier })
}

/// `h_k = (S S^H)^-1 S y_k`, which is `(S^H)^-1 y_k` when `J = N_BS`.
pub fn dl_ls_estimate(obs: &NoisyObservation) -> Result<OfdmChannel> {
    let Pilot::Matrix(s) = &obs.pilot else {
        return Err(invalid("DL LS estimation needs a pilot matrix"));
    };
    if s.ncols() != obs.matrix.nrows() {
        return Err(Error::Shape(format!("pilot has {} symbols, observation {} rows", s.ncols(), obs.matrix.nrows())));
    }
    let gram = s.dot(&s.t().mapv(|z| z.conj()));
    let sy = s.dot(&obs.matrix);
    let mut est = Array2::zeros((s.nrows(), obs.matrix.ncols()));
    for k in 0..sy.ncols() {
        let col: Array1<Complex64> = sy.column(k).to_owned();
        let h = linalg::solve(&gram, &col, 1e-12)?;
        est.column_mut(k).assign(&h);
    }
    OfdmChannel::new(est, obs.carrier)
}

pub fn dl_observe_and_estimate<R: Rng + ?Sized>(ch_dl: &OfdmChannel, pilots: &PilotConfig, rng: &mut R) -> Result<OfdmChannel> {
    dl_ls_estimate(&dl_observe(ch_dl, pilots, rng)?)
}

/// Analytic per-entry MSE of the UL LS estimate.
pub fn ul_ls_mse(pilots: &PilotConfig, bandwidth_hz: f64, subcarriers: usize) -> f64 {
    noise_variance(pilots.n0_dbm_per_hz, bandwidth_hz, subcarriers) / pilots.tx_power_watt()
}

/// Analytic per-entry MSE of the DL LS estimate, `sigma^2 tr((S S^H)^-1) / N_BS`.
pub fn dl_ls_mse(pilots: &PilotConfig, n_bs: usize, bandwidth_hz: f64, subcarriers: usize) -> Result<f64> {
    let s = dl_pilot_matrix(n_bs, pilots)?;
    let gram = s.dot(&s.t().mapv(|z| z.conj()));
    let mut trace = 0.0;
    for n in 0..n_bs {
        let mut e = Array1::zeros(n_bs);
        e[n] = Complex64::new(1.0, 0.0);
        trace += linalg::solve(&gram, &e, 1e-12)?[n].re;
    }
    Ok(noise_variance(pilots.n0_dbm_per_hz, bandwidth_hz, subcarriers) * trace / n_bs as f64)
}
