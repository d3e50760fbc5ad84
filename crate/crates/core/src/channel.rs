//! Clustered multipath channels and their OFDM representation.
//!
//! A time-domain channel is a sum of `L` clusters; every subpath of a cluster
//! shares the cluster delay and contributes `gain * a(aod)`. Subcarrier `k`
//! (`k = 1..=K`) of the OFDM channel is
//!
//! ```text
//! h_k = sum_l coeff_l * exp(-j 2 pi f_s tau_l k / K)
//! ```
//!
//! so the whole `N_BS x K` matrix is `sum_l coeff_l p(tau_l)^T`.

use std::cmp::Ordering;
use std::f64::consts::{FRAC_PI_2, PI};

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{invalid, Error, Result};

/// Carrier frequency, total bandwidth, subcarrier count and BS antenna count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarrierConfig {
    /// Carrier frequency in Hz.
    pub carrier_hz: f64,
    /// Total bandwidth in Hz.
    pub bandwidth_hz: f64,
    pub subcarriers: usize,
    pub antennas: usize,
}

impl CarrierConfig {
    pub fn new(carrier_hz: f64, bandwidth_hz: f64, subcarriers: usize, antennas: usize) -> Result<Self> {
        let cfg = Self { carrier_hz, bandwidth_hz, subcarriers, antennas };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_hz.is_finite() && self.carrier_hz > 0.0) {
            return Err(invalid(format!("carrier frequency must be positive, got {}", self.carrier_hz)));
        }
        if !(self.bandwidth_hz.is_finite() && self.bandwidth_hz > 0.0) {
            return Err(invalid(format!("bandwidth must be positive, got {}", self.bandwidth_hz)));
        }
        if self.subcarriers == 0 {
            return Err(invalid("subcarrier count must be at least 1"));
        }
        if self.antennas == 0 {
            return Err(invalid("antenna count must be at least 1"));
        }
        Ok(())
    }

    /// Largest unambiguous delay `K / f_s` in seconds.
    pub fn delay_window(&self) -> f64 {
        self.subcarriers as f64 / self.bandwidth_hz
    }

    /// Same geometry parameters on a different carrier.
    pub fn with_carrier(&self, carrier_hz: f64) -> Self {
        Self { carrier_hz, ..*self }
    }

    pub fn with_antennas(&self, antennas: usize) -> Self {
        Self { antennas, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Subpath {
    pub gain: Complex64,
    /// Angle of departure in radians, `[-pi/2, pi/2)`.
    pub aod: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Delay in seconds.
    pub delay: f64,
    pub subpaths: Vec<Subpath>,
}

impl Cluster {
    /// Sum of squared subpath gain magnitudes.
    pub fn power(&self) -> f64 {
        self.subpaths.iter().map(|s| s.gain.norm_sqr()).sum()
    }
}

/// Canonical cluster order: increasing delay, ties broken by descending power.
pub(crate) fn canonical_order(a: &Cluster, b: &Cluster) -> Ordering {
    a.delay
        .total_cmp(&b.delay)
        .then_with(|| b.power().total_cmp(&a.power()))
}

pub(crate) fn aod_in_field_of_view(aod: f64) -> bool {
    (-FRAC_PI_2..FRAC_PI_2).contains(&aod)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeDomainChannel {
    clusters: Vec<Cluster>,
    carrier: CarrierConfig,
}

impl TimeDomainChannel {
    /// Validates every cluster and stores them in canonical order.
    pub fn new(mut clusters: Vec<Cluster>, carrier: CarrierConfig) -> Result<Self> {
        carrier.validate()?;
        if clusters.is_empty() {
            return Err(invalid("a channel needs at least one cluster"));
        }
        let window = carrier.delay_window();
        for (i, c) in clusters.iter().enumerate() {
            if !(c.delay >= 0.0 && c.delay < window) {
                return Err(invalid(format!(
                    "cluster {i} delay {} s outside [0, {window}) s",
                    c.delay
                )));
            }
            if c.subpaths.is_empty() {
                return Err(invalid(format!("cluster {i} has no subpaths")));
            }
            for s in &c.subpaths {
                if !aod_in_field_of_view(s.aod) {
                    return Err(invalid(format!("cluster {i} aod {} outside [-pi/2, pi/2)", s.aod)));
                }
                if !(s.gain.re.is_finite() && s.gain.im.is_finite()) {
                    return Err(Error::Numeric(format!("cluster {i} has a non-finite gain")));
                }
            }
        }
        clusters.sort_by(canonical_order);
        Ok(Self { clusters, carrier })
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn carrier(&self) -> &CarrierConfig {
        &self.carrier
    }

    /// Union of the two cluster lists on `self`'s carrier.
    pub fn merged(&self, other: &TimeDomainChannel) -> Result<Self> {
        let mut all = self.clusters.clone();
        all.extend(other.clusters.iter().cloned());
        Self::new(all, self.carrier)
    }

    /// Keeps only the first `r` subpaths of every cluster.
    pub fn truncated(&self, r: usize) -> Result<Self> {
        if r == 0 {
            return Err(invalid("subpath count R must be at least 1"));
        }
        let clusters = self
            .clusters
            .iter()
            .map(|c| Cluster {
                delay: c.delay,
                subpaths: c.subpaths.iter().take(r).copied().collect(),
            })
            .collect();
        Self::new(clusters, self.carrier)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfdmChannel {
    matrix: Array2<Complex64>,
    carrier: CarrierConfig,
}

impl OfdmChannel {
    pub fn new(matrix: Array2<Complex64>, carrier: CarrierConfig) -> Result<Self> {
        carrier.validate()?;
        let (rows, cols) = matrix.dim();
        if rows != carrier.antennas || cols != carrier.subcarriers {
            return Err(Error::Shape(format!(
                "OFDM matrix is {rows}x{cols}, carrier expects {}x{}",
                carrier.antennas, carrier.subcarriers
            )));
        }
        if matrix.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Numeric("OFDM matrix has non-finite entries".into()));
        }
        Ok(Self { matrix, carrier })
    }

    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.matrix
    }

    pub fn carrier(&self) -> &CarrierConfig {
        &self.carrier
    }

    pub fn into_matrix(self) -> Array2<Complex64> {
        self.matrix
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Uniform linear array response `exp(j pi n sin(aod))`, `n = 0..n_bs`.
pub fn array_response(aod: f64, n_bs: usize) -> Array1<Complex64> {
    let phase = PI * aod.sin();
    Array1::from_shape_fn(n_bs, |n| Complex64::from_polar(1.0, phase * n as f64))
}

/// Delay basis `p(tau)` with element `k` (1-based) `exp(-j 2 pi f_s tau k / K)`.
pub fn delay_basis(tau: f64, carrier: &CarrierConfig) -> Array1<Complex64> {
    let k_total = carrier.subcarriers as f64;
    let step = -2.0 * PI * carrier.bandwidth_hz * tau / k_total;
    Array1::from_shape_fn(carrier.subcarriers, |i| Complex64::from_polar(1.0, step * (i + 1) as f64))
}

/// Gain-weighted sum of the cluster's subpath array responses.
pub fn cluster_coefficient(cluster: &Cluster, n_bs: usize) -> Array1<Complex64> {
    let mut coeff = Array1::zeros(n_bs);
    for s in &cluster.subpaths {
        coeff.scaled_add(s.gain, &array_response(s.aod, n_bs));
    }
    coeff
}

/// Accumulates `coeff * basis^T` into `target`.
pub(crate) fn add_outer(target: &mut Array2<Complex64>, coeff: &Array1<Complex64>, basis: &Array1<Complex64>, sign: f64) {
    for (n, &c) in coeff.iter().enumerate() {
        let c = c * sign;
        for (k, &b) in basis.iter().enumerate() {
            target[[n, k]] += c * b;
        }
    }
}

pub fn ofdm_from_time(ch: &TimeDomainChannel) -> OfdmChannel {
    let carrier = *ch.carrier();
    let mut matrix = Array2::zeros((carrier.antennas, carrier.subcarriers));
    for cluster in ch.clusters() {
        let coeff = cluster_coefficient(cluster, carrier.antennas);
        let basis = delay_basis(cluster.delay, &carrier);
        add_outer(&mut matrix, &coeff, &basis, 1.0);
    }
    OfdmChannel { matrix, carrier }
}

/// Rebuilds a DL OFDM channel from per-cluster delays, AoDs and gains,
/// using only the first `r` subpaths of each cluster.
pub fn reconstruct_dl(
    delays: &[f64],
    aods: &[Vec<f64>],
    gains: &[Vec<Complex64>],
    r: usize,
    carrier_dl: &CarrierConfig,
) -> Result<OfdmChannel> {
    if r == 0 {
        return Err(invalid("subpath count R must be at least 1"));
    }
    if delays.len() != aods.len() || delays.len() != gains.len() {
        return Err(invalid(format!(
            "per-cluster lists disagree: {} delays, {} aod lists, {} gain lists",
            delays.len(),
            aods.len(),
            gains.len()
        )));
    }
    let mut clusters = Vec::with_capacity(delays.len());
    for (l, ((&delay, th), g)) in delays.iter().zip(aods).zip(gains).enumerate() {
        if th.len() != g.len() {
            return Err(invalid(format!("cluster {l}: {} aods but {} gains", th.len(), g.len())));
        }
        if r > g.len() {
            return Err(invalid(format!("cluster {l}: R = {r} exceeds {} available subpaths", g.len())));
        }
        let subpaths = th.iter().zip(g).take(r).map(|(&aod, &gain)| Subpath { gain, aod }).collect();
        clusters.push(Cluster { delay, subpaths });
    }
    let ch = TimeDomainChannel::new(clusters, *carrier_dl)?;
    Ok(ofdm_from_time(&ch))
}
