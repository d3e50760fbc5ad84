//! Greedy path-parameter extraction.
//!
//! [`extract_subpaths`] runs matching pursuit over an angle grid on one
//! cluster coefficient: pick the steering vector with the largest
//! correlation, read off its gain, and remove its contribution. That is the
//! whole recovery step when the BS can observe per-cluster coefficients
//! directly ([`tpg_extract`]).
//!
//! [`extract_clusters`] works from an OFDM matrix alone: each iteration picks
//! the delay whose basis correlates most with the residual, projects the
//! residual onto it to obtain a cluster coefficient, approximates that
//! coefficient with [`extract_subpaths`] and subtracts the approximation.
//!
//! Argmax ties resolve to the lowest grid index.

use std::f64::consts::{FRAC_PI_2, PI};

use ndarray::{Array1, Array2, ArrayView1};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{add_outer, array_response, delay_basis, CarrierConfig, OfdmChannel};
use crate::linalg::{inner, norm_sqr, solve};
use crate::record::complex_vec;
use crate::{invalid, Error, Result};

/// Ridge added to the steering Gram matrix when it is numerically singular.
pub const DL_TARGET_RIDGE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct AngleGrid {
    points: Vec<f64>,
}

impl AngleGrid {
    /// `resolution` points uniformly spaced over `[-pi/2, pi/2)`.
    pub fn uniform(resolution: usize) -> Result<Self> {
        if resolution == 0 {
            return Err(invalid("angle grid needs at least one point"));
        }
        let step = PI / resolution as f64;
        Ok(Self { points: (0..resolution).map(|i| -FRAC_PI_2 + step * i as f64).collect() })
    }

    /// Four points per antenna.
    pub fn for_antennas(n_bs: usize) -> Self {
        Self::uniform(4 * n_bs.max(1)).expect("nonzero resolution")
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayGrid {
    points: Vec<f64>,
}

impl DelayGrid {
    /// `resolution` points uniformly spaced over `[0, K / f_s)`.
    pub fn uniform(resolution: usize, carrier: &CarrierConfig) -> Result<Self> {
        if resolution == 0 {
            return Err(invalid("delay grid needs at least one point"));
        }
        let step = carrier.delay_window() / resolution as f64;
        Ok(Self { points: (0..resolution).map(|i| step * i as f64).collect() })
    }

    /// Four points per subcarrier.
    pub fn for_carrier(carrier: &CarrierConfig) -> Self {
        Self::uniform(4 * carrier.subcarriers, carrier).expect("nonzero resolution")
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Steering vectors of an angle grid for a fixed array size.
struct SteeringDictionary<'a> {
    grid: &'a AngleGrid,
    atoms: Vec<Array1<Complex64>>,
}

impl<'a> SteeringDictionary<'a> {
    fn new(grid: &'a AngleGrid, n_bs: usize) -> Self {
        Self { grid, atoms: grid.points.iter().map(|&t| array_response(t, n_bs)).collect() }
    }

    /// Index maximising `|a^H h|^2`.
    fn best(&self, h: ArrayView1<Complex64>) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, a) in self.atoms.iter().enumerate() {
            let score = inner(a.view(), h).norm_sqr();
            if score > best.1 {
                best = (i, score);
            }
        }
        best.0
    }
}

/// AoDs and gains of one cluster, in extraction order.
#[derive(Debug, Clone, PartialEq)]
pub struct SubpathExtraction {
    pub aods: Vec<f64>,
    pub gains: Vec<Complex64>,
    /// Residual norm before the first and after every step (`P + 1` entries).
    pub residual_norms: Vec<f64>,
    pub residual: Array1<Complex64>,
}

fn run_subpaths(coeff: ArrayView1<Complex64>, dict: &SteeringDictionary, p: usize) -> SubpathExtraction {
    let mut h = coeff.to_owned();
    let mut aods = Vec::with_capacity(p);
    let mut gains = Vec::with_capacity(p);
    let mut residual_norms = vec![norm_sqr(h.view()).sqrt()];
    for _ in 0..p {
        let idx = dict.best(h.view());
        let a = &dict.atoms[idx];
        let gain = inner(a.view(), h.view()) / norm_sqr(a.view());
        h.scaled_add(-gain, a);
        aods.push(dict.grid.points[idx]);
        gains.push(gain);
        residual_norms.push(norm_sqr(h.view()).sqrt());
    }
    SubpathExtraction { aods, gains, residual_norms, residual: h }
}

fn check_subpath_count(p: usize, grid: &AngleGrid) -> Result<()> {
    if p == 0 {
        return Err(invalid("subpath count P must be at least 1"));
    }
    if p > grid.len() {
        return Err(invalid(format!("P = {p} exceeds angle grid resolution {}", grid.len())));
    }
    Ok(())
}

/// Matching pursuit of `p` steering vectors on one cluster coefficient.
pub fn extract_subpaths(coeff: ArrayView1<Complex64>, grid: &AngleGrid, p: usize) -> Result<SubpathExtraction> {
    check_subpath_count(p, grid)?;
    let dict = SteeringDictionary::new(grid, coeff.len());
    Ok(run_subpaths(coeff, &dict, p))
}

/// `(I - d d^H / ||d||^2) v`.
pub fn nullspace_project(vec: ArrayView1<Complex64>, dir: ArrayView1<Complex64>) -> Result<Array1<Complex64>> {
    if vec.len() != dir.len() {
        return Err(Error::Shape(format!("vector length {} vs direction length {}", vec.len(), dir.len())));
    }
    let d2 = norm_sqr(dir);
    if d2 == 0.0 {
        return Err(invalid("projection direction must be nonzero"));
    }
    let coef = inner(dir, vec) / d2;
    let mut out = vec.to_owned();
    out.scaled_add(-coef, &dir);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterEstimate {
    pub delay: f64,
    pub aods: Vec<f64>,
    #[serde(with = "complex_vec")]
    pub gains: Vec<Complex64>,
    /// `sum_p gain_p a(aod_p)`.
    #[serde(with = "complex_vec")]
    pub coefficient: Vec<Complex64>,
    /// Subpath-level residual norms (`P + 1` entries).
    pub residual_norms: Vec<f64>,
}

impl ClusterEstimate {
    /// Energy captured by the kept subpaths, `||sum_p gain_p a(aod_p)||^2`.
    pub fn captured_energy(&self, n_bs: usize) -> f64 {
        let mut h = Array1::<Complex64>::zeros(n_bs);
        for (&t, &g) in self.aods.iter().zip(&self.gains) {
            h.scaled_add(g, &array_response(t, n_bs));
        }
        norm_sqr(h.view())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub clusters: Vec<ClusterEstimate>,
    /// Frobenius norm of the OFDM residual before the first and after every
    /// cluster step. Empty for per-cluster (time-domain) extraction.
    pub residual_norms: Vec<f64>,
}

impl ExtractionResult {
    pub fn delays(&self) -> Vec<f64> {
        self.clusters.iter().map(|c| c.delay).collect()
    }

    pub fn aods(&self) -> Vec<Vec<f64>> {
        self.clusters.iter().map(|c| c.aods.clone()).collect()
    }

    pub fn gains(&self) -> Vec<Vec<Complex64>> {
        self.clusters.iter().map(|c| c.gains.clone()).collect()
    }

    pub fn min_subpaths(&self) -> usize {
        self.clusters.iter().map(|c| c.gains.len()).min().unwrap_or(0)
    }
}

fn estimate_from(delay: f64, ext: SubpathExtraction, n_bs: usize) -> ClusterEstimate {
    let mut coefficient = Array1::<Complex64>::zeros(n_bs);
    for (&t, &g) in ext.aods.iter().zip(&ext.gains) {
        coefficient.scaled_add(g, &array_response(t, n_bs));
    }
    ClusterEstimate {
        delay,
        aods: ext.aods,
        gains: ext.gains,
        coefficient: coefficient.to_vec(),
        residual_norms: ext.residual_norms,
    }
}

/// Per-cluster extraction from known delays and (noisy) cluster coefficients.
pub fn tpg_extract(delays: &[f64], coeffs: &[Array1<Complex64>], grid: &AngleGrid, p: usize) -> Result<ExtractionResult> {
    if delays.len() != coeffs.len() {
        return Err(invalid(format!("{} delays for {} coefficients", delays.len(), coeffs.len())));
    }
    check_subpath_count(p, grid)?;
    let n_bs = coeffs.first().map_or(0, |c| c.len());
    if coeffs.iter().any(|c| c.len() != n_bs) {
        return Err(Error::Shape("cluster coefficients have different lengths".into()));
    }
    let dict = SteeringDictionary::new(grid, n_bs);
    let clusters = delays
        .iter()
        .zip(coeffs)
        .map(|(&d, c)| estimate_from(d, run_subpaths(c.view(), &dict, p), n_bs))
        .collect();
    Ok(ExtractionResult { clusters, residual_norms: Vec::new() })
}

/// `H p^*(tau)` for every column combination.
fn project_on_delay(h: &Array2<Complex64>, basis: &Array1<Complex64>) -> Array1<Complex64> {
    let mut out = Array1::zeros(h.nrows());
    for (n, row) in h.rows().into_iter().enumerate() {
        out[n] = row.iter().zip(basis.iter()).map(|(x, p)| x * p.conj()).sum();
    }
    out
}

/// Delay-then-angle greedy extraction of `l` clusters with `p` subpaths each.
pub fn extract_clusters(
    ofdm: &OfdmChannel,
    delay_grid: &DelayGrid,
    angle_grid: &AngleGrid,
    l: usize,
    p: usize,
) -> Result<ExtractionResult> {
    if l == 0 {
        return Err(invalid("cluster count L must be at least 1"));
    }
    if l > delay_grid.len() {
        return Err(invalid(format!("L = {l} exceeds delay grid resolution {}", delay_grid.len())));
    }
    check_subpath_count(p, angle_grid)?;
    let carrier = ofdm.carrier();
    let n_bs = carrier.antennas;
    let bases: Vec<Array1<Complex64>> = delay_grid.points.iter().map(|&t| delay_basis(t, carrier)).collect();
    let dict = SteeringDictionary::new(angle_grid, n_bs);
    let mut residual = ofdm.matrix().clone();
    let frob = |m: &Array2<Complex64>| m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut residual_norms = vec![frob(&residual)];
    let mut clusters = Vec::with_capacity(l);
    for _ in 0..l {
        let mut best = (0, f64::NEG_INFINITY, Array1::zeros(n_bs));
        for (i, b) in bases.iter().enumerate() {
            let proj = project_on_delay(&residual, b);
            let score = norm_sqr(proj.view());
            if score > best.1 {
                best = (i, score, proj);
            }
        }
        let (idx, _, proj) = best;
        let basis = &bases[idx];
        let coeff = proj / Complex64::new(norm_sqr(basis.view()), 0.0);
        let est = estimate_from(delay_grid.points[idx], run_subpaths(coeff.view(), &dict, p), n_bs);
        add_outer(&mut residual, &Array1::from(est.coefficient.clone()), basis, -1.0);
        residual_norms.push(frob(&residual));
        clusters.push(est);
    }
    Ok(ExtractionResult { clusters, residual_norms })
}

/// Keeps the first `q` extracted subpaths of every cluster.
pub fn select_top_q(result: &ExtractionResult, q: usize) -> Result<ExtractionResult> {
    if q == 0 {
        return Err(invalid("Q must be at least 1"));
    }
    let p = result.min_subpaths();
    if q > p {
        return Err(invalid(format!("Q = {q} exceeds the {p} extracted subpaths")));
    }
    let clusters = result
        .clusters
        .iter()
        .map(|c| {
            let n_bs = c.coefficient.len();
            let mut est = ClusterEstimate {
                delay: c.delay,
                aods: c.aods[..q].to_vec(),
                gains: c.gains[..q].to_vec(),
                coefficient: Vec::new(),
                residual_norms: c.residual_norms[..=q].to_vec(),
            };
            let mut h = Array1::<Complex64>::zeros(n_bs);
            for (&t, &g) in est.aods.iter().zip(&est.gains) {
                h.scaled_add(g, &array_response(t, n_bs));
            }
            est.coefficient = h.to_vec();
            est
        })
        .collect();
    Ok(ExtractionResult { clusters, residual_norms: result.residual_norms.clone() })
}

/// DL gains aligned with UL-extracted subpaths.
#[derive(Debug, Clone, PartialEq)]
pub struct DlTargets {
    /// Per cluster, `Q` gains index-aligned with the UL extraction order.
    pub gains: Vec<Vec<Complex64>>,
    /// True when at least one cluster's steering basis needed the ridge.
    pub regularized: bool,
}

/// Least-squares DL gains on the fixed UL basis `{a(aod_{l,p})}` at the
/// UL-extracted delays.
pub fn extract_dl_targets(dl_ofdm: &OfdmChannel, ul_result: &ExtractionResult, q: usize) -> Result<DlTargets> {
    if q == 0 {
        return Err(invalid("Q must be at least 1"));
    }
    if ul_result.min_subpaths() < q {
        return Err(invalid(format!("UL extraction has fewer than Q = {q} subpaths in some cluster")));
    }
    let carrier = dl_ofdm.carrier();
    let n_bs = carrier.antennas;
    let mut regularized = false;
    let mut gains = Vec::with_capacity(ul_result.clusters.len());
    for c in &ul_result.clusters {
        let basis = delay_basis(c.delay, carrier);
        let hbar = project_on_delay(dl_ofdm.matrix(), &basis) / Complex64::new(carrier.subcarriers as f64, 0.0);
        let atoms: Vec<Array1<Complex64>> = c.aods[..q].iter().map(|&t| array_response(t, n_bs)).collect();
        let gram = Array2::from_shape_fn((q, q), |(i, j)| inner(atoms[i].view(), atoms[j].view()));
        let rhs = Array1::from_shape_fn(q, |i| inner(atoms[i].view(), hbar.view()));
        let g = match solve(&gram, &rhs, 1e-10) {
            Ok(g) => g,
            Err(_) => {
                regularized = true;
                let mut ridge = gram.clone();
                for i in 0..q {
                    ridge[[i, i]] += DL_TARGET_RIDGE;
                }
                solve(&ridge, &rhs, 0.0)?
            }
        };
        gains.push(g.to_vec());
    }
    if regularized {
        log::warn!("DL target fit used ridge regularisation for a rank-deficient steering basis");
    }
    Ok(DlTargets { gains, regularized })
}
