//! Reconstruction accuracy and rate metrics.

use serde::{Deserialize, Serialize};

use crate::channel::OfdmChannel;
use crate::{Error, Result, SPEED_OF_LIGHT};

/// Per-pair correlation factor plus the number of subcarrier columns that
/// were skipped because either side had zero norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub value: f64,
    pub excluded_columns: usize,
}

fn check_dims(a: &OfdmChannel, b: &OfdmChannel) -> Result<()> {
    if a.matrix().dim() != b.matrix().dim() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.matrix().dim(), b.matrix().dim())));
    }
    Ok(())
}

/// Mean over subcarriers of `|h_k^H e_k| / (||h_k|| ||e_k||)`.
pub fn correlation_factor(truth: &OfdmChannel, estimate: &OfdmChannel) -> Result<Correlation> {
    check_dims(truth, estimate)?;
    let mut sum = 0.0;
    let mut used = 0usize;
    let mut excluded = 0usize;
    for (h, e) in truth.matrix().columns().into_iter().zip(estimate.matrix().columns()) {
        let nh: f64 = h.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let ne: f64 = e.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nh == 0.0 || ne == 0.0 {
            excluded += 1;
            continue;
        }
        let ip: num_complex::Complex64 = h.iter().zip(e.iter()).map(|(a, b)| a.conj() * b).sum();
        sum += (ip.norm() / (nh * ne)).min(1.0);
        used += 1;
    }
    if excluded > 0 {
        log::warn!("correlation factor skipped {excluded} zero-norm subcarrier columns");
    }
    let value = if used == 0 { 0.0 } else { sum / used as f64 };
    Ok(Correlation { value, excluded_columns: excluded })
}

/// `(1/K) sum_k log2(1 + rho |e_k^H h_k / ||e_k|||^2)` with MRT beam from `beamformer_source`.
pub fn spectral_efficiency(truth: &OfdmChannel, beamformer_source: &OfdmChannel, rho: f64) -> Result<f64> {
    check_dims(truth, beamformer_source)?;
    if !(rho > 0.0) {
        return Err(Error::InvalidArgument(format!("SNR must be positive, got {rho}")));
    }
    let k = truth.matrix().ncols();
    let mut total = 0.0;
    for (h, e) in truth.matrix().columns().into_iter().zip(beamformer_source.matrix().columns()) {
        let ne2: f64 = e.iter().map(|z| z.norm_sqr()).sum();
        if ne2 == 0.0 {
            continue;
        }
        let ip: num_complex::Complex64 = e.iter().zip(h.iter()).map(|(a, b)| a.conj() * b).sum();
        total += (1.0 + rho * ip.norm_sqr() / ne2).log2();
    }
    Ok(total / k as f64)
}

/// `c / (4 f_c v)`; infinite for a static MS.
pub fn coherence_time(f_c: f64, v: f64) -> f64 {
    if v <= 0.0 {
        f64::INFINITY
    } else {
        SPEED_OF_LIGHT / (4.0 * f_c * v)
    }
}

/// Coherence block length in symbols, `f_coh * T_coh`.
pub fn coherence_block_length(f_coh: f64, t_coh: f64) -> f64 {
    f_coh * t_coh
}

/// `max(0, 1 - overhead / block) * spec_eff`.
pub fn effective_rate(spec_eff: f64, overhead: f64, block: f64) -> f64 {
    let fraction = if block.is_infinite() { 0.0 } else { overhead / block };
    (1.0 - fraction).max(0.0) * spec_eff
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateContext {
    /// Linear SNR.
    pub snr_rho: f64,
    /// Coherence bandwidth, Hz.
    pub f_coh: f64,
    /// MS speed, m/s.
    pub speed: f64,
    /// DL carrier, Hz.
    pub f_c_dl: f64,
    /// Training symbols spent per coherence block.
    pub training_overhead: f64,
}

impl RateContext {
    pub fn block_length(&self) -> f64 {
        coherence_block_length(self.f_coh, coherence_time(self.f_c_dl, self.speed))
    }

    pub fn effective_rate(&self, spec_eff: f64) -> f64 {
        effective_rate(spec_eff, self.training_overhead, self.block_length())
    }
}

/// Sample mean with standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MeanStderr {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self { mean: f64::NAN, stderr: f64::NAN, n };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr, n }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::CarrierConfig;
    use ndarray::Array2;
    use num_complex::Complex64;

    fn ch(m: Array2<Complex64>) -> OfdmChannel {
        let (n, k) = m.dim();
        OfdmChannel::new(m, CarrierConfig::new(2.9e9, 100e6, k, n).unwrap()).unwrap()
    }

    fn sample_matrix() -> Array2<Complex64> {
        Array2::from_shape_fn((3, 4), |(n, k)| Complex64::new(1.0 + n as f64, k as f64 - 1.5))
    }

    #[test]
    fn correlation_identity_and_scale_invariance() {
        let h = ch(sample_matrix());
        assert!((correlation_factor(&h, &h).unwrap().value - 1.0).abs() < 1e-12);
        let scaled = ch(sample_matrix().mapv(|z| z * Complex64::from_polar(2.5, 0.7)));
        assert!((correlation_factor(&h, &scaled).unwrap().value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_estimate_has_zero_correlation() {
        let mut a = Array2::zeros((2, 3));
        let mut b = Array2::zeros((2, 3));
        for k in 0..3 {
            a[[0, k]] = Complex64::new(1.0, 0.0);
            b[[1, k]] = Complex64::new(0.0, 2.0);
        }
        assert_eq!(correlation_factor(&ch(a), &ch(b)).unwrap().value, 0.0);
    }

    #[test]
    fn zero_columns_are_excluded() {
        let mut e = sample_matrix();
        e.column_mut(2).fill(Complex64::new(0.0, 0.0));
        let c = correlation_factor(&ch(sample_matrix()), &ch(e)).unwrap();
        assert_eq!(c.excluded_columns, 1);
        assert!((c.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_csi_spectral_efficiency() {
        // Unit-modulus entries: ||h_k||^2 = N_BS.
        let h = ch(Array2::from_shape_fn((4, 8), |(n, k)| Complex64::from_polar(1.0, (n * k) as f64)));
        let se = spectral_efficiency(&h, &h, 1.0).unwrap();
        assert!((se - 5f64.log2()).abs() < 1e-12);
        assert!(spectral_efficiency(&h, &h, 1e-12).unwrap() < 1e-9);
    }

    #[test]
    fn orthogonal_beam_gives_zero_rate() {
        let mut a = Array2::zeros((2, 3));
        let mut b = Array2::zeros((2, 3));
        for k in 0..3 {
            a[[0, k]] = Complex64::new(1.0, 0.0);
            b[[1, k]] = Complex64::new(1.0, 0.0);
        }
        assert_eq!(spectral_efficiency(&ch(a), &ch(b), 10.0).unwrap(), 0.0);
    }

    #[test]
    fn coherence_values() {
        let t = coherence_time(2.9e9, 27.778);
        assert!((t - 9.30e-4).abs() < 0.01e-4, "{t}");
        let t10 = coherence_time(2.9e9, 2.7778);
        assert!((t10 - 9.30e-3).abs() < 0.01e-3);
        assert!((coherence_time(2.9e9, 20.0) * 2.0 - coherence_time(2.9e9, 10.0)).abs() < 1e-15);
        assert!(coherence_time(2.9e9, 0.0).is_infinite());
        assert!((coherence_block_length(180e3, 9.30e-3) - 1674.0).abs() < 1.0);
        assert!((coherence_block_length(180e3, 9.30e-4) - 167.4).abs() < 0.1);
    }

    #[test]
    fn effective_rate_cases() {
        assert_eq!(effective_rate(4.0, 0.0, 167.5), 4.0);
        assert_eq!(effective_rate(4.0, 167.5, 167.5), 0.0);
        assert_eq!(effective_rate(4.0, 500.0, 167.5), 0.0);
        assert!((effective_rate(4.0, 8.0, 167.5) - 3.809).abs() < 1e-3);
        assert_eq!(effective_rate(4.0, 8.0, f64::INFINITY), 4.0);
    }

    #[test]
    fn mean_stderr() {
        let m = MeanStderr::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.stderr - (1.666_666_666_666_666_7f64 / 4.0).sqrt()).abs() < 1e-12);
        assert_eq!(MeanStderr::from_samples(&[3.0]).stderr, 0.0);
    }
}
