//! Fractional Gaussian noise by circulant embedding (Davies–Harte / Wood–Chan).
//!
//! The autocovariance `gamma(k) = ½(|k+1|^{2H} - 2|k|^{2H} + |k-1|^{2H})` of
//! unit-step fGn is embedded in a circulant matrix of size `2n`. One complex
//! FFT yields two independent exact fGn samples (real and imaginary parts).

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::linalg::{Cholesky, FactorizationError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CirculantError {
    #[error("circulant embedding has a negative eigenvalue {min} (relative to largest {max})")]
    NegativeEigenvalue { min: f64, max: f64 },
    #[error("hurst index {0} outside (0, 1]")]
    InvalidHurst(f64),
    #[error("need at least one increment")]
    Empty,
}

/// Autocovariance of unit-step fGn at integer lag `k`.
pub fn fgn_autocov(hurst: f64, k: usize) -> f64 {
    let p = 2.0 * hurst;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(p) - 2.0 * k.powf(p) + (k - 1.0).abs().powf(p))
}

/// Precomputed embedding for `n` unit-step fGn increments.
pub struct FgnCirculant {
    hurst: f64,
    n: usize,
    /// `sqrt(lambda_k / 2n)` for the `2n` circulant eigenvalues.
    scale: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FgnCirculant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FgnCirculant")
            .field("hurst", &self.hurst)
            .field("n", &self.n)
            .finish()
    }
}

impl FgnCirculant {
    pub fn new(hurst: f64, n: usize) -> Result<Self, CirculantError> {
        if !(hurst > 0.0 && hurst <= 1.0) {
            return Err(CirculantError::InvalidHurst(hurst));
        }
        if n == 0 {
            return Err(CirculantError::Empty);
        }
        let size = 2 * n;
        let mut row: Vec<Complex<f64>> = (0..size)
            .map(|j| {
                let lag = if j <= n { j } else { size - j };
                Complex::new(fgn_autocov(hurst, lag), 0.0)
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(size);
        fft.process(&mut row);
        let max = row.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max);
        let min = row.iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
        // Rounding leaves tiny negative eigenvalues for H near 1.
        if min < -1e-10 * max {
            return Err(CirculantError::NegativeEigenvalue { min, max });
        }
        let scale = row
            .iter()
            .map(|c| (c.re.max(0.0) / size as f64).sqrt())
            .collect();
        Ok(Self {
            hurst,
            n,
            scale,
            fft,
        })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Writes two independent unit-step fGn samples into `a` and `b`
    /// (each of length `n`). `work` is scratch space reused across calls.
    pub fn sample_pair<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        work: &mut Vec<Complex<f64>>,
        a: &mut [f64],
        b: &mut [f64],
    ) {
        work.clear();
        work.extend(self.scale.iter().map(|&s| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex::new(s * re, s * im)
        }));
        self.fft.process(work);
        for (j, w) in work[..self.n].iter().enumerate() {
            a[j] = w.re;
            b[j] = w.im;
        }
    }
}

/// fGn sampler: circulant embedding, or a Toeplitz Cholesky factor when the
/// embedding is not nonnegative definite.
#[derive(Debug)]
pub enum FgnSampler {
    Circulant(FgnCirculant),
    Cholesky(Cholesky),
}

impl FgnSampler {
    pub fn new(hurst: f64, n: usize) -> Result<Self, FgnError> {
        match FgnCirculant::new(hurst, n) {
            Ok(c) => Ok(FgnSampler::Circulant(c)),
            Err(CirculantError::NegativeEigenvalue { min, max }) => {
                eprintln!(
                    "notice: circulant embedding failed for H={hurst}, n={n} (eigenvalue {min:e} vs {max:e}); using Cholesky"
                );
                let cov: Vec<f64> = (0..n * n)
                    .map(|k| fgn_autocov(hurst, (k / n).abs_diff(k % n)))
                    .collect();
                Ok(FgnSampler::Cholesky(Cholesky::factor(&cov, n)?))
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Two independent unit-step fGn samples of length `n`.
    pub fn sample_pair<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        work: &mut Vec<Complex<f64>>,
        scratch: &mut Vec<f64>,
        a: &mut [f64],
        b: &mut [f64],
    ) {
        match self {
            FgnSampler::Circulant(c) => c.sample_pair(rng, work, a, b),
            FgnSampler::Cholesky(ch) => {
                ch.sample_into(rng, scratch, a);
                ch.sample_into(rng, scratch, b);
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FgnError {
    #[error(transparent)]
    Circulant(#[from] CirculantError),
    #[error(transparent)]
    Factorization(#[from] FactorizationError),
}

/// Cumulative sum of `incr` scaled by `step^H`, with a leading zero:
/// `out[0] = 0`, `out[j] = step^H * sum(incr[..j])`.
pub fn integrate_into(incr: &[f64], step_pow: f64, out: &mut [f64]) {
    out[0] = 0.0;
    let mut acc = 0.0;
    for (j, x) in incr.iter().enumerate() {
        acc += x;
        out[j + 1] = acc * step_pow;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamDomain};

    #[test]
    fn embedding_is_nonnegative_across_hurst() {
        for h in [0.05, 0.3, 0.5, 0.7, 0.95, 1.0] {
            assert!(FgnCirculant::new(h, 1000).is_ok(), "H = {h}");
        }
    }

    #[test]
    fn lag_one_correlation() {
        for h in [0.3, 0.7] {
            let gen = FgnCirculant::new(h, 256).unwrap();
            let mut rng = stream(11, StreamDomain::Auxiliary, 0);
            let mut work = Vec::new();
            let (mut a, mut b) = (vec![0.0; 256], vec![0.0; 256]);
            let (mut num, mut den) = (0.0, 0.0);
            for _ in 0..400 {
                gen.sample_pair(&mut rng, &mut work, &mut a, &mut b);
                for x in [&a, &b] {
                    num += x.windows(2).map(|w| w[0] * w[1]).sum::<f64>();
                    den += x.iter().map(|v| v * v).sum::<f64>();
                }
            }
            let target = 2f64.powf(2.0 * h - 1.0) - 1.0;
            assert!((num / den - target).abs() < 0.01, "H = {h}: {}", num / den);
        }
    }
}
