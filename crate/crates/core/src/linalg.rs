//! Dense Cholesky factorisation with a diagonal jitter ladder.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Jitter levels, as multiples of the matrix trace, tried in order.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

#[derive(Debug, Error, Clone, PartialEq)]
#[error("Cholesky factorisation failed at pivot {pivot} even with jitter {jitter:e} x trace")]
pub struct FactorizationError {
    pub pivot: usize,
    pub jitter: f64,
}

/// Lower-triangular factor `L` with `L L^T = C + jitter * trace * I`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    n: usize,
    /// Packed rows: row `i` holds `L[i][0..=i]` at offset `i(i+1)/2`.
    packed: Vec<f64>,
    /// Ladder entry that succeeded.
    pub jitter: f64,
}

impl Cholesky {
    /// Factorises the row-major symmetric matrix `cov` (`n x n`).
    pub fn factor(cov: &[f64], n: usize) -> Result<Self, FactorizationError> {
        assert_eq!(cov.len(), n * n, "matrix size mismatch");
        let trace: f64 = (0..n).map(|i| cov[i * n + i]).sum();
        let mut last_pivot = 0;
        for &level in &JITTER_LADDER {
            match try_factor(cov, n, level * trace) {
                Ok(packed) => {
                    return Ok(Self {
                        n,
                        packed,
                        jitter: level,
                    })
                }
                Err(p) => last_pivot = p,
            }
        }
        Err(FactorizationError {
            pivot: last_pivot,
            jitter: *JITTER_LADDER.last().unwrap_or(&0.0),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn row(&self, i: usize) -> &[f64] {
        let start = i * (i + 1) / 2;
        &self.packed[start..start + i + 1]
    }

    /// `out = L z` for a fresh standard normal vector `z`; `z` is scratch.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, z: &mut Vec<f64>, out: &mut [f64]) {
        z.clear();
        z.extend((0..self.n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            *o = self.row(i).iter().zip(z.iter()).map(|(a, b)| a * b).sum();
        }
    }
}

fn try_factor(cov: &[f64], n: usize, jitter: f64) -> Result<Vec<f64>, usize> {
    let mut packed = vec![0.0; n * (n + 1) / 2];
    for i in 0..n {
        let ri = i * (i + 1) / 2;
        for j in 0..=i {
            let rj = j * (j + 1) / 2;
            let dot: f64 = packed[ri..ri + j]
                .iter()
                .zip(&packed[rj..rj + j])
                .map(|(a, b)| a * b)
                .sum();
            let mut s = cov[i * n + j] - dot;
            if i == j {
                s += jitter;
                if !(s > 0.0) {
                    return Err(i);
                }
                packed[ri + i] = s.sqrt();
            } else {
                packed[ri + j] = s / packed[rj + j];
            }
        }
    }
    Ok(packed)
}
