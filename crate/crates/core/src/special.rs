//! Scalar special functions: the standard normal survival function and its
//! logarithm, Euler's gamma function and a few numerically careful helpers.

use std::f64::consts::PI;

/// Beyond this point `erfc` underflows into subnormals; the log form takes
/// over.
const LOG_FORM_THRESHOLD: f64 = 38.0;
/// Above this the Mills-ratio continued fraction is used for `log_psi`.
const CONTINUED_FRACTION_FROM: f64 = 8.0;

/// Standard normal survival function `P(N(0,1) > x)`.
pub fn psi(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x > LOG_FORM_THRESHOLD {
        return log_psi(x).exp();
    }
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Natural logarithm of [`psi`], finite for every finite `x`.
pub fn log_psi(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x <= CONTINUED_FRACTION_FROM {
        return psi(x).ln();
    }
    // psi(x) = phi(x) / (x + 1/(x + 2/(x + 3/(x + ...)))), evaluated bottom-up.
    let mut tail = x;
    for k in (1..=60).rev() {
        tail = x + k as f64 / tail;
    }
    -0.5 * x * x - 0.5 * (2.0 * PI).ln() - tail.ln()
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Euler gamma function (Lanczos approximation).
pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

/// `log(sum(exp(v)))` computed without overflow. Empty input gives `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + s.ln()
}

/// Running `log(sum(exp(v)))` accumulator. Two accumulators merge exactly,
/// so partial sums computed on separate workers combine deterministically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogSumExp {
    max: f64,
    scaled: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }
}

impl LogSumExp {
    pub fn push(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v <= self.max {
            self.scaled += (v - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - v).exp() + 1.0;
            self.max = v;
        }
    }

    pub fn merge(&mut self, other: &LogSumExp) {
        if other.max == f64::NEG_INFINITY {
            return;
        }
        if self.max == f64::NEG_INFINITY {
            *self = *other;
            return;
        }
        if other.max <= self.max {
            self.scaled += other.scaled * (other.max - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - other.max).exp() + other.scaled;
            self.max = other.max;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

/// Least-squares fit of `y = intercept + slope * x`.
pub(crate) fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((my - slope * mx, slope))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_symmetry_and_center() {
        assert_eq!(psi(0.0), 0.5);
        let x = 2.3;
        assert!((psi(-x) - (1.0 - psi(x))).abs() < 1e-15);
    }

    #[test]
    fn log_psi_is_continuous_across_threshold() {
        for edge in [CONTINUED_FRACTION_FROM, LOG_FORM_THRESHOLD] {
            let below = log_psi(edge - 1e-12);
            let above = log_psi(edge + 1e-12);
            assert!((below - above).abs() / below.abs() < 1e-11);
        }
        let p = psi(LOG_FORM_THRESHOLD + 1e-9) / psi(LOG_FORM_THRESHOLD - 1e-9);
        assert!((p - 1.0).abs() < 1e-6);
        assert!(log_psi(1e6).is_finite());
    }

    #[test]
    fn gamma_known_values() {
        assert!((gamma(0.5) - PI.sqrt()).abs() < 1e-14);
        assert!((gamma(2.0) - 1.0).abs() < 1e-14);
        assert!((gamma(5.0) - 24.0).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_merge_matches_direct() {
        let v = [-1000.0, 3.0, 700.5, 12.0, -4.0];
        let mut a = LogSumExp::default();
        let mut b = LogSumExp::default();
        for x in &v[..2] {
            a.push(*x);
        }
        for x in &v[2..] {
            b.push(*x);
        }
        a.merge(&b);
        assert!((a.value() - log_sum_exp(&v)).abs() < 1e-12);
    }
}
