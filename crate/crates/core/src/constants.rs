//! Pickands constants `H_{α/2}` and Piterbarg constants `P_α^R`.
//!
//! Known values come from an exact table. Everything else is estimated by
//! Monte Carlo from the defining limits
//!
//! ```text
//! H_{α/2} = lim_{S→∞} S^{-1} E exp(sup_{[0,S]} (√2 B_{α/2}(t) - t^α))
//! P_α^R   = lim_{S→∞}        E exp(sup_{[0,S]} (√2 B_{α/2}(t) - (1+R) t^α))
//! ```
//!
//! Both estimators sample the path under the exponentially tilted law that
//! weights grid node `J` by `E exp(V_J)`, which turns `exp(max V)` into the
//! bounded quantity `Z · exp(max V - logsumexp V)`.

use std::collections::HashMap;
use std::fmt;
use std::sync::Mutex;

use rand::Rng;
use thiserror::Error;

use crate::circulant::{integrate_into, FgnError, FgnSampler};
use crate::rng::{run_blocks, stream, StreamDomain};
use crate::special::log_sum_exp;

const EXACT_TOL: f64 = 1e-12;
/// Groups used for the delete-a-group jackknife.
const JACKKNIFE_GROUPS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConstantKind {
    Pickands { alpha: f64 },
    Piterbarg { alpha: f64, r: f64 },
}

impl ConstantKind {
    pub fn name(&self) -> &'static str {
        match self {
            ConstantKind::Pickands { .. } => "pickands",
            ConstantKind::Piterbarg { .. } => "piterbarg",
        }
    }

    pub fn alpha(&self) -> f64 {
        match *self {
            ConstantKind::Pickands { alpha } | ConstantKind::Piterbarg { alpha, .. } => alpha,
        }
    }

    pub fn r(&self) -> Option<f64> {
        match *self {
            ConstantKind::Piterbarg { r, .. } => Some(r),
            ConstantKind::Pickands { .. } => None,
        }
    }
}

impl fmt::Display for ConstantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ConstantKind::Pickands { alpha } => write!(f, "H_{{{}}}", alpha / 2.0),
            ConstantKind::Piterbarg { alpha, r } => write!(f, "P_{alpha}^{r}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Provenance {
    Exact,
    McEstimate { stderr: f64 },
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Exact => write!(f, "EXACT_TABLE"),
            Provenance::McEstimate { stderr } => write!(f, "MC_ESTIMATE({stderr:.3e})"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstantsError {
    #[error("no exact value for {0} and Monte-Carlo fallback is disabled")]
    MissingExact(ConstantKind),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{kind} did not reach a plateau by horizon {horizon} (last change {change:.3e}, stderr {stderr:.3e})")]
    NonConvergence {
        kind: ConstantKind,
        horizon: f64,
        change: f64,
        stderr: f64,
    },
    #[error(transparent)]
    Sampler(#[from] FgnError),
}

/// Monte-Carlo settings for constant estimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McBudget {
    /// Horizon `S` (Pickands) or starting horizon of the plateau search
    /// (Piterbarg).
    pub horizon: f64,
    /// Grid points per unit time.
    pub grid_per_unit: usize,
    pub reps: u64,
    pub seed: u64,
    pub workers: usize,
    /// Horizon doublings allowed in the Piterbarg plateau search.
    pub max_doublings: u32,
}

impl Default for McBudget {
    fn default() -> Self {
        Self {
            horizon: 40.0,
            grid_per_unit: 128,
            reps: 20_000,
            seed: 20_240_917,
            workers: 1,
            max_doublings: 3,
        }
    }
}

impl McBudget {
    /// The first out-of-range field and a message, if any.
    pub fn problem(&self) -> Option<(&'static str, String)> {
        if !(self.horizon >= 10.0) {
            return Some(("horizon", format!("horizon S = {} must be at least 10", self.horizon)));
        }
        if self.grid_per_unit < 64 {
            return Some(("grid_per_unit", format!("grid m = {} must be at least 64", self.grid_per_unit)));
        }
        if self.reps < 1000 {
            return Some(("reps", format!("reps = {} must be at least 1000", self.reps)));
        }
        None
    }

    pub fn settings(&self) -> String {
        format!(
            "S={};m={};reps={};seed={}",
            self.horizon, self.grid_per_unit, self.reps, self.seed
        )
    }
}

/// A constant estimated by Monte Carlo.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantEstimate {
    pub kind: ConstantKind,
    pub value: f64,
    pub stderr: f64,
    pub reps: u64,
    /// Horizon of the returned value.
    pub horizon: f64,
    pub grid_per_unit: usize,
    pub seed: u64,
    /// `(horizon, raw estimate, stderr)` for each horizon evaluated.
    pub levels: Vec<(f64, f64, f64)>,
}

impl ConstantEstimate {
    pub fn ci95(&self) -> (f64, f64) {
        (self.value - 1.96 * self.stderr, self.value + 1.96 * self.stderr)
    }
}

/// A constant together with where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantValue {
    pub kind: ConstantKind,
    pub value: f64,
    pub provenance: Provenance,
    pub settings: Option<String>,
}

impl ConstantValue {
    /// `kind,alpha,R,value,stderr,provenance,settings`
    pub fn csv_record(&self) -> Vec<String> {
        let stderr = match self.provenance {
            Provenance::Exact => 0.0,
            Provenance::McEstimate { stderr } => stderr,
        };
        vec![
            self.kind.name().to_string(),
            format!("{}", self.kind.alpha()),
            self.kind.r().map(|r| format!("{r}")).unwrap_or_default(),
            format!("{:.12e}", self.value),
            format!("{stderr:.6e}"),
            match self.provenance {
                Provenance::Exact => "EXACT".into(),
                Provenance::McEstimate { .. } => "MC_ESTIMATE".into(),
            },
            self.settings.clone().unwrap_or_default(),
        ]
    }
}

pub const CSV_HEADER: [&str; 7] = ["kind", "alpha", "R", "value", "stderr", "provenance", "settings"];

/// Exact table: `H_1 = 1/√π` (α = 2), `H_{1/2} = 1` (α = 1) and
/// `P_1^R = 1 + 1/R`.
pub fn exact_constant(kind: ConstantKind) -> Option<f64> {
    let near = |a: f64, b: f64| (a - b).abs() <= EXACT_TOL;
    match kind {
        ConstantKind::Pickands { alpha } if near(alpha, 2.0) => {
            Some(1.0 / std::f64::consts::PI.sqrt())
        }
        ConstantKind::Pickands { alpha } if near(alpha, 1.0) => Some(1.0),
        ConstantKind::Piterbarg { alpha, r } if near(alpha, 1.0) && r > 0.0 => Some(1.0 + 1.0 / r),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProviderMode {
    ExactOnly,
    McFallback(McBudget),
}

/// Source of constants for the asymptotic engine, with a cache of
/// Monte-Carlo estimates keyed by `(kind, α, R, grid)`.
#[derive(Debug)]
pub struct ConstantsProvider {
    mode: ProviderMode,
    cache: Mutex<HashMap<(u8, u64, u64, usize), ConstantValue>>,
}

impl ConstantsProvider {
    pub fn new(mode: ProviderMode) -> Self {
        Self {
            mode,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn exact_only() -> Self {
        Self::new(ProviderMode::ExactOnly)
    }

    pub fn mode(&self) -> ProviderMode {
        self.mode
    }

    pub fn get_constant(&self, kind: ConstantKind) -> Result<ConstantValue, ConstantsError> {
        if let Some(value) = exact_constant(kind) {
            return Ok(ConstantValue {
                kind,
                value,
                provenance: Provenance::Exact,
                settings: None,
            });
        }
        let budget = match self.mode {
            ProviderMode::ExactOnly => return Err(ConstantsError::MissingExact(kind)),
            ProviderMode::McFallback(b) => b,
        };
        let key = match kind {
            ConstantKind::Pickands { alpha } => (0, alpha.to_bits(), 0, budget.grid_per_unit),
            ConstantKind::Piterbarg { alpha, r } => {
                (1, alpha.to_bits(), r.to_bits(), budget.grid_per_unit)
            }
        };
        if let Some(hit) = self.cache.lock().ok().and_then(|c| c.get(&key).cloned()) {
            return Ok(hit);
        }
        let est = match kind {
            ConstantKind::Pickands { alpha } => pickands_estimate(alpha, &budget)?,
            ConstantKind::Piterbarg { alpha, r } => piterbarg_estimate(alpha, r, &budget)?,
        };
        let value = ConstantValue {
            kind,
            value: est.value,
            provenance: Provenance::McEstimate { stderr: est.stderr },
            settings: Some(budget.settings()),
        };
        if let Ok(mut c) = self.cache.lock() {
            c.insert(key, value.clone());
        }
        Ok(value)
    }
}

fn validate(alpha: f64, budget: &McBudget) -> Result<(), ConstantsError> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(ConstantsError::InvalidArgument(format!("alpha = {alpha} outside (0, 2]")));
    }
    if let Some((_, msg)) = budget.problem() {
        return Err(ConstantsError::InvalidArgument(msg));
    }
    Ok(())
}

/// Grid-discretised fBm of Hurst `α/2` on `[0, n δ]`, generated in pairs.
struct TiltSampler {
    alpha: f64,
    delta: f64,
    n: usize,
    fgn: FgnSampler,
    /// `(k δ)^α` for `k = 0..=n`.
    pow: Vec<f64>,
}

struct Scratch {
    work: Vec<rustfft::num_complex::Complex<f64>>,
    chol: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    pa: Vec<f64>,
    pb: Vec<f64>,
    w: Vec<f64>,
}

impl TiltSampler {
    fn new(alpha: f64, grid_per_unit: usize, n: usize) -> Result<Self, ConstantsError> {
        let delta = 1.0 / grid_per_unit as f64;
        let fgn = FgnSampler::new(alpha / 2.0, n)?;
        let pow = (0..=n).map(|k| (k as f64 * delta).powf(alpha)).collect();
        Ok(Self {
            alpha,
            delta,
            n,
            fgn,
            pow,
        })
    }

    fn scratch(&self) -> Scratch {
        Scratch {
            work: Vec::with_capacity(2 * self.n),
            chol: Vec::new(),
            a: vec![0.0; self.n],
            b: vec![0.0; self.n],
            pa: vec![0.0; self.n + 1],
            pb: vec![0.0; self.n + 1],
            w: vec![0.0; self.n + 1],
        }
    }

    /// Fills `pa`, `pb` with two independent paths.
    fn sample<R: Rng>(&self, rng: &mut R, s: &mut Scratch) {
        self.fgn
            .sample_pair(rng, &mut s.work, &mut s.chol, &mut s.a, &mut s.b);
        let step_pow = self.delta.powf(self.alpha / 2.0);
        integrate_into(&s.a, step_pow, &mut s.pa);
        integrate_into(&s.b, step_pow, &mut s.pb);
    }

    /// `exp(max W - logsumexp W)` over nodes `0..=len` with
    /// `W_j = √2 B_j - |t_j - t_J|^α - drift_j`.
    fn tilted_ratio(&self, path: &[f64], len: usize, j_star: usize, drift: Option<(&[f64], f64)>, w: &mut [f64]) -> f64 {
        let sqrt2 = std::f64::consts::SQRT_2;
        for j in 0..=len {
            let mut v = sqrt2 * path[j] - self.pow[j.abs_diff(j_star)];
            if let Some((pow, r)) = drift {
                v -= r * pow[j];
            }
            w[j] = v;
        }
        let w = &w[..=len];
        let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (max - log_sum_exp(w)).exp()
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, v)
}

/// Delete-a-group jackknife standard error of `stat` over contiguous groups.
fn jackknife<F: Fn(&[usize]) -> f64>(n: usize, stat: F) -> f64 {
    let g = JACKKNIFE_GROUPS.min(n);
    let bounds: Vec<usize> = (0..=g).map(|k| k * n / g).collect();
    let all: Vec<usize> = (0..n).collect();
    let loo: Vec<f64> = (0..g)
        .map(|k| {
            let keep: Vec<usize> = all[..bounds[k]]
                .iter()
                .chain(&all[bounds[k + 1]..])
                .copied()
                .collect();
            stat(&keep)
        })
        .collect();
    let mean = loo.iter().sum::<f64>() / g as f64;
    ((g as f64 - 1.0) / g as f64 * loo.iter().map(|x| (x - mean).powi(2)).sum::<f64>()).sqrt()
}

/// Pickands constant `H_{α/2}` from horizons `S` and `S/2`, combined by
/// Richardson extrapolation in `1/S`; the standard error is a jackknife
/// over replicate groups.
///
/// The sup is taken on a grid, so the value is biased low. The bias decays
/// like `δ^{α/2}` and is large for `α < 1` at the default resolution.
pub fn pickands_estimate(alpha: f64, budget: &McBudget) -> Result<ConstantEstimate, ConstantsError> {
    validate(alpha, budget)?;
    let m = budget.grid_per_unit;
    let n_full = (budget.horizon * m as f64).round() as usize;
    let n_half = n_full / 2;
    let sampler = TiltSampler::new(alpha, m, n_full)?;
    let len_full = n_full as f64 * sampler.delta;
    let len_half = n_half as f64 * sampler.delta;

    let blocks = run_blocks(budget.reps, budget.workers, |range| {
        let mut s = sampler.scratch();
        let mut out = Vec::with_capacity((range.end - range.start) as usize);
        for r in range {
            let mut rng = stream(budget.seed, StreamDomain::Constants, r);
            sampler.sample(&mut rng, &mut s);
            let ja = rng.random_range(0..=n_full);
            let jb = rng.random_range(0..=n_half);
            let qa = (n_full + 1) as f64 / len_full
                * sampler.tilted_ratio(&s.pa, n_full, ja, None, &mut s.w);
            let qb = (n_half + 1) as f64 / len_half
                * sampler.tilted_ratio(&s.pb, n_half, jb, None, &mut s.w);
            out.push((qa, qb));
        }
        out
    });
    let pairs: Vec<(f64, f64)> = blocks.into_iter().flatten().collect();
    let combine = |idx: &[usize]| {
        let k = idx.len() as f64;
        let qa = idx.iter().map(|&i| pairs[i].0).sum::<f64>() / k;
        let qb = idx.iter().map(|&i| pairs[i].1).sum::<f64>() / k;
        (len_full * qa - len_half * qb) / (len_full - len_half)
    };
    let all: Vec<usize> = (0..pairs.len()).collect();
    let value = combine(&all);
    let stderr = jackknife(pairs.len(), combine);
    let (qa, va) = mean_var(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let (qb, vb) = mean_var(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
    let n = pairs.len() as f64;
    Ok(ConstantEstimate {
        kind: ConstantKind::Pickands { alpha },
        value,
        stderr,
        reps: budget.reps,
        horizon: len_full,
        grid_per_unit: m,
        seed: budget.seed,
        levels: vec![
            (len_half, qb, (vb / n).sqrt()),
            (len_full, qa, (va / n).sqrt()),
        ],
    })
}

/// Piterbarg constant `P_α^R`. The horizon starts at `budget.horizon / 4`
/// and doubles (on the same simulated paths) until consecutive estimates
/// differ by less than half a standard error.
pub fn piterbarg_estimate(alpha: f64, r: f64, budget: &McBudget) -> Result<ConstantEstimate, ConstantsError> {
    validate(alpha, budget)?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(ConstantsError::InvalidArgument(format!("R = {r} must be positive")));
    }
    let m = budget.grid_per_unit;
    let start = budget.horizon / 4.0;
    let levels: Vec<usize> = (0..=budget.max_doublings)
        .map(|k| (start * 2f64.powi(k as i32) * m as f64).round() as usize)
        .collect();
    let n_max = *levels.last().unwrap_or(&1);
    let sampler = TiltSampler::new(alpha, m, n_max)?;
    // Cumulative tilt weights exp(-R t_j^α); node J is drawn with
    // probability proportional to its weight.
    let mut cum = Vec::with_capacity(n_max + 1);
    let mut acc = 0.0;
    for j in 0..=n_max {
        acc += (-r * sampler.pow[j]).exp();
        cum.push(acc);
    }
    // One uniform per path drives the node choice at every horizon, so the
    // nested estimates share randomness and their differences isolate the
    // horizon effect.
    let draw = |u: f64, len: usize| -> usize {
        let target = u * cum[len];
        cum[..=len].partition_point(|&c| c <= target).min(len)
    };

    let pairs = budget.reps.div_ceil(2);
    let blocks = run_blocks(pairs, budget.workers, |range| {
        let mut s = sampler.scratch();
        let mut out = Vec::with_capacity(2 * (range.end - range.start) as usize);
        for p in range {
            let mut rng = stream(budget.seed, StreamDomain::Constants, p);
            sampler.sample(&mut rng, &mut s);
            for path in [&s.pa, &s.pb] {
                let u: f64 = rng.random();
                let row: Vec<f64> = levels
                    .iter()
                    .map(|&len| {
                        let j = draw(u, len);
                        cum[len]
                            * sampler.tilted_ratio(path, len, j, Some((&sampler.pow, r)), &mut s.w)
                    })
                    .collect();
                out.push(row);
            }
        }
        out
    });
    let rows: Vec<Vec<f64>> = blocks.into_iter().flatten().collect();
    let n = rows.len() as f64;
    let kind = ConstantKind::Piterbarg { alpha, r };
    let mut summary = Vec::new();
    for (k, &len) in levels.iter().enumerate() {
        let (mean, _) = mean_var(&rows.iter().map(|row| row[k]).collect::<Vec<_>>());
        let stderr = jackknife(rows.len(), |idx| {
            idx.iter().map(|&i| rows[i][k]).sum::<f64>() / idx.len() as f64
        });
        summary.push((len as f64 / m as f64, mean, stderr));
        if k > 0 {
            let change = (mean - summary[k - 1].1).abs();
            if change < 0.5 * stderr {
                return Ok(ConstantEstimate {
                    kind,
                    value: mean,
                    stderr,
                    reps: n as u64,
                    horizon: len as f64 / m as f64,
                    grid_per_unit: m,
                    seed: budget.seed,
                    levels: summary,
                });
            }
        }
    }
    let (horizon, last, stderr) = summary[summary.len() - 1];
    let prev = summary[summary.len().saturating_sub(2)].1;
    Err(ConstantsError::NonConvergence {
        kind,
        horizon,
        change: (last - prev).abs(),
        stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> McBudget {
        McBudget {
            horizon: 10.0,
            grid_per_unit: 64,
            reps: 2000,
            seed,
            workers: 1,
            max_doublings: 3,
        }
    }

    #[test]
    fn exact_table() {
        let p = ConstantsProvider::exact_only();
        let h2 = p.get_constant(ConstantKind::Pickands { alpha: 2.0 }).unwrap();
        assert!((h2.value - 0.564189583548).abs() < 1e-12);
        assert_eq!(h2.provenance, Provenance::Exact);
        let pit = p
            .get_constant(ConstantKind::Piterbarg { alpha: 1.0, r: 2.5 })
            .unwrap();
        assert!((pit.value - 1.4).abs() < 1e-15);
        let miss = p.get_constant(ConstantKind::Pickands { alpha: 0.6 });
        assert!(matches!(miss, Err(ConstantsError::MissingExact(_))));
        let miss = p.get_constant(ConstantKind::Piterbarg { alpha: 2.0, r: 1.0 });
        assert!(matches!(miss, Err(ConstantsError::MissingExact(_))));
    }

    #[test]
    fn budget_validation() {
        let mut b = small(1);
        b.grid_per_unit = 32;
        assert!(pickands_estimate(1.0, &b).is_err());
        assert!(pickands_estimate(2.5, &small(1)).is_err());
        assert!(piterbarg_estimate(1.0, -1.0, &small(1)).is_err());
    }

    #[test]
    fn pickands_is_deterministic() {
        let a = pickands_estimate(1.4, &small(3)).unwrap();
        let b = pickands_estimate(1.4, &small(3)).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        let mut w = small(3);
        w.workers = 3;
        let c = pickands_estimate(1.4, &w).unwrap();
        assert_eq!(a.value.to_bits(), c.value.to_bits());
    }

    #[test]
    fn mc_fallback_is_cached() {
        let p = ConstantsProvider::new(ProviderMode::McFallback(small(5)));
        let k = ConstantKind::Piterbarg { alpha: 1.5, r: 2.0 };
        let a = p.get_constant(k).unwrap();
        let b = p.get_constant(k).unwrap();
        assert_eq!(a, b);
        assert!(matches!(a.provenance, Provenance::McEstimate { .. }));
        assert!(a.value >= 1.0);
    }
}
