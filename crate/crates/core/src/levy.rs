//! Gaussian-perturbed Lévy claim-surplus processes
//! `S~(t) = U(t) - c t + X(t)` on `[0, T]`.
//!
//! Compound-Poisson claims are simulated exactly at jump instants; the
//! Gaussian perturbation lives on a grid and is linearly interpolated to the
//! jump instants. Stable claims are grid-incremented. Claim and perturbation
//! draws use disjoint RNG streams, so dropping the perturbation leaves the
//! claim paths unchanged.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use thiserror::Error;

use crate::asymptotics::{ruin_asymptotic, AggregateModel, AsymptoticsError};
use crate::constants::ConstantsProvider;
use crate::kernels::Trend;
use crate::rng::{run_blocks, stream, StreamDomain};
use crate::simulation::{GridPlan, Method, PathSampler, SamplerKind, Scratch, SimError, SimulationEstimate};
use crate::special::gamma;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LevyError {
    #[error("{name} = {value} outside {range}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("quantile table: {0}")]
    QuantileTable(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Asymptotics(#[from] AsymptoticsError),
    #[error("{0}")]
    Unsupported(String),
}

fn check(name: &'static str, value: f64, ok: bool, range: &'static str) -> Result<(), LevyError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(LevyError::InvalidParameter { name, value, range })
    }
}

/// Claim-size quantile function tabulated at increasing probabilities,
/// linearly interpolated.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileTable {
    p: Vec<f64>,
    q: Vec<f64>,
}

impl QuantileTable {
    /// Points `(p, q)` with `p` strictly increasing in `[0, 1]` and `q`
    /// nondecreasing and nonnegative. The table must start at `p = 0`.
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, LevyError> {
        if points.len() < 2 {
            return Err(LevyError::QuantileTable("need at least two points".into()));
        }
        if points[0].0 != 0.0 {
            return Err(LevyError::QuantileTable("first probability must be 0".into()));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0 && w[1].0 <= 1.0) {
                return Err(LevyError::QuantileTable(format!("probabilities not increasing at {}", w[1].0)));
            }
            if w[1].1 < w[0].1 {
                return Err(LevyError::QuantileTable(format!("quantiles decrease at p = {}", w[1].0)));
            }
        }
        if points.iter().any(|&(_, q)| !(q >= 0.0 && q.is_finite())) {
            return Err(LevyError::QuantileTable("quantiles must be finite and nonnegative".into()));
        }
        let (p, q) = points.into_iter().unzip();
        Ok(Self { p, q })
    }

    /// Reads a CSV with header `p,q`.
    pub fn from_csv_reader<R: std::io::Read>(r: R) -> Result<Self, LevyError> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers().map_err(|e| LevyError::QuantileTable(e.to_string()))?.clone();
        if headers.iter().map(str::trim).collect::<Vec<_>>() != ["p", "q"] {
            return Err(LevyError::QuantileTable("expected header p,q".into()));
        }
        let mut pts = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| LevyError::QuantileTable(e.to_string()))?;
            let field = |i: usize| -> Result<f64, LevyError> {
                rec.get(i)
                    .unwrap_or("")
                    .trim()
                    .parse()
                    .map_err(|e| LevyError::QuantileTable(format!("{e}")))
            };
            pts.push((field(0)?, field(1)?));
        }
        Self::new(pts)
    }

    pub fn quantile(&self, v: f64) -> f64 {
        let last = self.p.len() - 1;
        if v >= self.p[last] {
            return self.q[last];
        }
        let k = self.p.partition_point(|&p| p <= v).max(1);
        let (p0, p1) = (self.p[k - 1], self.p[k]);
        self.q[k - 1] + (self.q[k] - self.q[k - 1]) * (v - p0) / (p1 - p0)
    }

    /// `P(Z > x)`, by inverting the interpolated quantile function.
    pub fn survival(&self, x: f64) -> f64 {
        if x < self.q[0] {
            return 1.0;
        }
        let k = self.q.partition_point(|&q| q <= x);
        if k == self.q.len() {
            return 1.0 - self.p[k - 1];
        }
        let (q0, q1) = (self.q[k - 1], self.q[k]);
        let p = self.p[k - 1] + (self.p[k] - self.p[k - 1]) * (x - q0) / (q1 - q0);
        1.0 - p
    }

    /// Mean of the interpolated law (trapezoid rule over `p`).
    pub fn mean(&self) -> f64 {
        let body: f64 = self
            .p
            .windows(2)
            .zip(self.q.windows(2))
            .map(|(p, q)| 0.5 * (q[0] + q[1]) * (p[1] - p[0]))
            .sum();
        body + (1.0 - self.p[self.p.len() - 1]) * self.q[self.q.len() - 1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClaimDist {
    /// `F(y) = 1 - exp(-y^τ)`, `τ ∈ (0, 1)`.
    Weibull { tau: f64 },
    Quantile(Arc<QuantileTable>),
}

impl ClaimDist {
    pub fn weibull(tau: f64) -> Result<Self, LevyError> {
        check("tau", tau, tau > 0.0 && tau < 1.0, "(0, 1)")?;
        Ok(Self::Weibull { tau })
    }

    /// Inverse transform: `Z = (-ln V)^{1/τ}` for the Weibull family.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ClaimDist::Weibull { tau } => {
                let e: f64 = rng.sample(Exp1);
                e.powf(1.0 / tau)
            }
            ClaimDist::Quantile(t) => t.quantile(rng.random::<f64>()),
        }
    }

    pub fn survival(&self, x: f64) -> f64 {
        match self {
            ClaimDist::Weibull { tau } => {
                if x <= 0.0 {
                    1.0
                } else {
                    (-x.powf(*tau)).exp()
                }
            }
            ClaimDist::Quantile(t) => t.survival(x),
        }
    }

    pub fn log_survival(&self, x: f64) -> f64 {
        match self {
            ClaimDist::Weibull { tau } => -x.max(0.0).powf(*tau),
            ClaimDist::Quantile(t) => t.survival(x).ln(),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            ClaimDist::Weibull { tau } => gamma(1.0 + 1.0 / tau),
            ClaimDist::Quantile(t) => t.mean(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LevyKind {
    CompoundPoisson { mu: f64, claim: ClaimDist },
    /// `U(t) ~ S_α(t^{1/α}, β, 0)`.
    AlphaStable { alpha: f64, beta: f64 },
}

/// Claim process `U` with linear premium `c t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyModel {
    pub kind: LevyKind,
    pub premium: f64,
}

impl LevyModel {
    pub fn compound_poisson(mu: f64, claim: ClaimDist, premium: f64) -> Result<Self, LevyError> {
        check("mu", mu, mu > 0.0, "(0, inf)")?;
        check("premium", premium, premium >= 0.0, "[0, inf)")?;
        Ok(Self {
            kind: LevyKind::CompoundPoisson { mu, claim },
            premium,
        })
    }

    pub fn alpha_stable(alpha: f64, beta: f64, premium: f64) -> Result<Self, LevyError> {
        check("alpha", alpha, alpha > 1.0 && alpha < 2.0, "(1, 2)")?;
        check("beta", beta, (-1.0..=1.0).contains(&beta), "[-1, 1]")?;
        check("premium", premium, premium >= 0.0, "[0, inf)")?;
        Ok(Self {
            kind: LevyKind::AlphaStable { alpha, beta },
            premium,
        })
    }

    /// First-order tail asymptote of `sup U` (equivalently of `U(T)`) on
    /// `[0, T]`.
    pub fn tail_asymptote(&self, u: f64, horizon: f64) -> f64 {
        match &self.kind {
            LevyKind::CompoundPoisson { mu, claim } => mu * horizon * claim.survival(u),
            LevyKind::AlphaStable { alpha, beta } => tail_asymptote_stable(u, *alpha, *beta, horizon),
        }
    }

    pub fn log_tail_asymptote(&self, u: f64, horizon: f64) -> f64 {
        match &self.kind {
            LevyKind::CompoundPoisson { mu, claim } => (mu * horizon).ln() + claim.log_survival(u),
            LevyKind::AlphaStable { .. } => self.tail_asymptote(u, horizon).ln(),
        }
    }
}

/// Surplus model with an optional independent Gaussian perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedModel {
    levy: LevyModel,
    gaussian: Option<AggregateModel>,
    horizon: f64,
}

impl PerturbedModel {
    /// The perturbation's own trend is ignored; the premium lives in `levy`.
    pub fn new(levy: LevyModel, gaussian: Option<AggregateModel>, horizon: f64) -> Result<Self, LevyError> {
        check("T", horizon, horizon > 0.0, "(0, inf)")?;
        let gaussian = match gaussian {
            Some(g) => {
                if (g.horizon() - horizon).abs() > 1e-12 * horizon {
                    return Err(LevyError::Unsupported(format!(
                        "perturbation horizon {} differs from {horizon}",
                        g.horizon()
                    )));
                }
                Some(AggregateModel::new(g.components().to_vec(), Trend::zero(), horizon)?)
            }
            None => None,
        };
        Ok(Self {
            levy,
            gaussian,
            horizon,
        })
    }

    pub fn levy(&self) -> &LevyModel {
        &self.levy
    }

    pub fn gaussian(&self) -> Option<&AggregateModel> {
        self.gaussian.as_ref()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }
}

/// `max(0, max_k (S_k - c τ_k))` for sorted jump times `τ_k` and claims,
/// `S_k` the cumulative claim after the `k`-th jump.
pub fn sup_at_jumps(times: &[f64], claims: &[f64], premium: f64) -> f64 {
    let mut acc = 0.0;
    let mut best = 0.0f64;
    for (t, z) in times.iter().zip(claims) {
        acc += z;
        best = best.max(acc - premium * t);
    }
    best
}

/// Jump times and claims of one compound-Poisson path on `[0, T]`.
fn poisson_path<R: Rng + ?Sized>(
    rng: &mut R,
    mu: f64,
    claim: &ClaimDist,
    horizon: f64,
    times: &mut Vec<f64>,
    claims: &mut Vec<f64>,
) {
    times.clear();
    claims.clear();
    let count = Poisson::new(mu * horizon).map(|p| p.sample(rng)).unwrap_or(0.0) as usize;
    times.extend((0..count).map(|_| horizon * rng.random::<f64>()));
    times.sort_unstable_by(f64::total_cmp);
    claims.extend((0..count).map(|_| claim.sample(rng)));
}

/// Exact samples of `sup_{[0,T]} (U(t) - c t)` for a compound-Poisson
/// model.
pub fn compound_poisson_sup(
    model: &LevyModel,
    horizon: f64,
    n: u64,
    seed: u64,
    workers: usize,
) -> Result<Vec<f64>, LevyError> {
    let LevyKind::CompoundPoisson { mu, claim } = &model.kind else {
        return Err(LevyError::Unsupported("compound_poisson_sup needs compound-Poisson claims".into()));
    };
    let blocks = run_blocks(n, workers, |range| {
        let (mut t, mut z) = (Vec::new(), Vec::new());
        range
            .map(|i| {
                let mut rng = stream(seed, StreamDomain::Levy, i);
                poisson_path(&mut rng, *mu, claim, horizon, &mut t, &mut z);
                sup_at_jumps(&t, &z, model.premium)
            })
            .collect::<Vec<_>>()
    });
    Ok(blocks.into_iter().flatten().collect())
}

/// One `S_α(1, β, 0)` draw by the Chambers–Mallows–Stuck transform
/// (`α ≠ 1`).
pub fn cms_draw<R: Rng + ?Sized>(rng: &mut R, alpha: f64, beta: f64) -> f64 {
    let v = PI * (rng.random::<f64>() - 0.5);
    let w: f64 = rng.sample(Exp1);
    let t = beta * (PI * alpha / 2.0).tan();
    let b = t.atan() / alpha;
    let s = (1.0 + t * t).powf(1.0 / (2.0 * alpha));
    let arg = alpha * (v + b);
    s * arg.sin() / v.cos().powf(1.0 / alpha) * ((v - arg).cos() / w).powf((1.0 - alpha) / alpha)
}

/// `n` draws of `S_α(σ, β, 0)`.
pub fn stable_sample(alpha: f64, beta: f64, scale: f64, n: u64, seed: u64, workers: usize) -> Result<Vec<f64>, LevyError> {
    check("alpha", alpha, alpha > 1.0 && alpha < 2.0, "(1, 2)")?;
    check("beta", beta, (-1.0..=1.0).contains(&beta), "[-1, 1]")?;
    check("scale", scale, scale > 0.0, "(0, inf)")?;
    let blocks = run_blocks(n, workers, |range| {
        range
            .map(|i| scale * cms_draw(&mut stream(seed, StreamDomain::Levy, i), alpha, beta))
            .collect::<Vec<_>>()
    });
    Ok(blocks.into_iter().flatten().collect())
}

fn estimate_from_hits(u: f64, hits: u64, n: u64, grid: GridPlan, seed: u64) -> SimulationEstimate {
    let p = hits as f64 / n as f64;
    let stderr = (p * (1.0 - p) / n as f64).sqrt();
    SimulationEstimate {
        u,
        p_hat: p,
        stderr,
        n,
        ci95: ((p - 1.96 * stderr).max(0.0), (p + 1.96 * stderr).min(1.0)),
        method: Method::Crude,
        grid,
        seed,
        hits,
        ess: None,
        log_p_hat: p.ln(),
        flags: if hits == 0 { vec!["NO_HITS".into()] } else { vec![] },
    }
}

/// Exact endpoint tail `P(U(T) > u)` for stable claims, one estimate per
/// threshold, all from the same `n` draws.
pub fn stable_endpoint_tail(
    alpha: f64,
    beta: f64,
    horizon: f64,
    u_grid: &[f64],
    n: u64,
    seed: u64,
    workers: usize,
) -> Result<Vec<SimulationEstimate>, LevyError> {
    check("alpha", alpha, alpha > 1.0 && alpha < 2.0, "(1, 2)")?;
    check("beta", beta, (-1.0..=1.0).contains(&beta), "[-1, 1]")?;
    let scale = horizon.powf(1.0 / alpha);
    let blocks = run_blocks(n, workers, |range| {
        let mut hits = vec![0u64; u_grid.len()];
        for i in range {
            let x = scale * cms_draw(&mut stream(seed, StreamDomain::Levy, i), alpha, beta);
            for (h, &u) in hits.iter_mut().zip(u_grid) {
                *h += u64::from(x > u);
            }
        }
        hits
    });
    let grid = GridPlan::new(1, horizon)?;
    Ok(u_grid
        .iter()
        .enumerate()
        .map(|(k, &u)| estimate_from_hits(u, blocks.iter().map(|b| b[k]).sum(), n, grid, seed))
        .collect())
}

/// Perturbed and unperturbed ruin estimates at one level, from common
/// claim draws.
#[derive(Debug, Clone, PartialEq)]
pub struct RuinPair {
    pub tilde: SimulationEstimate,
    pub plain: SimulationEstimate,
}

/// Suprema of `S~` and `S` for one replicate. `x` holds the perturbation at
/// the grid nodes (all zero when absent).
fn replicate_sups<R: Rng + ?Sized>(
    rng: &mut R,
    levy: &LevyModel,
    grid: &GridPlan,
    x: &[f64],
    times: &mut Vec<f64>,
    claims: &mut Vec<f64>,
) -> (f64, f64) {
    let c = levy.premium;
    let h = grid.step();
    match &levy.kind {
        LevyKind::CompoundPoisson { mu, claim } => {
            poisson_path(rng, *mu, claim, grid.horizon(), times, claims);
            let plain = sup_at_jumps(times, claims, c);
            // Walk grid nodes and jumps in time order.
            let mut tilde = f64::NEG_INFINITY;
            let mut acc = 0.0;
            let mut k = 0;
            for (j, &xj) in x.iter().enumerate() {
                let tj = grid.node(j);
                while k < times.len() && times[k] <= tj {
                    acc += claims[k];
                    let tau = times[k];
                    let jl = ((tau / h) as usize).min(grid.m() - 1);
                    let frac = (tau - grid.node(jl)) / h;
                    let xt = x[jl] + frac * (x[jl + 1] - x[jl]);
                    tilde = tilde.max(acc - c * tau + xt);
                    k += 1;
                }
                tilde = tilde.max(acc - c * tj + xj);
            }
            (tilde, plain)
        }
        LevyKind::AlphaStable { alpha, beta } => {
            let scale = h.powf(1.0 / alpha);
            let (mut acc, mut plain, mut tilde) = (0.0, 0.0f64, x[0]);
            for (j, &xj) in x.iter().enumerate().skip(1) {
                acc += scale * cms_draw(rng, *alpha, *beta);
                let s = acc - c * grid.node(j);
                plain = plain.max(s);
                tilde = tilde.max(s + xj);
            }
            (tilde, plain)
        }
    }
}

/// `ψ~` and `ψ` at every level in `u_grid` from the same `n` replicates.
pub fn ruin_curves(
    model: &PerturbedModel,
    u_grid: &[f64],
    grid: GridPlan,
    n: u64,
    seed: u64,
    workers: usize,
) -> Result<Vec<RuinPair>, LevyError> {
    if n < 1000 {
        return Err(LevyError::Sim(SimError::InvalidArgument(format!("n = {n} must be at least 1000"))));
    }
    if (grid.horizon() - model.horizon).abs() > 1e-12 * model.horizon {
        return Err(LevyError::Sim(SimError::Grid("grid horizon differs from model horizon".into())));
    }
    let sampler = model
        .gaussian
        .as_ref()
        .map(|g| PathSampler::new(g, grid, SamplerKind::Composite))
        .transpose()?;
    let w = grid.m() + 1;
    let levels = u_grid.len();
    let blocks = run_blocks(n.div_ceil(2), workers, |range| {
        let mut s = Scratch::default();
        let (mut a, mut b) = (vec![0.0; w], vec![0.0; w]);
        let (mut t, mut z) = (Vec::new(), Vec::new());
        let mut hits = vec![(0u64, 0u64); levels];
        for p in range {
            if let Some(sampler) = &sampler {
                sampler.sample_pair(&mut stream(seed, StreamDomain::Gaussian, p), &mut s, &mut a, &mut b);
            }
            for (k, x) in [&a, &b].into_iter().enumerate() {
                let i = 2 * p + k as u64;
                if i >= n {
                    break;
                }
                let mut rng = stream(seed, StreamDomain::Levy, i);
                let (tilde, plain) = replicate_sups(&mut rng, &model.levy, &grid, x, &mut t, &mut z);
                for (hk, &u) in hits.iter_mut().zip(u_grid) {
                    hk.0 += u64::from(tilde > u);
                    hk.1 += u64::from(plain > u);
                }
            }
        }
        hits
    });
    Ok((0..levels)
        .map(|k| {
            let (ht, hp) = blocks
                .iter()
                .fold((0, 0), |acc, b| (acc.0 + b[k].0, acc.1 + b[k].1));
            RuinPair {
                tilde: estimate_from_hits(u_grid[k], ht, n, grid, seed),
                plain: estimate_from_hits(u_grid[k], hp, n, grid, seed),
            }
        })
        .collect())
}

/// Crude estimate of `ψ~(u) = P(sup S~ > u)`.
pub fn perturbed_ruin_mc(
    model: &PerturbedModel,
    u: f64,
    grid: GridPlan,
    n: u64,
    seed: u64,
    workers: usize,
) -> Result<SimulationEstimate, LevyError> {
    let mut v = ruin_curves(model, &[u], grid, n, seed, workers)?;
    Ok(v.remove(0).tilde)
}

/// `μ T exp(-u^τ)`.
pub fn tail_asymptote_weibull(u: f64, mu: f64, horizon: f64, tau: f64) -> f64 {
    mu * horizon * (-u.max(0.0).powf(tau)).exp()
}

/// `C_{α,T^{1/α}} ((1 + β)/2) u^{-α}` with
/// `C_{α,T^{1/α}} = T (1 - α) / (Γ(2 - α) cos(π α / 2))`.
pub fn tail_asymptote_stable(u: f64, alpha: f64, beta: f64, horizon: f64) -> f64 {
    let c = horizon * (1.0 - alpha) / (gamma(2.0 - alpha) * (PI * alpha / 2.0).cos());
    c * 0.5 * (1.0 + beta) * u.powf(-alpha)
}

/// Simulation settings for [`tail_equivalence_report`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportBudget {
    pub n: u64,
    pub m: usize,
    pub workers: usize,
    /// Minimum hits for a ratio to be reported unflagged.
    pub min_hits: u64,
}

impl Default for ReportBudget {
    fn default() -> Self {
        Self {
            n: 1_000_000,
            m: 1024,
            workers: 1,
            min_hits: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub u: f64,
    pub psi_tilde: SimulationEstimate,
    pub psi: SimulationEstimate,
    /// First-order asymptote of `1 - F_1(u)`.
    pub asymptote: f64,
    pub ratio_tilde: f64,
    pub ratio: f64,
    /// `(1 - F_2(u)) / (1 - F_1(u))` at the asymptote level.
    pub hypothesis_ratio: f64,
    /// Natural log of `hypothesis_ratio`, finite when the ratio underflows.
    pub log_hypothesis_ratio: f64,
    /// `(1 - F_1(u + d(u))) / (1 - F_1(u))` on the asymptote, `d(u) = ln(1 + u)`.
    pub insensitivity: f64,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Hypothesis ratio falls toward 0 and the MC ratios do not move away
    /// from 1.
    Consistent,
    /// Hypothesis holds but the MC ratios do not approach 1 on this grid.
    Inconclusive,
    /// The perturbation tail is not negligible on this grid.
    HypothesisViolated,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Consistent => "CONSISTENT",
            Verdict::Inconclusive => "INCONCLUSIVE",
            Verdict::HypothesisViolated => "HYPOTHESIS_VIOLATED",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailReport {
    pub rows: Vec<ReportRow>,
    pub verdict: Verdict,
    /// Set when the hypothesis check fails.
    pub banner: Option<String>,
}

pub const REPORT_CSV_HEADER: [&str; 13] = [
    "u",
    "psi_tilde_hat",
    "stderr",
    "psi_hat",
    "stderr",
    "asymptote",
    "ratio_tilde",
    "ratio",
    "hypothesis_ratio",
    "flags",
    "log10_psi_tilde_hat",
    "log10_psi_hat",
    "log10_hypothesis_ratio",
];

impl TailReport {
    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        let l10 = std::f64::consts::LN_10;
        self.rows
            .iter()
            .map(|r| {
                vec![
                    format!("{}", r.u),
                    format!("{:.6e}", r.psi_tilde.p_hat),
                    format!("{:.3e}", r.psi_tilde.stderr),
                    format!("{:.6e}", r.psi.p_hat),
                    format!("{:.3e}", r.psi.stderr),
                    format!("{:.6e}", r.asymptote),
                    format!("{:.6}", r.ratio_tilde),
                    format!("{:.6}", r.ratio),
                    format!("{:.6e}", r.hypothesis_ratio),
                    r.flags.join(";"),
                    format!("{:.6}", r.psi_tilde.log_p_hat / l10),
                    format!("{:.6}", r.psi.log_p_hat / l10),
                    format!("{:.6}", r.log_hypothesis_ratio / l10),
                ]
            })
            .collect()
    }
}

/// Ratio columns checking `ψ~ ~ 1 - F_1 ~ ψ` over `u_grid`.
///
/// For stable claims the `ψ` column is the exact endpoint tail
/// `P(U(T) > u)` and is flagged `ENDPOINT`; `ψ~` uses grid increments.
pub fn tail_equivalence_report(
    model: &PerturbedModel,
    u_grid: &[f64],
    budget: &ReportBudget,
    seed: u64,
    provider: &ConstantsProvider,
) -> Result<TailReport, LevyError> {
    if u_grid.is_empty() || u_grid.windows(2).any(|w| w[1] <= w[0]) || u_grid[0] <= 0.0 {
        return Err(LevyError::Unsupported("u grid must be positive and strictly increasing".into()));
    }
    let t = model.horizon;
    let grid = GridPlan::new(budget.m, t)?;
    let pairs = ruin_curves(model, u_grid, grid, budget.n, seed, budget.workers)?;
    let endpoint = match model.levy.kind {
        LevyKind::AlphaStable { alpha, beta } => Some(stable_endpoint_tail(
            alpha,
            beta,
            t,
            u_grid,
            budget.n,
            seed,
            budget.workers,
        )?),
        LevyKind::CompoundPoisson { .. } => None,
    };

    let mut rows = Vec::with_capacity(u_grid.len());
    for (k, (pair, &u)) in pairs.into_iter().zip(u_grid).enumerate() {
        let asymptote = model.levy.tail_asymptote(u, t);
        let log_f1 = model.levy.log_tail_asymptote(u, t);
        let log_f2 = match &model.gaussian {
            Some(g) => ruin_asymptotic(g, u, provider)?.log_value,
            None => f64::NEG_INFINITY,
        };
        let log_h = log_f2 - log_f1;
        let d = (1.0 + u).ln();
        let insensitivity = (model.levy.log_tail_asymptote(u + d, t) - log_f1).exp();
        let mut flags = Vec::new();
        let psi = match &endpoint {
            Some(e) => {
                flags.push("ENDPOINT".to_string());
                e[k].clone()
            }
            None => pair.plain,
        };
        let psi_tilde = pair.tilde;
        for (name, e) in [("PSI_TILDE", &psi_tilde), ("PSI", &psi)] {
            if e.hits < budget.min_hits {
                flags.push(format!("LOW_HITS_{name}({})", e.hits));
            }
        }
        rows.push(ReportRow {
            u,
            ratio_tilde: psi_tilde.p_hat / asymptote,
            ratio: psi.p_hat / asymptote,
            psi_tilde,
            psi,
            asymptote,
            hypothesis_ratio: log_h.exp(),
            log_hypothesis_ratio: log_h,
            insensitivity,
            flags,
        });
    }

    let hyp_ok = rows.windows(2).all(|w| w[1].log_hypothesis_ratio < w[0].log_hypothesis_ratio)
        && rows.last().is_some_and(|r| r.log_hypothesis_ratio < -2.0);
    let reliable: Vec<&ReportRow> = rows.iter().filter(|r| r.flags.iter().all(|f| !f.starts_with("LOW_HITS"))).collect();
    let approach = match (reliable.first(), reliable.last()) {
        (Some(a), Some(b)) if reliable.len() >= 2 => {
            // Allow three combined standard errors of drift away from 1.
            let slack = |r: &ReportRow, e: &SimulationEstimate| 3.0 * e.stderr / r.asymptote;
            (b.ratio_tilde - 1.0).abs() <= (a.ratio_tilde - 1.0).abs() + slack(a, &a.psi_tilde) + slack(b, &b.psi_tilde)
                && (b.ratio - 1.0).abs() <= (a.ratio - 1.0).abs() + slack(a, &a.psi) + slack(b, &b.psi)
        }
        _ => false,
    };
    let (verdict, banner) = if !hyp_ok {
        (
            Verdict::HypothesisViolated,
            Some(
                "perturbation tail is not negligible against the claim tail on this grid; ratios are reported but convergence is not asserted"
                    .to_string(),
            ),
        )
    } else if approach {
        (Verdict::Consistent, None)
    } else {
        (Verdict::Inconclusive, None)
    };
    Ok(TailReport { rows, verdict, banner })
}
