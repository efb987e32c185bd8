//! Monte-Carlo estimation of `P(max_j (X(t_j) - g(t_j)) > u)` on a grid.
//!
//! Paths of the aggregate are built by summing independent component
//! samplers: independent increments for Brownian motion and time-changed
//! Brownian motion, circulant-embedded fGn for other fBm components, and a
//! dense Cholesky factor for everything else. Replicates are generated in
//! pairs from one counter-based stream per pair.
//!
//! The grid maximum never exceeds the continuous supremum, so grid estimates
//! are biased low; the bias is reported (see [`convergence_study`]) but never
//! silently corrected.

use std::fmt;
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use thiserror::Error;

use crate::asymptotics::AggregateModel;
use crate::circulant::{integrate_into, FgnError, FgnSampler};
use crate::kernels::{KernelError, KernelSpec};
use crate::linalg::{Cholesky, FactorizationError};
use crate::rng::{run_blocks, stream, StreamDomain};

/// Importance-sampling estimates with fewer effective samples are flagged.
pub const MIN_ESS: f64 = 50.0;
const JACKKNIFE_GROUPS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("grid: {0}")]
    Grid(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Factorization(#[from] FactorizationError),
    #[error(transparent)]
    Fgn(#[from] FgnError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("path dump: {0}")]
    Dump(String),
}

/// Uniform grid `t_j = j T / m`, `j = 0..=m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPlan {
    m: usize,
    horizon: f64,
}

impl GridPlan {
    pub fn new(m: usize, horizon: f64) -> Result<Self, SimError> {
        if m == 0 {
            return Err(SimError::Grid("need at least one interval".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(SimError::Grid(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { m, horizon })
    }

    /// `m = 4096` intervals.
    pub fn default_for(horizon: f64) -> Result<Self, SimError> {
        Self::new(4096, horizon)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.m as f64
    }

    /// `t_j`, with `t_m = T` exactly.
    pub fn node(&self, j: usize) -> f64 {
        if j == self.m {
            self.horizon
        } else {
            j as f64 * self.horizon / self.m as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.m).map(|j| self.node(j)).collect()
    }

    /// Grid with `factor` times as many intervals.
    pub fn refined(&self, factor: usize) -> Result<Self, SimError> {
        Self::new(self.m * factor, self.horizon)
    }

    /// Whether every node of `self` is a node of `finer`.
    pub fn nests_in(&self, finer: &GridPlan) -> bool {
        finer.horizon == self.horizon && finer.m.is_multiple_of(self.m)
    }
}

impl fmt::Display for GridPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m={} T={}", self.m, self.horizon)
    }
}

/// `n` paths on a grid, row-major, each row holding `X(t_0), …, X(t_m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub grid: GridPlan,
    pub n: usize,
    pub data: Vec<f64>,
}

const DUMP_MAGIC: &[u8; 8] = b"GPPATHS1";

impl PathBatch {
    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.grid.m + 1;
        &self.data[i * w..(i + 1) * w]
    }

    /// Binary dump: magic `GPPATHS1`, little-endian `u32 m`, `u32 n`, then
    /// `n` rows of `m + 1` little-endian `f64` values.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&(self.grid.m as u32).to_le_bytes())?;
        w.write_all(&(self.n as u32).to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    }

    /// Reads a dump written by [`PathBatch::write_dump`].
    pub fn read_dump<R: Read>(mut r: R, horizon: f64) -> Result<Self, SimError> {
        let mut head = [0u8; 16];
        r.read_exact(&mut head).map_err(|e| SimError::Dump(e.to_string()))?;
        if &head[..8] != DUMP_MAGIC {
            return Err(SimError::Dump("bad magic".into()));
        }
        let m = u32::from_le_bytes(head[8..12].try_into().unwrap_or_default()) as usize;
        let n = u32::from_le_bytes(head[12..16].try_into().unwrap_or_default()) as usize;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| SimError::Dump(e.to_string()))?;
        if bytes.len() != n * (m + 1) * 8 {
            return Err(SimError::Dump(format!(
                "expected {} payload bytes, found {}",
                n * (m + 1) * 8,
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap_or_default()))
            .collect();
        Ok(Self {
            grid: GridPlan::new(m, horizon)?,
            n,
            data,
        })
    }
}

/// Sampler of one weighted component on the grid.
#[derive(Debug)]
enum Part {
    /// `X_j = w Σ_{k<j} s_k Z_k` (independent increments).
    Increments { weight: f64, sd: Vec<f64> },
    /// `X_j = w c_j Z` (fBm with `H = 1`).
    Linear { weight: f64, coef: Vec<f64> },
    /// fBm via unit-step fGn scaled by `step^H`.
    Fgn {
        weight: f64,
        fgn: FgnSampler,
        step_pow: f64,
    },
    /// Dense factor on the nodes with positive variance.
    Dense {
        weight: f64,
        chol: Cholesky,
        nodes: Vec<usize>,
    },
}

/// How the aggregate is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplerKind {
    /// Per-component fast paths, summed.
    #[default]
    Composite,
    /// One Cholesky factor of the aggregate covariance.
    Cholesky,
}

/// Reusable buffers for path generation.
#[derive(Debug, Default)]
pub struct Scratch {
    work: Vec<Complex<f64>>,
    z: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    pa: Vec<f64>,
    pb: Vec<f64>,
}

/// Draws pairs of independent aggregate paths on a grid.
#[derive(Debug)]
pub struct PathSampler {
    grid: GridPlan,
    parts: Vec<Part>,
}

fn dense_part(weight: f64, cov: impl Fn(f64, f64) -> Result<f64, KernelError>, grid: &GridPlan) -> Result<Part, SimError> {
    let t = grid.nodes();
    let mut nodes = Vec::new();
    for (j, &tj) in t.iter().enumerate() {
        if cov(tj, tj)? > 0.0 {
            nodes.push(j);
        }
    }
    let k = nodes.len();
    let mut c = vec![0.0; k * k];
    for a in 0..k {
        for b in 0..=a {
            let v = cov(t[nodes[a]], t[nodes[b]])?;
            c[a * k + b] = v;
            c[b * k + a] = v;
        }
    }
    Ok(Part::Dense {
        weight,
        chol: Cholesky::factor(&c, k)?,
        nodes,
    })
}

impl PathSampler {
    pub fn new(model: &AggregateModel, grid: GridPlan, kind: SamplerKind) -> Result<Self, SimError> {
        if (grid.horizon() - model.horizon()).abs() > 1e-12 * model.horizon() {
            return Err(SimError::Grid(format!(
                "grid horizon {} differs from model horizon {}",
                grid.horizon(),
                model.horizon()
            )));
        }
        if kind == SamplerKind::Cholesky {
            let part = dense_part(1.0, |s, t| model.cov(s, t), &grid)?;
            return Ok(Self {
                grid,
                parts: vec![part],
            });
        }
        let t = grid.nodes();
        let mut parts = Vec::new();
        for c in model.components() {
            let w = c.weight;
            let part = match c.kernel {
                KernelSpec::Fbm { hurst: 0.5 } => increments(w, &t, 1.0),
                KernelSpec::TimeChangedBm { hurst } => increments(w, &t, 2.0 * hurst),
                KernelSpec::Fbm { hurst: 1.0 } => Part::Linear {
                    weight: w,
                    coef: t.clone(),
                },
                KernelSpec::Fbm { hurst } => Part::Fgn {
                    weight: w,
                    fgn: FgnSampler::new(hurst, grid.m())?,
                    step_pow: grid.step().powf(hurst),
                },
                ref k => dense_part(w, |s, u| k.cov(s, u), &grid)?,
            };
            parts.push(part);
        }
        Ok(Self { grid, parts })
    }

    pub fn grid(&self) -> GridPlan {
        self.grid
    }

    /// Fills `a` and `b` (length `m + 1`) with two independent paths.
    pub fn sample_pair<R: Rng>(&self, rng: &mut R, s: &mut Scratch, a: &mut [f64], b: &mut [f64]) {
        let m = self.grid.m();
        a.fill(0.0);
        b.fill(0.0);
        s.pa.resize(m + 1, 0.0);
        s.pb.resize(m + 1, 0.0);
        for part in &self.parts {
            match part {
                Part::Increments { weight, sd } => {
                    for out in [&mut *a, &mut *b] {
                        let mut acc = 0.0;
                        for (j, sdj) in sd.iter().enumerate() {
                            let z: f64 = rng.sample(StandardNormal);
                            acc += sdj * z;
                            out[j + 1] += weight * acc;
                        }
                    }
                }
                Part::Linear { weight, coef } => {
                    for out in [&mut *a, &mut *b] {
                        let z: f64 = rng.sample(StandardNormal);
                        for (o, c) in out.iter_mut().zip(coef) {
                            *o += weight * c * z;
                        }
                    }
                }
                Part::Fgn {
                    weight,
                    fgn,
                    step_pow,
                } => {
                    s.a.resize(m, 0.0);
                    s.b.resize(m, 0.0);
                    fgn.sample_pair(rng, &mut s.work, &mut s.z, &mut s.a, &mut s.b);
                    integrate_into(&s.a, *step_pow, &mut s.pa);
                    integrate_into(&s.b, *step_pow, &mut s.pb);
                    for j in 0..=m {
                        a[j] += weight * s.pa[j];
                        b[j] += weight * s.pb[j];
                    }
                }
                Part::Dense {
                    weight,
                    chol,
                    nodes,
                } => {
                    s.a.resize(nodes.len(), 0.0);
                    for out in [&mut *a, &mut *b] {
                        chol.sample_into(rng, &mut s.z, &mut s.a);
                        for (k, &j) in nodes.iter().enumerate() {
                            out[j] += weight * s.a[k];
                        }
                    }
                }
            }
        }
    }

    /// `n` paths from `seed`, identical for any worker count.
    pub fn sample_batch(&self, n: usize, seed: u64, workers: usize) -> PathBatch {
        let w = self.grid.m() + 1;
        let pairs = (n as u64).div_ceil(2);
        let blocks = run_blocks(pairs, workers, |range| {
            let mut s = Scratch::default();
            let (mut a, mut b) = (vec![0.0; w], vec![0.0; w]);
            let mut out = Vec::with_capacity(2 * w * (range.end - range.start) as usize);
            for p in range {
                let mut rng = stream(seed, StreamDomain::Gaussian, p);
                self.sample_pair(&mut rng, &mut s, &mut a, &mut b);
                out.extend_from_slice(&a);
                if 2 * p + 1 < n as u64 {
                    out.extend_from_slice(&b);
                }
            }
            out
        });
        PathBatch {
            grid: self.grid,
            n,
            data: blocks.into_iter().flatten().collect(),
        }
    }
}

fn increments(weight: f64, t: &[f64], p: f64) -> Part {
    let sd = t
        .windows(2)
        .map(|w| (w[1].powf(p) - w[0].powf(p)).max(0.0).sqrt())
        .collect();
    Part::Increments { weight, sd }
}

/// Exact draws of the aggregate on the grid from one Cholesky factor of
/// `Σ λ_i² Cov_i`.
pub fn sample_paths_cholesky(
    model: &AggregateModel,
    grid: GridPlan,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<PathBatch, SimError> {
    Ok(PathSampler::new(model, grid, SamplerKind::Cholesky)?.sample_batch(n, seed, workers))
}

/// fBm paths by circulant embedding (Cholesky fallback if the embedding
/// fails).
pub fn sample_fbm_circulant(
    hurst: f64,
    grid: GridPlan,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<PathBatch, SimError> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(SimError::InvalidArgument(format!("hurst {hurst} outside (0, 1)")));
    }
    let sampler = PathSampler {
        grid,
        parts: vec![Part::Fgn {
            weight: 1.0,
            fgn: FgnSampler::new(hurst, grid.m())?,
            step_pow: grid.step().powf(hurst),
        }],
    };
    Ok(sampler.sample_batch(n, seed, workers))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Crude,
    Importance,
    Extrapolated,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Crude => "CRUDE",
            Method::Importance => "IMPORTANCE",
            Method::Extrapolated => "EXTRAPOLATED",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationEstimate {
    pub u: f64,
    pub p_hat: f64,
    pub stderr: f64,
    pub n: u64,
    pub ci95: (f64, f64),
    pub method: Method,
    pub grid: GridPlan,
    pub seed: u64,
    /// Paths that crossed.
    pub hits: u64,
    /// Effective sample size (importance sampling only).
    pub ess: Option<f64>,
    /// `ln p_hat`, finite where `p_hat` underflows.
    pub log_p_hat: f64,
    pub flags: Vec<String>,
}

pub const CSV_HEADER: [&str; 11] = [
    "u", "method", "m", "n", "p_hat", "stderr", "ci_lo", "ci_hi", "ess", "seed", "log10_p_hat",
];

impl SimulationEstimate {
    fn crude(u: f64, hits: u64, n: u64, grid: GridPlan, seed: u64) -> Self {
        let p = hits as f64 / n as f64;
        let stderr = (p * (1.0 - p) / n as f64).sqrt();
        Self {
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

    pub fn csv_record(&self) -> Vec<String> {
        vec![
            format!("{}", self.u),
            self.method.to_string(),
            self.grid.m().to_string(),
            self.n.to_string(),
            format!("{:.12e}", self.p_hat),
            format!("{:.6e}", self.stderr),
            format!("{:.6e}", self.ci95.0),
            format!("{:.6e}", self.ci95.1),
            self.ess.map(|e| format!("{e:.1}")).unwrap_or_default(),
            self.seed.to_string(),
            format!("{:.12e}", self.log_p_hat / std::f64::consts::LN_10),
        ]
    }
}

fn check_n(n: u64) -> Result<(), SimError> {
    if n < 1000 {
        return Err(SimError::InvalidArgument(format!("n = {n} must be at least 1000")));
    }
    Ok(())
}

/// Levels, coarsest first, that crossing is evaluated on. Each level is a
/// subsampling stride of the finest grid.
fn strides(finest: &GridPlan, grids: &[GridPlan]) -> Result<Vec<usize>, SimError> {
    let mut s: Vec<usize> = grids
        .iter()
        .map(|g| {
            if g.nests_in(finest) {
                Ok(finest.m() / g.m())
            } else {
                Err(SimError::Grid(format!("{g} is not nested in {finest}")))
            }
        })
        .collect::<Result<_, _>>()?;
    s.sort_unstable_by(|a, b| b.cmp(a));
    s.dedup();
    Ok(s)
}

/// Index of the coarsest level on which the path crosses, or `levels` if
/// none does. Nested grids make crossing monotone across levels.
fn first_crossing(path: &[f64], trend: &[f64], u: f64, strides: &[usize]) -> usize {
    for (k, &s) in strides.iter().enumerate() {
        if path
            .iter()
            .zip(trend)
            .step_by(s)
            .any(|(x, g)| x - g > u)
        {
            return k;
        }
    }
    strides.len()
}

/// Per-block counts of the first crossing level; the last slot counts
/// paths that never cross.
fn crossing_counts(
    sampler: &PathSampler,
    trend: &[f64],
    u: f64,
    strides: &[usize],
    n: u64,
    seed: u64,
    workers: usize,
) -> Vec<Vec<u64>> {
    let w = sampler.grid.m() + 1;
    let levels = strides.len();
    run_blocks(n.div_ceil(2), workers, |range| {
        let mut s = Scratch::default();
        let (mut a, mut b) = (vec![0.0; w], vec![0.0; w]);
        let mut counts = vec![0u64; levels + 1];
        for p in range {
            let mut rng = stream(seed, StreamDomain::Gaussian, p);
            sampler.sample_pair(&mut rng, &mut s, &mut a, &mut b);
            counts[first_crossing(&a, trend, u, strides)] += 1;
            if 2 * p + 1 < n {
                counts[first_crossing(&b, trend, u, strides)] += 1;
            }
        }
        counts
    })
}

fn trend_at_nodes(model: &AggregateModel, grid: &GridPlan) -> Vec<f64> {
    grid.nodes().iter().map(|&t| model.trend().value(t)).collect()
}

/// Crude Monte Carlo of the grid crossing probability.
pub fn crossing_prob_mc(
    model: &AggregateModel,
    u: f64,
    grid: GridPlan,
    n: u64,
    seed: u64,
    workers: usize,
) -> Result<SimulationEstimate, SimError> {
    check_n(n)?;
    let sampler = PathSampler::new(model, grid, SamplerKind::Composite)?;
    let trend = trend_at_nodes(model, &grid);
    let blocks = crossing_counts(&sampler, &trend, u, &[1], n, seed, workers);
    let hits: u64 = blocks.iter().map(|c| c[0]).sum();
    Ok(SimulationEstimate::crude(u, hits, n, grid, seed))
}

/// Mean-shift importance sampling: paths are shifted by
/// `μ(t) = x* Cov(X(t), X(T)) / Var X(T)` with `x* = u + g(T)` and weighted
/// by `exp(-θ X(T) + θ² Var X(T) / 2)`, `θ = x* / Var X(T)`, where `X(T)` is
/// the shifted endpoint.
pub fn crossing_prob_is(
    model: &AggregateModel,
    u: f64,
    grid: GridPlan,
    n: u64,
    seed: u64,
    workers: usize,
) -> Result<SimulationEstimate, SimError> {
    check_n(n)?;
    let t_end = model.horizon();
    let var_t = model.cov(t_end, t_end)?;
    if !(var_t > 0.0) {
        return Err(SimError::InvalidArgument("Var X(T) must be positive".into()));
    }
    let x_star = u + model.trend().value(t_end);
    let theta = x_star / var_t;
    let nodes = grid.nodes();
    let shift = nodes
        .iter()
        .map(|&t| Ok(x_star * model.cov(t, t_end)? / var_t))
        .collect::<Result<Vec<f64>, KernelError>>()?;
    // Crossing level per node for the unshifted path.
    let trend = trend_at_nodes(model, &grid);
    let level: Vec<f64> = trend
        .iter()
        .zip(&shift)
        .map(|(g, mu)| u + g - mu)
        .collect();
    let sampler = PathSampler::new(model, grid, SamplerKind::Composite)?;
    let w = grid.m() + 1;

    // Weight = exp(-x*²/(2V)) · exp(-θ X(T)) for the unshifted endpoint X(T).
    let blocks = run_blocks(n.div_ceil(2), workers, |range| {
        let mut s = Scratch::default();
        let (mut a, mut b) = (vec![0.0; w], vec![0.0; w]);
        let (mut s1, mut s2, mut hits) = (0.0f64, 0.0f64, 0u64);
        for p in range {
            let mut rng = stream(seed, StreamDomain::Gaussian, p);
            sampler.sample_pair(&mut rng, &mut s, &mut a, &mut b);
            let paths: &[&[f64]] = if 2 * p + 1 < n { &[&a, &b] } else { &[&a] };
            for path in paths {
                if path.iter().zip(&level).any(|(x, l)| x > l) {
                    let e = (-theta * path[w - 1]).exp();
                    s1 += e;
                    s2 += e * e;
                    hits += 1;
                }
            }
        }
        (s1, s2, hits)
    });
    let (mut s1, mut s2, mut hits) = (0.0, 0.0, 0u64);
    for (a, b, h) in blocks {
        s1 += a;
        s2 += b;
        hits += h;
    }
    let nf = n as f64;
    let log_scale = -x_star * x_star / (2.0 * var_t);
    let mean = s1 / nf;
    let var = (s2 / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
    let scale = log_scale.exp();
    let p_hat = scale * mean;
    let stderr = scale * (var / nf).sqrt();
    let ess = if s2 > 0.0 { s1 * s1 / s2 } else { 0.0 };
    let mut flags = Vec::new();
    if ess < MIN_ESS {
        flags.push(format!("LOW_ESS({ess:.1})"));
    }
    Ok(SimulationEstimate {
        u,
        p_hat,
        stderr,
        n,
        ci95: ((p_hat - 1.96 * stderr).max(0.0), p_hat + 1.96 * stderr),
        method: Method::Importance,
        grid,
        seed,
        hits,
        ess: Some(ess),
        log_p_hat: log_scale + mean.ln(),
        flags,
    })
}

/// One row of a convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasRow {
    pub estimate: SimulationEstimate,
    /// `p_hat(finest) - p_hat(this grid)`.
    pub gap_to_finest: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasTable {
    /// Coarsest grid first.
    pub rows: Vec<BiasRow>,
    /// Exponent `r` in `p(δ) ≈ p + c δ^r` fitted from the three finest
    /// grids, when that fit is usable.
    pub fitted_exponent: Option<f64>,
    /// Exponent used for extrapolation: the fitted one, or `α_min / 2`.
    pub exponent: f64,
    pub extrapolated: SimulationEstimate,
}

pub const BIAS_CSV_HEADER: [&str; 8] = [
    "m", "p_hat", "stderr", "ci_lo", "ci_hi", "gap_to_finest", "exponent", "method",
];

impl BiasTable {
    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        let mut out: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.estimate.grid.m().to_string(),
                    format!("{:.12e}", r.estimate.p_hat),
                    format!("{:.6e}", r.estimate.stderr),
                    format!("{:.6e}", r.estimate.ci95.0),
                    format!("{:.6e}", r.estimate.ci95.1),
                    format!("{:.6e}", r.gap_to_finest),
                    String::new(),
                    Method::Crude.to_string(),
                ]
            })
            .collect();
        let e = &self.extrapolated;
        out.push(vec![
            "inf".into(),
            format!("{:.12e}", e.p_hat),
            format!("{:.6e}", e.stderr),
            format!("{:.6e}", e.ci95.0),
            format!("{:.6e}", e.ci95.1),
            String::new(),
            format!("{:.6}", self.exponent),
            Method::Extrapolated.to_string(),
        ]);
        out
    }
}

/// Richardson extrapolation from the two finest grids: with refinement ratio
/// `k` and exponent `r`, `p = (k^r p_fine - p_coarse) / (k^r - 1)`.
fn richardson(p_fine: f64, p_coarse: f64, ratio: f64, r: f64) -> f64 {
    let kr = ratio.powf(r);
    (kr * p_fine - p_coarse) / (kr - 1.0)
}

/// Fits `r` from three nested levels with a common refinement ratio.
fn fit_exponent(p: &[f64], m: &[usize]) -> Option<f64> {
    let k = p.len();
    if k < 3 {
        return None;
    }
    let (p0, p1, p2) = (p[k - 3], p[k - 2], p[k - 1]);
    let (r1, r2) = (m[k - 2] as f64 / m[k - 3] as f64, m[k - 1] as f64 / m[k - 2] as f64);
    if (r1 - r2).abs() > 1e-12 {
        return None;
    }
    let (d_coarse, d_fine) = (p1 - p0, p2 - p1);
    if !(d_coarse > 0.0 && d_fine > 0.0) {
        return None;
    }
    let r = (d_coarse / d_fine).ln() / r1.ln();
    (r > 0.05 && r <= 2.0).then_some(r)
}

/// Crude estimates on nested grids from the same finest-grid paths, plus a
/// Richardson-extrapolated value with a jackknife standard error.
pub fn convergence_study(
    model: &AggregateModel,
    u: f64,
    grids: &[GridPlan],
    n: u64,
    seed: u64,
    workers: usize,
) -> Result<BiasTable, SimError> {
    check_n(n)?;
    if grids.len() < 2 {
        return Err(SimError::InvalidArgument("need at least two grids".into()));
    }
    let finest = *grids
        .iter()
        .max_by_key(|g| g.m())
        .ok_or_else(|| SimError::InvalidArgument("no grids".into()))?;
    let strides = strides(&finest, grids)?;
    let ms: Vec<usize> = strides.iter().map(|s| finest.m() / s).collect();
    let sampler = PathSampler::new(model, finest, SamplerKind::Composite)?;
    let trend = trend_at_nodes(model, &finest);
    let blocks = crossing_counts(&sampler, &trend, u, &strides, n, seed, workers);
    let levels = strides.len();

    // p_k = P(first crossing level <= k).
    let probs = |bl: &[&Vec<u64>]| -> Vec<f64> {
        let total: u64 = bl.iter().map(|c| c.iter().sum::<u64>()).sum();
        let mut acc = 0u64;
        (0..levels)
            .map(|k| {
                acc += bl.iter().map(|c| c[k]).sum::<u64>();
                acc as f64 / total as f64
            })
            .collect()
    };
    let all: Vec<&Vec<u64>> = blocks.iter().collect();
    let p = probs(&all);

    let alpha_min = model
        .expansions()
        .map_err(|e| SimError::InvalidArgument(e.to_string()))?
        .iter()
        .map(|e| e.alpha)
        .fold(f64::INFINITY, f64::min);
    let fitted_exponent = fit_exponent(&p, &ms);
    let exponent = fitted_exponent.unwrap_or(alpha_min / 2.0);
    let ratio = ms[levels - 1] as f64 / ms[levels - 2] as f64;
    let extrap = |p: &[f64]| -> f64 {
        let r = fit_exponent(p, &ms).unwrap_or(alpha_min / 2.0);
        richardson(p[levels - 1], p[levels - 2], ratio, r)
    };
    let value = extrap(&p);

    // Delete-a-group jackknife over contiguous groups of blocks.
    let g = JACKKNIFE_GROUPS.min(blocks.len());
    let stderr = if g >= 2 {
        let bounds: Vec<usize> = (0..=g).map(|k| k * blocks.len() / g).collect();
        let loo: Vec<f64> = (0..g)
            .map(|k| {
                let keep: Vec<&Vec<u64>> = blocks[..bounds[k]]
                    .iter()
                    .chain(&blocks[bounds[k + 1]..])
                    .collect();
                extrap(&probs(&keep))
            })
            .collect();
        let mean = loo.iter().sum::<f64>() / g as f64;
        ((g as f64 - 1.0) / g as f64 * loo.iter().map(|x| (x - mean).powi(2)).sum::<f64>()).sqrt()
    } else {
        // Single block: delta-method variance of the linear combination.
        let kr = ratio.powf(exponent);
        let (a, b) = (kr / (kr - 1.0), -1.0 / (kr - 1.0));
        let (pf, pc) = (p[levels - 1], p[levels - 2]);
        // Nested indicators: E[h_f h_c] = p_c.
        let second = a * a * pf + b * b * pc + 2.0 * a * b * pc;
        ((second - value * value).max(0.0) / n as f64).sqrt()
    };

    let rows = ms
        .iter()
        .zip(&p)
        .map(|(&m, &pk)| {
            let grid = GridPlan::new(m, finest.horizon()).unwrap_or(finest);
            let hits = (pk * n as f64).round() as u64;
            BiasRow {
                estimate: SimulationEstimate::crude(u, hits, n, grid, seed),
                gap_to_finest: p[levels - 1] - pk,
            }
        })
        .collect();
    let extrapolated = SimulationEstimate {
        u,
        p_hat: value,
        stderr,
        n,
        ci95: (value - 1.96 * stderr, value + 1.96 * stderr),
        method: Method::Extrapolated,
        grid: finest,
        seed,
        hits: (p[levels - 1] * n as f64).round() as u64,
        ess: None,
        log_p_hat: value.ln(),
        flags: if fitted_exponent.is_none() {
            vec![format!("EXPONENT_FALLBACK({exponent})")]
        } else {
            vec![]
        },
    };
    Ok(BiasTable {
        rows,
        fitted_exponent,
        exponent,
        extrapolated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Trend;

    fn bm(c: f64) -> AggregateModel {
        AggregateModel::brownian(c, 1.0).unwrap()
    }

    #[test]
    fn grid_nodes() {
        let g = GridPlan::new(3, 0.7).unwrap();
        let t = g.nodes();
        assert_eq!(t.len(), 4);
        assert_eq!(t[3], 0.7);
        assert!(t.windows(2).all(|w| w[1] > w[0]));
        assert!(GridPlan::new(0, 1.0).is_err());
        assert!(GridPlan::new(256, 1.0).unwrap().nests_in(&GridPlan::new(1024, 1.0).unwrap()));
    }

    #[test]
    fn single_node_grid_gives_standard_normal() {
        let batch = sample_paths_cholesky(&bm(0.0), GridPlan::new(1, 1.0).unwrap(), 20_000, 1, 1).unwrap();
        let x: Vec<f64> = (0..batch.n).map(|i| batch.row(i)[1]).collect();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        assert!(mean.abs() < 0.03);
        assert!((var - 1.0).abs() < 0.04);
        assert!((0..batch.n).all(|i| batch.row(i)[0] == 0.0));
    }

    #[test]
    fn dump_roundtrip() {
        let batch = sample_fbm_circulant(0.7, GridPlan::new(8, 1.0).unwrap(), 5, 3, 1).unwrap();
        let mut buf = Vec::new();
        batch.write_dump(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"GPPATHS1");
        assert_eq!(buf.len(), 16 + 5 * 9 * 8);
        let back = PathBatch::read_dump(buf.as_slice(), 1.0).unwrap();
        assert_eq!(back, batch);
    }

    #[test]
    fn level_far_below_is_certain() {
        let e = crossing_prob_mc(&bm(0.0), -10.0, GridPlan::new(64, 1.0).unwrap(), 2000, 1, 1).unwrap();
        assert_eq!(e.p_hat, 1.0);
    }

    #[test]
    fn is_without_tilt_is_crude() {
        let model = AggregateModel::single(KernelSpec::fbm(0.5).unwrap(), 1.0, Trend::linear(1.0).unwrap(), 1.0).unwrap();
        let g = GridPlan::new(64, 1.0).unwrap();
        let is = crossing_prob_is(&model, -1.0, g, 4000, 9, 1).unwrap();
        let crude = crossing_prob_mc(&model, -1.0, g, 4000, 9, 1).unwrap();
        assert_eq!(is.p_hat, crude.p_hat);
        assert_eq!(is.ess, Some(crude.hits as f64));
    }

    #[test]
    fn batch_is_worker_independent() {
        let model = example_mixture();
        let s = PathSampler::new(&model, GridPlan::new(32, 1.0).unwrap(), SamplerKind::Composite).unwrap();
        assert_eq!(s.sample_batch(5000, 4, 1), s.sample_batch(5000, 4, 3));
    }

    fn example_mixture() -> AggregateModel {
        use crate::asymptotics::Component;
        AggregateModel::new(
            vec![
                Component {
                    weight: 1.0,
                    kernel: KernelSpec::fbm(0.3).unwrap(),
                },
                Component {
                    weight: 0.5,
                    kernel: KernelSpec::sub_fbm(0.6).unwrap(),
                },
                Component {
                    weight: 2.0,
                    kernel: KernelSpec::time_changed_bm(0.4).unwrap(),
                },
            ],
            Trend::zero(),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn richardson_formula() {
        assert!((richardson(0.5, 0.5, 2.0, 0.5) - 0.5).abs() < 1e-15);
        let r = richardson(1.0 - 0.1 * 0.5f64.sqrt(), 1.0 - 0.1, 2.0, 0.5);
        assert!((r - 1.0).abs() < 1e-14);
    }
}
