//! Covariance kernels for the Gaussian components and their local behaviour
//! at the horizon.
//!
//! Every component is summarised near `T` by a [`LocalExpansion`]:
//!
//! ```text
//! sigma(t)      = sigma_tilde - A (T - t)^beta + o((T - t)^beta)
//! 1 - r(s, t)   = D |t - s|^alpha + o(|t - s|^alpha)
//! E(X_t - X_s)^2 <= C |t - s|^gamma     on [delta, T]
//! ```
//!
//! The self-similar families have closed forms. The time-averaged fBm
//! correlation coefficient and everything about tabulated kernels are
//! obtained by log-log regression over `T - t in [1e-4 T, 1e-2 T]`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::special::linear_fit;

/// Relative tolerance used to match query times against a tabulated grid.
const GRID_MATCH_TOL: f64 = 1e-12;
const FIT_WINDOW: (f64, f64) = (1e-4, 1e-2);
const FIT_POINTS: usize = 20;
/// Minimum coefficient of determination accepted from a log-log fit.
const MIN_FIT_R2: f64 = 0.995;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("{family}: parameter `{name}` = {value} is outside {range}")]
    InvalidParameter {
        family: &'static str,
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("time {0} is not a node of the tabulated kernel")]
    OffGrid(f64),
    #[error("tabulated covariance is not symmetric at ({s}, {t}): {a} vs {b}")]
    Asymmetric { s: f64, t: f64, a: f64, b: f64 },
    #[error("tabulated covariance is missing the entry ({s}, {t})")]
    MissingEntry { s: f64, t: f64 },
    #[error("tabulated covariance is not positive semidefinite: smallest eigenvalue {min_eigenvalue} < floor {floor}")]
    NotPositiveSemidefinite { min_eigenvalue: f64, floor: f64 },
    #[error("expansion fit failed: {0}")]
    FitFailure(String),
    #[error("horizon must be positive, got {0}")]
    InvalidHorizon(f64),
    #[error("unknown kernel family `{0}`")]
    UnknownFamily(String),
    #[error("kernel `{family}` is missing parameter `{name}`")]
    MissingParameter { family: String, name: String },
    #[error("kernel `{family}` does not take parameter `{name}`")]
    UnknownParameter { family: String, name: String },
    #[error("trend: {0}")]
    Trend(String),
    #[error("csv input: {0}")]
    Csv(String),
}

/// Covariance on an explicit set of time points.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedKernel {
    times: Vec<f64>,
    /// Row-major `times.len() x times.len()` matrix.
    cov: Vec<f64>,
}

impl TabulatedKernel {
    /// Builds a table from `(s, t, cov)` triples. Each unordered pair needs at
    /// least one entry; when both orders are present they must agree.
    pub fn from_triples(triples: &[(f64, f64, f64)]) -> Result<Self, KernelError> {
        let mut times: Vec<f64> = Vec::new();
        for &(s, t, _) in triples {
            for x in [s, t] {
                if x < 0.0 || !x.is_finite() {
                    return Err(KernelError::NegativeTime(x));
                }
                times.push(x);
            }
        }
        times.sort_by(|a, b| a.total_cmp(b));
        times.dedup_by(|a, b| (*a - *b).abs() <= GRID_MATCH_TOL * b.abs().max(1.0));
        let n = times.len();
        let mut cov = vec![f64::NAN; n * n];
        let scale = triples
            .iter()
            .map(|e| e.2.abs())
            .fold(0.0_f64, f64::max)
            .max(f64::MIN_POSITIVE);
        for &(s, t, c) in triples {
            let i = find_node(&times, s).ok_or(KernelError::OffGrid(s))?;
            let j = find_node(&times, t).ok_or(KernelError::OffGrid(t))?;
            for (a, b) in [(i, j), (j, i)] {
                let slot = &mut cov[a * n + b];
                if slot.is_nan() {
                    *slot = c;
                } else if (*slot - c).abs() > 1e-12 * scale {
                    return Err(KernelError::Asymmetric {
                        s: times[a],
                        t: times[b],
                        a: *slot,
                        b: c,
                    });
                }
            }
        }
        if let Some(k) = cov.iter().position(|c| c.is_nan()) {
            return Err(KernelError::MissingEntry {
                s: times[k / n],
                t: times[k % n],
            });
        }
        let kernel = Self { times, cov };
        kernel.check_psd()?;
        Ok(kernel)
    }

    /// Loads `s,t,cov` CSV rows (with that header).
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, KernelError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| KernelError::Csv(e.to_string()))?
            .clone();
        let expected = ["s", "t", "cov"];
        if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(KernelError::Csv(format!(
                "expected header `s,t,cov`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut triples = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| KernelError::Csv(e.to_string()))?;
            let field = |k: usize| -> Result<f64, KernelError> {
                rec[k].parse::<f64>().map_err(|e| {
                    KernelError::Csv(format!("row {}: column {}: {e}", line + 2, expected[k]))
                })
            };
            triples.push((field(0)?, field(1)?, field(2)?));
        }
        Self::from_triples(&triples)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self, KernelError> {
        let file = std::fs::File::open(path)
            .map_err(|e| KernelError::Csv(format!("{}: {e}", path.display())))?;
        Self::from_csv_reader(file)
    }

    /// Tabulates an analytic kernel on the given times.
    pub fn from_kernel(kernel: &KernelSpec, times: &[f64]) -> Result<Self, KernelError> {
        let mut triples = Vec::with_capacity(times.len() * (times.len() + 1) / 2);
        for (i, &s) in times.iter().enumerate() {
            for &t in &times[i..] {
                triples.push((s, t, kernel.cov(s, t)?));
            }
        }
        Self::from_triples(&triples)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.cov[i * self.times.len() + j]
    }

    fn cov(&self, s: f64, t: f64) -> Result<f64, KernelError> {
        let i = find_node(&self.times, s).ok_or(KernelError::OffGrid(s))?;
        let j = find_node(&self.times, t).ok_or(KernelError::OffGrid(t))?;
        Ok(self.entry(i, j))
    }

    fn check_psd(&self) -> Result<(), KernelError> {
        let n = self.times.len();
        let m = DMatrix::from_row_slice(n, n, &self.cov);
        let trace = m.trace();
        let min = m
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let floor = -1e-8 * trace.abs();
        if min < floor {
            return Err(KernelError::NotPositiveSemidefinite {
                min_eigenvalue: min,
                floor,
            });
        }
        Ok(())
    }
}

fn find_node(times: &[f64], x: f64) -> Option<usize> {
    let tol = GRID_MATCH_TOL * x.abs().max(1.0);
    let idx = times.partition_point(|&v| v < x - tol);
    (idx < times.len() && (times[idx] - x).abs() <= tol).then_some(idx)
}

/// A parameterised covariance model for one Gaussian component.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    /// Fractional Brownian motion, `H in (0, 1]`.
    Fbm { hurst: f64 },
    /// Sub-fractional Brownian motion, `H in (0, 1)`.
    SubFbm { hurst: f64 },
    /// Bi-fractional Brownian motion, `K in (0, 1]`, `H in (0, 1)`.
    BiFbm { k: f64, hurst: f64 },
    /// Brownian motion run on the clock `t^(2H)`, `H in (0, 1]`.
    TimeChangedBm { hurst: f64 },
    /// `sqrt(2H + 2) / t * int_0^t B_H(s) ds`, `H in (0, 1]`.
    TimeAvgFbm { hurst: f64 },
    Tabulated(Arc<TabulatedKernel>),
}

fn check_range(
    family: &'static str,
    name: &'static str,
    value: f64,
    lo: f64,
    hi: f64,
    hi_closed: bool,
) -> Result<(), KernelError> {
    let ok = value > lo && (value < hi || (hi_closed && value == hi));
    if ok {
        Ok(())
    } else {
        Err(KernelError::InvalidParameter {
            family,
            name,
            value,
            range: if hi_closed { "(0, 1]" } else { "(0, 1)" },
        })
    }
}

impl KernelSpec {
    pub fn fbm(hurst: f64) -> Result<Self, KernelError> {
        let k = KernelSpec::Fbm { hurst };
        k.validate()?;
        Ok(k)
    }

    pub fn sub_fbm(hurst: f64) -> Result<Self, KernelError> {
        let k = KernelSpec::SubFbm { hurst };
        k.validate()?;
        Ok(k)
    }

    pub fn bi_fbm(k: f64, hurst: f64) -> Result<Self, KernelError> {
        let s = KernelSpec::BiFbm { k, hurst };
        s.validate()?;
        Ok(s)
    }

    pub fn time_changed_bm(hurst: f64) -> Result<Self, KernelError> {
        let k = KernelSpec::TimeChangedBm { hurst };
        k.validate()?;
        Ok(k)
    }

    pub fn time_avg_fbm(hurst: f64) -> Result<Self, KernelError> {
        let k = KernelSpec::TimeAvgFbm { hurst };
        k.validate()?;
        Ok(k)
    }

    pub fn tabulated(table: TabulatedKernel) -> Self {
        KernelSpec::Tabulated(Arc::new(table))
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            KernelSpec::Fbm { .. } => "fbm",
            KernelSpec::SubFbm { .. } => "sub_fbm",
            KernelSpec::BiFbm { .. } => "bi_fbm",
            KernelSpec::TimeChangedBm { .. } => "time_changed_bm",
            KernelSpec::TimeAvgFbm { .. } => "time_avg_fbm",
            KernelSpec::Tabulated(_) => "tabulated",
        }
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        let name = self.family_name();
        match *self {
            KernelSpec::Fbm { hurst }
            | KernelSpec::TimeChangedBm { hurst }
            | KernelSpec::TimeAvgFbm { hurst } => check_range(name, "hurst", hurst, 0.0, 1.0, true),
            KernelSpec::SubFbm { hurst } => check_range(name, "hurst", hurst, 0.0, 1.0, false),
            KernelSpec::BiFbm { k, hurst } => {
                check_range(name, "k", k, 0.0, 1.0, true)?;
                check_range(name, "hurst", hurst, 0.0, 1.0, false)
            }
            KernelSpec::Tabulated(_) => Ok(()),
        }
    }

    /// Self-similarity index when the family has one.
    pub fn self_similarity(&self) -> Option<f64> {
        match *self {
            KernelSpec::Fbm { hurst }
            | KernelSpec::SubFbm { hurst }
            | KernelSpec::TimeChangedBm { hurst }
            | KernelSpec::TimeAvgFbm { hurst } => Some(hurst),
            KernelSpec::BiFbm { k, hurst } => Some(k * hurst),
            KernelSpec::Tabulated(_) => None,
        }
    }

    /// `Cov(X(s), X(t))`.
    pub fn cov(&self, s: f64, t: f64) -> Result<f64, KernelError> {
        for x in [s, t] {
            if x < 0.0 || x.is_nan() {
                return Err(KernelError::NegativeTime(x));
            }
        }
        self.validate()?;
        let v = match *self {
            KernelSpec::Fbm { hurst } => {
                let p = 2.0 * hurst;
                0.5 * (s.powf(p) + t.powf(p) - (t - s).abs().powf(p))
            }
            KernelSpec::SubFbm { hurst } => {
                let p = 2.0 * hurst;
                s.powf(p) + t.powf(p) - 0.5 * ((s + t).powf(p) + (t - s).abs().powf(p))
            }
            KernelSpec::BiFbm { k, hurst } => {
                let p = 2.0 * hurst;
                ((s.powf(p) + t.powf(p)).powf(k) - (t - s).abs().powf(p * k)) / 2f64.powf(k)
            }
            KernelSpec::TimeChangedBm { hurst } => s.min(t).powf(2.0 * hurst),
            KernelSpec::TimeAvgFbm { hurst } => time_avg_cov(hurst, s, t),
            KernelSpec::Tabulated(ref tab) => tab.cov(s, t)?,
        };
        Ok(v)
    }

    pub fn variance(&self, t: f64) -> Result<f64, KernelError> {
        self.cov(t, t)
    }

    /// Correlation coefficient; zero-variance points are treated as
    /// uncorrelated.
    pub fn correlation(&self, s: f64, t: f64) -> Result<f64, KernelError> {
        let c = self.cov(s, t)?;
        let v = self.variance(s)? * self.variance(t)?;
        Ok(if v > 0.0 { c / v.sqrt() } else { 0.0 })
    }

    /// Numeric parameters in their canonical order.
    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            KernelSpec::Fbm { hurst }
            | KernelSpec::SubFbm { hurst }
            | KernelSpec::TimeChangedBm { hurst }
            | KernelSpec::TimeAvgFbm { hurst } => vec![("hurst", hurst)],
            KernelSpec::BiFbm { k, hurst } => vec![("k", k), ("hurst", hurst)],
            KernelSpec::Tabulated(_) => vec![],
        }
    }

    /// Builds an analytic kernel from a family name and named parameters.
    /// Tabulated kernels come from CSV instead (see [`TabulatedKernel`]).
    pub fn from_params(family: &str, params: &BTreeMap<String, f64>) -> Result<Self, KernelError> {
        let expected: &[&str] = match family {
            "fbm" | "sub_fbm" | "time_changed_bm" | "time_avg_fbm" => &["hurst"],
            "bi_fbm" => &["k", "hurst"],
            "tabulated" => {
                return Err(KernelError::MissingParameter {
                    family: family.into(),
                    name: "file".into(),
                })
            }
            other => return Err(KernelError::UnknownFamily(other.into())),
        };
        if let Some(extra) = params.keys().find(|k| !expected.contains(&k.as_str())) {
            return Err(KernelError::UnknownParameter {
                family: family.into(),
                name: extra.clone(),
            });
        }
        let get = |name: &str| {
            params
                .get(name)
                .copied()
                .ok_or_else(|| KernelError::MissingParameter {
                    family: family.into(),
                    name: name.into(),
                })
        };
        match family {
            "fbm" => Self::fbm(get("hurst")?),
            "sub_fbm" => Self::sub_fbm(get("hurst")?),
            "time_changed_bm" => Self::time_changed_bm(get("hurst")?),
            "time_avg_fbm" => Self::time_avg_fbm(get("hurst")?),
            _ => Self::bi_fbm(get("k")?, get("hurst")?),
        }
    }

    /// Key-value section text, e.g. `family = "bi_fbm"` / `k = 0.5` /
    /// `hurst = 0.7`. Tabulated kernels write `file = "<csv_path>"`.
    pub fn to_section(&self, csv_path: Option<&str>) -> String {
        let mut out = format!("family = \"{}\"\n", self.family_name());
        if let KernelSpec::Tabulated(_) = self {
            out.push_str(&format!("file = \"{}\"\n", csv_path.unwrap_or("")));
        }
        for (k, v) in self.params() {
            out.push_str(&format!("{k} = {v:?}\n"));
        }
        out
    }

    /// Parses the output of [`KernelSpec::to_section`]. Relative CSV paths
    /// resolve against `base_dir`.
    pub fn from_section(text: &str, base_dir: &Path) -> Result<Self, KernelError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| KernelError::Csv(e.to_string()))?;
        let family = table
            .get("family")
            .and_then(|v| v.as_str())
            .ok_or_else(|| KernelError::MissingParameter {
                family: "?".into(),
                name: "family".into(),
            })?
            .to_string();
        if family == "tabulated" {
            let file = table
                .get("file")
                .and_then(|v| v.as_str())
                .ok_or_else(|| KernelError::MissingParameter {
                    family: family.clone(),
                    name: "file".into(),
                })?;
            if let Some(extra) = table.keys().find(|k| *k != "family" && *k != "file") {
                return Err(KernelError::UnknownParameter {
                    family,
                    name: extra.clone(),
                });
            }
            return Ok(Self::tabulated(TabulatedKernel::from_csv_path(
                &base_dir.join(file),
            )?));
        }
        let mut params = BTreeMap::new();
        for (k, v) in &table {
            if k == "family" {
                continue;
            }
            let x = v
                .as_float()
                .or(v.as_integer().map(|i| i as f64))
                .ok_or(KernelError::InvalidParameter {
                    family: "section",
                    name: "non-numeric",
                    value: f64::NAN,
                    range: "numeric values",
                })?;
            params.insert(k.clone(), x);
        }
        Self::from_params(&family, &params)
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.family_name())?;
        for (k, v) in self.params() {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

/// Closed-form covariance of the normalised time-averaged fBm:
/// `(p + 2)/(s t) * int_0^s int_0^t Cov_fBm(a, b) db da` with `p = 2H`.
fn time_avg_cov(hurst: f64, s: f64, t: f64) -> f64 {
    if s == 0.0 || t == 0.0 {
        return 0.0;
    }
    let p = 2.0 * hurst;
    let single = (s * t.powf(p + 1.0) + t * s.powf(p + 1.0)) / (p + 1.0);
    let cross = (t.powf(p + 2.0) + s.powf(p + 2.0) - (t - s).abs().powf(p + 2.0))
        / ((p + 1.0) * (p + 2.0));
    (p + 2.0) / (s * t) * 0.5 * (single - cross)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpansionSource {
    Analytic,
    /// Correlation coefficient fitted, standard-deviation terms analytic.
    PartlyFitted,
    Fitted,
}

/// Local characterisation of one component at the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalExpansion {
    pub sigma_tilde: f64,
    pub a: f64,
    pub beta: f64,
    pub d: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub holder_const: f64,
    pub source: ExpansionSource,
    /// Set for `H = 1` fBm, whose correlation is identically one.
    pub degenerate_correlation: bool,
}

impl LocalExpansion {
    fn check(&self) -> Result<(), KernelError> {
        let bad = |what: &str, v: f64| Err(KernelError::FitFailure(format!("{what} = {v}")));
        if !(self.sigma_tilde > 0.0) {
            return bad("sigma_tilde", self.sigma_tilde);
        }
        if !(self.a > 0.0) {
            return bad("A", self.a);
        }
        if !(self.beta > 0.0) {
            return bad("beta", self.beta);
        }
        if !(self.d > 0.0) {
            return bad("D", self.d);
        }
        if !(self.alpha > 0.0 && self.alpha <= 2.0 + 1e-9) {
            return bad("alpha", self.alpha);
        }
        if !(self.gamma > 0.0) {
            return bad("gamma", self.gamma);
        }
        Ok(())
    }
}

/// Settings for the Hölder bound of the increment variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionOptions {
    /// `delta = delta_fraction * T`.
    pub delta_fraction: f64,
    /// Grid points in `[delta, T]` for analytic kernels.
    pub holder_grid: usize,
}

impl Default for ExpansionOptions {
    fn default() -> Self {
        Self {
            delta_fraction: 0.1,
            holder_grid: 64,
        }
    }
}

pub fn local_expansion(kernel: &KernelSpec, horizon: f64) -> Result<LocalExpansion, KernelError> {
    local_expansion_with(kernel, horizon, &ExpansionOptions::default())
}

pub fn local_expansion_with(
    kernel: &KernelSpec,
    horizon: f64,
    opts: &ExpansionOptions,
) -> Result<LocalExpansion, KernelError> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(KernelError::InvalidHorizon(horizon));
    }
    kernel.validate()?;
    let t = horizon;
    let analytic = |sigma_tilde: f64, hs: f64, alpha: f64, d: f64, gamma: f64| LocalExpansion {
        sigma_tilde,
        a: sigma_tilde * hs / t,
        beta: 1.0,
        d,
        alpha,
        gamma,
        holder_const: 0.0,
        source: ExpansionSource::Analytic,
        degenerate_correlation: false,
    };
    let mut exp = match *kernel {
        KernelSpec::Fbm { hurst } => {
            let mut e = analytic(
                t.powf(hurst),
                hurst,
                2.0 * hurst,
                0.5 / t.powf(2.0 * hurst),
                2.0 * hurst,
            );
            e.degenerate_correlation = hurst == 1.0;
            e
        }
        KernelSpec::BiFbm { k, hurst } => {
            let kh = k * hurst;
            analytic(t.powf(kh), kh, 2.0 * kh, 1.0 / (2f64.powf(k) * t.powf(2.0 * kh)), 2.0 * kh)
        }
        KernelSpec::SubFbm { hurst } => {
            let c = 2.0 - 2f64.powf(2.0 * hurst - 1.0);
            analytic(
                c.sqrt() * t.powf(hurst),
                hurst,
                2.0 * hurst,
                1.0 / (2.0 * c * t.powf(2.0 * hurst)),
                hurst / 2.0,
            )
        }
        KernelSpec::TimeChangedBm { hurst } => analytic(t.powf(hurst), hurst, 1.0, hurst / t, 1.0),
        KernelSpec::TimeAvgFbm { hurst } => {
            let corr = fit_correlation(kernel, t)?;
            let mut e = analytic(t.powf(hurst), hurst, 2.0, corr.coefficient, 1.0);
            e.source = ExpansionSource::PartlyFitted;
            e
        }
        KernelSpec::Tabulated(_) => {
            let sd = fit_std_dev(kernel, t)?;
            let corr = fit_correlation(kernel, t)?;
            LocalExpansion {
                sigma_tilde: kernel.variance(t)?.sqrt(),
                a: sd.coefficient,
                beta: sd.exponent,
                d: corr.coefficient,
                alpha: corr.exponent.min(2.0),
                gamma: corr.exponent.min(2.0 * sd.exponent).min(2.0),
                holder_const: 0.0,
                source: ExpansionSource::Fitted,
                degenerate_correlation: false,
            }
        }
    };
    exp.holder_const = holder_constant(kernel, t, exp.gamma, opts)?;
    exp.check()?;
    Ok(exp)
}

/// Power-law fit `y ~ coefficient * h^exponent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFit {
    pub coefficient: f64,
    pub exponent: f64,
    pub r2: f64,
    pub points: usize,
}

/// Lags `h = T - t` used by the fitter: the table nodes inside the window
/// for tabulated kernels, 20 log-spaced lags otherwise.
fn fit_lags(kernel: &KernelSpec, horizon: f64) -> Vec<f64> {
    let (lo, hi) = (FIT_WINDOW.0 * horizon, FIT_WINDOW.1 * horizon);
    match kernel {
        KernelSpec::Tabulated(tab) => tab
            .times()
            .iter()
            .map(|&s| horizon - s)
            .filter(|&h| h >= lo * (1.0 - 1e-9) && h <= hi * (1.0 + 1e-9))
            .collect(),
        _ => (0..FIT_POINTS)
            .map(|k| lo * (hi / lo).powf(k as f64 / (FIT_POINTS - 1) as f64))
            .collect(),
    }
}

fn power_fit(what: &str, lags: &[f64], values: &[f64]) -> Result<PowerFit, KernelError> {
    if lags.len() < 3 {
        return Err(KernelError::FitFailure(format!(
            "{what}: need at least 3 points in the fitting window, found {}",
            lags.len()
        )));
    }
    if let Some((h, v)) = lags.iter().zip(values).find(|(_, v)| !(**v > 0.0)) {
        return Err(KernelError::FitFailure(format!(
            "{what}: non-monotone data, value {v} at lag {h}"
        )));
    }
    let x: Vec<f64> = lags.iter().map(|h| h.ln()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let (intercept, slope) = linear_fit(&x, &y)
        .ok_or_else(|| KernelError::FitFailure(format!("{what}: degenerate lags")))?;
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(&y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 0.0 };
    if r2 < MIN_FIT_R2 {
        return Err(KernelError::FitFailure(format!(
            "{what}: noisy data, log-log R^2 = {r2:.4}"
        )));
    }
    Ok(PowerFit {
        coefficient: intercept.exp(),
        exponent: slope,
        r2,
        points: lags.len(),
    })
}

/// Fits `sigma_tilde - sigma(T - h) ~ A h^beta`.
pub fn fit_std_dev(kernel: &KernelSpec, horizon: f64) -> Result<PowerFit, KernelError> {
    let lags = fit_lags(kernel, horizon);
    let top = kernel.variance(horizon)?.sqrt();
    let drops = lags
        .iter()
        .map(|h| Ok(top - kernel.variance(horizon - h)?.sqrt()))
        .collect::<Result<Vec<_>, KernelError>>()?;
    power_fit("standard deviation", &lags, &drops)
}

/// Fits `1 - r(T - h, T) ~ D h^alpha`.
pub fn fit_correlation(kernel: &KernelSpec, horizon: f64) -> Result<PowerFit, KernelError> {
    let lags = fit_lags(kernel, horizon);
    let gaps = lags
        .iter()
        .map(|h| Ok(1.0 - kernel.correlation(horizon - h, horizon)?))
        .collect::<Result<Vec<_>, KernelError>>()?;
    power_fit("correlation", &lags, &gaps)
}

fn holder_constant(
    kernel: &KernelSpec,
    horizon: f64,
    gamma: f64,
    opts: &ExpansionOptions,
) -> Result<f64, KernelError> {
    let delta = opts.delta_fraction * horizon;
    let pts: Vec<f64> = match kernel {
        KernelSpec::Tabulated(tab) => tab
            .times()
            .iter()
            .copied()
            .filter(|&s| s >= delta && s <= horizon)
            .collect(),
        _ => {
            let n = opts.holder_grid.max(2);
            (0..n)
                .map(|i| delta + (horizon - delta) * i as f64 / (n - 1) as f64)
                .collect()
        }
    };
    let mut best = 0.0_f64;
    for (i, &s) in pts.iter().enumerate() {
        for &t in &pts[i + 1..] {
            let incr = kernel.variance(s)? + kernel.variance(t)? - 2.0 * kernel.cov(s, t)?;
            best = best.max(incr / (t - s).abs().powf(gamma));
        }
    }
    Ok(best)
}

/// Residual of the declared expansion at one lag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowResidual {
    pub lag: f64,
    /// `|sigma(T - h) - (sigma_tilde - A h^beta)|`
    pub sigma_residual: f64,
    /// `|1 - r(T - h, T) - D h^alpha|`
    pub corr_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionReport {
    pub fitted_beta: Option<f64>,
    pub fitted_alpha: Option<f64>,
    /// Observed order of the standard-deviation remainder.
    pub sigma_remainder_order: Option<f64>,
    /// Observed order of the correlation remainder.
    pub corr_remainder_order: Option<f64>,
    pub windows: Vec<WindowResidual>,
    pub beta_ok: bool,
    pub alpha_ok: bool,
    pub pass: bool,
    pub notes: Vec<String>,
}

/// Exponent tolerance used by [`verify_expansion`].
pub const EXPONENT_TOLERANCE: f64 = 0.05;

/// Checks a declared expansion against the kernel on shrinking windows.
pub fn verify_expansion(kernel: &KernelSpec, horizon: f64, exp: &LocalExpansion) -> ExpansionReport {
    let mut notes = Vec::new();
    let fitted_beta = match fit_std_dev(kernel, horizon) {
        Ok(f) => Some(f.exponent),
        Err(e) => {
            notes.push(e.to_string());
            None
        }
    };
    let degenerate = exp.degenerate_correlation
        || fit_lags(kernel, horizon).iter().all(|h| {
            kernel
                .correlation(horizon - h, horizon)
                .map(|r| (1.0 - r).abs() < 1e-14)
                .unwrap_or(false)
        });
    let fitted_alpha = if degenerate {
        notes.push("correlation is identically one near the horizon; order check skipped".into());
        None
    } else {
        match fit_correlation(kernel, horizon) {
            Ok(f) => Some(f.exponent),
            Err(e) => {
                notes.push(e.to_string());
                None
            }
        }
    };

    let top = kernel.variance(horizon).map(f64::sqrt).unwrap_or(f64::NAN);
    let windows: Vec<WindowResidual> = fit_lags(kernel, horizon)
        .into_iter()
        .filter_map(|h| {
            let sd = kernel.variance(horizon - h).ok()?.sqrt();
            let r = kernel.correlation(horizon - h, horizon).ok()?;
            Some(WindowResidual {
                lag: h,
                sigma_residual: (sd - (top - exp.a * h.powf(exp.beta))).abs(),
                corr_residual: (1.0 - r - exp.d * h.powf(exp.alpha)).abs(),
            })
        })
        .collect();
    let order = |sel: fn(&WindowResidual) -> f64| -> Option<f64> {
        let pts: Vec<(f64, f64)> = windows
            .iter()
            .filter(|w| sel(w) > 0.0)
            .map(|w| (w.lag.ln(), sel(w).ln()))
            .collect();
        if pts.len() < 3 {
            return None;
        }
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        linear_fit(&x, &y).map(|(_, s)| s)
    };
    let sigma_remainder_order = order(|w| w.sigma_residual);
    let corr_remainder_order = if degenerate {
        None
    } else {
        order(|w| w.corr_residual)
    };

    let beta_ok = fitted_beta.is_some_and(|b| (b - exp.beta).abs() <= EXPONENT_TOLERANCE);
    let alpha_ok = degenerate
        || fitted_alpha.is_some_and(|a| (a - exp.alpha).abs() <= EXPONENT_TOLERANCE);
    ExpansionReport {
        fitted_beta,
        fitted_alpha,
        sigma_remainder_order,
        corr_remainder_order,
        windows,
        beta_ok,
        alpha_ok,
        pass: beta_ok && alpha_ok,
        notes,
    }
}

/// Deterministic trend `g(t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Trend {
    /// `g(t) = rate * t`, `rate >= 0`.
    Linear { rate: f64 },
    /// Piecewise-linear interpolation of a `(t, g)` table.
    Tabulated(Arc<TabulatedTrend>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedTrend {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TabulatedTrend {
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self, KernelError> {
        if points.len() < 2 {
            return Err(KernelError::Trend("need at least two points".into()));
        }
        if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
            return Err(KernelError::Trend("non-finite entry".into()));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(KernelError::Trend("duplicate time".into()));
        }
        let (times, values) = points.into_iter().unzip();
        Ok(Self { times, values })
    }

    /// Loads `t,g` CSV rows (with that header).
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, KernelError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| KernelError::Csv(e.to_string()))?;
        if headers.iter().collect::<Vec<_>>() != ["t", "g"] {
            return Err(KernelError::Csv("expected header `t,g`".into()));
        }
        let mut pts = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| KernelError::Csv(e.to_string()))?;
            let parse = |k: usize| {
                rec[k]
                    .parse::<f64>()
                    .map_err(|e| KernelError::Csv(e.to_string()))
            };
            pts.push((parse(0)?, parse(1)?));
        }
        Self::new(pts)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
}

impl Trend {
    pub fn linear(rate: f64) -> Result<Self, KernelError> {
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(KernelError::Trend(format!("rate must be >= 0, got {rate}")));
        }
        Ok(Trend::Linear { rate })
    }

    pub fn zero() -> Self {
        Trend::Linear { rate: 0.0 }
    }

    /// Evaluates `g(t)`; tabulated trends are clamped at their end points.
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Trend::Linear { rate } => rate * t,
            Trend::Tabulated(tab) => {
                let (ts, vs) = (&tab.times, &tab.values);
                if t <= ts[0] {
                    return vs[0];
                }
                let last = ts.len() - 1;
                if t >= ts[last] {
                    return vs[last];
                }
                let i = ts.partition_point(|&x| x <= t) - 1;
                let w = (t - ts[i]) / (ts[i + 1] - ts[i]);
                vs[i] + w * (vs[i + 1] - vs[i])
            }
        }
    }

    /// Whether the trend is defined on all of `[0, horizon]`.
    pub fn covers(&self, horizon: f64) -> bool {
        match self {
            Trend::Linear { .. } => true,
            Trend::Tabulated(tab) => {
                tab.times[0] <= 0.0 && *tab.times.last().unwrap_or(&0.0) >= horizon * (1.0 - 1e-12)
            }
        }
    }

    /// Whether `g` is nondecreasing with `g(0) = 0` (premium functions).
    pub fn is_premium(&self) -> bool {
        match self {
            Trend::Linear { rate } => *rate >= 0.0,
            Trend::Tabulated(tab) => {
                self.value(0.0) == 0.0 && tab.values.windows(2).all(|w| w[1] >= w[0])
            }
        }
    }
}

/// Outcome of the horizon smoothness check on the trend.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendCheck {
    /// Smallest `M` with `|g(T) - g(t)| <= M (T - t)^beta` on the grid.
    pub m: f64,
    pub pass: bool,
    /// Log-log slope of `|g(T) - g(T - h)|` at the finest lags.
    pub observed_order: Option<f64>,
    pub diagnostic: Option<String>,
}

/// Checks `|g(T) - g(t)| <= M (T - t)^beta_min` on `[nu, T]`.
pub fn check_trend_condition(
    trend: &Trend,
    horizon: f64,
    beta_min: f64,
    nu: f64,
) -> Result<TrendCheck, KernelError> {
    if !(nu > 0.0 && nu < horizon) {
        return Err(KernelError::Trend(format!("nu must lie in (0, {horizon}), got {nu}")));
    }
    if !(beta_min > 0.0) {
        return Err(KernelError::Trend(format!("beta_min must be positive, got {beta_min}")));
    }
    let span = horizon - nu;
    // Lags in decreasing order.
    let lags: Vec<f64> = match trend {
        Trend::Tabulated(tab) => {
            let mut l: Vec<f64> = tab
                .times
                .iter()
                .filter(|&&s| s >= nu && s < horizon)
                .map(|&s| horizon - s)
                .collect();
            l.sort_by(|a, b| b.total_cmp(a));
            l
        }
        Trend::Linear { .. } => {
            let mut l: Vec<f64> = (0..1000).map(|i| span * (1.0 - i as f64 / 1000.0)).collect();
            l.extend((1..=48).map(|k| span * 10f64.powf(-(k as f64) / 4.0)));
            // Use the lag actually represented by the node t = T - h.
            let mut l: Vec<f64> = l.into_iter().map(|h| horizon - (horizon - h)).collect();
            l.sort_by(|a, b| b.total_cmp(a));
            l
        }
    };
    let g_top = trend.value(horizon);
    let diffs: Vec<f64> = lags
        .iter()
        .map(|h| (g_top - trend.value(horizon - h)).abs())
        .collect();
    let m = lags
        .iter()
        .zip(&diffs)
        .map(|(h, d)| d / h.powf(beta_min))
        .fold(0.0_f64, f64::max);

    // Finest lags carry the divergence signal.
    let fine: Vec<(f64, f64)> = lags
        .iter()
        .zip(&diffs)
        .rev()
        .filter(|(_, d)| **d > 0.0)
        .take(8)
        .map(|(h, d)| (h.ln(), d.ln()))
        .collect();
    let observed_order = if fine.len() >= 3 {
        let (x, y): (Vec<f64>, Vec<f64>) = fine.into_iter().unzip();
        linear_fit(&x, &y).map(|(_, s)| s)
    } else {
        None
    };
    let mut diagnostic = None;
    let mut pass = m.is_finite();
    if let Some(order) = observed_order {
        if order < beta_min - EXPONENT_TOLERANCE {
            pass = false;
            diagnostic = Some(format!(
                "|g(T) - g(t)| decays like (T - t)^{order:.3}, slower than (T - t)^{beta_min}; the ratio diverges as t -> T"
            ));
        }
    }
    if !m.is_finite() {
        diagnostic = Some("unbounded ratio".into());
    }
    Ok(TrendCheck {
        m,
        pass,
        observed_order,
        diagnostic,
    })
}
