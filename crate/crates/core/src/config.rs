//! TOML experiment configuration.
//!
//! Parsing is strict: unknown keys are errors, and every error names the
//! offending key path (for example `model.components[1].hurst`).
//!
//! ```toml
//! seed = 20240917
//! u_grid = [1.0]
//!
//! [model]
//! T = 1.0
//! components = [{ weight = 1.0, family = "fbm", hurst = 0.5 }]
//! trend = { kind = "linear", rate = 1.0 }
//!
//! [simulation]
//! method = "extrapolated"
//! n = 1000000
//! grids = [2048, 4096]
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::asymptotics::{AggregateModel, Component};
use crate::constants::{ConstantKind, McBudget, ProviderMode};
use crate::kernels::{KernelError, KernelSpec, TabulatedKernel, TabulatedTrend, Trend};
use crate::levy::{ClaimDist, LevyModel, PerturbedModel, QuantileTable};
use crate::simulation::GridPlan;

pub const DEFAULT_SEED: u64 = 20_240_917;

/// A configuration problem, tied to the key it concerns.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl fmt::Display) -> Self {
        Self {
            key: key.into(),
            message: message.to_string(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            write!(f, "config error: {}", self.message)
        } else {
            write!(f, "config error at `{}`: {}", self.key, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandName {
    Asym,
    Simulate,
    Constants,
    Perturbed,
    Report,
}

impl fmt::Display for CommandName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CommandName::Asym => "asym",
            CommandName::Simulate => "simulate",
            CommandName::Constants => "constants",
            CommandName::Perturbed => "perturbed",
            CommandName::Report => "report",
        })
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Option<CommandName>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub u_grid: Option<Vec<f64>>,
    pub model: Option<ModelConfig>,
    pub simulation: Option<SimulationConfig>,
    pub constants: Option<ConstantsConfig>,
    pub levy: Option<LevyConfig>,
    pub perturbation: Option<PerturbationConfig>,
    pub output: Option<OutputConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub nu: Option<f64>,
    pub components: Vec<ComponentConfig>,
    pub trend: Option<TrendConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentConfig {
    pub weight: f64,
    pub family: String,
    pub hurst: Option<f64>,
    pub k: Option<f64>,
    /// CSV `s,t,cov` for `family = "tabulated"`.
    pub file: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrendConfig {
    /// `linear` or `tabulated`.
    pub kind: String,
    pub rate: Option<f64>,
    /// CSV `t,g` for `kind = "tabulated"`.
    pub file: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// `crude`, `importance` or `extrapolated`.
    pub method: Option<String>,
    pub m: Option<usize>,
    pub n: u64,
    /// Nested grids for `extrapolated`.
    pub grids: Option<Vec<usize>>,
    /// Number of finest-grid paths to write to `paths.bin`.
    pub dump_paths: Option<usize>,
    /// Hit count below which a report row is flagged.
    pub min_hits: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    /// `exact` (default) or `mc`.
    pub mode: Option<String>,
    pub horizon: Option<f64>,
    pub grid_per_unit: Option<usize>,
    pub reps: Option<u64>,
    pub max_doublings: Option<u32>,
    pub list: Option<Vec<ConstantEntry>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantEntry {
    /// `pickands` or `piterbarg`.
    pub kind: String,
    pub alpha: f64,
    #[serde(rename = "R")]
    pub r: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevyConfig {
    /// `compound_poisson` or `alpha_stable`.
    pub kind: String,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub premium: f64,
    pub mu: Option<f64>,
    /// `weibull` or `quantile`.
    pub claim: Option<String>,
    pub tau: Option<f64>,
    /// CSV `p,q` for `claim = "quantile"`.
    pub quantile_file: Option<String>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    /// Zero weights drop the component; all zero means no perturbation.
    pub components: Vec<ComponentConfig>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<String>,
    /// Base name of the CSV, defaults to the command name.
    pub name: Option<String>,
}

/// Parses TOML text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::new("", e.to_string().trim()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        let key = if key == "." { String::new() } else { key };
        ConfigError::new(key, e.into_inner().message().trim())
    })
}

/// Reads and parses a config file; I/O problems are returned separately.
pub fn load_config(path: &Path) -> Result<Result<(String, ExperimentConfig), ConfigError>, std::io::Error> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_config(&text).map(|c| (text, c)))
}

fn require<'a, T>(v: &'a Option<T>, key: &str) -> Result<&'a T, ConfigError> {
    v.as_ref().ok_or_else(|| ConfigError::new(key, "missing"))
}

fn component(c: &ComponentConfig, key: &str, base: &Path) -> Result<KernelSpec, ConfigError> {
    if c.family == "tabulated" {
        if c.hurst.is_some() || c.k.is_some() {
            return Err(ConfigError::new(key, "tabulated kernels take only `file`"));
        }
        let file = require(&c.file, &format!("{key}.file"))?;
        let table = TabulatedKernel::from_csv_path(&base.join(file)).map_err(|e| ConfigError::new(format!("{key}.file"), e))?;
        return Ok(KernelSpec::tabulated(table));
    }
    if c.file.is_some() {
        return Err(ConfigError::new(format!("{key}.file"), format!("not used by family `{}`", c.family)));
    }
    let mut params = BTreeMap::new();
    if let Some(h) = c.hurst {
        params.insert("hurst".to_string(), h);
    }
    if let Some(k) = c.k {
        params.insert("k".to_string(), k);
    }
    KernelSpec::from_params(&c.family, &params).map_err(|e| {
        let sub = match &e {
            KernelError::InvalidParameter { name, .. } => format!(".{name}"),
            KernelError::MissingParameter { name, .. } | KernelError::UnknownParameter { name, .. } => format!(".{name}"),
            KernelError::UnknownFamily(_) => ".family".into(),
            _ => String::new(),
        };
        ConfigError::new(format!("{key}{sub}"), e)
    })
}

fn components(list: &[ComponentConfig], key: &str, base: &Path, allow_zero: bool) -> Result<Vec<Component>, ConfigError> {
    let mut out = Vec::new();
    for (i, c) in list.iter().enumerate() {
        let ck = format!("{key}[{i}]");
        let ok = c.weight.is_finite() && (c.weight > 0.0 || (allow_zero && c.weight == 0.0));
        if !ok {
            let need = if allow_zero { "nonnegative" } else { "positive" };
            return Err(ConfigError::new(format!("{ck}.weight"), format!("must be {need}, got {}", c.weight)));
        }
        let kernel = component(c, &ck, base)?;
        if c.weight > 0.0 {
            out.push(Component { weight: c.weight, kernel });
        }
    }
    Ok(out)
}

fn trend(t: &Option<TrendConfig>, base: &Path) -> Result<Trend, ConfigError> {
    let Some(t) = t else {
        return Ok(Trend::zero());
    };
    match t.kind.as_str() {
        "linear" => {
            if t.file.is_some() {
                return Err(ConfigError::new("model.trend.file", "not used by a linear trend"));
            }
            let rate = *require(&t.rate, "model.trend.rate")?;
            Trend::linear(rate).map_err(|e| ConfigError::new("model.trend.rate", e))
        }
        "tabulated" => {
            if t.rate.is_some() {
                return Err(ConfigError::new("model.trend.rate", "not used by a tabulated trend"));
            }
            let file = require(&t.file, "model.trend.file")?;
            let f = File::open(base.join(file)).map_err(|e| ConfigError::new("model.trend.file", format!("{file}: {e}")))?;
            let tab = TabulatedTrend::from_csv_reader(f).map_err(|e| ConfigError::new("model.trend.file", e))?;
            Ok(Trend::Tabulated(std::sync::Arc::new(tab)))
        }
        other => Err(ConfigError::new("model.trend.kind", format!("unknown kind `{other}` (expected linear or tabulated)"))),
    }
}

impl ExperimentConfig {
    /// The Gaussian model of the `[model]` section. Relative paths resolve
    /// against `base`.
    pub fn model(&self, base: &Path) -> Result<AggregateModel, ConfigError> {
        let m = require(&self.model, "model")?;
        if !(m.horizon > 0.0 && m.horizon.is_finite()) {
            return Err(ConfigError::new("model.T", format!("must be positive, got {}", m.horizon)));
        }
        if m.components.is_empty() {
            return Err(ConfigError::new("model.components", "must not be empty"));
        }
        let comps = components(&m.components, "model.components", base, false)?;
        let tr = trend(&m.trend, base)?;
        let model = AggregateModel::new(comps, tr, m.horizon).map_err(|e| match e {
            crate::asymptotics::AsymptoticsError::InvalidModel { key, reason } => ConfigError::new(format!("model.{key}"), reason),
            other => ConfigError::new("model", other),
        })?;
        match m.nu {
            Some(nu) => model.with_nu(nu).map_err(|e| ConfigError::new("model.nu", e)),
            None => Ok(model),
        }
    }

    pub fn u_grid(&self) -> Result<Vec<f64>, ConfigError> {
        let u = require(&self.u_grid, "u_grid")?;
        if u.is_empty() {
            return Err(ConfigError::new("u_grid", "must not be empty"));
        }
        if let Some(i) = u.iter().position(|x| !x.is_finite()) {
            return Err(ConfigError::new(format!("u_grid[{i}]"), "must be finite"));
        }
        if let Some(i) = (1..u.len()).find(|&i| u[i] <= u[i - 1]) {
            return Err(ConfigError::new(format!("u_grid[{i}]"), "must be strictly increasing"));
        }
        Ok(u.clone())
    }

    pub fn simulation(&self) -> Result<&SimulationConfig, ConfigError> {
        let s = require(&self.simulation, "simulation")?;
        if s.n < 1000 {
            return Err(ConfigError::new("simulation.n", format!("must be at least 1000, got {}", s.n)));
        }
        Ok(s)
    }

    /// Grid of `[simulation]`, `m` defaulting to 4096.
    pub fn grid(&self, horizon: f64) -> Result<GridPlan, ConfigError> {
        let m = self.simulation()?.m.unwrap_or(4096);
        GridPlan::new(m, horizon).map_err(|e| ConfigError::new("simulation.m", e))
    }

    pub fn provider_mode(&self, seed: u64, workers: usize) -> Result<ProviderMode, ConfigError> {
        let Some(c) = &self.constants else {
            return Ok(ProviderMode::ExactOnly);
        };
        match c.mode.as_deref().unwrap_or("exact") {
            "exact" => Ok(ProviderMode::ExactOnly),
            "mc" => {
                let d = McBudget::default();
                let budget = McBudget {
                    horizon: c.horizon.unwrap_or(d.horizon),
                    grid_per_unit: c.grid_per_unit.unwrap_or(d.grid_per_unit),
                    reps: c.reps.unwrap_or(d.reps),
                    max_doublings: c.max_doublings.unwrap_or(d.max_doublings),
                    seed,
                    workers,
                };
                match budget.problem() {
                    Some((field, msg)) => Err(ConfigError::new(format!("constants.{field}"), msg)),
                    None => Ok(ProviderMode::McFallback(budget)),
                }
            }
            other => Err(ConfigError::new("constants.mode", format!("unknown mode `{other}` (expected exact or mc)"))),
        }
    }

    pub fn constant_list(&self) -> Result<Vec<ConstantKind>, ConfigError> {
        let c = require(&self.constants, "constants")?;
        let list = require(&c.list, "constants.list")?;
        list.iter()
            .enumerate()
            .map(|(i, e)| {
                let key = format!("constants.list[{i}]");
                if !(e.alpha > 0.0 && e.alpha <= 2.0) {
                    return Err(ConfigError::new(format!("{key}.alpha"), format!("must lie in (0, 2], got {}", e.alpha)));
                }
                match (e.kind.as_str(), e.r) {
                    ("pickands", None) => Ok(ConstantKind::Pickands { alpha: e.alpha }),
                    ("pickands", Some(_)) => Err(ConfigError::new(format!("{key}.R"), "not used by pickands")),
                    ("piterbarg", Some(r)) if r > 0.0 && r.is_finite() => Ok(ConstantKind::Piterbarg { alpha: e.alpha, r }),
                    ("piterbarg", Some(r)) => Err(ConfigError::new(format!("{key}.R"), format!("must be positive, got {r}"))),
                    ("piterbarg", None) => Err(ConfigError::new(format!("{key}.R"), "missing")),
                    (other, _) => Err(ConfigError::new(format!("{key}.kind"), format!("unknown kind `{other}`"))),
                }
            })
            .collect()
    }

    /// The `[levy]` and `[perturbation]` sections.
    pub fn perturbed_model(&self, base: &Path) -> Result<PerturbedModel, ConfigError> {
        let l = require(&self.levy, "levy")?;
        if !(l.horizon > 0.0 && l.horizon.is_finite()) {
            return Err(ConfigError::new("levy.T", format!("must be positive, got {}", l.horizon)));
        }
        let levy = match l.kind.as_str() {
            "compound_poisson" => {
                for (k, v) in [("alpha", l.alpha), ("beta", l.beta)] {
                    if v.is_some() {
                        return Err(ConfigError::new(format!("levy.{k}"), "not used by compound_poisson"));
                    }
                }
                let mu = *require(&l.mu, "levy.mu")?;
                let claim = match require(&l.claim, "levy.claim")?.as_str() {
                    "weibull" => {
                        let tau = *require(&l.tau, "levy.tau")?;
                        ClaimDist::weibull(tau).map_err(|e| ConfigError::new("levy.tau", e))?
                    }
                    "quantile" => {
                        let file = require(&l.quantile_file, "levy.quantile_file")?;
                        let f = File::open(base.join(file)).map_err(|e| ConfigError::new("levy.quantile_file", format!("{file}: {e}")))?;
                        let t = QuantileTable::from_csv_reader(f).map_err(|e| ConfigError::new("levy.quantile_file", e))?;
                        ClaimDist::Quantile(std::sync::Arc::new(t))
                    }
                    other => return Err(ConfigError::new("levy.claim", format!("unknown claim law `{other}` (expected weibull or quantile)"))),
                };
                LevyModel::compound_poisson(mu, claim, l.premium).map_err(|e| levy_key(e, "levy"))?
            }
            "alpha_stable" => {
                for (k, v) in [("mu", l.mu), ("tau", l.tau)] {
                    if v.is_some() {
                        return Err(ConfigError::new(format!("levy.{k}"), "not used by alpha_stable"));
                    }
                }
                let alpha = *require(&l.alpha, "levy.alpha")?;
                LevyModel::alpha_stable(alpha, l.beta.unwrap_or(0.0), l.premium).map_err(|e| levy_key(e, "levy"))?
            }
            other => return Err(ConfigError::new("levy.kind", format!("unknown kind `{other}` (expected compound_poisson or alpha_stable)"))),
        };
        let gaussian = match &self.perturbation {
            Some(p) => {
                let comps = components(&p.components, "perturbation.components", base, true)?;
                if comps.is_empty() {
                    None
                } else {
                    Some(AggregateModel::new(comps, Trend::zero(), l.horizon).map_err(|e| ConfigError::new("perturbation", e))?)
                }
            }
            None => None,
        };
        PerturbedModel::new(levy, gaussian, l.horizon).map_err(|e| ConfigError::new("levy", e))
    }

    pub fn output_dir(&self) -> Option<PathBuf> {
        self.output.as_ref().and_then(|o| o.dir.as_ref()).map(PathBuf::from)
    }
}

fn levy_key(e: crate::levy::LevyError, section: &str) -> ConfigError {
    match e {
        crate::levy::LevyError::InvalidParameter { name, .. } => ConfigError::new(format!("{section}.{name}"), e),
        other => ConfigError::new(section, other),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BM: &str = r#"
seed = 7
u_grid = [1.0, 2.0]
[model]
T = 1.0
components = [{ weight = 1.0, family = "fbm", hurst = 0.5 }]
trend = { kind = "linear", rate = 1.0 }
"#;

    #[test]
    fn parses_minimal_model() {
        let c = parse_config(BM).unwrap();
        let m = c.model(Path::new(".")).unwrap();
        assert_eq!(m.horizon(), 1.0);
        assert_eq!(c.u_grid().unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn unknown_key_names_path() {
        let e = parse_config(&BM.replace("hurst = 0.5", "hurst = 0.5, colour = 1")).unwrap_err();
        assert_eq!(e.key, "model.components[0].colour");
        assert!(e.message.contains("colour"), "{e}");
        let e = parse_config("sed = 1").unwrap_err();
        assert!(e.message.contains("sed"), "{e}");
    }

    #[test]
    fn negative_weight_names_path() {
        let c = parse_config(&BM.replace("weight = 1.0", "weight = -1.0")).unwrap();
        let e = c.model(Path::new(".")).unwrap_err();
        assert_eq!(e.key, "model.components[0].weight");
    }

    #[test]
    fn bad_parameter_names_path() {
        let c = parse_config(&BM.replace("hurst = 0.5", "hurst = 1.5")).unwrap();
        assert_eq!(c.model(Path::new(".")).unwrap_err().key, "model.components[0].hurst");
        let c = parse_config(&BM.replace("hurst = 0.5", "k = 0.5")).unwrap();
        assert!(c.model(Path::new(".")).unwrap_err().key.starts_with("model.components[0]."));
        let e = parse_config(&BM.replace("T = 1.0", "T = \"one\"")).unwrap_err();
        assert_eq!(e.key, "model.T");
    }

    #[test]
    fn u_grid_must_increase() {
        let c = parse_config(&BM.replace("[1.0, 2.0]", "[2.0, 1.0]")).unwrap();
        assert_eq!(c.u_grid().unwrap_err().key, "u_grid[1]");
    }

    #[test]
    fn zero_perturbation_drops_gaussian() {
        let text = r#"
[levy]
kind = "compound_poisson"
T = 1.0
premium = 1.0
mu = 1.0
claim = "weibull"
tau = 0.5
[perturbation]
components = [{ weight = 0.0, family = "fbm", hurst = 0.5 }]
"#;
        let m = parse_config(text).unwrap().perturbed_model(Path::new(".")).unwrap();
        assert!(m.gaussian().is_none());
    }
}
