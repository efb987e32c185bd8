//! Exact first-order asymptotics of the finite-time ruin probability
//!
//! ```text
//! P(sup_{[0,T]} (X(t) - g(t)) > u) ~ C θ(u) Ψ((u + g(T)) / √Σ),   u → ∞,
//! ```
//!
//! for `X = Σ λ_i X_i` with independent centered Gaussian components.
//! The constant is kept in symbolic form ([`ConstantForm`]: a numeric
//! coefficient times an optional Pickands or Piterbarg constant) until a
//! [`ConstantsProvider`] resolves it.

use std::fmt;

use thiserror::Error;

use crate::constants::{ConstantKind, ConstantsError, ConstantsProvider, Provenance};
use crate::kernels::{
    check_trend_condition, local_expansion, KernelError, KernelSpec, LocalExpansion, Trend,
};
pub use crate::special::{log_psi, psi};
use crate::special::gamma;

/// Exponents within this distance of the minimum attain it.
pub const TIE_TOLERANCE: f64 = 1e-12;
/// Below this tail argument results carry an accuracy warning.
pub const TAIL_ARG_WARNING: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AsymptoticsError {
    #[error("invalid model: `{key}` {reason}")]
    InvalidModel { key: String, reason: String },
    #[error("component {index}: {source}")]
    Expansion { index: usize, source: KernelError },
    #[error("trend condition fails on [nu, T]: {0}")]
    TrendCondition(String),
    #[error("u + g(T) = {0} must be positive")]
    NonPositiveLevel(f64),
    #[error("ordering violated: {0}")]
    Ordering(String),
    #[error(transparent)]
    Constants(#[from] ConstantsError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

fn invalid(key: impl Into<String>, reason: impl Into<String>) -> AsymptoticsError {
    AsymptoticsError::InvalidModel {
        key: key.into(),
        reason: reason.into(),
    }
}

/// One weighted component `λ X`.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub kernel: KernelSpec,
}

/// `X(t) = Σ λ_i X_i(t)` with trend `g` on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateModel {
    components: Vec<Component>,
    trend: Trend,
    horizon: f64,
    nu: Option<f64>,
}

impl AggregateModel {
    pub fn new(components: Vec<Component>, trend: Trend, horizon: f64) -> Result<Self, AsymptoticsError> {
        if components.is_empty() {
            return Err(invalid("components", "must not be empty"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid("T", format!("must be positive, got {horizon}")));
        }
        for (i, c) in components.iter().enumerate() {
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(invalid(
                    format!("components[{i}].weight"),
                    format!("must be positive, got {}", c.weight),
                ));
            }
            c.kernel
                .validate()
                .map_err(|source| AsymptoticsError::Expansion { index: i, source })?;
        }
        if !trend.covers(horizon) {
            return Err(invalid("trend", format!("must be defined on [0, {horizon}]")));
        }
        Ok(Self {
            components,
            trend,
            horizon,
            nu: None,
        })
    }

    /// Single weighted component.
    pub fn single(kernel: KernelSpec, weight: f64, trend: Trend, horizon: f64) -> Result<Self, AsymptoticsError> {
        Self::new(vec![Component { weight, kernel }], trend, horizon)
    }

    /// Brownian motion with linear premium `c t`.
    pub fn brownian(premium: f64, horizon: f64) -> Result<Self, AsymptoticsError> {
        Self::single(KernelSpec::fbm(0.5)?, 1.0, Trend::linear(premium)?, horizon)
    }

    /// Left end of the window on which the trend condition is checked;
    /// defaults to `T/2`.
    pub fn with_nu(mut self, nu: f64) -> Result<Self, AsymptoticsError> {
        if !(nu > 0.0 && nu < self.horizon) {
            return Err(invalid("nu", format!("must lie in (0, {})", self.horizon)));
        }
        self.nu = Some(nu);
        Ok(self)
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn trend(&self) -> &Trend {
        &self.trend
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn nu(&self) -> f64 {
        self.nu.unwrap_or(self.horizon / 2.0)
    }

    /// Same model with every weight multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Result<Self, AsymptoticsError> {
        let mut out = self.clone();
        for c in &mut out.components {
            c.weight *= k;
        }
        Self::new(out.components, out.trend, out.horizon).map(|m| Self { nu: self.nu, ..m })
    }

    /// `Σ λ_i² Cov_i(s, t)`.
    pub fn cov(&self, s: f64, t: f64) -> Result<f64, KernelError> {
        self.components.iter().try_fold(0.0, |acc, c| {
            Ok(acc + c.weight * c.weight * c.kernel.cov(s, t)?)
        })
    }

    pub fn expansions(&self) -> Result<Vec<LocalExpansion>, AsymptoticsError> {
        self.components
            .iter()
            .enumerate()
            .map(|(index, c)| {
                local_expansion(&c.kernel, self.horizon)
                    .map_err(|source| AsymptoticsError::Expansion { index, source })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    AlphaLtBeta,
    AlphaEqBeta,
    AlphaGtBeta,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::AlphaLtBeta => "ALPHA_LT_BETA",
            Regime::AlphaEqBeta => "ALPHA_EQ_BETA",
            Regime::AlphaGtBeta => "ALPHA_GT_BETA",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateParams {
    /// `Σ λ_i² σ̃_i²`.
    pub sigma2: f64,
    pub alpha: f64,
    pub beta: f64,
    pub n_tilde: f64,
    pub g_tilde: f64,
    pub regime: Regime,
}

pub fn aggregate_parameters(model: &AggregateModel) -> Result<AggregateParams, AsymptoticsError> {
    let exps = model.expansions()?;
    Ok(combine_expansions(model, &exps))
}

fn combine_expansions(model: &AggregateModel, exps: &[LocalExpansion]) -> AggregateParams {
    let alpha = exps.iter().map(|e| e.alpha).fold(f64::INFINITY, f64::min);
    let beta = exps.iter().map(|e| e.beta).fold(f64::INFINITY, f64::min);
    let (mut sigma2, mut n_tilde, mut g_tilde) = (0.0, 0.0, 0.0);
    for (c, e) in model.components.iter().zip(exps) {
        let l2 = c.weight * c.weight;
        sigma2 += l2 * e.sigma_tilde * e.sigma_tilde;
        if e.beta - beta <= TIE_TOLERANCE {
            n_tilde += l2 * e.sigma_tilde * e.a;
        }
        if e.alpha - alpha <= TIE_TOLERANCE {
            g_tilde += l2 * e.d * e.sigma_tilde * e.sigma_tilde;
        }
    }
    let regime = if (alpha - beta).abs() <= TIE_TOLERANCE {
        Regime::AlphaEqBeta
    } else if alpha < beta {
        Regime::AlphaLtBeta
    } else {
        Regime::AlphaGtBeta
    };
    AggregateParams {
        sigma2,
        alpha,
        beta,
        n_tilde,
        g_tilde,
        regime,
    }
}

/// `coefficient × special` where `special` is a Pickands or Piterbarg
/// constant (or absent, meaning 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantForm {
    pub special: Option<ConstantKind>,
    pub coefficient: f64,
}

impl ConstantForm {
    pub fn resolve(&self, provider: &ConstantsProvider) -> Result<(f64, Provenance), ConstantsError> {
        match self.special {
            None => Ok((self.coefficient, Provenance::Exact)),
            Some(kind) => {
                let c = provider.get_constant(kind)?;
                Ok((self.coefficient * c.value, c.provenance))
            }
        }
    }
}

/// The leading constant in symbolic form.
pub fn constant_form(params: &AggregateParams) -> ConstantForm {
    let AggregateParams {
        sigma2,
        alpha,
        beta,
        n_tilde,
        g_tilde,
        regime,
    } = *params;
    match regime {
        Regime::AlphaLtBeta => ConstantForm {
            special: Some(ConstantKind::Pickands { alpha }),
            coefficient: gamma(1.0 / beta + 1.0)
                * n_tilde.powf(-1.0 / beta)
                * g_tilde.powf(1.0 / alpha)
                * sigma2.powf(1.0 / beta - 1.0 / alpha),
        },
        Regime::AlphaEqBeta => ConstantForm {
            special: Some(ConstantKind::Piterbarg {
                alpha,
                r: n_tilde / g_tilde,
            }),
            coefficient: 1.0,
        },
        Regime::AlphaGtBeta => ConstantForm {
            special: None,
            coefficient: 1.0,
        },
    }
}

/// `C_{α,β}` with its provenance.
pub fn leading_constant(
    params: &AggregateParams,
    provider: &ConstantsProvider,
) -> Result<(f64, Provenance), AsymptoticsError> {
    Ok(constant_form(params).resolve(provider)?)
}

/// `θ(u) = tail_arg^{2/α - 2/β}` when `α < β`, else 1.
pub fn theta(params: &AggregateParams, tail_arg: f64) -> f64 {
    match params.regime {
        Regime::AlphaLtBeta => tail_arg.powf(2.0 / params.alpha - 2.0 / params.beta),
        _ => 1.0,
    }
}

/// Everything in the asymptotic except the numeric value of the special
/// constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticForm {
    pub u: f64,
    pub params: AggregateParams,
    pub constant: ConstantForm,
    pub theta: f64,
    pub tail_arg: f64,
}

impl AsymptoticForm {
    /// `coefficient · θ · Ψ(tail_arg)`: the asymptotic divided by the
    /// special constant.
    pub fn symbolic_value(&self) -> f64 {
        self.constant.coefficient * self.theta * psi(self.tail_arg)
    }
}

pub fn ruin_asymptotic_form(model: &AggregateModel, u: f64) -> Result<AsymptoticForm, AsymptoticsError> {
    let exps = model.expansions()?;
    let params = combine_expansions(model, &exps);
    let check = check_trend_condition(model.trend(), model.horizon(), params.beta, model.nu())?;
    if !check.pass {
        return Err(AsymptoticsError::TrendCondition(
            check.diagnostic.unwrap_or_else(|| "ratio unbounded".into()),
        ));
    }
    let level = u + model.trend().value(model.horizon());
    if !(level > 0.0) {
        return Err(AsymptoticsError::NonPositiveLevel(level));
    }
    let tail_arg = level / params.sigma2.sqrt();
    Ok(AsymptoticForm {
        u,
        params,
        constant: constant_form(&params),
        theta: theta(&params, tail_arg),
        tail_arg,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticResult {
    pub u: f64,
    pub regime: Regime,
    pub constant: f64,
    pub theta: f64,
    pub tail_arg: f64,
    pub value: f64,
    /// `ln C + ln θ + ln Ψ(tail_arg)`, finite even when `value` underflows.
    pub log_value: f64,
    pub provenance: Provenance,
    pub params: AggregateParams,
    /// `tail_arg` is below [`TAIL_ARG_WARNING`].
    pub low_tail_arg: bool,
}

pub const CSV_HEADER: [&str; 9] = [
    "u",
    "tail_arg",
    "regime",
    "constant",
    "theta",
    "value",
    "log_value",
    "provenance",
    "log10_value",
];

impl AsymptoticResult {
    pub fn csv_record(&self) -> Vec<String> {
        vec![
            format!("{}", self.u),
            format!("{:.12e}", self.tail_arg),
            self.regime.to_string(),
            format!("{:.12e}", self.constant),
            format!("{:.12e}", self.theta),
            format!("{:.12e}", self.value),
            format!("{:.12e}", self.log_value),
            self.provenance.to_string(),
            format!("{:.12e}", self.log_value / std::f64::consts::LN_10),
        ]
    }
}

pub fn ruin_asymptotic(
    model: &AggregateModel,
    u: f64,
    provider: &ConstantsProvider,
) -> Result<AsymptoticResult, AsymptoticsError> {
    let form = ruin_asymptotic_form(model, u)?;
    let (constant, provenance) = form.constant.resolve(provider)?;
    let value = constant * form.theta * psi(form.tail_arg);
    let log_value = constant.ln() + form.theta.ln() + log_psi(form.tail_arg);
    Ok(AsymptoticResult {
        u,
        regime: form.params.regime,
        constant,
        theta: form.theta,
        tail_arg: form.tail_arg,
        value,
        log_value,
        provenance,
        params: form.params,
        low_tail_arg: form.tail_arg < TAIL_ARG_WARNING,
    })
}

/// A closed form `coefficient · Ψ(tail_arg)` times an optional special
/// constant; `coefficient` already includes the polynomial factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedForm {
    pub special: Option<ConstantKind>,
    pub coefficient: f64,
    pub tail_arg: f64,
}

impl ClosedForm {
    pub fn symbolic_value(&self) -> f64 {
        self.coefficient * psi(self.tail_arg)
    }

    pub fn value(&self, provider: &ConstantsProvider) -> Result<f64, ConstantsError> {
        let c = ConstantForm {
            special: self.special,
            coefficient: self.coefficient,
        };
        Ok(c.resolve(provider)?.0 * psi(self.tail_arg))
    }
}

/// Bi-fBm aggregates with `K_1H_1 < K_2H_2 ≤ … ≤ K_nH_n`.
///
/// `components` holds `(λ_i, K_i, H_i)`.
pub fn corollary_bifbm(
    components: &[(f64, f64, f64)],
    trend: &Trend,
    horizon: f64,
    u: f64,
) -> Result<ClosedForm, AsymptoticsError> {
    for &(_, k, h) in components {
        KernelSpec::bi_fbm(k, h)?;
    }
    let kh: Vec<f64> = components.iter().map(|c| c.1 * c.2).collect();
    check_ordering(&kh, "K_i H_i")?;
    let sig2: Vec<f64> = kh.iter().map(|&x| horizon.powf(2.0 * x)).collect();
    let (l1, k1) = (components[0].0, components[0].1);
    let weighted: Vec<f64> = components
        .iter()
        .zip(&sig2)
        .map(|(c, s)| c.0 * c.0 * c.1 * c.2 * s)
        .collect();
    corollary_form(
        components.iter().map(|c| c.0).collect(),
        &sig2,
        &weighted,
        kh[0],
        l1 * l1 / 2f64.powf(k1),
        trend,
        horizon,
        u,
    )
}

/// Sub-fBm aggregates with `H_1 < H_2 ≤ … ≤ H_n`.
///
/// `components` holds `(λ_i, H_i)`.
pub fn corollary_subfbm(
    components: &[(f64, f64)],
    trend: &Trend,
    horizon: f64,
    u: f64,
) -> Result<ClosedForm, AsymptoticsError> {
    for &(_, h) in components {
        KernelSpec::sub_fbm(h)?;
    }
    let hs: Vec<f64> = components.iter().map(|c| c.1).collect();
    check_ordering(&hs, "H_i")?;
    let sig2: Vec<f64> = hs
        .iter()
        .map(|&h| (2.0 - 2f64.powf(2.0 * h - 1.0)) * horizon.powf(2.0 * h))
        .collect();
    let l1 = components[0].0;
    let weighted: Vec<f64> = components
        .iter()
        .zip(&sig2)
        .map(|(c, s)| c.0 * c.0 * c.1 * s)
        .collect();
    corollary_form(
        components.iter().map(|c| c.0).collect(),
        &sig2,
        &weighted,
        hs[0],
        l1 * l1 / 2.0,
        trend,
        horizon,
        u,
    )
}

fn check_ordering(x: &[f64], name: &str) -> Result<(), AsymptoticsError> {
    if x.is_empty() {
        return Err(invalid("components", "must not be empty"));
    }
    if x.len() > 1 && !(x[0] < x[1]) {
        return Err(AsymptoticsError::Ordering(format!(
            "{name}: the first value must be strictly smallest ({} vs {})",
            x[0], x[1]
        )));
    }
    if let Some(w) = x[1..].windows(2).find(|w| w[0] > w[1]) {
        return Err(AsymptoticsError::Ordering(format!(
            "{name} must be nondecreasing ({} > {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Shared closed form of both corollaries. `lead` is `KH` (or `H`),
/// `g1 = λ_1² D_1 σ̃_1²`, and `weighted[i]` is `λ_i² (KH)_i σ̃_i²`.
#[allow(clippy::too_many_arguments)]
fn corollary_form(
    weights: Vec<f64>,
    sig2: &[f64],
    weighted: &[f64],
    lead: f64,
    g1: f64,
    trend: &Trend,
    horizon: f64,
    u: f64,
) -> Result<ClosedForm, AsymptoticsError> {
    let sigma2: f64 = weights.iter().zip(sig2).map(|(l, s)| l * l * s).sum();
    let level = u + trend.value(horizon);
    let tail_arg = level / sigma2.sqrt();
    let half = 0.5;
    if (lead - half).abs() <= TIE_TOLERANCE {
        let l1 = weights[0];
        let rest: f64 = weighted[1..].iter().sum();
        // 1 + λ_1² T / (c (Σ_{i≥2} … + λ_1² T / 2)), c = 2^K or 2.
        let c = l1 * l1 / g1;
        let value = 1.0 + l1 * l1 * horizon / (c * (rest + l1 * l1 * horizon / 2.0));
        return Ok(ClosedForm {
            special: None,
            coefficient: value,
            tail_arg,
        });
    }
    if lead > half {
        return Ok(ClosedForm {
            special: None,
            coefficient: 1.0,
            tail_arg,
        });
    }
    let total: f64 = weighted.iter().sum();
    let coefficient = sigma2.powf((2.0 * lead - 1.0) / (2.0 * lead))
        * g1.powf(1.0 / (2.0 * lead))
        * horizon
        / total
        * tail_arg.powf(1.0 / lead - 2.0);
    Ok(ClosedForm {
        special: Some(ConstantKind::Pickands { alpha: 2.0 * lead }),
        coefficient,
        tail_arg,
    })
}

/// `X = B_H(t) + B_{1/2}(t^{2H})`, `H < 1/2`:
/// `H_H / (4^{1/(2H)} H) · Λ^{1/H - 2} · Ψ(Λ)` with `Λ = (u + g(T)) / (√2 T^H)`.
pub fn example1_closed_form(hurst: f64, trend: &Trend, horizon: f64, u: f64) -> Result<ClosedForm, AsymptoticsError> {
    if !(hurst > 0.0 && hurst < 0.5) {
        return Err(invalid("hurst", format!("must lie in (0, 1/2), got {hurst}")));
    }
    let lambda = (u + trend.value(horizon)) / (std::f64::consts::SQRT_2 * horizon.powf(hurst));
    Ok(ClosedForm {
        special: Some(ConstantKind::Pickands { alpha: 2.0 * hurst }),
        coefficient: lambda.powf(1.0 / hurst - 2.0) / (4f64.powf(1.0 / (2.0 * hurst)) * hurst),
        tail_arg: lambda,
    })
}

/// The model of [`example1_closed_form`].
pub fn example1_model(hurst: f64, trend: Trend, horizon: f64) -> Result<AggregateModel, AsymptoticsError> {
    AggregateModel::new(
        vec![
            Component {
                weight: 1.0,
                kernel: KernelSpec::fbm(hurst)?,
            },
            Component {
                weight: 1.0,
                kernel: KernelSpec::time_changed_bm(hurst)?,
            },
        ],
        trend,
        horizon,
    )
}

/// Time-averaged fBm aggregates, `H_1 < H_2 < …`:
/// `Ψ((u + g(T)) / √(Σ λ_i² T^{2H_i}))`. `components` holds `(λ_i, H_i)`.
pub fn example2_closed_form(
    components: &[(f64, f64)],
    trend: &Trend,
    horizon: f64,
    u: f64,
) -> Result<f64, AsymptoticsError> {
    for &(_, h) in components {
        KernelSpec::time_avg_fbm(h)?;
    }
    let hs: Vec<f64> = components.iter().map(|c| c.1).collect();
    if let Some(w) = hs.windows(2).find(|w| !(w[0] < w[1])) {
        return Err(AsymptoticsError::Ordering(format!(
            "H_i must be strictly increasing ({} >= {})",
            w[0], w[1]
        )));
    }
    let sigma2: f64 = components
        .iter()
        .map(|&(l, h)| l * l * horizon.powf(2.0 * h))
        .sum();
    Ok(psi((u + trend.value(horizon)) / sigma2.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn brownian_parameters() {
        let m = AggregateModel::brownian(0.0, 1.0).unwrap();
        let p = aggregate_parameters(&m).unwrap();
        assert_relative_eq!(p.sigma2, 1.0);
        assert_relative_eq!(p.n_tilde, 0.5);
        assert_relative_eq!(p.g_tilde, 0.5);
        assert_eq!(p.regime, Regime::AlphaEqBeta);
        let (c, prov) = leading_constant(&p, &ConstantsProvider::exact_only()).unwrap();
        assert_eq!(c, 2.0);
        assert_eq!(prov, Provenance::Exact);
    }

    #[test]
    fn brownian_value_is_twice_psi() {
        let m = AggregateModel::brownian(1.0, 1.0).unwrap();
        let r = ruin_asymptotic(&m, 10.0, &ConstantsProvider::exact_only()).unwrap();
        assert_eq!(r.value, 2.0 * psi(11.0));
        assert!(!r.low_tail_arg);
    }

    #[test]
    fn fbm_075_is_psi() {
        let m = AggregateModel::single(KernelSpec::fbm(0.75).unwrap(), 1.0, Trend::zero(), 1.0).unwrap();
        let r = ruin_asymptotic(&m, 4.0, &ConstantsProvider::exact_only()).unwrap();
        assert_eq!(r.regime, Regime::AlphaGtBeta);
        assert_eq!((r.constant, r.theta), (1.0, 1.0));
        assert_relative_eq!(r.value, psi(4.0), max_relative = 1e-15);
    }

    #[test]
    fn rough_mixture_parameters() {
        let h = 0.3;
        let t = 1.7;
        let m = example1_model(h, Trend::zero(), t).unwrap();
        let p = aggregate_parameters(&m).unwrap();
        assert_relative_eq!(p.alpha, 2.0 * h);
        assert_relative_eq!(p.beta, 1.0);
        assert_relative_eq!(p.g_tilde, 0.5, max_relative = 1e-14);
        assert_relative_eq!(p.n_tilde, 2.0 * h * t.powf(2.0 * h - 1.0), max_relative = 1e-14);
        assert_relative_eq!(p.sigma2, 2.0 * t.powf(2.0 * h), max_relative = 1e-14);
        assert_eq!(p.regime, Regime::AlphaLtBeta);
    }

    #[test]
    fn missing_constant_is_reported() {
        let m = example1_model(0.3, Trend::zero(), 1.0).unwrap();
        let err = ruin_asymptotic(&m, 5.0, &ConstantsProvider::exact_only()).unwrap_err();
        assert!(matches!(err, AsymptoticsError::Constants(ConstantsError::MissingExact(_))));
    }

    #[test]
    fn level_must_be_positive() {
        let m = AggregateModel::brownian(0.0, 1.0).unwrap();
        assert!(matches!(
            ruin_asymptotic(&m, 0.0, &ConstantsProvider::exact_only()),
            Err(AsymptoticsError::NonPositiveLevel(_))
        ));
    }

    #[test]
    fn invalid_weight_names_key() {
        let err = AggregateModel::single(KernelSpec::fbm(0.5).unwrap(), -1.0, Trend::zero(), 1.0)
            .unwrap_err();
        assert!(err.to_string().contains("components[0].weight"));
    }

    #[test]
    fn subfbm_half_constant_is_two() {
        let f = corollary_subfbm(&[(1.3, 0.5)], &Trend::zero(), 2.0, 5.0).unwrap();
        assert_relative_eq!(f.coefficient, 2.0, max_relative = 1e-15);
    }

    #[test]
    fn corollary_ordering_enforced() {
        let bad = [(1.0, 1.0, 0.4), (1.0, 1.0, 0.4)];
        assert!(matches!(
            corollary_bifbm(&bad, &Trend::zero(), 1.0, 3.0),
            Err(AsymptoticsError::Ordering(_))
        ));
    }

    #[test]
    fn example2_values() {
        let v = example2_closed_form(&[(1.0, 0.5)], &Trend::zero(), 1.0, 3.0).unwrap();
        assert_relative_eq!(v, 1.349898031630094e-3, max_relative = 1e-12);
        let g = Trend::linear(2.0).unwrap();
        let v = example2_closed_form(&[(1.0, 0.3), (2.0, 0.6)], &g, 1.0, -2.0).unwrap();
        assert_eq!(v, 0.5);
    }
}
