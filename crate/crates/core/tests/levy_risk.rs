use aggruin::asymptotics::Component;
use aggruin::constants::ConstantsProvider;
use aggruin::levy::{
    compound_poisson_sup, ruin_curves, stable_endpoint_tail, stable_sample, tail_asymptote_stable,
    tail_asymptote_weibull, tail_equivalence_report, ClaimDist, LevyModel, PerturbedModel, ReportBudget,
};
use aggruin::simulation::{crossing_prob_mc, GridPlan};
use aggruin::{AggregateModel, KernelSpec, Trend};

fn bm_mixture() -> AggregateModel {
    AggregateModel::new(
        vec![
            Component { weight: 1.0, kernel: KernelSpec::fbm(0.5).unwrap() },
            Component { weight: 1.0, kernel: KernelSpec::time_changed_bm(0.5).unwrap() },
        ],
        Trend::zero(),
        1.0,
    )
    .unwrap()
}

fn weibull_levy(mu: f64, premium: f64) -> LevyModel {
    LevyModel::compound_poisson(mu, ClaimDist::weibull(0.5).unwrap(), premium).unwrap()
}

fn mean_and_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

#[test]
fn compound_poisson_mean_follows_wald() {
    // With zero premium the supremum is the endpoint U(T).
    let ends = compound_poisson_sup(&weibull_levy(1.0, 0.0), 1.0, 1_000_000, 1, 1).unwrap();
    let (m, _) = mean_and_se(&ends);
    // E Z = Γ(1 + 1/τ) = 2.
    assert!((m / 2.0 - 1.0).abs() < 0.01, "{m}");
}

#[test]
fn small_intensity_ruin_at_zero_matches_enumeration() {
    let sups = compound_poisson_sup(&weibull_levy(0.1, 1.0), 1.0, 1_000_000, 2, 1).unwrap();
    let p = sups.iter().filter(|&&s| s > 0.0).count() as f64 / sups.len() as f64;
    // One jump at uniform τ ruins iff Z > τ: P = 0.1 e^{-0.1} (2 - 4/e).
    let one = 0.1 * (-0.1f64).exp() * (2.0 - 4.0 / std::f64::consts::E);
    let two_or_more = 1.0 - (-0.1f64).exp() * 1.1;
    assert!(p > one - 0.002 && p < one + two_or_more + 0.002, "{p} vs [{one}, {}]", one + two_or_more);
    assert!(sups.iter().all(|&s| s >= 0.0));
}

#[test]
fn weibull_asymptote_values() {
    assert!((tail_asymptote_weibull(25.0, 1.0, 1.0, 0.5) - 6.737_946_999e-3).abs() < 1e-11);
    assert_eq!(tail_asymptote_weibull(0.0, 1.3, 2.0, 0.5), 2.6);
    let one = tail_asymptote_weibull(9.0, 1.0, 1.0, 0.5);
    assert!((tail_asymptote_weibull(9.0, 1.0, 2.0, 0.5) - 2.0 * one).abs() < 1e-15);
}

#[test]
fn stable_asymptote_values() {
    let base = tail_asymptote_stable(10.0, 1.5, 0.0, 1.0);
    assert!((base - 0.398_942_28 * 0.5 * 10f64.powf(-1.5)).abs() < 1e-9);
    assert!((tail_asymptote_stable(10.0, 1.5, 1.0, 1.0) - 2.0 * base).abs() < 1e-15);
    assert!((tail_asymptote_stable(10.0, 1.5, 0.0, 3.0) - 3.0 * base).abs() < 1e-15);
    for a in [1.1, 1.5, 1.9] {
        assert!(tail_asymptote_stable(5.0, a, -0.5, 1.0) > 0.0);
    }
}

#[test]
fn near_gaussian_stable_has_variance_two() {
    let x = stable_sample(1.99, 0.0, 1.0, 1_000_000, 3, 1).unwrap();
    let (m, _) = mean_and_se(&x);
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64;
    assert!((v / 2.0 - 1.0).abs() < 0.1, "{v}");
}

#[test]
fn symmetric_stable_is_centred() {
    let n = 200_000;
    let mut x = stable_sample(1.5, 0.0, 1.0, n, 4, 1).unwrap();
    let (m, se) = mean_and_se(&x);
    assert!(m.abs() < 3.0 * se, "mean {m} se {se}");
    x.sort_by(f64::total_cmp);
    let q = |p: f64| x[(p * n as f64) as usize];
    let iqr = q(0.75) - q(0.25);
    assert!(q(0.5).abs() < 3.0 * iqr / (n as f64).sqrt());
}

#[test]
fn stable_endpoint_tail_matches_constant() {
    let e = stable_endpoint_tail(1.5, 0.0, 1.0, &[10.0], 10_000_000, 5, 1).unwrap();
    let ratio = e[0].p_hat / (0.398_942 * 0.5 * 10f64.powf(-1.5));
    assert!((0.9..=1.1).contains(&ratio), "{ratio}");
}

#[test]
fn no_perturbation_matches_exact_sup() {
    let model = PerturbedModel::new(weibull_levy(1.0, 1.0), None, 1.0).unwrap();
    let grid = GridPlan::new(64, 1.0).unwrap();
    let u = 4.0;
    let n = 200_000;
    let pair = ruin_curves(&model, &[u], grid, n, 6, 1).unwrap().remove(0);
    let sups = compound_poisson_sup(model.levy(), 1.0, n, 7, 1).unwrap();
    let p = sups.iter().filter(|&&s| s > u).count() as f64 / n as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt().hypot(pair.tilde.stderr);
    assert!((pair.tilde.p_hat - p).abs() <= 3.0 * se, "{} vs {p}", pair.tilde.p_hat);
    assert_eq!(pair.tilde.p_hat, pair.plain.p_hat);
}

#[test]
fn vanishing_claims_reduce_to_the_gaussian_crossing() {
    let gauss = AggregateModel::brownian(1.0, 1.0).unwrap();
    let noise = AggregateModel::single(KernelSpec::fbm(0.5).unwrap(), 1.0, Trend::zero(), 1.0).unwrap();
    let model = PerturbedModel::new(weibull_levy(1e-6, 1.0), Some(noise), 1.0).unwrap();
    let grid = GridPlan::new(128, 1.0).unwrap();
    let tilde = ruin_curves(&model, &[1.0], grid, 100_000, 8, 1).unwrap().remove(0).tilde;
    let plain = crossing_prob_mc(&gauss, 1.0, grid, 100_000, 9, 1).unwrap();
    let se = tilde.stderr.hypot(plain.stderr);
    assert!((tilde.p_hat - plain.p_hat).abs() <= 3.0 * se, "{} vs {}", tilde.p_hat, plain.p_hat);
}

#[test]
fn weibull_perturbed_tracks_claim_tail() {
    let model = PerturbedModel::new(weibull_levy(1.0, 1.0), Some(bm_mixture()), 1.0).unwrap();
    let budget = ReportBudget { n: 200_000, m: 256, ..ReportBudget::default() };
    let report = tail_equivalence_report(&model, &[4.0, 9.0, 16.0, 25.0], &budget, 10, &ConstantsProvider::exact_only())
        .unwrap();
    let at = |u: f64| report.rows.iter().find(|r| r.u == u).unwrap();
    assert!((0.7..=1.6).contains(&at(16.0).ratio_tilde), "{}", at(16.0).ratio_tilde);
    assert!(at(16.0).hypothesis_ratio / at(25.0).hypothesis_ratio >= 10.0);
    for w in report.rows.windows(2) {
        assert!(w[1].log_hypothesis_ratio < w[0].log_hypothesis_ratio);
    }
    assert!(report.rows.last().unwrap().log_hypothesis_ratio < -2.0);
}

// The ratio is about 1 + aμ at finite u because two-claim ruin grows like
// μ², so the scale check uses intensities where that term is small.
#[test]
fn doubling_intensity_keeps_the_ratio() {
    let grid = GridPlan::new(128, 1.0).unwrap();
    let u = 16.0;
    let ratio = |mu: f64| {
        let model = PerturbedModel::new(weibull_levy(mu, 1.0), Some(bm_mixture()), 1.0).unwrap();
        let e = ruin_curves(&model, &[u], grid, 400_000, 11, 1).unwrap().remove(0).tilde;
        let a = tail_asymptote_weibull(u, mu, 1.0, 0.5);
        (e.p_hat / a, e.stderr / a)
    };
    let ((r1, s1), (r2, s2)) = (ratio(0.05), ratio(0.1));
    assert!((r1 - r2).abs() <= 3.0 * s1.hypot(s2), "{r1} vs {r2}");
}

#[test]
fn stable_perturbed_tracks_power_tail() {
    let levy = LevyModel::alpha_stable(1.5, 0.0, 1.0).unwrap();
    let noise = AggregateModel::single(KernelSpec::fbm(0.7).unwrap(), 1.0, Trend::zero(), 1.0).unwrap();
    let model = PerturbedModel::new(levy, Some(noise), 1.0).unwrap();
    // 0.398942 · 0.5 · u^{-1.5} = 1e-3 at u ≈ 34.1.
    let u = 34.1;
    let budget = ReportBudget { n: 400_000, m: 256, ..ReportBudget::default() };
    let report = tail_equivalence_report(&model, &[u], &budget, 12, &ConstantsProvider::exact_only()).unwrap();
    let r = report.rows[0].ratio_tilde;
    assert!((0.8..=1.2).contains(&r), "{r}");
}

#[test]
fn unperturbed_report_columns_coincide() {
    let model = PerturbedModel::new(weibull_levy(1.0, 1.0), None, 1.0).unwrap();
    let budget = ReportBudget { n: 20_000, m: 64, ..ReportBudget::default() };
    let report = tail_equivalence_report(&model, &[2.0, 4.0], &budget, 13, &ConstantsProvider::exact_only()).unwrap();
    for r in &report.rows {
        assert_eq!(r.psi_tilde.p_hat, r.psi.p_hat);
    }
}
