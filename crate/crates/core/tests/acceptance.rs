//! Acceptance suite: one PASS/FAIL line per criterion with the tolerances
//! pinned below. Criteria listed in `KNOWN_RED` are reported as FAIL but do
//! not fail the process; any other failure exits non-zero.

use std::time::{Duration, Instant};

use aggruin::asymptotics::{
    corollary_bifbm, corollary_subfbm, example1_closed_form, example1_model, ruin_asymptotic, ruin_asymptotic_form,
    AsymptoticForm, ClosedForm,
};
use aggruin::constants::{pickands_estimate, piterbarg_estimate, ConstantsProvider, McBudget};
use aggruin::levy::{
    stable_endpoint_tail, tail_asymptote_stable, tail_equivalence_report, ClaimDist, LevyModel, PerturbedModel,
    ReportBudget,
};
use aggruin::simulation::{convergence_study, crossing_prob_is, GridPlan};
use aggruin::{log_psi, psi, AggregateModel, Component, KernelSpec, Trend};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_240_917;

// Criterion 1: ratio identity tolerance.
const C1_RATIO_TOL: f64 = 1e-3;
// Criterion 2: Brownian gold value, stderr cap, sigma band, runtime.
const C2_TARGET: f64 = 0.090_424;
const C2_MAX_STDERR: f64 = 4e-4;
const C2_SIGMAS: f64 = 3.0;
const C2_MAX_TIME: Duration = Duration::from_secs(300);
// Criteria 3 and 4: identity tolerance.
const IDENTITY_TOL: f64 = 1e-10;
const C3_MODELS: usize = 50;
// Criteria 5 and 6: bands and runtime.
const C5_PICKANDS_1: (f64, f64) = (0.85, 1.15);
const C5_PICKANDS_2: (f64, f64) = (0.48, 0.65);
const C6_PITERBARG_1_1: (f64, f64) = (1.8, 2.2);
const C6_PITERBARG_1_3: (f64, f64) = (1.20, 1.47);
const CONSTANT_MAX_TIME: Duration = Duration::from_secs(600);
// Criterion 7: targets, band, budget, runtime.
const C7_TARGETS: [f64; 3] = [1e-3, 1e-4, 1e-5];
const C7_BAND: (f64, f64) = (0.5, 1.5);
const C7_M: usize = 1024;
const C7_N: u64 = 100_000;
const C7_MAX_TIME: Duration = Duration::from_secs(900);
// Criterion 8.
const C8_LEVELS: [f64; 2] = [16.0, 25.0];
const C8_BAND: (f64, f64) = (0.7, 1.6);
const C8_MIN_DROP: f64 = 10.0;
const C8_N: u64 = 1_000_000;
const C8_M: usize = 512;
const C8_MAX_TIME: Duration = Duration::from_secs(600);
// Criterion 9.
const C9_N: u64 = 10_000_000;
const C9_BANDS: [(f64, (f64, f64)); 2] = [(10.0, (0.9, 1.1)), (30.0, (0.8, 1.2))];
const C9_MAX_TIME: Duration = Duration::from_secs(300);
// Criterion 10.
const C10_WORKERS: [usize; 2] = [4, 8];

/// Criteria that cannot pass as stated, with the reason printed beside them.
const KNOWN_RED: [(&str, &str); 1] = [(
    "C1",
    "u/(u-1) is only the leading term of the ratio; the next Mills-ratio term is O(u^-2) and exceeds 1e-3 at u = 10",
)];

struct Outcome {
    pass: bool,
    lines: Vec<String>,
    /// Every number the criterion computed by simulation, for the rerun check.
    fingerprint: Option<String>,
}

fn within((lo, hi): (f64, f64), x: f64) -> bool {
    (lo..=hi).contains(&x)
}

fn timed(limit: Duration, start: Instant, lines: &mut Vec<String>) -> bool {
    let took = start.elapsed();
    lines.push(format!("runtime {:.1}s (limit {}s)", took.as_secs_f64(), limit.as_secs()));
    took <= limit
}

fn c1_brownian_exact() -> Outcome {
    let provider = ConstantsProvider::exact_only();
    let model = AggregateModel::brownian(1.0, 1.0).unwrap();
    let mut pass = true;
    let mut lines = Vec::new();
    for u in [10.0, 20.0, 50.0, 100.0] {
        // Ψ(u+1) + e^{-2u} Ψ(u-1) over 2Ψ(u+1), in logs so u = 100 stays finite.
        let second = -2.0 * u + log_psi(u - 1.0) - log_psi(u + 1.0);
        let ratio = 0.5 * (1.0 + second.exp());
        let target = u / (u - 1.0);
        let ok_ratio = (ratio - target).abs() <= C1_RATIO_TOL;
        let r = ruin_asymptotic(&model, u, &provider).unwrap();
        let ok_exact = r.constant == 2.0 && r.value == 2.0 * psi(u + 1.0) && r.log_value == 2f64.ln() + log_psi(u + 1.0);
        pass &= ok_ratio && ok_exact;
        lines.push(format!(
            "u={u}: ratio {ratio:.6} vs u/(u-1) {target:.6} (gap {:.2e}, tol {C1_RATIO_TOL:e}) {}; asymptote = 2 Psi(u+1) {}",
            (ratio - target).abs(),
            verdict(ok_ratio),
            verdict(ok_exact)
        ));
    }
    Outcome { pass, lines, fingerprint: None }
}

fn c2_brownian_mc(workers: usize) -> Outcome {
    let start = Instant::now();
    let model = AggregateModel::brownian(1.0, 1.0).unwrap();
    let grids = [GridPlan::new(2048, 1.0).unwrap(), GridPlan::new(4096, 1.0).unwrap()];
    let table = convergence_study(&model, 1.0, &grids, 1_000_000, SEED, workers).unwrap();
    let e = &table.extrapolated;
    let z = (e.p_hat - C2_TARGET).abs() / e.stderr;
    let mut lines = vec![];
    for row in &table.rows {
        lines.push(format!("m={}: {:.6} +- {:.2e}", row.estimate.grid.m(), row.estimate.p_hat, row.estimate.stderr));
    }
    lines.push(format!(
        "extrapolated (exponent {:.3}): {:.6} +- {:.2e}, {z:.2} stderr from {C2_TARGET} (reflection formula {:.7})",
        table.exponent,
        e.p_hat,
        e.stderr,
        psi(2.0) + (-2f64).exp() * psi(0.0)
    ));
    let ok_time = timed(C2_MAX_TIME, start, &mut lines);
    let pass = z <= C2_SIGMAS && e.stderr <= C2_MAX_STDERR && (workers > 1 || ok_time);
    let fingerprint = table.csv_rows().into_iter().map(|r| r.join(",")).collect::<Vec<_>>().join("\n");
    Outcome { pass, lines, fingerprint: Some(fingerprint) }
}

fn log_gap(closed: &ClosedForm, form: &AsymptoticForm) -> f64 {
    let a = closed.coefficient.ln() + log_psi(closed.tail_arg);
    let b = form.constant.coefficient.ln() + form.theta.ln() + log_psi(form.tail_arg);
    let gap = (a - b).abs();
    if gap.is_finite() {
        gap
    } else {
        f64::INFINITY
    }
}

fn c3_corollaries() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut worst_bi, mut worst_sub) = (0.0f64, 0.0f64);
    let mut made = (0, 0);
    while made.0 < C3_MODELS {
        let n = rng.random_range(1..=4);
        let mut comps: Vec<(f64, f64, f64)> = (0..n)
            .map(|_| (rng.random_range(0.2..3.0), rng.random_range(0.2..=1.0), rng.random_range(0.1..0.95)))
            .collect();
        comps.sort_by(|a, b| (a.1 * a.2).total_cmp(&(b.1 * b.2)));
        // K·H below 0.1 pushes θ past the largest double.
        let tie = comps.len() > 1 && comps[0].1 * comps[0].2 + 1e-6 >= comps[1].1 * comps[1].2;
        if tie || comps[0].1 * comps[0].2 < 0.1 {
            continue;
        }
        let (t, c, u) = (rng.random_range(0.5..2.0), rng.random_range(0.0..2.0), rng.random_range(1.0..30.0));
        let trend = Trend::linear(c).unwrap();
        let closed = corollary_bifbm(&comps, &trend, t, u).unwrap();
        let model = AggregateModel::new(
            comps.iter().map(|&(w, k, h)| Component { weight: w, kernel: KernelSpec::bi_fbm(k, h).unwrap() }).collect(),
            trend,
            t,
        )
        .unwrap();
        let form = ruin_asymptotic_form(&model, u).unwrap();
        let gap = if closed.special == form.constant.special { log_gap(&closed, &form) } else { f64::INFINITY };
        worst_bi = worst_bi.max(gap);
        made.0 += 1;
    }
    while made.1 < C3_MODELS {
        let n = rng.random_range(1..=4);
        let mut comps: Vec<(f64, f64)> =
            (0..n).map(|_| (rng.random_range(0.2..3.0), rng.random_range(0.1..0.95))).collect();
        comps.sort_by(|a, b| a.1.total_cmp(&b.1));
        if comps.len() > 1 && comps[0].1 + 1e-6 >= comps[1].1 {
            continue;
        }
        let (t, c, u) = (rng.random_range(0.5..2.0), rng.random_range(0.0..2.0), rng.random_range(1.0..30.0));
        let trend = Trend::linear(c).unwrap();
        let closed = corollary_subfbm(&comps, &trend, t, u).unwrap();
        let model = AggregateModel::new(
            comps.iter().map(|&(w, h)| Component { weight: w, kernel: KernelSpec::sub_fbm(h).unwrap() }).collect(),
            trend,
            t,
        )
        .unwrap();
        let form = ruin_asymptotic_form(&model, u).unwrap();
        let gap = if closed.special == form.constant.special { log_gap(&closed, &form) } else { f64::INFINITY };
        worst_sub = worst_sub.max(gap);
        made.1 += 1;
    }
    Outcome {
        pass: worst_bi <= IDENTITY_TOL && worst_sub <= IDENTITY_TOL,
        lines: vec![format!(
            "worst relative gap: bi-fBm {worst_bi:.2e}, sub-fBm {worst_sub:.2e} over {C3_MODELS} models each (tol {IDENTITY_TOL:e})"
        )],
        fingerprint: None,
    }
}

fn c4_rough_mixture() -> Outcome {
    let mut worst = 0.0f64;
    for h in [0.1, 0.2, 0.3, 0.4] {
        let trend = Trend::linear(1.0).unwrap();
        let model = example1_model(h, trend.clone(), 1.0).unwrap();
        for u in [1.0, 5.0, 10.0, 20.0, 50.0] {
            let form = ruin_asymptotic_form(&model, u).unwrap();
            let closed = example1_closed_form(h, &trend, 1.0, u).unwrap();
            let gap = if closed.special == form.constant.special { log_gap(&closed, &form) } else { f64::INFINITY };
            worst = worst.max(gap);
        }
    }
    Outcome {
        pass: worst <= IDENTITY_TOL,
        lines: vec![format!("worst relative gap {worst:.2e} (tol {IDENTITY_TOL:e})")],
        fingerprint: None,
    }
}

fn budget(workers: usize) -> McBudget {
    McBudget { workers, seed: SEED, ..McBudget::default() }
}

fn c5_pickands(workers: usize) -> Outcome {
    let b = budget(workers);
    let mut lines = vec![format!("budget {}", b.settings())];
    let mut pass = true;
    let mut fingerprint = String::new();
    for (alpha, band) in [(1.0, C5_PICKANDS_1), (2.0, C5_PICKANDS_2)] {
        let start = Instant::now();
        let e = pickands_estimate(alpha, &b).unwrap();
        let ok = within(band, e.value);
        lines.push(format!("alpha={alpha}: {:.4} +- {:.4} in {band:?} {}", e.value, e.stderr, verdict(ok)));
        pass &= ok & timed(CONSTANT_MAX_TIME, start, &mut lines);
        fingerprint += &format!("{:?}\n", (e.value.to_bits(), e.stderr.to_bits(), &e.levels));
    }
    Outcome { pass, lines, fingerprint: Some(fingerprint) }
}

fn c6_piterbarg(workers: usize) -> Outcome {
    let b = budget(workers);
    let mut lines = vec![format!("budget {}", b.settings())];
    let mut pass = true;
    let mut fingerprint = String::new();
    for (r, band) in [(1.0, C6_PITERBARG_1_1), (3.0, C6_PITERBARG_1_3)] {
        let start = Instant::now();
        let e = piterbarg_estimate(1.0, r, &b).unwrap();
        let ok = within(band, e.value);
        lines.push(format!(
            "alpha=1 R={r}: {:.4} +- {:.4} at S={} in {band:?} {}",
            e.value,
            e.stderr,
            e.horizon,
            verdict(ok)
        ));
        pass &= ok & timed(CONSTANT_MAX_TIME, start, &mut lines);
        fingerprint += &format!("{:?}\n", (e.value.to_bits(), e.stderr.to_bits(), &e.levels));
    }
    Outcome { pass, lines, fingerprint: Some(fingerprint) }
}

// Level at which the asymptote equals `target`, by bisection in log space.
fn level_for(model: &AggregateModel, target: f64) -> f64 {
    let provider = ConstantsProvider::exact_only();
    let log_at = |u: f64| ruin_asymptotic(model, u, &provider).unwrap().log_value;
    let (mut lo, mut hi) = (0.0, 50.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if log_at(mid) > target.ln() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn c7_fbm_tracking(workers: usize) -> Outcome {
    let start = Instant::now();
    let model = AggregateModel::single(KernelSpec::fbm(0.75).unwrap(), 1.0, Trend::linear(1.0).unwrap(), 1.0).unwrap();
    let provider = ConstantsProvider::exact_only();
    let grid = GridPlan::new(C7_M, 1.0).unwrap();
    let mut lines = Vec::new();
    let mut ratios = Vec::new();
    let mut fingerprint = String::new();
    for target in C7_TARGETS {
        let u = level_for(&model, target);
        let a = ruin_asymptotic(&model, u, &provider).unwrap();
        let e = crossing_prob_is(&model, u, grid, C7_N, SEED, workers).unwrap();
        let ratio = e.p_hat / a.value;
        lines.push(format!(
            "u={u:.4}: asymptote {:.3e}, IS {:.4e} +- {:.1e} (ESS {:.0}), ratio {ratio:.3}",
            a.value,
            e.p_hat,
            e.stderr,
            e.ess.unwrap_or(f64::NAN)
        ));
        ratios.push(ratio);
        fingerprint += &e.csv_record().join(",");
        fingerprint.push('\n');
    }
    let in_band = ratios.iter().all(|&r| within(C7_BAND, r));
    let approach = (ratios[2] - 1.0).abs() < (ratios[0] - 1.0).abs();
    lines.push(format!("all ratios in {C7_BAND:?} {}; closer to 1 at the largest u {}", verdict(in_band), verdict(approach)));
    let ok_time = timed(C7_MAX_TIME, start, &mut lines);
    Outcome { pass: in_band && approach && ok_time, lines, fingerprint: Some(fingerprint) }
}

fn c8_weibull(workers: usize) -> Outcome {
    let start = Instant::now();
    let levy = LevyModel::compound_poisson(1.0, ClaimDist::weibull(0.5).unwrap(), 1.0).unwrap();
    let noise = AggregateModel::new(
        vec![
            Component { weight: 1.0, kernel: KernelSpec::fbm(0.5).unwrap() },
            Component { weight: 1.0, kernel: KernelSpec::time_changed_bm(0.5).unwrap() },
        ],
        Trend::zero(),
        1.0,
    )
    .unwrap();
    let model = PerturbedModel::new(levy, Some(noise), 1.0).unwrap();
    let b = ReportBudget { n: C8_N, m: C8_M, workers, ..ReportBudget::default() };
    let report = tail_equivalence_report(&model, &C8_LEVELS, &b, SEED, &ConstantsProvider::exact_only()).unwrap();
    let mut lines = Vec::new();
    let mut pass = true;
    for r in &report.rows {
        let ok = within(C8_BAND, r.ratio_tilde);
        pass &= ok;
        lines.push(format!(
            "u={}: psi~ {:.4e} +- {:.1e}, asymptote {:.4e}, ratio {:.3} {}; psi ratio {:.3}; (1-F2)/(1-F1) {:.3e}",
            r.u,
            r.psi_tilde.p_hat,
            r.psi_tilde.stderr,
            r.asymptote,
            r.ratio_tilde,
            verdict(ok),
            r.ratio,
            r.hypothesis_ratio
        ));
    }
    let drop = (report.rows[0].log_hypothesis_ratio - report.rows[1].log_hypothesis_ratio).exp();
    let ok_drop = drop >= C8_MIN_DROP;
    lines.push(format!("hypothesis ratio falls by {drop:.3e}x (need {C8_MIN_DROP}x) {}", verdict(ok_drop)));
    let ok_time = timed(C8_MAX_TIME, start, &mut lines);
    let fingerprint = report.csv_rows().into_iter().map(|r| r.join(",")).collect::<Vec<_>>().join("\n");
    Outcome { pass: pass && ok_drop && ok_time, lines, fingerprint: Some(fingerprint) }
}

fn c9_stable(workers: usize) -> Outcome {
    let start = Instant::now();
    let levels: Vec<f64> = C9_BANDS.iter().map(|b| b.0).collect();
    let est = stable_endpoint_tail(1.5, 0.0, 1.0, &levels, C9_N, SEED, workers).unwrap();
    let mut lines = Vec::new();
    let mut pass = true;
    let mut fingerprint = String::new();
    for (e, &(u, band)) in est.iter().zip(&C9_BANDS) {
        let a = tail_asymptote_stable(u, 1.5, 0.0, 1.0);
        let ratio = e.p_hat / a;
        let ok = within(band, ratio);
        pass &= ok;
        lines.push(format!("u={u}: P {:.4e} +- {:.1e}, asymptote {a:.4e}, ratio {ratio:.4} in {band:?} {}", e.p_hat, e.stderr, verdict(ok)));
        fingerprint += &e.csv_record().join(",");
        fingerprint.push('\n');
    }
    let ok_time = timed(C9_MAX_TIME, start, &mut lines);
    Outcome { pass: pass && ok_time, lines, fingerprint: Some(fingerprint) }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "MISS"
    }
}

type McCriterion = (&'static str, fn(usize) -> Outcome);

fn main() {
    let mc: [McCriterion; 6] = [
        ("C2", c2_brownian_mc),
        ("C5", c5_pickands),
        ("C6", c6_piterbarg),
        ("C7", c7_fbm_tracking),
        ("C8", c8_weibull),
        ("C9", c9_stable),
    ];
    let titles = [
        ("C1", "Brownian exact oracle"),
        ("C2", "Brownian Monte-Carlo oracle"),
        ("C3", "corollary identities"),
        ("C4", "fBm plus time-changed BM identity"),
        ("C5", "Pickands estimator"),
        ("C6", "Piterbarg estimator"),
        ("C7", "fBm(0.75) asymptote tracking"),
        ("C8", "Weibull perturbed equivalence"),
        ("C9", "stable endpoint tail"),
        ("C10", "determinism across worker counts"),
    ];
    let title = |id: &str| titles.iter().find(|t| t.0 == id).map(|t| t.1).unwrap_or("");

    let mut results: Vec<(&str, bool)> = Vec::new();
    let mut report = |id: &'static str, o: &Outcome| {
        println!("{id} {}: {}", title(id), if o.pass { "PASS" } else { "FAIL" });
        for l in &o.lines {
            println!("    {l}");
        }
        results.push((id, o.pass));
    };

    report("C1", &c1_brownian_exact());
    let mut prints = Vec::new();
    for (id, f) in mc.iter().take(1) {
        let o = f(1);
        report(id, &o);
        prints.push((*id, *f, o.fingerprint));
    }
    report("C3", &c3_corollaries());
    report("C4", &c4_rough_mixture());
    for (id, f) in mc.iter().skip(1) {
        let o = f(1);
        report(id, &o);
        prints.push((*id, *f, o.fingerprint));
    }

    let mut lines = Vec::new();
    let mut same = true;
    for (id, f, first) in &prints {
        for w in C10_WORKERS {
            let again = f(w).fingerprint;
            let ok = again == *first;
            same &= ok;
            lines.push(format!("{id} at {w} workers: {}", if ok { "byte-identical" } else { "DIFFERS" }));
        }
    }
    report("C10", &Outcome { pass: same, lines, fingerprint: None });

    let mut unexpected = 0;
    println!();
    for (id, pass) in &results {
        let known = KNOWN_RED.iter().find(|k| k.0 == *id);
        match (pass, known) {
            (true, Some(_)) => println!("{id}: passes now; drop it from the known-red list"),
            (false, Some((_, why))) => println!("{id}: known red: {why}"),
            (false, None) => unexpected += 1,
            (true, None) => {}
        }
    }
    let passed = results.iter().filter(|r| r.1).count();
    println!("acceptance: {passed}/{} criteria pass, {unexpected} unexpected failures", results.len());
    if unexpected > 0 {
        std::process::exit(1);
    }
}
