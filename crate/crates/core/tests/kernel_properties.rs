use aggruin::kernels::{local_expansion, verify_expansion};
use aggruin::KernelSpec;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

fn analytic_families() -> Vec<KernelSpec> {
    vec![
        KernelSpec::fbm(0.3).unwrap(),
        KernelSpec::fbm(0.75).unwrap(),
        KernelSpec::sub_fbm(0.4).unwrap(),
        KernelSpec::bi_fbm(0.6, 0.7).unwrap(),
        KernelSpec::time_changed_bm(0.35).unwrap(),
        KernelSpec::time_avg_fbm(0.6).unwrap(),
    ]
}

fn arb_kernel() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![
        (0.05f64..0.99).prop_map(|h| KernelSpec::fbm(h).unwrap()),
        (0.05f64..0.95).prop_map(|h| KernelSpec::sub_fbm(h).unwrap()),
        (0.05f64..1.0, 0.05f64..0.95).prop_map(|(k, h)| KernelSpec::bi_fbm(k, h).unwrap()),
        (0.05f64..1.0).prop_map(|h| KernelSpec::time_changed_bm(h).unwrap()),
        (0.05f64..1.0).prop_map(|h| KernelSpec::time_avg_fbm(h).unwrap()),
    ]
}

proptest! {
    #[test]
    fn covariance_is_symmetric(k in arb_kernel(), s in 0.0f64..3.0, t in 0.0f64..3.0) {
        prop_assert_eq!(k.cov(s, t).unwrap(), k.cov(t, s).unwrap());
        prop_assert!(k.cov(t, t).unwrap() >= 0.0);
    }

    #[test]
    fn bi_fbm_is_self_similar(
        k in 0.05f64..1.0,
        h in 0.05f64..0.95,
        s in 0.01f64..2.0,
        t in 0.01f64..2.0,
        a in prop::sample::select(vec![0.5, 2.0, 3.0]),
    ) {
        let kern = KernelSpec::bi_fbm(k, h).unwrap();
        let lhs = kern.cov(a * s, a * t).unwrap();
        let rhs = a.powf(2.0 * k * h) * kern.cov(s, t).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn bi_fbm_with_unit_k_is_fbm(h in 0.05f64..0.95, s in 0.0f64..3.0, t in 0.0f64..3.0) {
        let bi = KernelSpec::bi_fbm(1.0, h).unwrap().cov(s, t).unwrap();
        let fbm = KernelSpec::fbm(h).unwrap().cov(s, t).unwrap();
        prop_assert!((bi - fbm).abs() <= 1e-14 * fbm.abs().max(1.0), "{} vs {}", bi, fbm);
    }

    #[test]
    fn covariance_matrices_have_no_large_negative_eigenvalues(k in arb_kernel(), m in 4usize..40) {
        let times: Vec<f64> = (1..=m).map(|j| j as f64 / m as f64).collect();
        let cov = DMatrix::from_fn(m, m, |i, j| k.cov(times[i], times[j]).unwrap());
        let trace = cov.trace();
        let floor = SymmetricEigen::new(cov).eigenvalues.min();
        prop_assert!(floor >= -1e-8 * trace, "eigenvalue {} with trace {}", floor, trace);
    }
}

#[test]
fn analytic_expansions_verify_at_several_horizons() {
    for kernel in analytic_families() {
        for horizon in [0.5, 1.0, 2.0] {
            let exp = local_expansion(&kernel, horizon).unwrap();
            let report = verify_expansion(&kernel, horizon, &exp);
            assert!(report.pass, "{kernel:?} at T={horizon}: {report:?}");
        }
    }
}

// Simpson on a fine grid of the fBm covariance: sqrt(2H+2)/t * int_0^t B_H.
fn time_avg_cov_by_quadrature(h: f64, s: f64, t: f64) -> f64 {
    let fbm = |a: f64, b: f64| 0.5 * (a.powf(2.0 * h) + b.powf(2.0 * h) - (a - b).abs().powf(2.0 * h));
    let n = 400;
    let simpson = |f: &dyn Fn(f64) -> f64, hi: f64| {
        let dx = hi / n as f64;
        let mut acc = f(0.0) + f(hi);
        for j in 1..n {
            acc += if j % 2 == 1 { 4.0 } else { 2.0 } * f(j as f64 * dx);
        }
        acc * dx / 3.0
    };
    let inner = |x: f64| simpson(&|y| fbm(x, y), t);
    (2.0 * h + 2.0) / (s * t) * simpson(&inner, s)
}

#[test]
fn time_avg_closed_form_matches_quadrature() {
    for h in [0.5, 0.7] {
        let k = KernelSpec::time_avg_fbm(h).unwrap();
        for (s, t) in [(2.0, 2.0), (0.5, 1.5), (1.0, 0.25)] {
            let exact = k.cov(s, t).unwrap();
            let quad = time_avg_cov_by_quadrature(h, s, t);
            assert!((exact - quad).abs() < 2e-4 * exact.abs().max(1.0), "H={h} ({s},{t}): {exact} vs {quad}");
        }
    }
    assert!((KernelSpec::time_avg_fbm(0.5).unwrap().cov(2.0, 2.0).unwrap() - 2.0).abs() < 1e-12);
}
