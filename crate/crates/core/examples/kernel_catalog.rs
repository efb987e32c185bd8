//! Covariance families and their local behaviour at the horizon.
//!
//! For each kernel we print the variance-drop and correlation exponents
//! (`beta`, `alpha`), whether they were derived in closed form or fitted,
//! and the independent check from `verify_expansion`.
//!
//!     cargo run --release --example kernel_catalog

use aggruin::kernels::{local_expansion, verify_expansion, TabulatedKernel};
use aggruin::KernelSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let horizon = 1.0;
    let mut kernels = vec![
        KernelSpec::fbm(0.3)?,
        KernelSpec::fbm(0.75)?,
        KernelSpec::sub_fbm(0.4)?,
        KernelSpec::bi_fbm(0.5, 0.8)?,
        KernelSpec::time_changed_bm(0.25)?,
        KernelSpec::time_avg_fbm(0.6)?,
    ];

    // A tabulated copy of fBm(0.3) goes through the fitting path. The fit
    // only looks at lags in [1e-4 T, 1e-2 T], so the table is refined there.
    let mut times: Vec<f64> = (0..100).map(|j| j as f64 / 100.0).collect();
    times.extend((0..20).rev().map(|k| horizon - 1e-4 * 100f64.powf(k as f64 / 19.0)));
    times.push(horizon);
    times.sort_by(f64::total_cmp);
    times.dedup();
    let table = TabulatedKernel::from_kernel(&KernelSpec::fbm(0.3)?, &times)?;
    kernels.push(KernelSpec::tabulated(table));

    println!(
        "{:<24} {:>8} {:>8} {:>8} {:>8} {:>12}  check",
        "kernel", "sigma", "beta", "alpha", "gamma", "source"
    );
    for k in &kernels {
        let e = local_expansion(k, horizon)?;
        let report = verify_expansion(k, horizon, &e);
        println!(
            "{:<24} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>12}  {}",
            k.to_string(),
            e.sigma_tilde,
            e.beta,
            e.alpha,
            e.gamma,
            format!("{:?}", e.source),
            if report.pass { "ok" } else { "MISMATCH" }
        );
    }

    // Exact self-similarity: Cov(cs, ct) = c^{2H} Cov(s, t).
    let k = KernelSpec::sub_fbm(0.4)?;
    let (s, t, c) = (0.3, 0.8, 2.5);
    let lhs = k.cov(c * s, c * t)?;
    let rhs = c.powf(0.8) * k.cov(s, t)?;
    println!("\nsub-fBm(0.4) scaling: {lhs:.12} vs {rhs:.12}");
    Ok(())
}
