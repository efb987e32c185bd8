//! Compound Poisson claims with Weibull(1/2) sizes and a Brownian
//! perturbation: the ruin probability follows the claim tail
//! `mu T exp(-u^tau)`, and the Gaussian tail becomes negligible.
//!
//!     cargo run --release --example weibull_perturbed [n]

use aggruin::asymptotics::Component;
use aggruin::constants::ConstantsProvider;
use aggruin::levy::{tail_equivalence_report, ClaimDist, LevyModel, PerturbedModel, ReportBudget};
use aggruin::{AggregateModel, KernelSpec, Trend};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(200_000);
    let levy = LevyModel::compound_poisson(1.0, ClaimDist::weibull(0.5)?, 1.0)?;
    let noise = AggregateModel::new(
        vec![
            Component { weight: 1.0, kernel: KernelSpec::fbm(0.5)? },
            Component { weight: 1.0, kernel: KernelSpec::time_changed_bm(0.5)? },
        ],
        Trend::zero(),
        1.0,
    )?;
    let model = PerturbedModel::new(levy, Some(noise), 1.0)?;
    let budget = ReportBudget { n, m: 256, ..ReportBudget::default() };
    let report = tail_equivalence_report(&model, &[4.0, 9.0, 16.0, 25.0], &budget, 3, &ConstantsProvider::exact_only())?;

    println!("{:>4} {:>11} {:>11} {:>11} {:>8} {:>8} {:>12}", "u", "psi~", "psi", "asymptote", "ratio~", "ratio", "F2/F1 tails");
    for r in &report.rows {
        println!(
            "{:>4} {:>11.4e} {:>11.4e} {:>11.4e} {:>8.3} {:>8.3} {:>12.3e}",
            r.u, r.psi_tilde.p_hat, r.psi.p_hat, r.asymptote, r.ratio_tilde, r.ratio, r.hypothesis_ratio
        );
    }
    println!("verdict: {}", report.verdict);
    Ok(())
}
