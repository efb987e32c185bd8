//! Brownian motion with drift has a closed-form crossing probability,
//! `Psi(u + c) + exp(-2uc) Psi(u - c)` on `[0, 1]`. We compare it with
//! the asymptotic engine and with grid Monte Carlo plus Richardson
//! extrapolation.
//!
//!     cargo run --release --example brownian_gold [n]

use aggruin::asymptotics::ruin_asymptotic;
use aggruin::constants::ConstantsProvider;
use aggruin::simulation::{convergence_study, GridPlan};
use aggruin::{log_psi, psi, AggregateModel};

fn reflection(u: f64, c: f64) -> f64 {
    psi(u + c) + (-2.0 * u * c).exp() * psi(u - c)
}

/// `ln` of [`reflection`], usable where the value underflows.
fn log_reflection(u: f64, c: f64) -> f64 {
    let (a, b) = (log_psi(u + c), -2.0 * u * c + log_psi(u - c));
    a.max(b) + (-(a - b).abs()).exp().ln_1p()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(200_000);
    let model = AggregateModel::brownian(1.0, 1.0)?;
    let exact = ConstantsProvider::exact_only();

    let l10 = std::f64::consts::LN_10;
    println!("{:>5} {:>14} {:>14} {:>8}", "u", "log10 exact", "log10 asym", "ratio");
    for u in [2.0, 5.0, 10.0, 20.0, 50.0, 100.0] {
        let gold = log_reflection(u, 1.0);
        let asym = ruin_asymptotic(&model, u, &exact)?.log_value;
        println!("{u:>5} {:>14.6} {:>14.6} {:>8.5}", gold / l10, asym / l10, (gold - asym).exp());
    }

    let grids = [GridPlan::new(1024, 1.0)?, GridPlan::new(2048, 1.0)?, GridPlan::new(4096, 1.0)?];
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let table = convergence_study(&model, 1.0, &grids, n, 20240917, workers)?;
    println!("\nu = 1, n = {n}");
    for row in &table.rows {
        println!("  m={:<5} p={:.6} +- {:.6}", row.estimate.grid.m(), row.estimate.p_hat, row.estimate.stderr);
    }
    let x = &table.extrapolated;
    println!(
        "  extrapolated (r = {:.3}) {:.6} +- {:.6}; exact {:.6}",
        table.exponent,
        x.p_hat,
        x.stderr,
        reflection(1.0, 1.0)
    );
    Ok(())
}
