//! Chambers-Mallows-Stuck draws of a 1.5-stable law against its power tail
//! `C (1 + beta)/2 u^{-alpha}`.
//!
//!     cargo run --release --example stable_tail [n]

use aggruin::levy::{stable_endpoint_tail, tail_asymptote_stable};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(2_000_000);
    let (alpha, horizon) = (1.5, 1.0);
    let u = [3.0, 10.0, 30.0, 100.0];
    for beta in [0.0, 0.5] {
        let est = stable_endpoint_tail(alpha, beta, horizon, &u, n, 1, 1)?;
        println!("beta = {beta}");
        for e in est {
            let a = tail_asymptote_stable(e.u, alpha, beta, horizon);
            println!("  u={:<5} P={:.4e} +- {:.1e} asymptote {:.4e} ratio {:.3}", e.u, e.p_hat, e.stderr, a, e.p_hat / a);
        }
    }
    Ok(())
}
