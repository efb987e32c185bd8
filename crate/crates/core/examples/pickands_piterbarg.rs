//! Monte-Carlo estimates of Pickands and Piterbarg constants next to the
//! values known in closed form.
//!
//!     cargo run --release --example pickands_piterbarg [reps]

use aggruin::constants::{exact_constant, pickands_estimate, piterbarg_estimate, ConstantKind, McBudget};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reps = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(5_000);
    let budget = McBudget {
        reps,
        workers: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        ..McBudget::default()
    };
    println!("budget {}", budget.settings());

    for alpha in [1.0, 2.0] {
        let e = pickands_estimate(alpha, &budget)?;
        let exact = exact_constant(ConstantKind::Pickands { alpha });
        let (lo, hi) = e.ci95();
        println!("Pickands alpha={alpha}: {:.4} [{lo:.4}, {hi:.4}] exact {exact:?}", e.value);
    }
    for r in [1.0, 3.0] {
        let e = piterbarg_estimate(1.0, r, &budget)?;
        let exact = exact_constant(ConstantKind::Piterbarg { alpha: 1.0, r });
        println!(
            "Piterbarg alpha=1 R={r}: {:.4} +- {:.4} (horizon {}) exact {exact:?}",
            e.value, e.stderr, e.horizon
        );
    }
    Ok(())
}
