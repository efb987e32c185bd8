//! Discretisation bias of the grid maximum: rough paths converge slowly,
//! smooth ones are already converged on coarse grids. For rough paths the
//! fitted exponent is still pre-asymptotic at these grid sizes, so the
//! extrapolated value is only a rough indication.
//!
//!     cargo run --release --example convergence_study

use aggruin::simulation::{convergence_study, GridPlan};
use aggruin::{AggregateModel, KernelSpec, Trend};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grids: Vec<GridPlan> = [64, 128, 256, 512, 1024]
        .into_iter()
        .map(|m| GridPlan::new(m, 1.0))
        .collect::<Result<_, _>>()?;
    let n = 50_000;
    for kernel in [KernelSpec::fbm(0.3)?, KernelSpec::fbm(0.7)?, KernelSpec::time_avg_fbm(0.5)?] {
        let model = AggregateModel::single(kernel.clone(), 1.0, Trend::linear(1.0)?, 1.0)?;
        let t = convergence_study(&model, 1.0, &grids, n, 5, 1)?;
        println!("{kernel}");
        for r in &t.rows {
            println!(
                "  m={:<5} p={:.5} gap to finest {:+.5} (stderr {:.5})",
                r.estimate.grid.m(),
                r.estimate.p_hat,
                r.gap_to_finest,
                r.estimate.stderr
            );
        }
        let fitted = t.fitted_exponent.map(|r| format!("{r:.3}")).unwrap_or_else(|| "-".into());
        println!("  exponent fitted {fitted}, used {:.3}; extrapolated {:.5}\n", t.exponent, t.extrapolated.p_hat);
    }
    Ok(())
}
