//! Exact asymptotics of `P(sup (X(t) - g(t)) > u)` for aggregate models in
//! all three regimes, and the closed forms they reduce to.
//!
//!     cargo run --release --example ruin_asymptotics

use aggruin::asymptotics::{corollary_bifbm, example1_closed_form, example1_model, ruin_asymptotic, Component};
use aggruin::constants::ConstantsProvider;
use aggruin::{AggregateModel, KernelSpec, Trend};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let exact = ConstantsProvider::exact_only();
    let drift = Trend::linear(1.0)?;

    // alpha > beta: smooth fBm, constant 1.
    let smooth = AggregateModel::single(KernelSpec::fbm(0.75)?, 1.0, drift.clone(), 1.0)?;
    // alpha = beta: Brownian motion, Piterbarg constant.
    let bm = AggregateModel::brownian(1.0, 1.0)?;
    // Two bi-fBm components, smallest K H first.
    let mixture = AggregateModel::new(
        vec![
            Component { weight: 0.5, kernel: KernelSpec::bi_fbm(0.9, 0.6)? },
            Component { weight: 1.0, kernel: KernelSpec::bi_fbm(0.8, 0.7)? },
        ],
        drift.clone(),
        1.0,
    )?;

    for (name, model) in [("fbm(0.75)", &smooth), ("brownian", &bm), ("bi-fbm mix", &mixture)] {
        println!("{name}");
        for u in [2.0, 5.0, 10.0] {
            let r = ruin_asymptotic(model, u, &exact)?;
            println!(
                "  u={u:<4} {:<14} C={:.6} theta={:.4e} value={:.6e} log10={:.3}",
                r.regime.to_string(),
                r.constant,
                r.theta,
                r.value,
                r.log_value / std::f64::consts::LN_10
            );
        }
    }

    // The engine against the bi-fBm closed form.
    let closed = corollary_bifbm(&[(0.5, 0.9, 0.6), (1.0, 0.8, 0.7)], &drift, 1.0, 10.0)?;
    let engine = ruin_asymptotic(&mixture, 10.0, &exact)?;
    println!("\nbi-fBm closed form {:.12e}, engine {:.12e}", closed.value(&exact)?, engine.value);

    // alpha < beta needs a Pickands constant; keep it symbolic.
    let h = 0.3;
    let model = example1_model(h, drift.clone(), 1.0)?;
    let form = aggruin::asymptotics::ruin_asymptotic_form(&model, 10.0)?;
    let closed = example1_closed_form(h, &drift, 1.0, 10.0)?;
    println!(
        "B_H + B_1/2(t^2H), H={h}: value / H_{{{h}}} = {:.6e} (closed form {:.6e})",
        form.symbolic_value(),
        closed.symbolic_value()
    );
    Ok(())
}
