use aggruin::constants::{pickands_estimate, piterbarg_estimate, McBudget};

fn small(grid_per_unit: usize) -> McBudget {
    McBudget {
        horizon: 10.0,
        grid_per_unit,
        reps: 4_000,
        seed: 99,
        workers: 1,
        max_doublings: 2,
    }
}

#[test]
fn pickands_grows_as_the_grid_refines() {
    for alpha in [1.0, 2.0] {
        let est: Vec<_> = [64, 128, 256]
            .iter()
            .map(|&m| pickands_estimate(alpha, &small(m)).unwrap())
            .collect();
        for w in est.windows(2) {
            let tol = 2.0 * w[0].stderr.hypot(w[1].stderr);
            assert!(w[1].value >= w[0].value - tol, "alpha={alpha}: {} then {}", w[0].value, w[1].value);
        }
    }
}

#[test]
fn pickands_is_larger_for_rougher_paths() {
    let b = small(128);
    let (one, two) = (pickands_estimate(1.0, &b).unwrap(), pickands_estimate(2.0, &b).unwrap());
    assert!(one.value > two.value - one.stderr.hypot(two.stderr), "{} vs {}", one.value, two.value);
}

#[test]
fn piterbarg_is_at_least_one() {
    for (alpha, r) in [(1.0, 1.0), (1.0, 3.0), (1.5, 2.0), (2.0, 1.0)] {
        let e = piterbarg_estimate(alpha, r, &small(64)).unwrap();
        assert!(e.value >= 1.0 - 2.0 * e.stderr, "alpha={alpha} R={r}: {}", e.value);
    }
}

#[test]
fn estimates_repeat_bit_for_bit() {
    let mut b = small(64);
    let first = piterbarg_estimate(1.0, 2.0, &b).unwrap();
    b.workers = 3;
    let again = piterbarg_estimate(1.0, 2.0, &b).unwrap();
    assert_eq!(first.value.to_bits(), again.value.to_bits());
    assert_eq!(first.levels, again.levels);
}
