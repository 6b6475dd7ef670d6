use std::time::Instant;

use dividend_eq::equilibrium::solve_equilibrium;
use dividend_eq::mc::{perturbation_gain, SimConfig};
use dividend_eq::model::{DiscountSpec, ModelParams, StrategyCase, Validation};

fn main() {
    let d = DiscountSpec::pseudo_exponential(0.3, 0.6, 1.0).unwrap();

    // criterion 5: smallest phi with x1 = 0 for l_bar = r_bar = 2
    let t0 = Instant::now();
    let has_injection = |phi: f64| {
        let p = ModelParams::validate(1.0, 1.0, 2.0, 2.0, phi, Validation::UnitCostAllowed).unwrap();
        solve_equilibrium(&p, &d).unwrap().x1 > 0.0
    };
    let (mut lo, mut hi) = (1.0, 2.5);
    assert!(has_injection(lo) && !has_injection(hi));
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if has_injection(mid) { lo = mid; } else { hi = mid; }
    }
    println!("phi* = {:.6} (time {:?})", hi, t0.elapsed());

    // criterion 6: l_bar regime boundary at phi = 1.2, r_bar = 1
    let is_always_pay = |l_bar: f64| {
        let p = ModelParams::new(1.0, 1.0, l_bar, 1.0, 1.2).unwrap();
        solve_equilibrium(&p, &d).unwrap().case == StrategyCase::AlwaysPay
    };
    let (mut lo, mut hi) = (0.1, 2.0);
    assert!(is_always_pay(lo) && !is_always_pay(hi));
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if is_always_pay(mid) { lo = mid; } else { hi = mid; }
    }
    println!("l_bar* = {:.6}", hi);

    // criterion 12 probe: one start, one epsilon, all four corners
    let p = ModelParams::new(1.0, 1.0, 1.0, 1.0, 1.2).unwrap();
    let sol = solve_equilibrium(&p, &d).unwrap();
    let cfg = SimConfig::new(1e-3, 17.0, 100_000, 7);
    let eps = 0.1;
    for (l, r) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
        let t0 = Instant::now();
        let rep = perturbation_gain(&p, &sol.policy(), &d, 0.25, l, r, eps, &cfg);
        let floor = -(3.0 * rep.std_error + 0.05 * eps);
        println!(
            "corner ({l},{r}): gain {:+.6} 3se {:.6} floor {:+.6} [{}] {:?}",
            rep.mean, 3.0 * rep.std_error, floor,
            if rep.mean >= floor { "OK" } else { "FAIL" },
            t0.elapsed()
        );
    }
}
