//! Deliberately broken variants must be caught by the same checks that pass
//! on the real implementation.

use freqmarket_core::controller::{closed_loop, closed_loop_with, PidGains};
use freqmarket_core::dispatch::{price_bracket, solve_in_bracket, EdTolerances};
use freqmarket_core::metrics::{settling_time, tracking_error};
use freqmarket_core::model::GeneratorParams;
use freqmarket_core::parallel::ExecPolicy;
use freqmarket_core::scenario::reference_scenario_a;
use freqmarket_core::verify::{check_ed_oracle, price_identity_stats, solve_default};

#[test]
fn real_solver_passes_oracle() {
    let r = check_ed_oracle(&solve_default, ExecPolicy::default());
    assert!(r.passed, "{}", r.line());
}

#[test]
fn truncated_bracket_fails_oracle() {
    // Upper end cut below the top marginal cost: high-demand instances
    // can no longer clear.
    let tampered = |fleet: &[GeneratorParams], demand: f64| {
        solve_in_bracket(fleet, demand, EdTolerances::default(), |f| {
            let (lo, hi) = price_bracket(f);
            (lo, lo + 0.5 * (hi - lo))
        })
    };
    let r = check_ed_oracle(&tampered, ExecPolicy::default());
    assert!(!r.passed, "tampered bracket went unnoticed: {}", r.line());
    assert!(r.line().starts_with("[FAIL]"));
    assert!(r.line().contains("ED oracle"));
}

#[test]
fn flipped_derivative_sign_breaks_price_identity() {
    let (cfg, sched) = reference_scenario_a();
    let good = closed_loop(&cfg, &sched).unwrap();
    let s = price_identity_stats(&good);
    assert!(s.level < 1e-9 && s.increment < 1e-9, "{s:?}");

    let flipped = |g: &PidGains, w: f64, i: f64, wd: f64| -g.price_rate * (g.inertia * w + g.damping * i) + wd / g.damping;
    let bad = closed_loop_with(&cfg, &sched, flipped).unwrap();
    let s = price_identity_stats(&bad);
    assert!(s.level > 1e-6, "sign flip not detected: {s:?}");
}

#[test]
fn oversized_step_size_is_flagged() {
    let (mut cfg, sched) = reference_scenario_a();
    let good = closed_loop(&cfg, &sched).unwrap();
    let err = tracking_error(&good, &cfg.generators, &cfg.grid, &sched).unwrap();
    assert!(*err.last().unwrap() < 1e-3, "baseline does not track: {}", err.last().unwrap());
    assert!(settling_time(&good).is_some());

    for g in &mut cfg.generators {
        g.eta *= 50.0;
    }
    let bad = closed_loop(&cfg, &sched).unwrap();
    let err = tracking_error(&bad, &cfg.generators, &cfg.grid, &sched).unwrap();
    let tail = err[err.len() * 9 / 10..].iter().copied().fold(0.0, f64::max);
    assert!(
        tail > 1.0 || settling_time(&bad).is_none(),
        "oversized step size looked healthy (tail tracking error {tail})"
    );
}
