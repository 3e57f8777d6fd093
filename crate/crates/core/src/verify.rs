//! Acceptance checks, usable from tests and from `freqmarket verify`.
//!
//! Each check returns a [`CriterionResult`]. The building blocks take their
//! inputs (solver, trajectories) as arguments so that deliberately broken
//! inputs can be fed through them.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::controller::closed_loop;
use crate::dispatch::{brute_force_ed, kkt_residual, offline_baseline, solve_for_demand, DispatchSolution, EdTolerances, KKT_TOLERANCE};
use crate::dynamics::{composite_flow_rhs, composite_lagrangian, integrate, lyapunov_fd, swing_rhs, FlowMode};
use crate::error::Result;
use crate::metrics::{compare_online_offline, cost_recovery_report, PROFIT_TOLERANCE, SETTLING_BAND, SETTLING_HOLD};
use crate::model::{fleet_cost, FlowGains, GeneratorParams, SimConfig, SimState};
use crate::output::csv_bytes;
use crate::parallel::{par_map, ExecPolicy};
use crate::scenario::{reference_fleet, reference_grid, reference_scenario_a, reference_scenario_b, DisturbanceSchedule, StepChange};
use crate::trajectory::Trajectory;

/// Seeds of the stochastic-demand study.
pub const WIENER_SEEDS: std::ops::RangeInclusive<u64> = 1..=20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Fast,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] criterion {} {}: {} ({:.2} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

fn timed(id: u8, name: &str, f: impl FnOnce() -> (bool, String)) -> CriterionResult {
    let start = Instant::now();
    let (passed, detail) = f();
    CriterionResult {
        id,
        name: name.to_string(),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub level: Level,
    pub passed: bool,
    pub criteria: Vec<CriterionResult>,
}

pub fn run_verify(level: Level, policy: ExecPolicy) -> VerifyReport {
    let mut criteria = vec![check_ed_oracle(&solve_default, policy)];
    if level == Level::Full {
        criteria.push(check_convergence());
        criteria.push(check_controller_equivalence());
    }
    criteria.push(check_price_identity());
    if level == Level::Full {
        criteria.push(check_cost_recovery(policy));
        criteria.push(check_scenario_a_shape());
        criteria.push(check_offline_direction(policy));
    }
    criteria.push(check_gradient_flow());
    criteria.push(check_determinism());
    VerifyReport {
        level,
        passed: criteria.iter().all(|c| c.passed),
        criteria,
    }
}

// ---------------------------------------------------------------- criterion 1

/// Dispatch solver under test: fleet and total demand in, solution out.
pub type Solver = dyn Fn(&[GeneratorParams], f64) -> Result<DispatchSolution> + Sync;

pub fn solve_default(fleet: &[GeneratorParams], demand: f64) -> Result<DispatchSolution> {
    solve_for_demand(fleet, demand, EdTolerances::default())
}

/// Random feasible instance with `n` units.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> (Vec<GeneratorParams>, f64) {
    let fleet: Vec<GeneratorParams> = (0..n)
        .map(|_| {
            let p_min = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..10.0) };
            let p_max = p_min + rng.random_range(10.0..60.0);
            GeneratorParams::new(rng.random_range(0.005..0.05), rng.random_range(20.0..35.0), p_min, p_max)
        })
        .collect();
    let lo: f64 = fleet.iter().map(|g| g.p_min).sum();
    let hi: f64 = fleet.iter().map(|g| g.p_max).sum();
    let demand = rng.random_range(lo..=hi);
    (fleet, demand)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleStats {
    /// Largest |cost(solver) − cost(brute)| over the allowed gap.
    pub worst_cost_ratio: f64,
    pub worst_kkt: f64,
    pub failures: usize,
}

pub fn ed_oracle_stats(solver: &Solver, policy: ExecPolicy) -> OracleStats {
    const RESOLUTION: f64 = 0.001;
    let pair_seeds: Vec<u64> = (0..100).collect();
    let pairs = par_map(&pair_seeds, policy, |&s| {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + s);
        let (fleet, demand) = random_instance(&mut rng, 2);
        let brute = brute_force_ed(&fleet, demand, RESOLUTION).ok()?;
        let exact = solver(&fleet, demand).ok()?;
        let max_mc = fleet.iter().map(|g| g.marginal(g.p_max)).fold(0.0, f64::max);
        Some((exact.total_cost - brute.total_cost).abs() / (2.0 * RESOLUTION * max_mc))
    });

    let kkt_seeds: Vec<u64> = (0..1000).collect();
    let kkt = par_map(&kkt_seeds, policy, |&s| {
        let mut rng = ChaCha8Rng::seed_from_u64(0xcafe_0000 + s);
        let n = 2 + (s % 9) as usize;
        let (fleet, demand) = random_instance(&mut rng, n);
        solver(&fleet, demand).ok().map(|sol| kkt_residual(&fleet, &sol, demand))
    });

    let failures = pairs.iter().filter(|x| x.is_none()).count() + kkt.iter().filter(|x| x.is_none()).count();
    OracleStats {
        worst_cost_ratio: pairs.iter().flatten().copied().fold(0.0, f64::max),
        worst_kkt: kkt.iter().flatten().copied().fold(0.0, f64::max),
        failures,
    }
}

pub fn check_ed_oracle(solver: &Solver, policy: ExecPolicy) -> CriterionResult {
    timed(1, "ED oracle equivalence", || {
        let s = ed_oracle_stats(solver, policy);
        let passed = s.failures == 0 && s.worst_cost_ratio <= 1.0 && s.worst_kkt <= KKT_TOLERANCE;
        (
            passed,
            format!(
                "cost gap / allowance max {:.3e} (<= 1), KKT residual max {:.3e} (<= 1e-6), solver failures {}",
                s.worst_cost_ratio, s.worst_kkt, s.failures
            ),
        )
    })
}

// ---------------------------------------------------------------- criterion 2

fn constant_step(amount: f64) -> DisturbanceSchedule {
    DisturbanceSchedule {
        steps: vec![StepChange { t: 0.0, amount }],
        ..Default::default()
    }
}

fn reference_flow_config() -> SimConfig {
    let (mut cfg, _) = reference_scenario_a();
    cfg.mode = crate::model::Mode::Reduced;
    cfg.offline_interval = None;
    cfg
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceStats {
    pub delta: f64,
    pub omega: f64,
    pub balance: f64,
    pub cost_gap: f64,
}

pub fn convergence_stats(delta: f64) -> Result<ConvergenceStats> {
    let cfg = reference_flow_config();
    let traj = integrate(&cfg, &constant_step(delta), FlowMode::Reduced)?;
    let last = traj.last().expect("non-empty trajectory");
    let r = traj.regulation(last);
    let target = crate::dispatch::solve_ed(&cfg.generators, &cfg.grid, delta)?;
    Ok(ConvergenceStats {
        delta,
        omega: last.omega.abs(),
        balance: (r.iter().sum::<f64>() - delta).abs(),
        cost_gap: (fleet_cost(&cfg.generators, &r) - target.total_cost).abs(),
    })
}

pub fn check_convergence() -> CriterionResult {
    timed(2, "reduced-flow convergence", || {
        let mut passed = true;
        let mut parts = Vec::new();
        for delta in [-30.0, 20.0] {
            match convergence_stats(delta) {
                Ok(s) => {
                    passed &= s.omega <= 1e-3 && s.balance <= 1e-3 && s.cost_gap <= 1e-2;
                    parts.push(format!(
                        "δ={delta}: |ω|={:.2e} |Σr−δ|={:.2e} |Δc|={:.2e}",
                        s.omega, s.balance, s.cost_gap
                    ));
                }
                Err(e) => {
                    passed = false;
                    parts.push(format!("δ={delta}: {e}"));
                }
            }
        }
        (passed, parts.join("; "))
    })
}

// ---------------------------------------------------------------- criterion 3

/// Controller configured as the Euler step of the reduced flow:
/// `dt_sample = dt_physics`, exact ω̇, and `η = K_r·dt`.
pub fn equivalent_controller_config(flow: &SimConfig) -> SimConfig {
    let mut cfg = flow.clone();
    cfg.mode = crate::model::Mode::Controller;
    cfg.dt_sample = cfg.dt_physics;
    cfg.controller.exact_derivative = true;
    let eta = cfg.gains.regulation_gain * cfg.dt_physics;
    for g in &mut cfg.generators {
        g.eta = eta;
    }
    cfg
}

/// Largest per-step deviation in (ω, λ, r) between a controller run and a
/// reduced-flow run on the same physics grid.
///
/// The controller's record at step k carries the setpoint that the flow
/// holds at step k + 1, and its price state is `λ^rt + ω̇/D`. A setpoint
/// overridden by an outage at step k + 1 is never applied and is skipped.
pub fn controller_flow_deviation(ctrl: &Trajectory, flow: &Trajectory, sched: &DisturbanceSchedule) -> f64 {
    let damping = ctrl.pid.map_or(ctrl.grid.damping, |p| p.damping);
    let n = ctrl.len().min(flow.len());
    let mut worst: f64 = if ctrl.len() == flow.len() { 0.0 } else { f64::INFINITY };
    for k in 0..n {
        let (c, f) = (&ctrl.records[k], &flow.records[k]);
        worst = worst
            .max((c.omega - f.omega).abs())
            .max((c.lambda + c.omega_dot / damping - f.lambda).abs());
        if k + 1 < n {
            let next = &flow.records[k + 1];
            let overridden = |i: usize| {
                sched
                    .outages
                    .iter()
                    .any(|o| o.generator == i && (o.t - next.t).abs() < 0.5 * flow.dt_physics)
            };
            for (i, (a, b)) in c.g.iter().zip(&next.g).enumerate() {
                if !overridden(i) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    worst
}

pub fn check_controller_equivalence() -> CriterionResult {
    timed(3, "controller matches reduced-flow Euler step", || {
        let (_, sched) = reference_scenario_a();
        let mut flow_cfg = reference_flow_config();
        flow_cfg.dt_sample = flow_cfg.dt_physics;
        let ctrl_cfg = equivalent_controller_config(&flow_cfg);
        let runs = integrate(&flow_cfg, &sched, FlowMode::Reduced).and_then(|flow| Ok((flow, closed_loop(&ctrl_cfg, &sched)?)));
        match runs {
            Ok((flow, ctrl)) => {
                let dev = controller_flow_deviation(&ctrl, &flow, &sched);
                (dev <= 1e-6, format!("max per-step deviation {dev:.3e} over {} steps (<= 1e-6)", flow.len()))
            }
            Err(e) => (false, e.to_string()),
        }
    })
}

// ---------------------------------------------------------------- criterion 4

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityStats {
    /// max |λ^rt − (λ^da − κ(Mω + D∫ω) − ω̇/D)|
    pub level: f64,
    /// max |Δλ^PI + κ(D·ω_prev + M·ω̇_est)·Δt|
    pub increment: f64,
}

pub fn price_identity_stats(traj: &Trajectory) -> IdentityStats {
    let p = traj.pid.expect("controller trajectory");
    let pi_part = |r: &crate::trajectory::TimeSeriesRecord| r.lambda + r.omega_dot / p.damping;
    let level = traj
        .records
        .iter()
        .map(|r| {
            let expect = traj.lambda_da - p.price_rate * (p.inertia * r.omega + p.damping * r.omega_integral) - r.omega_dot / p.damping;
            (r.lambda - expect).abs()
        })
        .fold(0.0, f64::max);
    let increment = traj
        .records
        .windows(2)
        .map(|w| {
            let step = -p.price_rate * (p.damping * w[0].omega + p.inertia * w[1].omega_dot) * traj.dt_sample;
            (pi_part(&w[1]) - pi_part(&w[0]) - step).abs()
        })
        .fold(0.0, f64::max);
    IdentityStats { level, increment }
}

pub fn check_price_identity() -> CriterionResult {
    timed(4, "PID price identity", || {
        let (cfg_a, sched_a) = reference_scenario_a();
        let mut literal = cfg_a.clone();
        literal.gains.price_rate = 1.0;
        let mut runs = vec![
            ("scenario A", cfg_a.clone(), sched_a.clone()),
            ("scenario A, κ=1", literal, sched_a),
        ];
        for seed in [1, 2, 3] {
            let (cfg, sched) = reference_scenario_b(seed);
            runs.push(("scenario B", cfg, sched));
        }
        let mut worst = IdentityStats { level: 0.0, increment: 0.0 };
        for (name, cfg, sched) in &runs {
            match closed_loop(cfg, sched) {
                Ok(traj) => {
                    let s = price_identity_stats(&traj);
                    worst.level = worst.level.max(s.level);
                    worst.increment = worst.increment.max(s.increment);
                }
                Err(e) => return (false, format!("{name}: {e}")),
            }
        }
        (
            worst.level <= 1e-9 && worst.increment <= 1e-9,
            format!(
                "level residual {:.3e}, increment residual {:.3e} over {} runs (<= 1e-9)",
                worst.level,
                worst.increment,
                runs.len()
            ),
        )
    })
}

// ---------------------------------------------------------------- criterion 5

pub fn check_cost_recovery(policy: ExecPolicy) -> CriterionResult {
    timed(5, "per-step cost recovery", || {
        let mut cases: Vec<(String, SimConfig, DisturbanceSchedule)> = Vec::new();
        let (cfg, sched) = reference_scenario_a();
        cases.push(("scenario A".into(), cfg, sched));
        for seed in WIENER_SEEDS {
            let (cfg, sched) = reference_scenario_b(seed);
            cases.push((format!("scenario B seed {seed}"), cfg, sched));
        }
        let mins = par_map(&cases, policy, |(name, cfg, sched)| {
            closed_loop(cfg, sched)
                .map(|t| (name.clone(), cost_recovery_report(&t).overall_min()))
                .map_err(|e| format!("{name}: {e}"))
        });
        let mut worst = (String::new(), f64::INFINITY);
        for m in mins {
            match m {
                Ok((name, v)) if v < worst.1 => worst = (name, v),
                Ok(_) => {}
                Err(e) => return (false, e),
            }
        }
        (
            worst.1 >= PROFIT_TOLERANCE,
            format!("min profit {:.3e} $/h in {} over {} runs (>= -1e-9)", worst.1, worst.0, cases.len()),
        )
    })
}

// ---------------------------------------------------------------- criterion 6

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeStats {
    pub peak_after_step: f64,
    pub trough_after_outage: f64,
    pub max_abs_omega_before_outage: f64,
    pub max_abs_omega_before_horizon: f64,
    pub lambda_after_step: f64,
    pub lambda_after_outage: f64,
    pub dual_after_step: f64,
    pub dual_after_outage: f64,
    pub lambda_da: f64,
}

impl ShapeStats {
    pub fn failures(&self) -> Vec<&'static str> {
        let mut f = Vec::new();
        if !(self.peak_after_step > SETTLING_BAND) {
            f.push("no positive excursion after the step");
        }
        if !(self.trough_after_outage < -SETTLING_BAND) {
            f.push("no negative excursion after the outage");
        }
        if !(self.max_abs_omega_before_outage <= SETTLING_BAND) {
            f.push("ω not settled before the outage");
        }
        if !(self.max_abs_omega_before_horizon <= SETTLING_BAND) {
            f.push("ω not settled before the horizon");
        }
        if !(self.lambda_after_step < self.lambda_da) {
            f.push("price not below λ^da after the step");
        }
        if !(self.lambda_after_outage > self.lambda_after_step) {
            f.push("price not above the post-step value after the outage");
        }
        if !((self.lambda_after_step - self.dual_after_step).abs() <= 1e-2) {
            f.push("post-step price differs from the dispatch dual");
        }
        if !((self.lambda_after_outage - self.dual_after_outage).abs() <= 1e-2) {
            f.push("post-outage price differs from the dispatch dual");
        }
        f
    }
}

pub fn scenario_a_shape(traj: &Trajectory, sched: &DisturbanceSchedule) -> Result<ShapeStats> {
    let window = |lo: f64, hi: f64| traj.records.iter().filter(move |r| r.t >= lo - 1e-9 && r.t < hi - 1e-9);
    let step_t = sched.steps[0].t;
    let outage_t = sched.outages[0].t;
    let end = traj.last().expect("non-empty").t + traj.dt_sample;
    let before = |t: f64| window(t - SETTLING_HOLD, t).next_back().expect("samples before event");

    let fleet_after = sched.fleet_at(&traj.fleet, outage_t, traj.dt_physics)?;
    let delta = sched.step_level(outage_t, traj.dt_physics);
    Ok(ShapeStats {
        peak_after_step: window(step_t, outage_t).map(|r| r.omega).fold(f64::MIN, f64::max),
        trough_after_outage: window(outage_t, end).map(|r| r.omega).fold(f64::MAX, f64::min),
        max_abs_omega_before_outage: window(outage_t - SETTLING_HOLD, outage_t).map(|r| r.omega.abs()).fold(0.0, f64::max),
        max_abs_omega_before_horizon: window(end - SETTLING_HOLD, end).map(|r| r.omega.abs()).fold(0.0, f64::max),
        lambda_after_step: before(outage_t).lambda,
        lambda_after_outage: before(end).lambda,
        dual_after_step: crate::dispatch::solve_ed(&traj.fleet, &traj.grid, delta)?.lambda_opt,
        dual_after_outage: crate::dispatch::solve_ed(&fleet_after, &traj.grid, delta)?.lambda_opt,
        lambda_da: traj.lambda_da,
    })
}

pub fn check_scenario_a_shape() -> CriterionResult {
    timed(6, "step/outage response shape", || {
        let (cfg, sched) = reference_scenario_a();
        let stats = closed_loop(&cfg, &sched).and_then(|t| scenario_a_shape(&t, &sched));
        match stats {
            Ok(s) => {
                let failures = s.failures();
                let detail = format!(
                    "ω peak {:+.3} / trough {:+.3} Hz; settled |ω| {:.1e}, {:.1e}; λ {:.5} (dual {:.5}) then {:.5} (dual {:.5}); λ^da {:.5}{}",
                    s.peak_after_step,
                    s.trough_after_outage,
                    s.max_abs_omega_before_outage,
                    s.max_abs_omega_before_horizon,
                    s.lambda_after_step,
                    s.dual_after_step,
                    s.lambda_after_outage,
                    s.dual_after_outage,
                    s.lambda_da,
                    if failures.is_empty() { String::new() } else { format!("; {}", failures.join(", ")) }
                );
                (failures.is_empty(), detail)
            }
            Err(e) => (false, e.to_string()),
        }
    })
}

// ---------------------------------------------------------------- criterion 7

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OfflineDirection {
    pub seed: u64,
    pub online_negative_fraction: f64,
    pub offline_negative_fraction: f64,
    /// Smallest offline profit seen, $/h.
    pub offline_min_profit: f64,
}

pub fn offline_direction(seed: u64) -> Result<OfflineDirection> {
    let (cfg, sched) = reference_scenario_b(seed);
    let traj = closed_loop(&cfg, &sched)?;
    let interval = cfg.offline_interval.expect("scenario defines an offline interval");
    let baseline = offline_baseline(&cfg.generators, &cfg.grid, &sched, cfg.dt_physics, cfg.dt_sample, interval, cfg.horizon)?;
    let cmp = compare_online_offline(&traj, &baseline)?;
    Ok(OfflineDirection {
        seed,
        online_negative_fraction: cmp.online_negative_fraction(),
        offline_negative_fraction: cmp.offline_negative_fraction(),
        offline_min_profit: cmp
            .rows
            .iter()
            .flat_map(|r| r.profit_offline.iter().copied())
            .fold(f64::INFINITY, f64::min),
    })
}

pub fn check_offline_direction(policy: ExecPolicy) -> CriterionResult {
    timed(7, "offline vs online negative profits", || {
        let seeds: Vec<u64> = WIENER_SEEDS.collect();
        let results = par_map(&seeds, policy, |&s| offline_direction(s));
        let mut rows = Vec::new();
        for r in results {
            match r {
                Ok(r) => rows.push(r),
                Err(e) => return (false, e.to_string()),
            }
        }
        let online_clean = rows.iter().all(|r| r.online_negative_fraction == 0.0);
        let offline_negative = rows.iter().filter(|r| r.offline_negative_fraction > 0.0).count();
        let min_offline = rows.iter().map(|r| r.offline_min_profit).fold(f64::INFINITY, f64::min);
        (
            online_clean && offline_negative >= 15,
            format!(
                "online negative fraction 0 in all seeds: {online_clean}; seeds with negative offline profit {offline_negative}/20 (>= 15); smallest offline profit {min_offline:.4} $/h"
            ),
        )
    })
}

// ---------------------------------------------------------------- criterion 8

const OMEGA_STEP: f64 = 1e-6;
const REGULATION_STEP: f64 = 1e-2;
const PRICE_STEP: f64 = 1e-6;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn random_interior_state(rng: &mut ChaCha8Rng, fleet: &[GeneratorParams]) -> SimState {
    SimState {
        t: 0.0,
        r: fleet.iter().map(|g| rng.random_range(g.r_min() + 1.0..g.r_max() - 1.0)).collect(),
        omega: rng.random_range(-0.5..0.5),
        lambda: rng.random_range(25.0..31.0),
        gamma: rng.random_range(0.5..3.0),
        omega_integral: 0.0,
        delta: rng.random_range(-30.0..30.0),
    }
}

/// Worst relative error of (ω̇, ṙ, λ̇) against central differences of the
/// frequency Lyapunov function and the composite Lagrangian, with unit
/// flow gains.
pub fn gradient_flow_error(states: usize, seed: u64) -> f64 {
    let (fleet, _) = reference_fleet();
    let grid = reference_grid();
    let gains = FlowGains::unit();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..states {
        let s = random_interior_state(&mut rng, &fleet);
        let rates = composite_flow_rhs(&s, &fleet, &grid, &gains);

        let shifted = |f: &dyn Fn(&mut SimState)| {
            let mut x = s.clone();
            f(&mut x);
            x
        };
        let plus = shifted(&|x| x.omega += OMEGA_STEP);
        let minus = shifted(&|x| x.omega -= OMEGA_STEP);
        let d_omega = (lyapunov_fd(&plus, &grid) - lyapunov_fd(&minus, &grid)) / (2.0 * OMEGA_STEP);
        worst = worst.max(rel_err(swing_rhs(&s, &grid), -d_omega));

        for i in 0..fleet.len() {
            let plus = shifted(&|x| x.r[i] += REGULATION_STEP);
            let minus = shifted(&|x| x.r[i] -= REGULATION_STEP);
            let d_r = (composite_lagrangian(&plus, &fleet, &grid) - composite_lagrangian(&minus, &fleet, &grid)) / (2.0 * REGULATION_STEP);
            worst = worst.max(rel_err(rates.r_dot[i], -d_r));
        }

        let plus = shifted(&|x| x.lambda += PRICE_STEP);
        let minus = shifted(&|x| x.lambda -= PRICE_STEP);
        let d_lambda = (composite_lagrangian(&plus, &fleet, &grid) - composite_lagrangian(&minus, &fleet, &grid)) / (2.0 * PRICE_STEP);
        worst = worst.max(rel_err(rates.lambda_dot, d_lambda));
    }
    worst
}

pub fn check_gradient_flow() -> CriterionResult {
    timed(8, "gradient-flow consistency", || {
        let err = gradient_flow_error(100, 8);
        (err <= 1e-6, format!("max relative error {err:.3e} at 100 random interior states (<= 1e-6)"))
    })
}

// ---------------------------------------------------------------- criterion 9

pub fn check_determinism() -> CriterionResult {
    timed(9, "byte-identical reruns", || {
        let mut cases = vec![reference_scenario_a()];
        cases.push(reference_scenario_b(3));
        for (cfg, sched) in &cases {
            let render = || -> Result<Vec<u8>> {
                let out = crate::run::simulate(cfg, sched)?;
                csv_bytes(&out.trajectory, out.offline_prices().as_deref())
            };
            match (render(), render()) {
                (Ok(a), Ok(b)) if a == b => {}
                (Ok(_), Ok(_)) => return (false, format!("{}: CSV bytes differ", cfg.scenario_id)),
                (Err(e), _) | (_, Err(e)) => return (false, e.to_string()),
            }
        }
        (true, format!("{} scenarios rendered twice with identical bytes", cases.len()))
    })
}
