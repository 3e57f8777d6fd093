//! Continuous market/frequency flows and their forward-Euler integration.
//!
//! All three flows share the swing equation `M·ω̇ = Σr − D·ω − δ` (ω is not
//! evolved in market-only mode). With gains `K_r` and `κ`:
//!
//! ```text
//! market_only  ṙ = K_r·Π[λ − ∇c(r)]                     λ̇ = κ(δ − Σr)
//! composite    ṙ = K_r·Π[λ − γ/(DM)·e − ∇c(r)]           λ̇ = κ(δ − Σr)
//!              ω̇ = γ·e/M                                 γ̇ = e²/(2DM)
//! reduced      composite with γ ≡ 1, i.e. ṙ = K_r·Π[λ − ω̇/D − ∇c(r)]
//! ```
//!
//! where `e = Σr − D·ω − δ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics;
use crate::model::{fleet_cost, FlowGains, GeneratorParams, GridParams, Mode, SimConfig, SimState};
use crate::scenario::{reached, DisturbanceSchedule, DisturbanceSignal};
use crate::trajectory::{TimeSeriesRecord, Trajectory};

/// Slack, in MW, for deciding that a regulation sits on its bound.
pub const BOUND_TOLERANCE: f64 = 1e-12;

/// Stationarity threshold and hold time for equilibrium reporting.
const EQUILIBRIUM_RATE: f64 = 1e-6;
const EQUILIBRIUM_HOLD: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowMode {
    MarketOnly,
    Composite,
    Reduced,
}

impl TryFrom<Mode> for FlowMode {
    type Error = Error;

    fn try_from(mode: Mode) -> Result<Self> {
        match mode {
            Mode::MarketOnly => Ok(FlowMode::MarketOnly),
            Mode::Composite => Ok(FlowMode::Composite),
            Mode::Reduced => Ok(FlowMode::Reduced),
            Mode::Controller => Err(Error::Parse(
                "controller mode is not a continuous flow".into(),
            )),
        }
    }
}

impl From<FlowMode> for Mode {
    fn from(m: FlowMode) -> Mode {
        match m {
            FlowMode::MarketOnly => Mode::MarketOnly,
            FlowMode::Composite => Mode::Composite,
            FlowMode::Reduced => Mode::Reduced,
        }
    }
}

/// Time derivatives of the flow state. Fields a flow does not evolve are 0.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowRates {
    pub r_dot: Vec<f64>,
    pub omega_dot: f64,
    pub lambda_dot: f64,
    pub gamma_dot: f64,
}

impl FlowRates {
    /// Largest rate magnitude, used for equilibrium detection.
    pub fn max_abs(&self) -> f64 {
        self.r_dot
            .iter()
            .fold(self.omega_dot.abs().max(self.lambda_dot.abs()), |m, v| m.max(v.abs()))
    }
}

/// Power imbalance `Σr − D·ω − δ` in MW.
pub fn imbalance(state: &SimState, grid: &GridParams) -> f64 {
    state.total_regulation() - grid.damping * state.omega - state.delta
}

/// `ω̇ = (Σr − D·ω − δ)/M`.
pub fn swing_rhs(state: &SimState, grid: &GridParams) -> f64 {
    imbalance(state, grid) / grid.inertia
}

/// Zero the components of `v` that would push `r` out of its box.
pub fn project_velocity(r: &[f64], v: &[f64], fleet: &[GeneratorParams]) -> Vec<f64> {
    r.iter()
        .zip(v)
        .zip(fleet)
        .map(|((&ri, &vi), g)| {
            if (ri <= g.r_min() + BOUND_TOLERANCE && vi < 0.0)
                || (ri >= g.r_max() - BOUND_TOLERANCE && vi > 0.0)
            {
                0.0
            } else {
                vi
            }
        })
        .collect()
}

fn regulation_velocity(
    state: &SimState,
    fleet: &[GeneratorParams],
    price: f64,
    gains: &FlowGains,
) -> Vec<f64> {
    let raw: Vec<f64> = fleet
        .iter()
        .zip(&state.r)
        .map(|(g, &r)| gains.regulation_gain * (price - g.marginal(g.output(r))))
        .collect();
    project_velocity(&state.r, &raw, fleet)
}

pub fn market_flow_rhs(state: &SimState, fleet: &[GeneratorParams], gains: &FlowGains) -> FlowRates {
    FlowRates {
        r_dot: regulation_velocity(state, fleet, state.lambda, gains),
        omega_dot: 0.0,
        lambda_dot: gains.price_rate * (state.delta - state.total_regulation()),
        gamma_dot: 0.0,
    }
}

pub fn composite_flow_rhs(
    state: &SimState,
    fleet: &[GeneratorParams],
    grid: &GridParams,
    gains: &FlowGains,
) -> FlowRates {
    let e = imbalance(state, grid);
    let dm = grid.damping * grid.inertia;
    let price = state.lambda - state.gamma / dm * e;
    FlowRates {
        r_dot: regulation_velocity(state, fleet, price, gains),
        omega_dot: state.gamma * e / grid.inertia,
        lambda_dot: gains.price_rate * (state.delta - state.total_regulation()),
        gamma_dot: e * e / (2.0 * dm),
    }
}

pub fn reduced_flow_rhs(
    state: &SimState,
    fleet: &[GeneratorParams],
    grid: &GridParams,
    gains: &FlowGains,
) -> FlowRates {
    let omega_dot = swing_rhs(state, grid);
    let price = state.lambda - omega_dot / grid.damping;
    FlowRates {
        r_dot: regulation_velocity(state, fleet, price, gains),
        omega_dot,
        lambda_dot: gains.price_rate * (state.delta - state.total_regulation()),
        gamma_dot: 0.0,
    }
}

pub fn flow_rhs(
    mode: FlowMode,
    state: &SimState,
    fleet: &[GeneratorParams],
    grid: &GridParams,
    gains: &FlowGains,
) -> FlowRates {
    match mode {
        FlowMode::MarketOnly => market_flow_rhs(state, fleet, gains),
        FlowMode::Composite => composite_flow_rhs(state, fleet, grid, gains),
        FlowMode::Reduced => reduced_flow_rhs(state, fleet, grid, gains),
    }
}

/// Frequency Lyapunov function `(D·ω − Σr + δ)²/(2DM)`.
pub fn lyapunov_fd(state: &SimState, grid: &GridParams) -> f64 {
    let e = imbalance(state, grid);
    e * e / (2.0 * grid.damping * grid.inertia)
}

/// `c(r) + λ(δ − Σr) + γ·V(ω, r)`.
pub fn composite_lagrangian(state: &SimState, fleet: &[GeneratorParams], grid: &GridParams) -> f64 {
    fleet_cost(fleet, &state.r)
        + state.lambda * (state.delta - state.total_regulation())
        + state.gamma * lyapunov_fd(state, grid)
}

/// Applies every outage reached at `t` and not yet applied; pins the
/// affected regulations.
pub(crate) fn apply_due_outages(
    schedule: &DisturbanceSchedule,
    t: f64,
    dt: f64,
    applied: &mut [bool],
    fleet: &mut Vec<GeneratorParams>,
    regulations: &mut [&mut Vec<f64>],
) -> Result<()> {
    for o in &schedule.outages {
        if applied.get(o.generator).copied().unwrap_or(false) || !reached(t, o.t, dt) {
            continue;
        }
        *fleet = crate::scenario::apply_outage(fleet, o.generator).map_err(|e| Error::AtTime {
            t,
            source: Box::new(e),
        })?;
        applied[o.generator] = true;
        let g = &fleet[o.generator];
        for r in regulations.iter_mut() {
            r[o.generator] = r[o.generator].clamp(g.r_min(), g.r_max());
        }
    }
    Ok(())
}

fn flow_record(
    state: &SimState,
    fleet: &[GeneratorParams],
    omega_dot: f64,
    lambda_da: f64,
) -> TimeSeriesRecord {
    let g: Vec<f64> = fleet.iter().zip(&state.r).map(|(p, &r)| p.output(r)).collect();
    let profit = fleet
        .iter()
        .zip(&g)
        .map(|(p, &gi)| metrics::profit(gi, state.lambda, p))
        .collect();
    TimeSeriesRecord {
        t: state.t,
        omega: state.omega,
        omega_integral: state.omega_integral,
        omega_dot,
        delta: state.delta,
        lambda: state.lambda,
        pi: state.lambda - lambda_da,
        gamma: state.gamma,
        g,
        profit,
    }
}

/// Forward-Euler integration of a continuous flow from the day-ahead rest
/// point. The regulation is re-projected onto its box after every step.
pub fn integrate(cfg: &SimConfig, schedule: &DisturbanceSchedule, mode: FlowMode) -> Result<Trajectory> {
    let dt = cfg.dt_physics;
    let n_steps = cfg.physics_steps();
    let per_sample = cfg.steps_per_sample();
    let grid = &cfg.grid;
    let gains = &cfg.gains;

    let mut fleet = cfg.generators.clone();
    let mut applied = vec![false; fleet.len()];
    let mut signal = DisturbanceSignal::new(schedule, dt);
    let mut state = SimState::at_rest(fleet.len(), cfg.lambda_da);
    let mut records = Vec::with_capacity(cfg.sample_count());
    let mut still_since: Option<f64> = None;
    let mut equilibrium_time = None;

    for k in 0..=n_steps {
        let t = k as f64 * dt;
        state.t = t;
        apply_due_outages(schedule, t, dt, &mut applied, &mut fleet, &mut [&mut state.r])?;
        state.delta = signal.delta();

        let rates = flow_rhs(mode, &state, &fleet, grid, gains);

        if equilibrium_time.is_none() {
            if rates.max_abs() < EQUILIBRIUM_RATE {
                let since = *still_since.get_or_insert(t);
                if t - since >= EQUILIBRIUM_HOLD - 1e-9 {
                    equilibrium_time = Some(since);
                }
            } else {
                still_since = None;
            }
        }

        if k % per_sample == 0 {
            records.push(flow_record(&state, &fleet, rates.omega_dot, cfg.lambda_da));
        }
        if k == n_steps {
            break;
        }

        for ((r, v), g) in state.r.iter_mut().zip(&rates.r_dot).zip(&fleet) {
            *r = (*r + dt * v).clamp(g.r_min(), g.r_max());
        }
        state.omega_integral += state.omega * dt;
        state.omega += dt * rates.omega_dot;
        state.lambda += dt * rates.lambda_dot;
        state.gamma += dt * rates.gamma_dot;
        if !state.is_finite() {
            return Err(Error::Diverged {
                step: k + 1,
                t: (k + 1) as f64 * dt,
            });
        }
        signal.advance();
    }

    Ok(Trajectory {
        mode: mode.into(),
        lambda_da: cfg.lambda_da,
        fleet: cfg.generators.clone(),
        grid: cfg.grid.clone(),
        dt_physics: dt,
        dt_sample: dt * per_sample as f64,
        pid: None,
        equilibrium_time,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{reference_fleet, reference_grid, reference_scenario_a, StepChange};

    fn rest_state(lambda: f64, delta: f64) -> SimState {
        let mut s = SimState::at_rest(5, lambda);
        s.delta = delta;
        s
    }

    fn step_schedule(amount: f64) -> DisturbanceSchedule {
        DisturbanceSchedule {
            steps: vec![StepChange { t: 0.0, amount }],
            ..Default::default()
        }
    }

    #[test]
    fn swing_examples() {
        let grid = reference_grid();
        assert_eq!(swing_rhs(&rest_state(0.0, 30.0), &grid), -2.5);
        let mut s = rest_state(0.0, 30.0);
        s.r = vec![6.0; 5];
        assert_eq!(swing_rhs(&s, &grid), 0.0);
        let mut s = rest_state(0.0, 30.0);
        s.omega = -30.0 / 35.0;
        assert!(swing_rhs(&s, &grid).abs() < 1e-15);
    }

    #[test]
    fn market_flow_examples() {
        let (fleet, lambda_da) = reference_fleet();
        let gains = FlowGains::unit();
        let rest = market_flow_rhs(&rest_state(lambda_da, 0.0), &fleet, &gains);
        assert!(rest.max_abs() < 1e-12);

        let up = market_flow_rhs(&rest_state(lambda_da + 1.0, 0.0), &fleet, &gains);
        for v in &up.r_dot {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert_eq!(up.lambda_dot, 0.0);
    }

    #[test]
    fn composite_examples() {
        let (fleet, lambda_da) = reference_fleet();
        let grid = reference_grid();
        let gains = FlowGains::unit();
        let rates = composite_flow_rhs(&rest_state(lambda_da, 30.0), &fleet, &grid, &gains);
        assert_eq!(rates.omega_dot, -2.5);
        assert_eq!(rates.lambda_dot, 30.0);
        assert!((rates.gamma_dot - 900.0 / 840.0).abs() < 1e-15);

        let reduced = reduced_flow_rhs(&rest_state(lambda_da, 30.0), &fleet, &grid, &gains);
        assert_eq!(reduced.r_dot, rates.r_dot);
        assert_eq!(reduced.omega_dot, rates.omega_dot);
        assert_eq!(reduced.lambda_dot, rates.lambda_dot);
    }

    #[test]
    fn reduced_example_sign() {
        let (fleet, lambda_da) = reference_fleet();
        let rates = reduced_flow_rhs(&rest_state(lambda_da, 30.0), &fleet, &reference_grid(), &FlowGains::unit());
        for v in &rates.r_dot {
            assert!((v - 1.0 / 14.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn velocity_projection_examples() {
        let fleet = [GeneratorParams::new(0.01, 27.4, 0.0, 50.0)];
        assert_eq!(project_velocity(&[10.0], &[3.0], &fleet), [3.0]);
        assert_eq!(project_velocity(&[50.0], &[3.0], &fleet), [0.0]);
        assert_eq!(project_velocity(&[50.0], &[-3.0], &fleet), [-3.0]);
        assert_eq!(project_velocity(&[0.0], &[-3.0], &fleet), [0.0]);
    }

    #[test]
    fn lyapunov_and_lagrangian_examples() {
        let (fleet, _) = reference_fleet();
        let grid = reference_grid();
        let mut s = rest_state(0.0, 30.0);
        assert!((lyapunov_fd(&s, &grid) - 900.0 / 840.0).abs() < 1e-15);
        let c0 = fleet_cost(&fleet, &s.r);
        assert!((composite_lagrangian(&s, &fleet, &grid) - (c0 + 900.0 / 840.0)).abs() < 1e-9);
        s.gamma = 0.0;
        s.lambda = 2.0;
        assert_eq!(composite_lagrangian(&s, &fleet, &grid), c0 + 60.0);
        s.r = vec![6.0; 5];
        s.gamma = 1.0;
        assert_eq!(lyapunov_fd(&s, &grid), 0.0);
        assert_eq!(composite_lagrangian(&s, &fleet, &grid), fleet_cost(&fleet, &s.r));
    }

    fn reference_cfg(horizon: f64) -> SimConfig {
        let (mut cfg, _) = reference_scenario_a();
        cfg.horizon = horizon;
        cfg
    }

    #[test]
    fn rest_stays_at_rest() {
        let cfg = reference_cfg(60.0);
        for mode in [FlowMode::MarketOnly, FlowMode::Composite, FlowMode::Reduced] {
            let traj = integrate(&cfg, &DisturbanceSchedule::default(), mode).unwrap();
            assert_eq!(traj.len(), 241);
            let first = &traj.records[0];
            for rec in &traj.records {
                assert_eq!(rec.omega, 0.0);
                assert_eq!(rec.lambda, first.lambda);
                assert_eq!(rec.g, first.g);
            }
            assert_eq!(traj.equilibrium_time, Some(0.0));
        }
    }

    #[test]
    fn gamma_is_nondecreasing() {
        let cfg = reference_cfg(120.0);
        let traj = integrate(&cfg, &step_schedule(30.0), FlowMode::Composite).unwrap();
        assert!(traj.records.windows(2).all(|w| w[1].gamma >= w[0].gamma));
        assert!(traj.last().unwrap().gamma > 1.0);
    }

    #[test]
    fn recorded_regulation_stays_in_box() {
        let (cfg, sched) = reference_scenario_a();
        for mode in [FlowMode::MarketOnly, FlowMode::Composite, FlowMode::Reduced] {
            let traj = integrate(&cfg, &sched, mode).unwrap();
            for rec in &traj.records {
                for (g, p) in rec.g.iter().zip(&cfg.generators) {
                    assert!(*g >= p.p_min && *g <= p.p_max);
                }
            }
            // the outaged unit sits at zero afterwards
            assert_eq!(traj.last().unwrap().g[4], 0.0);
        }
    }

    #[test]
    fn reduced_converges_to_dispatch() {
        let cfg = reference_cfg(600.0);
        let (fleet, _) = reference_fleet();
        let target = crate::dispatch::solve_ed(&fleet, &reference_grid(), 30.0).unwrap();
        let traj = integrate(&cfg, &step_schedule(30.0), FlowMode::Reduced).unwrap();
        let last = traj.last().unwrap();
        assert!(last.omega.abs() <= 1e-3);
        assert!((last.lambda - target.lambda_opt).abs() <= 1e-3);
        assert!(traj.equilibrium_time.is_some());
    }

    #[test]
    fn market_only_converges_without_frequency() {
        let cfg = reference_cfg(600.0);
        let (fleet, _) = reference_fleet();
        let target = crate::dispatch::solve_ed(&fleet, &reference_grid(), 30.0).unwrap();
        let traj = integrate(&cfg, &step_schedule(30.0), FlowMode::MarketOnly).unwrap();
        let last = traj.last().unwrap();
        let total_r: f64 = traj.regulation(last).iter().sum();
        assert!((total_r - 30.0).abs() <= 1e-3);
        assert!((last.lambda - target.lambda_opt).abs() <= 1e-3);
        assert!(traj.records.iter().all(|r| r.omega == 0.0));
    }

    #[test]
    fn half_step_agrees() {
        let mut cfg = reference_cfg(600.0);
        let coarse = integrate(&cfg, &step_schedule(30.0), FlowMode::Reduced).unwrap();
        cfg.dt_physics = 0.025;
        let fine = integrate(&cfg, &step_schedule(30.0), FlowMode::Reduced).unwrap();
        let (a, b) = (coarse.last().unwrap(), fine.last().unwrap());
        assert_eq!(coarse.len(), fine.len());
        assert!((a.omega - b.omega).abs() <= 1e-3);
        assert!((a.lambda - b.lambda).abs() <= 1e-3);
        for (x, y) in a.g.iter().zip(&b.g) {
            assert!((x - y).abs() <= 1e-3);
        }
    }

    #[test]
    fn oversized_step_reports_divergence() {
        // Euler on the swing equation is unstable once dt > 2M/D.
        let mut cfg = reference_cfg(3000.0);
        cfg.dt_physics = 1.0;
        cfg.dt_sample = 1.0;
        let err = integrate(&cfg, &step_schedule(30.0), FlowMode::Reduced).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err:?}");
    }

    #[test]
    fn controller_mode_is_not_a_flow() {
        assert!(FlowMode::try_from(Mode::Controller).is_err());
        assert_eq!(FlowMode::try_from(Mode::Reduced).unwrap(), FlowMode::Reduced);
    }
}
