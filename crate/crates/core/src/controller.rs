//! Sampled frequency-derived pricing and local generator best response.
//!
//! At each sample the controller measures ω, forms
//!
//! ```text
//! π = −κ(M·ω + D·∫ω) − ω̇/D,     λ^rt = λ^da + π
//! ```
//!
//! and every generator takes one projected gradient step on its own profit,
//! `r ← Π[r + η(λ^rt − ∇c(r))]`. With κ = 1 this is the textbook PID
//! price; smaller κ slows the proportional and integral terms, which is the
//! same rescaling as the price rate of the continuous flows.
//!
//! Timing: the setpoint computed from the sample at `t_k` is dispatched at
//! `t_{k+1}`; between samples the physical regulation is held.

use serde::Serialize;

use crate::dynamics::{apply_due_outages, imbalance};
use crate::error::{Error, Result};
use crate::metrics;
use crate::model::{GeneratorParams, SimConfig, SimState};
use crate::scenario::{DisturbanceSchedule, DisturbanceSignal};
use crate::trajectory::{PidParams, TimeSeriesRecord, Trajectory};

/// Controller memory between samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControllerState {
    /// Left-rectangle ∫ω, Hz·s.
    pub omega_integral: f64,
    pub omega_prev: f64,
    /// `None` before the first sample.
    pub t_prev: Option<f64>,
    pub pi_last: f64,
    pub lambda_da: f64,
}

impl ControllerState {
    pub fn new(lambda_da: f64) -> Self {
        Self {
            omega_integral: 0.0,
            omega_prev: 0.0,
            t_prev: None,
            pi_last: 0.0,
            lambda_da,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasuredSample {
    pub t: f64,
    pub omega: f64,
    /// Exact dω/dt to use instead of the backward difference.
    pub omega_dot_override: Option<f64>,
}

pub type PidGains = PidParams;

/// The three PID terms evaluated at one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PriceTerms {
    pub pi: f64,
    pub omega_integral: f64,
    pub omega_dot: f64,
}

/// `π = −κ(M·ω + D·I) − ω̇/D`.
pub fn pid_price(gains: &PidGains, omega: f64, integral: f64, omega_dot: f64) -> f64 {
    -gains.price_rate * (gains.inertia * omega + gains.damping * integral) - omega_dot / gains.damping
}

/// Advance the controller by one measurement with the standard price law.
pub fn price_adjustment(
    cs: &ControllerState,
    sample: &MeasuredSample,
    gains: &PidGains,
) -> Result<(PriceTerms, ControllerState)> {
    price_adjustment_with(cs, sample, gains, pid_price)
}

/// As [`price_adjustment`] with a caller-supplied price law.
pub fn price_adjustment_with<P>(
    cs: &ControllerState,
    sample: &MeasuredSample,
    gains: &PidGains,
    law: P,
) -> Result<(PriceTerms, ControllerState)>
where
    P: Fn(&PidGains, f64, f64, f64) -> f64,
{
    let (integral, estimate) = match cs.t_prev {
        None => (cs.omega_integral, 0.0),
        Some(t_prev) => {
            let dt = sample.t - t_prev;
            if !(dt > 0.0) {
                return Err(Error::NonMonotoneTime {
                    t: sample.t,
                    t_prev,
                });
            }
            (
                cs.omega_integral + cs.omega_prev * dt,
                (sample.omega - cs.omega_prev) / dt,
            )
        }
    };
    let omega_dot = sample.omega_dot_override.unwrap_or(estimate);
    let pi = law(gains, sample.omega, integral, omega_dot);
    let next = ControllerState {
        omega_integral: integral,
        omega_prev: sample.omega,
        t_prev: Some(sample.t),
        pi_last: pi,
        lambda_da: cs.lambda_da,
    };
    Ok((
        PriceTerms {
            pi,
            omega_integral: integral,
            omega_dot,
        },
        next,
    ))
}

/// `λ^rt = λ^da + π`.
pub fn rt_price(cs: &ControllerState, pi: f64) -> f64 {
    cs.lambda_da + pi
}

/// One generator's projected best-response step. Reads only its own data
/// and the broadcast price.
pub fn regulation_step(r: f64, lambda_rt: f64, g: &GeneratorParams) -> f64 {
    let r_hat = r + g.eta * (lambda_rt - g.marginal(g.output(r)));
    r_hat.clamp(g.r_min(), g.r_max())
}

pub fn regulation_update(r: &[f64], lambda_rt: f64, fleet: &[GeneratorParams]) -> Vec<f64> {
    r.iter()
        .zip(fleet)
        .map(|(&ri, g)| regulation_step(ri, lambda_rt, g))
        .collect()
}

/// `η_i = 1/C_ii`.
pub fn default_step_sizes(fleet: &[GeneratorParams]) -> Vec<f64> {
    fleet.iter().map(|g| 1.0 / g.quad_cost).collect()
}

pub fn pid_gains(cfg: &SimConfig) -> PidGains {
    PidGains {
        inertia: cfg.controller_inertia(),
        damping: cfg.controller_damping(),
        price_rate: cfg.gains.price_rate,
    }
}

/// Sampled closed loop: swing equation at `dt_physics`, controller at
/// `dt_sample`.
pub fn closed_loop(cfg: &SimConfig, schedule: &DisturbanceSchedule) -> Result<Trajectory> {
    closed_loop_with(cfg, schedule, pid_price)
}

pub fn closed_loop_with<P>(cfg: &SimConfig, schedule: &DisturbanceSchedule, law: P) -> Result<Trajectory>
where
    P: Fn(&PidGains, f64, f64, f64) -> f64,
{
    let dt = cfg.dt_physics;
    let n_steps = cfg.physics_steps();
    let per_sample = cfg.steps_per_sample();
    let grid = &cfg.grid;
    let gains = pid_gains(cfg);

    let mut fleet = cfg.generators.clone();
    let mut applied = vec![false; fleet.len()];
    let mut signal = DisturbanceSignal::new(schedule, dt);
    let mut state = SimState::at_rest(fleet.len(), cfg.lambda_da);
    let mut pending = state.r.clone();
    let mut cs = ControllerState::new(cfg.lambda_da);
    let mut records = Vec::with_capacity(cfg.sample_count());

    for k in 0..=n_steps {
        let t = k as f64 * dt;
        state.t = t;
        apply_due_outages(
            schedule,
            t,
            dt,
            &mut applied,
            &mut fleet,
            &mut [&mut state.r, &mut pending],
        )?;
        state.delta = signal.delta();

        if k % per_sample == 0 {
            state.r.clone_from(&pending);
            let exact = imbalance(&state, grid) / grid.inertia;
            let sample = MeasuredSample {
                t,
                omega: state.omega,
                omega_dot_override: cfg.controller.exact_derivative.then_some(exact),
            };
            let (terms, next) = price_adjustment_with(&cs, &sample, &gains, &law)?;
            cs = next;
            let mut lambda_rt = rt_price(&cs, terms.pi);
            if let Some(floor) = cfg.controller.price_floor {
                lambda_rt = lambda_rt.max(floor);
            }
            pending = regulation_update(&state.r, lambda_rt, &fleet);

            let g: Vec<f64> = fleet.iter().zip(&pending).map(|(p, &r)| p.output(r)).collect();
            let profit = fleet
                .iter()
                .zip(&g)
                .map(|(p, &gi)| metrics::profit(gi, lambda_rt, p))
                .collect();
            records.push(TimeSeriesRecord {
                t,
                omega: state.omega,
                omega_integral: terms.omega_integral,
                omega_dot: terms.omega_dot,
                delta: state.delta,
                lambda: lambda_rt,
                pi: terms.pi,
                gamma: 1.0,
                g,
                profit,
            });
        }
        if k == n_steps {
            break;
        }

        state.omega += dt * imbalance(&state, grid) / grid.inertia;
        if !state.omega.is_finite() {
            return Err(Error::Diverged {
                step: k + 1,
                t: (k + 1) as f64 * dt,
            });
        }
        signal.advance();
    }

    Ok(Trajectory {
        mode: crate::model::Mode::Controller,
        lambda_da: cfg.lambda_da,
        fleet: cfg.generators.clone(),
        grid: cfg.grid.clone(),
        dt_physics: dt,
        dt_sample: dt * per_sample as f64,
        pid: Some(gains),
        equilibrium_time: None,
        records,
    })
}
