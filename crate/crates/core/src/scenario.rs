//! Disturbance signals: demand steps, generator outages and a seeded Wiener
//! demand process.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dispatch;
use crate::error::{Error, Result, ValidationError};
use crate::model::{ControllerSettings, FlowGains, GeneratorParams, GridParams, Mode, SimConfig};

/// Identifier recorded in manifests for the Wiener increment generator.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng(rand_chacha 0.9, seed_from_u64, stream=sha256(scenario_id)[0..8]) + StandardNormal(rand_distr 0.5 ziggurat)";

/// Tolerance, as a fraction of a physics step, for deciding that an event
/// time has been reached.
const EVENT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepChange {
    pub t: f64,
    /// Demand change in MW; negative is a decrease.
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outage {
    pub t: f64,
    /// Zero-based index into the fleet.
    pub generator: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WienerSpec {
    /// Diffusion scale in MW/√s.
    pub sigma: f64,
    pub seed: u64,
    /// RNG stream, normally derived from the scenario id.
    pub stream: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DisturbanceSchedule {
    pub steps: Vec<StepChange>,
    pub outages: Vec<Outage>,
    pub wiener: Option<WienerSpec>,
}

impl DisturbanceSchedule {
    pub fn validate(&self, horizon: f64, n_generators: usize) -> Vec<ValidationError> {
        let mut errs = Vec::new();
        for (i, s) in self.steps.iter().enumerate() {
            if !(s.t >= 0.0 && s.t <= horizon) {
                errs.push(ValidationError::new(
                    format!("scenario.step[{}].t", i + 1),
                    format!("event time {} outside [0, {horizon}]", s.t),
                ));
            }
            if !s.amount.is_finite() {
                errs.push(ValidationError::new(
                    format!("scenario.step[{}].amount", i + 1),
                    "amount must be finite",
                ));
            }
        }
        let mut seen = vec![false; n_generators];
        for (i, o) in self.outages.iter().enumerate() {
            if !(o.t >= 0.0 && o.t <= horizon) {
                errs.push(ValidationError::new(
                    format!("scenario.outage[{}].t", i + 1),
                    format!("event time {} outside [0, {horizon}]", o.t),
                ));
            }
            if o.generator >= n_generators {
                errs.push(ValidationError::new(
                    format!("scenario.outage[{}].generator", i + 1),
                    format!(
                        "generator {} does not exist (fleet has {n_generators})",
                        o.generator + 1
                    ),
                ));
            } else if std::mem::replace(&mut seen[o.generator], true) {
                errs.push(ValidationError::new(
                    format!("scenario.outage[{}].generator", i + 1),
                    format!("generator {} has more than one outage", o.generator + 1),
                ));
            }
        }
        if let Some(w) = &self.wiener {
            if !(w.sigma >= 0.0) {
                errs.push(ValidationError::new(
                    "scenario.wiener.sigma",
                    format!("sigma must be >= 0 (got {})", w.sigma),
                ));
            }
        }
        errs
    }

    /// Sum of demand steps in effect at `t` (right-continuous).
    pub fn step_level(&self, t: f64, dt: f64) -> f64 {
        self.steps
            .iter()
            .filter(|s| reached(t, s.t, dt))
            .map(|s| s.amount)
            .sum()
    }

    /// Outages that have occurred at or before `t`.
    pub fn outages_by(&self, t: f64, dt: f64) -> impl Iterator<Item = &Outage> {
        self.outages.iter().filter(move |o| reached(t, o.t, dt))
    }

    /// Fleet with every outage up to `t` applied.
    pub fn fleet_at(&self, fleet: &[GeneratorParams], t: f64, dt: f64) -> Result<Vec<GeneratorParams>> {
        let mut out = fleet.to_vec();
        for o in self.outages_by(t, dt) {
            out = apply_outage(&out, o.generator)?;
        }
        Ok(out)
    }
}

pub(crate) fn reached(t: f64, event: f64, dt: f64) -> bool {
    t >= event - EVENT_EPS * dt.max(f64::MIN_POSITIVE)
}

/// Stable 64-bit stream number for a scenario id.
pub fn stream_for(scenario_id: &str) -> u64 {
    let digest = Sha256::digest(scenario_id.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Stateful δ(t) generator advancing one physics step at a time.
///
/// `delta()` is the value on `[t_k, t_{k+1})`. The Wiener component starts at
/// zero and accumulates `σ·√dt·ξ` per step.
#[derive(Debug, Clone)]
pub struct DisturbanceSignal {
    steps: Vec<StepChange>,
    dt: f64,
    k: u64,
    wiener_level: f64,
    noise: Option<(f64, ChaCha8Rng)>,
}

impl DisturbanceSignal {
    pub fn new(schedule: &DisturbanceSchedule, dt: f64) -> Self {
        let noise = schedule.wiener.as_ref().map(|w| {
            let mut rng = ChaCha8Rng::seed_from_u64(w.seed);
            rng.set_stream(w.stream);
            (w.sigma, rng)
        });
        Self {
            steps: schedule.steps.clone(),
            dt,
            k: 0,
            wiener_level: 0.0,
            noise,
        }
    }

    pub fn step_index(&self) -> u64 {
        self.k
    }

    pub fn time(&self) -> f64 {
        self.k as f64 * self.dt
    }

    pub fn delta(&self) -> f64 {
        let t = self.time();
        let steps: f64 = self
            .steps
            .iter()
            .filter(|s| reached(t, s.t, self.dt))
            .map(|s| s.amount)
            .sum();
        steps + self.wiener_level
    }

    pub fn wiener_level(&self) -> f64 {
        self.wiener_level
    }

    /// Advance to the next physics step.
    pub fn advance(&mut self) {
        if let Some((sigma, rng)) = &mut self.noise {
            let xi: f64 = StandardNormal.sample(rng);
            self.wiener_level += *sigma * self.dt.sqrt() * xi;
        }
        self.k += 1;
    }

    /// Advance until the step containing `t`.
    pub fn advance_to(&mut self, t: f64) {
        let target = (t / self.dt + EVENT_EPS).floor() as u64;
        while self.k < target {
            self.advance();
        }
    }
}

/// δ at time `t` for a fresh signal. Costs O(t / dt) for Wiener schedules.
pub fn delta_at(schedule: &DisturbanceSchedule, t: f64, dt_physics: f64) -> f64 {
    let mut sig = DisturbanceSignal::new(schedule, dt_physics);
    sig.advance_to(t);
    sig.delta()
}

/// Collapses generator `index`'s capacity to zero output.
///
/// The day-ahead setpoint is kept, so the unit's regulation box becomes the
/// single point `r = −p*`; the lost output appears in `Σr`.
pub fn apply_outage(fleet: &[GeneratorParams], index: usize) -> Result<Vec<GeneratorParams>> {
    let g = fleet.get(index).ok_or(Error::InvalidGenerator {
        index,
        len: fleet.len(),
    })?;
    if g.p_min == 0.0 && g.p_max == 0.0 {
        return Err(Error::DoubleOutage { index });
    }
    let mut out = fleet.to_vec();
    out[index].p_min = 0.0;
    out[index].p_max = 0.0;
    Ok(out)
}

/// Quadratic cost coefficients of the five-unit test fleet.
pub const REFERENCE_QUAD_COSTS: [f64; 5] = [0.01, 0.01125, 0.0125, 0.01375, 0.015];
pub const REFERENCE_LIN_COST: f64 = 27.4;
pub const REFERENCE_CAPACITY: f64 = 50.0;

pub fn reference_grid() -> GridParams {
    GridParams {
        inertia: 12.0,
        damping: 35.0,
        f_nominal: 60.0,
        demand: 200.0,
    }
}

/// Five-unit fleet with day-ahead setpoints cleared at the nominal demand
/// and step sizes `1 / C_ii`. Returns the fleet and λ^da.
pub fn reference_fleet() -> (Vec<GeneratorParams>, f64) {
    let raw: Vec<_> = REFERENCE_QUAD_COSTS
        .iter()
        .map(|&c2| GeneratorParams::new(c2, REFERENCE_LIN_COST, 0.0, REFERENCE_CAPACITY))
        .collect();
    let (p_star, lambda_da) =
        dispatch::day_ahead(&raw, &reference_grid()).expect("test fleet clears nominal demand");
    let fleet = raw
        .into_iter()
        .zip(p_star)
        .map(|(g, p)| g.with_p_star(p))
        .collect();
    (fleet, lambda_da)
}

fn reference_config(scenario_id: &str, seed: u64) -> SimConfig {
    let (generators, lambda_da) = reference_fleet();
    SimConfig {
        generators,
        grid: reference_grid(),
        dt_physics: 0.05,
        dt_sample: 0.25,
        horizon: 600.0,
        mode: Mode::Controller,
        lambda_da,
        seed,
        gains: FlowGains::default(),
        controller: ControllerSettings::default(),
        offline_interval: Some(300.0),
        scenario_id: scenario_id.to_string(),
    }
}

/// Constant disturbance: −30 MW demand step at 30 s, then the outage of the
/// most expensive unit at 300 s.
pub fn reference_scenario_a() -> (SimConfig, DisturbanceSchedule) {
    let cfg = reference_config("scenario_a", 0);
    let schedule = DisturbanceSchedule {
        steps: vec![StepChange {
            t: 30.0,
            amount: -30.0,
        }],
        outages: vec![Outage {
            t: 300.0,
            generator: 4,
        }],
        wiener: None,
    };
    (cfg, schedule)
}

/// Wiener demand with σ = 1 MW/√s.
pub fn reference_scenario_b(seed: u64) -> (SimConfig, DisturbanceSchedule) {
    let cfg = reference_config("scenario_b", seed);
    let schedule = DisturbanceSchedule {
        steps: Vec::new(),
        outages: Vec::new(),
        wiener: Some(WienerSpec {
            sigma: 1.0,
            seed,
            stream: stream_for(&cfg.scenario_id),
        }),
    };
    (cfg, schedule)
}

/// Archival JSON document for a schedule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleDocument {
    pub scenario_id: String,
    pub dt_physics: f64,
    pub rng_algorithm: String,
    /// One-based generator numbers, as in the config file.
    pub events: Vec<ScheduleEvent>,
    pub wiener: Option<WienerSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleEvent {
    Step { t: f64, amount: f64 },
    Outage { t: f64, generator: usize },
}

impl ScheduleDocument {
    pub fn new(scenario_id: &str, dt_physics: f64, schedule: &DisturbanceSchedule) -> Self {
        let mut events: Vec<ScheduleEvent> = schedule
            .steps
            .iter()
            .map(|s| ScheduleEvent::Step {
                t: s.t,
                amount: s.amount,
            })
            .chain(schedule.outages.iter().map(|o| ScheduleEvent::Outage {
                t: o.t,
                generator: o.generator + 1,
            }))
            .collect();
        events.sort_by(|a, b| event_time(a).total_cmp(&event_time(b)));
        Self {
            scenario_id: scenario_id.to_string(),
            dt_physics,
            rng_algorithm: RNG_ALGORITHM.to_string(),
            events,
            wiener: schedule.wiener.clone(),
        }
    }
}

fn event_time(e: &ScheduleEvent) -> f64 {
    match e {
        ScheduleEvent::Step { t, .. } | ScheduleEvent::Outage { t, .. } => *t,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_step() -> DisturbanceSchedule {
        DisturbanceSchedule {
            steps: vec![StepChange {
                t: 30.0,
                amount: -30.0,
            }],
            ..Default::default()
        }
    }

    fn wiener_only(seed: u64) -> DisturbanceSchedule {
        DisturbanceSchedule {
            wiener: Some(WienerSpec {
                sigma: 1.0,
                seed,
                stream: 0,
            }),
            ..Default::default()
        }
    }

    #[test]
    fn step_before_and_after() {
        let s = single_step();
        assert_eq!(delta_at(&s, 10.0, 0.05), 0.0);
        assert_eq!(delta_at(&s, 60.0, 0.05), -30.0);
    }

    #[test]
    fn step_is_right_continuous() {
        let s = single_step();
        let mut sig = DisturbanceSignal::new(&s, 0.05);
        sig.advance_to(29.95);
        assert_eq!(sig.delta(), 0.0);
        sig.advance();
        // 600 * 0.05 is not exactly 30.0 in binary.
        assert_eq!(sig.step_index(), 600);
        assert_eq!(sig.delta(), -30.0);
    }

    #[test]
    fn wiener_is_reproducible() {
        let a = delta_at(&wiener_only(42), 100.0, 0.05);
        let b = delta_at(&wiener_only(42), 100.0, 0.05);
        assert_eq!(a.to_bits(), b.to_bits());
        assert_ne!(a, delta_at(&wiener_only(43), 100.0, 0.05));
    }

    #[test]
    fn wiener_starts_at_zero() {
        assert_eq!(delta_at(&wiener_only(7), 0.0, 0.05), 0.0);
    }

    #[test]
    fn outage_pins_regulation() {
        let (fleet, _) = reference_fleet();
        let out = apply_outage(&fleet, 0).unwrap();
        assert_eq!(out[0].r_min(), -fleet[0].p_star);
        assert_eq!(out[0].r_max(), -fleet[0].p_star);
        // headroom drops by the full 50 MW of capacity
        let cap = |f: &[GeneratorParams]| f.iter().map(|g| g.p_max).sum::<f64>();
        assert_eq!(cap(&fleet) - cap(&out), 50.0);
        assert!(matches!(apply_outage(&out, 0), Err(Error::DoubleOutage { index: 0 })));
        assert!(matches!(
            apply_outage(&out, 9),
            Err(Error::InvalidGenerator { index: 9, len: 5 })
        ));
    }

    #[test]
    fn outage_leaves_other_bounds_alone() {
        let (fleet, _) = reference_fleet();
        for i in 0..fleet.len() {
            let out = apply_outage(&fleet, i).unwrap();
            for j in (0..fleet.len()).filter(|&j| j != i) {
                assert_eq!(out[j], fleet[j]);
            }
        }
    }

    #[test]
    fn zero_setpoint_outage_has_no_instant_impact() {
        let fleet = vec![GeneratorParams::new(0.01, 27.4, 0.0, 50.0)];
        let out = apply_outage(&fleet, 0).unwrap();
        assert_eq!(out[0].r_min(), 0.0);
        assert_eq!(out[0].r_max(), 0.0);
    }

    #[test]
    fn post_outage_infeasibility_surfaces() {
        let fleet = vec![
            GeneratorParams::new(0.01, 27.4, 0.0, 50.0),
            GeneratorParams::new(0.01, 27.4, 0.0, 50.0),
        ];
        let grid = GridParams {
            inertia: 12.0,
            damping: 35.0,
            f_nominal: 60.0,
            demand: 60.0,
        };
        let out = apply_outage(&fleet, 1).unwrap();
        let err = dispatch::solve_ed(&out, &grid, 0.0).unwrap_err();
        assert!(matches!(err, Error::InfeasibleDemand { .. }));
    }

    #[test]
    fn scenario_a_shape() {
        let (cfg, sched) = reference_scenario_a();
        assert!(crate::model::validate_config(&cfg).is_ok());
        assert!(sched.validate(cfg.horizon, cfg.generators.len()).is_empty());
        let times: Vec<f64> = sched
            .steps
            .iter()
            .map(|s| s.t)
            .chain(sched.outages.iter().map(|o| o.t))
            .collect();
        assert_eq!(times, [30.0, 300.0]);
        assert_eq!(delta_at(&sched, 200.0, cfg.dt_physics), -30.0);
        // the outaged unit is the one with the largest quadratic cost
        let worst = cfg
            .generators
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.quad_cost.total_cmp(&b.1.quad_cost))
            .unwrap()
            .0;
        assert_eq!(sched.outages[0].generator, worst);
    }

    #[test]
    fn scenario_b_shape() {
        let (cfg, sched) = reference_scenario_b(5);
        assert_eq!(sched.wiener.as_ref().unwrap().sigma, 1.0);
        assert_eq!(cfg.offline_interval, Some(300.0));
        let (_, again) = reference_scenario_b(5);
        let path = |s: &DisturbanceSchedule| {
            let mut sig = DisturbanceSignal::new(s, 0.05);
            (0..2000)
                .map(|_| {
                    sig.advance();
                    sig.delta()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(path(&sched), path(&again));
    }

    #[test]
    fn one_second_increments_have_unit_std() {
        // 10^4 one-second increments of a σ = 1 MW/√s path
        let mut sig = DisturbanceSignal::new(&wiener_only(2024), 0.05);
        let mut prev = sig.delta();
        let mut incs = Vec::with_capacity(10_000);
        for _ in 0..10_000 {
            for _ in 0..20 {
                sig.advance();
            }
            let d = sig.delta();
            incs.push(d - prev);
            prev = d;
        }
        let n = incs.len() as f64;
        let mean = incs.iter().sum::<f64>() / n;
        let var = incs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var.sqrt() - 1.0).abs() < 0.05, "std = {}", var.sqrt());
    }

    #[test]
    fn increment_variance_scales_with_length() {
        // increments over 1 s and 4 s windows; variance ratio ≈ 4
        let n = 10_000usize;
        let sample = |window_steps: usize, seed: u64| {
            let mut sig = DisturbanceSignal::new(&wiener_only(seed), 0.05);
            let mut prev = 0.0;
            (0..n)
                .map(|_| {
                    for _ in 0..window_steps {
                        sig.advance();
                    }
                    let d = sig.delta();
                    let inc = d - prev;
                    prev = d;
                    inc
                })
                .collect::<Vec<f64>>()
        };
        let var = |xs: &[f64]| xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        let v1 = var(&sample(20, 11));
        let v4 = var(&sample(80, 12));
        // sample variance of n normals has relative sd sqrt(2/n)
        let rel_sd = (2.0 / n as f64).sqrt();
        assert!((v1 - 1.0).abs() < 3.0 * rel_sd, "v1 = {v1}");
        assert!((v4 / 4.0 - 1.0).abs() < 3.0 * rel_sd, "v4 = {v4}");

        // lag-one correlation of disjoint increments vanishes
        let xs = sample(20, 13);
        let corr = xs.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (n as f64 - 1.0) / var(&xs);
        assert!(corr.abs() < 3.0 / (n as f64).sqrt(), "corr = {corr}");
    }

    #[test]
    fn schedule_validation() {
        let s = DisturbanceSchedule {
            steps: vec![StepChange { t: 700.0, amount: 1.0 }],
            outages: vec![
                Outage { t: 10.0, generator: 1 },
                Outage { t: 20.0, generator: 1 },
                Outage { t: 20.0, generator: 8 },
            ],
            wiener: Some(WienerSpec {
                sigma: -1.0,
                seed: 0,
                stream: 0,
            }),
        };
        let errs = s.validate(600.0, 5);
        assert_eq!(errs.len(), 4);
    }

    #[test]
    fn distinct_scenarios_get_distinct_streams() {
        assert_ne!(stream_for("scenario_a"), stream_for("scenario_b"));
        assert_eq!(stream_for("x"), stream_for("x"));
    }
}
