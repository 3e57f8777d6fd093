//! TOML configuration files.
//!
//! ```toml
//! [grid]
//! inertia = 12.0        # MW·s/Hz
//! damping = 35.0        # MW/Hz
//! f_nominal = 60.0      # Hz, optional
//! demand = 200.0        # MW
//!
//! [[generator]]         # one table per unit, order is preserved
//! quad_cost = 0.01      # $/MWh²
//! lin_cost = 27.4       # $/MWh
//! p_min = 0.0
//! p_max = 50.0
//! # p_star = ...        # optional; all or none. Default: day-ahead clearing
//! # eta = ...           # optional; default 1 / quad_cost
//!
//! [simulation]
//! dt_physics = 0.05
//! dt_sample = 0.25
//! horizon = 600.0
//! mode = "controller"   # market_only | composite | reduced | controller
//! seed = 0
//! # lambda_da = ...     # optional; default day-ahead clearing price
//!
//! [dynamics]            # optional
//! regulation_gain = 10.0
//! price_rate = 0.000277777777777778
//!
//! [controller]          # optional
//! # inertia, damping, price_floor, eta, exact_derivative
//!
//! [scenario]
//! id = "scenario_a"
//! offline_interval = 300.0
//! [[scenario.step]]
//! t = 30.0
//! amount = -30.0
//! [[scenario.outage]]
//! t = 300.0
//! generator = 5         # one-based
//! [scenario.wiener]
//! sigma = 1.0           # MW/√s; seeded from simulation.seed
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dispatch::day_ahead;
use crate::error::{Error, Result, ValidationError};
use crate::model::{ControllerSettings, FlowGains, GeneratorParams, GridParams, Mode, SimConfig};
use crate::run::validate;
use crate::scenario::{stream_for, DisturbanceSchedule, Outage, StepChange, WienerSpec};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    grid: RawGrid,
    #[serde(rename = "generator", default)]
    generators: Vec<RawGenerator>,
    simulation: RawSimulation,
    #[serde(default)]
    dynamics: FlowGains,
    #[serde(default)]
    controller: RawController,
    #[serde(default)]
    scenario: RawScenario,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    inertia: f64,
    damping: f64,
    #[serde(default = "default_f_nominal")]
    f_nominal: f64,
    demand: f64,
}

fn default_f_nominal() -> f64 {
    60.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGenerator {
    quad_cost: f64,
    lin_cost: f64,
    p_min: f64,
    p_max: f64,
    p_star: Option<f64>,
    eta: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulation {
    dt_physics: f64,
    dt_sample: f64,
    horizon: f64,
    mode: String,
    #[serde(default)]
    seed: u64,
    lambda_da: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawController {
    inertia: Option<f64>,
    damping: Option<f64>,
    price_floor: Option<f64>,
    /// Step size for every generator, overriding the per-unit values.
    eta: Option<f64>,
    #[serde(default)]
    exact_derivative: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    id: Option<String>,
    offline_interval: Option<f64>,
    #[serde(default)]
    step: Vec<StepChange>,
    #[serde(default)]
    outage: Vec<Outage>,
    wiener: Option<RawWiener>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWiener {
    sigma: f64,
}

/// A validated configuration and its disturbance schedule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSpec {
    pub config: SimConfig,
    pub schedule: DisturbanceSchedule,
}

/// Parameters accepted by [`RunSpec::set_param`].
pub const SWEEP_PARAMS: &[&str] = &[
    "grid.inertia",
    "grid.damping",
    "dynamics.regulation_gain",
    "dynamics.price_rate",
    "controller.inertia",
    "controller.damping",
    "controller.price_floor",
    "scenario.wiener.sigma",
    "scenario.offline_interval",
    "simulation.horizon",
];

impl RunSpec {
    /// Reseeds the run; the Wiener stream keeps following the scenario id.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.config.seed = seed;
        if let Some(w) = &mut self.schedule.wiener {
            w.seed = seed;
        }
        self
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.config.mode = mode;
        self
    }

    /// Overrides one numeric parameter by its config key.
    pub fn set_param(&mut self, key: &str, value: f64) -> Result<()> {
        let cfg = &mut self.config;
        match key {
            "grid.inertia" => cfg.grid.inertia = value,
            "grid.damping" => cfg.grid.damping = value,
            "dynamics.regulation_gain" => cfg.gains.regulation_gain = value,
            "dynamics.price_rate" => cfg.gains.price_rate = value,
            "controller.inertia" => cfg.controller.inertia = Some(value),
            "controller.damping" => cfg.controller.damping = Some(value),
            "controller.price_floor" => cfg.controller.price_floor = Some(value),
            "scenario.offline_interval" => cfg.offline_interval = Some(value),
            "simulation.horizon" => cfg.horizon = value,
            "scenario.wiener.sigma" => match &mut self.schedule.wiener {
                Some(w) => w.sigma = value,
                None => {
                    return Err(Error::Parse(
                        "scenario.wiener.sigma: scenario has no wiener process".into(),
                    ))
                }
            },
            other => {
                return Err(Error::Parse(format!(
                    "unknown sweep parameter `{other}` (expected one of {})",
                    SWEEP_PARAMS.join(", ")
                )))
            }
        }
        validate(&self.config, &self.schedule)
    }
}

pub fn load(path: impl AsRef<Path>) -> Result<RunSpec> {
    parse(&std::fs::read_to_string(path)?)
}

pub fn parse(text: &str) -> Result<RunSpec> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    build(raw)
}

fn build(raw: RawConfig) -> Result<RunSpec> {
    let mut errs = Vec::new();

    let mode = raw.simulation.mode.parse::<Mode>().unwrap_or_else(|_| {
        errs.push(ValidationError::new(
            "simulation.mode",
            format!(
                "unknown mode `{}` (expected market_only, composite, reduced or controller)",
                raw.simulation.mode
            ),
        ));
        Mode::Controller
    });

    let given = raw.generators.iter().filter(|g| g.p_star.is_some()).count();
    if given != 0 && given != raw.generators.len() {
        errs.push(ValidationError::new(
            "generator.p_star",
            format!(
                "p_star must be given for all generators or none ({given} of {})",
                raw.generators.len()
            ),
        ));
    }

    let mut outages = Vec::with_capacity(raw.scenario.outage.len());
    for (i, o) in raw.scenario.outage.iter().enumerate() {
        if o.generator == 0 {
            errs.push(ValidationError::new(
                format!("scenario.outage[{}].generator", i + 1),
                "generator numbers start at 1",
            ));
        } else {
            outages.push(Outage {
                t: o.t,
                generator: o.generator - 1,
            });
        }
    }

    let generators: Vec<GeneratorParams> = raw
        .generators
        .iter()
        .map(|g| {
            let mut p = GeneratorParams::new(g.quad_cost, g.lin_cost, g.p_min, g.p_max);
            if let Some(eta) = raw.controller.eta.or(g.eta) {
                p.eta = eta;
            }
            p
        })
        .collect();

    let scenario_id = raw.scenario.id.unwrap_or_else(|| "custom".to_string());
    let schedule = DisturbanceSchedule {
        steps: raw.scenario.step,
        outages,
        wiener: raw.scenario.wiener.map(|w| WienerSpec {
            sigma: w.sigma,
            seed: raw.simulation.seed,
            stream: stream_for(&scenario_id),
        }),
    };

    let mut config = SimConfig {
        generators,
        grid: GridParams {
            inertia: raw.grid.inertia,
            damping: raw.grid.damping,
            f_nominal: raw.grid.f_nominal,
            demand: raw.grid.demand,
        },
        dt_physics: raw.simulation.dt_physics,
        dt_sample: raw.simulation.dt_sample,
        horizon: raw.simulation.horizon,
        mode,
        lambda_da: raw.simulation.lambda_da.unwrap_or(0.0),
        seed: raw.simulation.seed,
        gains: raw.dynamics,
        controller: ControllerSettings {
            inertia: raw.controller.inertia,
            damping: raw.controller.damping,
            price_floor: raw.controller.price_floor,
            exact_derivative: raw.controller.exact_derivative,
        },
        offline_interval: raw.scenario.offline_interval,
        scenario_id,
    };

    // Structural checks first: clearing the day-ahead market needs a sane
    // fleet.
    if let Err(Error::ConfigInvalid(more)) = validate(&config, &schedule) {
        errs.extend(more);
    }
    if !errs.is_empty() {
        return Err(Error::ConfigInvalid(errs));
    }

    let (p_star, lambda_da) = day_ahead(&config.generators, &config.grid)?;
    for ((g, raw_g), p) in config.generators.iter_mut().zip(&raw.generators).zip(p_star) {
        g.p_star = raw_g.p_star.unwrap_or(p);
    }
    config.lambda_da = raw.simulation.lambda_da.unwrap_or(lambda_da);
    validate(&config, &schedule)?;

    Ok(RunSpec { config, schedule })
}
