//! Domain types, configuration, and elementary cost evaluations.
//!
//! Units used throughout the crate:
//!
//! | quantity              | unit        |
//! |-----------------------|-------------|
//! | power, regulation     | MW          |
//! | frequency deviation ω | Hz          |
//! | time                  | s           |
//! | price                 | $/MWh       |
//! | cost, profit rate     | $/h         |
//! | inertia M             | MW·s/Hz     |
//! | damping D             | MW/Hz       |
//!
//! The displayed frequency is `f_nominal + ω`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationError};

/// Cost, capacity and controller data for one generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    /// Quadratic cost coefficient C_ii, $/MWh².
    pub quad_cost: f64,
    /// Linear cost coefficient c_i, $/MWh.
    pub lin_cost: f64,
    pub p_min: f64,
    pub p_max: f64,
    /// Day-ahead setpoint p*_i.
    pub p_star: f64,
    /// Controller step size η_i, MW²h/$.
    pub eta: f64,
}

impl GeneratorParams {
    /// Generator with step size `1 / quad_cost` and `p_star = p_min`.
    pub fn new(quad_cost: f64, lin_cost: f64, p_min: f64, p_max: f64) -> Self {
        Self {
            quad_cost,
            lin_cost,
            p_min,
            p_max,
            p_star: p_min,
            eta: 1.0 / quad_cost,
        }
    }

    pub fn with_p_star(mut self, p_star: f64) -> Self {
        self.p_star = p_star;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    /// Lower bound of the regulation box, `p_min - p_star`.
    pub fn r_min(&self) -> f64 {
        self.p_min - self.p_star
    }

    /// Upper bound of the regulation box, `p_max - p_star`.
    pub fn r_max(&self) -> f64 {
        self.p_max - self.p_star
    }

    pub fn output(&self, r: f64) -> f64 {
        self.p_star + r
    }

    pub fn cost(&self, output: f64) -> f64 {
        generator_cost(self, output)
    }

    pub fn marginal(&self, output: f64) -> f64 {
        marginal_cost(self, output)
    }

    /// Output that maximizes profit at `price`, clamped to capacity.
    pub fn best_response(&self, price: f64) -> f64 {
        ((price - self.lin_cost) / self.quad_cost).clamp(self.p_min, self.p_max)
    }
}

/// `½·C·p² + c·p` in $/h.
pub fn generator_cost(g: &GeneratorParams, output: f64) -> f64 {
    0.5 * g.quad_cost * output * output + g.lin_cost * output
}

/// `C·p + c` in $/MWh.
pub fn marginal_cost(g: &GeneratorParams, output: f64) -> f64 {
    g.quad_cost * output + g.lin_cost
}

/// Clamp `value` to `[lo, hi]`.
pub fn project_box(value: f64, lo: f64, hi: f64) -> Result<f64> {
    if lo > hi {
        return Err(Error::InvalidBounds { lo, hi });
    }
    Ok(value.clamp(lo, hi))
}

/// Sum of `½·C·p² + c·p` over the fleet for regulation vector `r`.
pub fn fleet_cost(fleet: &[GeneratorParams], r: &[f64]) -> f64 {
    fleet
        .iter()
        .zip(r)
        .map(|(g, &ri)| g.cost(g.output(ri)))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    /// System inertia M, MW·s/Hz.
    pub inertia: f64,
    /// Load damping D, MW/Hz.
    pub damping: f64,
    #[serde(default = "default_f_nominal")]
    pub f_nominal: f64,
    /// Nominal demand d, MW.
    pub demand: f64,
}

fn default_f_nominal() -> f64 {
    60.0
}

/// Full dynamical state at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub r: Vec<f64>,
    pub omega: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub omega_integral: f64,
    pub delta: f64,
}

impl SimState {
    /// Day-ahead rest point: `r = 0, ω = 0, λ = λ_da, γ = 1`.
    pub fn at_rest(n: usize, lambda_da: f64) -> Self {
        Self {
            t: 0.0,
            r: vec![0.0; n],
            omega: 0.0,
            lambda: lambda_da,
            gamma: 1.0,
            omega_integral: 0.0,
            delta: 0.0,
        }
    }

    pub fn total_regulation(&self) -> f64 {
        self.r.iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.omega.is_finite()
            && self.lambda.is_finite()
            && self.gamma.is_finite()
            && self.omega_integral.is_finite()
            && self.r.iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Price tâtonnement without frequency.
    MarketOnly,
    /// Full primal-dual flow with the auxiliary multiplier γ.
    Composite,
    /// Composite flow with γ held at 1.
    Reduced,
    /// Sampled PID pricing with projected best response.
    Controller,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::MarketOnly => "market_only",
            Mode::Composite => "composite",
            Mode::Reduced => "reduced",
            Mode::Controller => "controller",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "market_only" => Ok(Mode::MarketOnly),
            "composite" => Ok(Mode::Composite),
            "reduced" => Ok(Mode::Reduced),
            "controller" => Ok(Mode::Controller),
            other => Err(Error::Parse(format!("unknown mode `{other}`"))),
        }
    }
}

/// Rates of the continuous flows.
///
/// `regulation_gain` scales the regulation velocity (1/s). `price_rate` is the
/// tâtonnement rate κ in `λ̇ = κ(δ − Σr)`, in $/MWh per MW·s. The default
/// κ = 1/3600 reads the price update per hour of imbalance. The sampled
/// controller uses the same κ on its proportional and integral terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowGains {
    #[serde(default = "default_regulation_gain")]
    pub regulation_gain: f64,
    #[serde(default = "default_price_rate")]
    pub price_rate: f64,
}

fn default_regulation_gain() -> f64 {
    10.0
}

fn default_price_rate() -> f64 {
    1.0 / 3600.0
}

impl Default for FlowGains {
    fn default() -> Self {
        Self {
            regulation_gain: default_regulation_gain(),
            price_rate: default_price_rate(),
        }
    }
}

impl FlowGains {
    /// Unscaled gradient flows.
    pub fn unit() -> Self {
        Self {
            regulation_gain: 1.0,
            price_rate: 1.0,
        }
    }
}

/// Knobs of the sampled pricing controller.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ControllerSettings {
    /// Controller's belief of M; defaults to the plant's.
    pub inertia: Option<f64>,
    /// Controller's belief of D; defaults to the plant's.
    pub damping: Option<f64>,
    /// Lower clamp on λ^rt. Off by default (negative prices allowed).
    pub price_floor: Option<f64>,
    /// Feed the exact swing-equation derivative instead of the backward
    /// difference estimate.
    #[serde(default)]
    pub exact_derivative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub generators: Vec<GeneratorParams>,
    pub grid: GridParams,
    pub dt_physics: f64,
    pub dt_sample: f64,
    pub horizon: f64,
    pub mode: Mode,
    pub lambda_da: f64,
    pub seed: u64,
    pub gains: FlowGains,
    pub controller: ControllerSettings,
    /// Re-solve interval of the offline baseline, if one is requested.
    pub offline_interval: Option<f64>,
    pub scenario_id: String,
}

impl SimConfig {
    /// Physics steps per controller sample.
    pub fn steps_per_sample(&self) -> usize {
        (self.dt_sample / self.dt_physics).round().max(1.0) as usize
    }

    /// Number of physics steps covering the horizon.
    pub fn physics_steps(&self) -> usize {
        (self.horizon / self.dt_physics + 1e-9).floor() as usize
    }

    /// Number of output rows, `⌊horizon / dt_sample⌋ + 1`.
    pub fn sample_count(&self) -> usize {
        self.physics_steps() / self.steps_per_sample() + 1
    }

    pub fn controller_inertia(&self) -> f64 {
        self.controller.inertia.unwrap_or(self.grid.inertia)
    }

    pub fn controller_damping(&self) -> f64 {
        self.controller.damping.unwrap_or(self.grid.damping)
    }
}

/// Checks every invariant of `cfg` and reports all violations at once.
pub fn validate_config(cfg: &SimConfig) -> std::result::Result<(), Vec<ValidationError>> {
    let mut errs = Vec::new();
    let mut bad = |field: String, msg: String| errs.push(ValidationError::new(field, msg));

    if cfg.generators.is_empty() {
        bad("generator".into(), "at least one generator is required".into());
    }
    for (i, g) in cfg.generators.iter().enumerate() {
        let f = |name: &str| format!("generator[{}].{name}", i + 1);
        if !(g.quad_cost > 0.0) {
            bad(f("quad_cost"), format!("quad_cost must be > 0 (got {})", g.quad_cost));
        }
        if !g.lin_cost.is_finite() {
            bad(f("lin_cost"), format!("lin_cost must be finite (got {})", g.lin_cost));
        }
        if !(g.p_min >= 0.0) {
            bad(f("p_min"), format!("p_min must be >= 0 (got {})", g.p_min));
        }
        if !(g.p_min <= g.p_star) {
            bad(
                f("p_star"),
                format!("p_star must be >= p_min (got {} < {})", g.p_star, g.p_min),
            );
        }
        if !(g.p_star <= g.p_max) {
            bad(
                f("p_star"),
                format!("p_star must be <= p_max (got {} > {})", g.p_star, g.p_max),
            );
        }
        if !(g.eta > 0.0) {
            bad(f("eta"), format!("eta must be > 0 (got {})", g.eta));
        }
    }

    let grid = &cfg.grid;
    if !(grid.inertia > 0.0) {
        bad("grid.inertia".into(), format!("inertia must be > 0 (got {})", grid.inertia));
    }
    if !(grid.damping > 0.0) {
        bad("grid.damping".into(), format!("damping must be > 0 (got {})", grid.damping));
    }
    if !(grid.demand >= 0.0) {
        bad("grid.demand".into(), format!("demand must be >= 0 (got {})", grid.demand));
    }

    if !(cfg.dt_physics > 0.0) {
        bad(
            "simulation.dt_physics".into(),
            format!("dt_physics must be > 0 (got {})", cfg.dt_physics),
        );
    }
    if !(cfg.horizon > 0.0) {
        bad("simulation.horizon".into(), format!("horizon must be > 0 (got {})", cfg.horizon));
    }
    if !(cfg.dt_sample > 0.0) {
        bad(
            "simulation.dt_sample".into(),
            format!("dt_sample must be > 0 (got {})", cfg.dt_sample),
        );
    } else if cfg.dt_physics > 0.0 {
        let ratio = cfg.dt_sample / cfg.dt_physics;
        if ratio.round() < 1.0 || (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            bad(
                "simulation.dt_sample".into(),
                format!(
                    "dt_sample {} is not an integer multiple of dt_physics {}",
                    cfg.dt_sample, cfg.dt_physics
                ),
            );
        }
    }
    if !cfg.lambda_da.is_finite() {
        bad("simulation.lambda_da".into(), "lambda_da must be finite".into());
    }

    if !(cfg.gains.regulation_gain > 0.0) {
        bad(
            "dynamics.regulation_gain".into(),
            format!("regulation_gain must be > 0 (got {})", cfg.gains.regulation_gain),
        );
    }
    if !(cfg.gains.price_rate > 0.0) {
        bad(
            "dynamics.price_rate".into(),
            format!("price_rate must be > 0 (got {})", cfg.gains.price_rate),
        );
    }
    if let Some(m) = cfg.controller.inertia {
        if !(m > 0.0) {
            bad("controller.inertia".into(), format!("inertia must be > 0 (got {m})"));
        }
    }
    if let Some(d) = cfg.controller.damping {
        if !(d > 0.0) {
            bad("controller.damping".into(), format!("damping must be > 0 (got {d})"));
        }
    }
    if let Some(iv) = cfg.offline_interval {
        if !(iv > 0.0) {
            bad(
                "scenario.offline_interval".into(),
                format!("offline_interval must be > 0 (got {iv})"),
            );
        }
    }

    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs)
    }
}
