use serde::Serialize;

use crate::model::{GeneratorParams, GridParams, Mode};

/// One sampled output row.
///
/// `lambda` is the price the generators act on at `t`: the price state for
/// the continuous flows, λ^rt for the controller. `g` is the dispatch that
/// price induces. For the flows that is the current output; for the
/// controller it is the setpoint computed at `t`, which takes effect at the
/// next sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSeriesRecord {
    pub t: f64,
    pub omega: f64,
    pub omega_integral: f64,
    /// dω/dt used at this sample (exact for flows, estimated or injected
    /// for the controller).
    pub omega_dot: f64,
    pub delta: f64,
    pub lambda: f64,
    /// `lambda − λ^da`.
    pub pi: f64,
    pub gamma: f64,
    pub g: Vec<f64>,
    /// $/h, `lambda·g − cost(g)`.
    pub profit: Vec<f64>,
}

/// Parameters the price controller used, kept for identity checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PidParams {
    pub inertia: f64,
    pub damping: f64,
    pub price_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub mode: Mode,
    pub lambda_da: f64,
    /// Fleet at t = 0, before any outage.
    pub fleet: Vec<GeneratorParams>,
    pub grid: GridParams,
    pub dt_physics: f64,
    pub dt_sample: f64,
    pub pid: Option<PidParams>,
    /// First time the flow stayed stationary for a full second.
    pub equilibrium_time: Option<f64>,
    pub records: Vec<TimeSeriesRecord>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_generators(&self) -> usize {
        self.fleet.len()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn last(&self) -> Option<&TimeSeriesRecord> {
        self.records.last()
    }

    /// Regulation `g − p*` for one record.
    pub fn regulation(&self, rec: &TimeSeriesRecord) -> Vec<f64> {
        rec.g.iter().zip(&self.fleet).map(|(g, p)| g - p.p_star).collect()
    }
}
