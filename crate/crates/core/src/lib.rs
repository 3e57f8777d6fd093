//! Deterministic simulator of a real-time electricity market coupled to
//! linearized grid-frequency dynamics, with a frequency-derived online
//! pricing controller.
//!
//! Start from [`config::load`] or the canned experiments in [`scenario`],
//! then call [`run::simulate`].

// `!(x > 0.0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod controller;
pub mod dispatch;
pub mod dynamics;
pub mod error;
pub mod metrics;
pub mod model;
pub mod output;
pub mod parallel;
pub mod run;
pub mod scenario;
pub mod sweep;
pub mod trajectory;
pub mod verify;

pub use dispatch::{solve_ed, DispatchSolution};
pub use error::{Error, Result, ValidationError};
pub use model::{FlowGains, GeneratorParams, GridParams, Mode, SimConfig, SimState};
pub use run::{simulate, RunOutput};
pub use scenario::DisturbanceSchedule;
pub use trajectory::{TimeSeriesRecord, Trajectory};
