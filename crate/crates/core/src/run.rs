use serde::Serialize;

use crate::controller::closed_loop;
use crate::dispatch::{offline_baseline, OfflineBaseline};
use crate::dynamics::integrate;
use crate::error::{Error, Result};
use crate::model::{validate_config, Mode, SimConfig};
use crate::scenario::DisturbanceSchedule;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub baseline: Option<OfflineBaseline>,
}

impl RunOutput {
    /// Offline price on the trajectory's sample grid, if a baseline ran.
    pub fn offline_prices(&self) -> Option<Vec<f64>> {
        self.baseline
            .as_ref()
            .map(|b| b.samples.iter().map(|s| s.lambda).collect())
    }
}

/// Validates `cfg` and `schedule` together, reporting every violation.
pub fn validate(cfg: &SimConfig, schedule: &DisturbanceSchedule) -> Result<()> {
    let mut errs = validate_config(cfg).err().unwrap_or_default();
    errs.extend(schedule.validate(cfg.horizon, cfg.generators.len()));
    if errs.is_empty() {
        Ok(())
    } else {
        Err(Error::ConfigInvalid(errs))
    }
}

/// Runs the configured mode and, when requested, the offline baseline.
pub fn simulate(cfg: &SimConfig, schedule: &DisturbanceSchedule) -> Result<RunOutput> {
    validate(cfg, schedule)?;
    let trajectory = match cfg.mode {
        Mode::Controller => closed_loop(cfg, schedule)?,
        flow => integrate(cfg, schedule, flow.try_into()?)?,
    };
    let baseline = cfg
        .offline_interval
        .map(|interval| {
            offline_baseline(
                &cfg.generators,
                &cfg.grid,
                schedule,
                cfg.dt_physics,
                cfg.dt_sample,
                interval,
                cfg.horizon,
            )
        })
        .transpose()?;
    Ok(RunOutput {
        trajectory,
        baseline,
    })
}
