//! Seed and parameter sweeps over isolated runs.

use serde::Serialize;

use crate::config::RunSpec;
use crate::error::{Error, Result};
use crate::metrics::{compare_online_offline, cost_recovery_report, summarize, Summary};
use crate::parallel::{par_map, ExecPolicy};
use crate::run::{simulate, RunOutput};

/// One point of the parameter grid: `(key, value)` overrides.
pub type ParamPoint = Vec<(String, f64)>;

/// Parses `key=v1,v2,...`.
pub fn parse_param(arg: &str) -> Result<(String, Vec<f64>)> {
    let (key, values) = arg
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("expected key=v1,v2,... (got `{arg}`)")))?;
    let values = values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("{key}: `{v}` is not a number")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        return Err(Error::Parse(format!("{key}: no values")));
    }
    Ok((key.trim().to_string(), values))
}

/// Cartesian product of the parameter axes; one empty point if none.
pub fn param_grid(axes: &[(String, Vec<f64>)]) -> Vec<ParamPoint> {
    axes.iter().fold(vec![Vec::new()], |acc, (key, values)| {
        acc.iter()
            .flat_map(|point| {
                values.iter().map(move |&v| {
                    let mut p = point.clone();
                    p.push((key.clone(), v));
                    p
                })
            })
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepJob {
    pub index: usize,
    pub seed: u64,
    pub params: ParamPoint,
}

impl SweepJob {
    /// Output subdirectory name, e.g. `run_003_seed_2`.
    pub fn label(&self) -> String {
        format!("run_{:03}_seed_{}", self.index, self.seed)
    }
}

pub fn jobs(seeds: &[u64], grid: &[ParamPoint]) -> Vec<SweepJob> {
    grid.iter()
        .flat_map(|p| seeds.iter().map(move |&s| (s, p.clone())))
        .enumerate()
        .map(|(index, (seed, params))| SweepJob { index, seed, params })
        .collect()
}

pub fn job_spec(base: &RunSpec, job: &SweepJob) -> Result<RunSpec> {
    let mut spec = base.clone().with_seed(job.seed);
    for (k, v) in &job.params {
        spec.set_param(k, *v)?;
    }
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRunSummary {
    pub job: SweepJob,
    pub summary: Summary,
    pub min_profit: f64,
    pub offline_negative_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepFailure {
    pub job: SweepJob,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepAggregate {
    pub runs: usize,
    pub failed: usize,
    pub min_profit: Option<f64>,
    pub mean_settling_time: Option<f64>,
    pub unsettled_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub runs: Vec<SweepRunSummary>,
    pub failures: Vec<SweepFailure>,
    pub aggregate: SweepAggregate,
}

pub fn summarize_run(job: &SweepJob, out: &RunOutput) -> Result<SweepRunSummary> {
    let offline = out
        .baseline
        .as_ref()
        .map(|b| compare_online_offline(&out.trajectory, b).map(|c| c.offline_negative_fraction()))
        .transpose()?;
    Ok(SweepRunSummary {
        job: job.clone(),
        summary: summarize(&out.trajectory),
        min_profit: cost_recovery_report(&out.trajectory).overall_min(),
        offline_negative_fraction: offline,
    })
}

pub fn aggregate(runs: &[SweepRunSummary], failed: usize) -> SweepAggregate {
    let settled: Vec<f64> = runs.iter().filter_map(|r| r.summary.settling_time).collect();
    SweepAggregate {
        runs: runs.len() + failed,
        failed,
        min_profit: runs.iter().map(|r| r.min_profit).reduce(f64::min),
        mean_settling_time: (!settled.is_empty()).then(|| settled.iter().sum::<f64>() / settled.len() as f64),
        unsettled_runs: runs.len() - settled.len(),
    }
}

/// Runs every job. `visit` sees each successful output (e.g. to write
/// artifacts); a failure there counts as a failed run. Failures never stop
/// the sweep.
pub fn run_sweep<V>(base: &RunSpec, jobs: &[SweepJob], policy: ExecPolicy, visit: V) -> SweepReport
where
    V: Fn(&SweepJob, &RunSpec, &RunOutput) -> Result<()> + Sync + Send,
{
    let results = par_map(jobs, policy, |job| -> std::result::Result<SweepRunSummary, SweepFailure> {
        let attempt = || -> Result<SweepRunSummary> {
            let spec = job_spec(base, job)?;
            let out = simulate(&spec.config, &spec.schedule)?;
            visit(job, &spec, &out)?;
            summarize_run(job, &out)
        };
        attempt().map_err(|e| SweepFailure {
            job: job.clone(),
            error: e.to_string(),
        })
    });
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(s) => runs.push(s),
            Err(f) => failures.push(f),
        }
    }
    let aggregate = aggregate(&runs, failures.len());
    SweepReport {
        runs,
        failures,
        aggregate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_expand() {
        let axes = vec![
            parse_param("grid.inertia=6,12").unwrap(),
            parse_param("dynamics.regulation_gain = 5, 10 ,20").unwrap(),
        ];
        assert_eq!(axes[1].0, "dynamics.regulation_gain");
        let grid = param_grid(&axes);
        assert_eq!(grid.len(), 6);
        assert_eq!(grid[5], vec![("grid.inertia".to_string(), 12.0), ("dynamics.regulation_gain".to_string(), 20.0)]);
        assert_eq!(param_grid(&[]), vec![Vec::new()]);
        assert!(parse_param("x").is_err());
        assert!(parse_param("x=a").is_err());
    }

    #[test]
    fn job_labels_are_unique() {
        let js = jobs(&[0, 1, 2], &param_grid(&[parse_param("grid.inertia=6,12").unwrap()]));
        assert_eq!(js.len(), 6);
        let mut labels: Vec<_> = js.iter().map(SweepJob::label).collect();
        labels.dedup();
        assert_eq!(labels.len(), 6);
    }
}
