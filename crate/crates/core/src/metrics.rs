//! Profit accounting, cost-recovery checks and run summaries.

use serde::Serialize;

use crate::dispatch::{solve_ed, OfflineBaseline};
use crate::error::{Error, Result};
use crate::model::{GeneratorParams, GridParams};
use crate::scenario::{DisturbanceSchedule, DisturbanceSignal};
use crate::trajectory::Trajectory;

/// Profit below this, in $/h, counts as a violation.
pub const PROFIT_TOLERANCE: f64 = -1e-9;

/// |ω| band and hold time defining settling.
pub const SETTLING_BAND: f64 = 1e-3;
pub const SETTLING_HOLD: f64 = 5.0;

/// `λ·g − (½·C·g² + c·g)` in $/h.
pub fn profit(g: f64, price: f64, gen: &GeneratorParams) -> f64 {
    price * g - gen.cost(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceUsed {
    Online,
    Offline,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfitRecord {
    pub t: f64,
    pub output: Vec<f64>,
    pub revenue: Vec<f64>,
    pub cost: Vec<f64>,
    pub profit: Vec<f64>,
    pub price_used: PriceUsed,
}

/// Profit breakdown of the trajectory's dispatch at the given prices.
pub fn profit_series(traj: &Trajectory, prices: &[f64], price_used: PriceUsed) -> Vec<ProfitRecord> {
    traj.records
        .iter()
        .zip(prices)
        .map(|(rec, &price)| {
            let revenue: Vec<f64> = rec.g.iter().map(|g| price * g).collect();
            let cost: Vec<f64> = rec.g.iter().zip(&traj.fleet).map(|(&g, p)| p.cost(g)).collect();
            let profit = revenue.iter().zip(&cost).map(|(r, c)| r - c).collect();
            ProfitRecord {
                t: rec.t,
                output: rec.g.clone(),
                revenue,
                cost,
                profit,
                price_used,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub t: f64,
    /// Zero-based generator index.
    pub generator: usize,
    pub profit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostRecoveryReport {
    /// Per-generator minimum profit over the run; empty for an empty run.
    pub min_profit: Vec<f64>,
    pub first_violation: Option<Violation>,
    pub violations: usize,
}

impl CostRecoveryReport {
    pub fn recovered(&self) -> bool {
        self.first_violation.is_none()
    }

    pub fn overall_min(&self) -> f64 {
        self.min_profit.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn cost_recovery_report(traj: &Trajectory) -> CostRecoveryReport {
    let mut min_profit: Vec<f64> = Vec::new();
    let mut first_violation = None;
    let mut violations = 0;
    for rec in &traj.records {
        if min_profit.is_empty() {
            min_profit = vec![f64::INFINITY; rec.profit.len()];
        }
        for (i, &p) in rec.profit.iter().enumerate() {
            min_profit[i] = min_profit[i].min(p);
            if p < PROFIT_TOLERANCE {
                violations += 1;
                first_violation.get_or_insert(Violation {
                    t: rec.t,
                    generator: i,
                    profit: p,
                });
            }
        }
    }
    CostRecoveryReport {
        min_profit,
        first_violation,
        violations,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub t: f64,
    pub lambda_online: f64,
    pub lambda_offline: f64,
    pub profit_online: Vec<f64>,
    pub profit_offline: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    fn negative_fraction(&self, pick: impl Fn(&ComparisonRow) -> &[f64]) -> f64 {
        let (neg, total) = self.rows.iter().fold((0usize, 0usize), |(n, t), row| {
            let p = pick(row);
            (n + p.iter().filter(|&&x| x < PROFIT_TOLERANCE).count(), t + p.len())
        });
        if total == 0 {
            0.0
        } else {
            neg as f64 / total as f64
        }
    }

    /// Fraction of (sample, generator) pairs with negative online profit.
    pub fn online_negative_fraction(&self) -> f64 {
        self.negative_fraction(|r| &r.profit_online)
    }

    pub fn offline_negative_fraction(&self) -> f64 {
        self.negative_fraction(|r| &r.profit_offline)
    }
}

/// Price the trajectory's own dispatch at both the online and the offline
/// price.
pub fn compare_online_offline(traj: &Trajectory, baseline: &OfflineBaseline) -> Result<Comparison> {
    if traj.records.len() != baseline.samples.len() {
        return Err(Error::MismatchedTimebase(format!(
            "{} trajectory samples vs {} baseline samples",
            traj.records.len(),
            baseline.samples.len()
        )));
    }
    let tol = 1e-9 * traj.dt_sample.max(1.0);
    let rows = traj
        .records
        .iter()
        .zip(&baseline.samples)
        .map(|(rec, off)| {
            if (rec.t - off.t).abs() > tol {
                return Err(Error::MismatchedTimebase(format!(
                    "trajectory t = {} vs baseline t = {}",
                    rec.t, off.t
                )));
            }
            let profit_offline = rec
                .g
                .iter()
                .zip(&traj.fleet)
                .map(|(&g, p)| profit(g, off.lambda, p))
                .collect();
            Ok(ComparisonRow {
                t: rec.t,
                lambda_online: rec.lambda,
                lambda_offline: off.lambda,
                profit_online: rec.profit.clone(),
                profit_offline,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison { rows })
}

/// `‖g(t) − g*_ED(δ(t))‖∞` at each sample, with the fleet as it stands at
/// `t` (outages included).
pub fn tracking_error(
    traj: &Trajectory,
    fleet: &[GeneratorParams],
    grid: &GridParams,
    schedule: &DisturbanceSchedule,
) -> Result<Vec<f64>> {
    let mut signal = DisturbanceSignal::new(schedule, traj.dt_physics);
    traj.records
        .iter()
        .map(|rec| {
            signal.advance_to(rec.t);
            let tag = |e: Error| Error::AtTime {
                t: rec.t,
                source: Box::new(e),
            };
            let fleet_now = schedule.fleet_at(fleet, rec.t, traj.dt_physics).map_err(tag)?;
            let sol = solve_ed(&fleet_now, grid, signal.delta()).map_err(tag)?;
            Ok(rec
                .g
                .iter()
                .zip(&sol.outputs)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratorSummary {
    /// MWh over the run.
    pub energy_mwh: f64,
    /// $ over the run.
    pub cumulative_profit: f64,
    pub min_profit: f64,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub samples: usize,
    /// Start of the final stretch with |ω| < band, if it lasts at least the
    /// hold time.
    pub settling_time: Option<f64>,
    pub peak_abs_omega: f64,
    pub peak_omega_time: f64,
    pub final_omega: f64,
    pub final_lambda: f64,
    pub equilibrium_time: Option<f64>,
    pub generators: Vec<GeneratorSummary>,
    pub total_violations: usize,
}

/// Left-rectangle time integral of a series sampled every `dt` seconds,
/// converted to hours.
fn rectangle_hours(values: impl Iterator<Item = f64>, n: usize, dt: f64) -> f64 {
    values.take(n.saturating_sub(1)).sum::<f64>() * dt / 3600.0
}

pub fn settling_time(traj: &Trajectory) -> Option<f64> {
    let last = traj.records.last()?;
    let start = traj
        .records
        .iter()
        .rposition(|r| r.omega.abs() >= SETTLING_BAND)
        .map_or(0, |i| i + 1);
    let start_t = traj.records.get(start)?.t;
    (last.t - start_t >= SETTLING_HOLD - 1e-9 || start == 0).then_some(start_t)
}

pub fn summarize(traj: &Trajectory) -> Summary {
    let n = traj.records.len();
    let report = cost_recovery_report(traj);
    let (peak_abs_omega, peak_omega_time) = traj
        .records
        .iter()
        .fold((0.0_f64, 0.0), |(p, pt), r| if r.omega.abs() > p { (r.omega.abs(), r.t) } else { (p, pt) });

    let mut violations = vec![0usize; traj.n_generators()];
    for rec in &traj.records {
        for (i, &p) in rec.profit.iter().enumerate() {
            if p < PROFIT_TOLERANCE {
                violations[i] += 1;
            }
        }
    }
    let generators = (0..traj.n_generators())
        .map(|i| GeneratorSummary {
            energy_mwh: rectangle_hours(traj.records.iter().map(|r| r.g[i]), n, traj.dt_sample),
            cumulative_profit: rectangle_hours(traj.records.iter().map(|r| r.profit[i]), n, traj.dt_sample),
            min_profit: report.min_profit.get(i).copied().unwrap_or(0.0),
            violations: violations[i],
        })
        .collect();

    Summary {
        samples: n,
        settling_time: settling_time(traj),
        peak_abs_omega,
        peak_omega_time,
        final_omega: traj.last().map_or(0.0, |r| r.omega),
        final_lambda: traj.last().map_or(traj.lambda_da, |r| r.lambda),
        equilibrium_time: traj.equilibrium_time,
        generators,
        total_violations: report.violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::closed_loop;
    use crate::dispatch::offline_baseline;
    use crate::scenario::{reference_grid, reference_scenario_a};

    fn gen() -> GeneratorParams {
        GeneratorParams::new(0.01, 27.4, 0.0, 50.0)
    }

    #[test]
    fn profit_examples() {
        assert_eq!(profit(0.0, 27.6, &gen()), 0.0);
        assert!((profit(20.0, 27.6, &gen()) - 2.0).abs() < 1e-9);
        let g = 35.0;
        let p = profit(g, gen().marginal(g), &gen());
        assert!((p - 0.5 * 0.01 * g * g).abs() < 1e-9);
    }

    fn scenario_a_run() -> (Trajectory, DisturbanceSchedule) {
        let (cfg, sched) = reference_scenario_a();
        (closed_loop(&cfg, &sched).unwrap(), sched)
    }

    #[test]
    fn scenario_a_recovers_costs() {
        let (traj, _) = scenario_a_run();
        let report = cost_recovery_report(&traj);
        assert!(report.recovered(), "{:?}", report.first_violation);
        assert_eq!(report.min_profit.len(), 5);
    }

    #[test]
    fn oversized_step_is_flagged() {
        let (mut cfg, sched) = reference_scenario_a();
        cfg.generators[0].eta *= 10.0;
        // the mechanism must flag whatever falls below tolerance
        let traj = closed_loop(&cfg, &sched).unwrap();
        let report = cost_recovery_report(&traj);
        let below = traj
            .records
            .iter()
            .flat_map(|r| r.profit.iter())
            .filter(|&&p| p < PROFIT_TOLERANCE)
            .count();
        assert_eq!(report.violations, below);
        assert_eq!(report.recovered(), below == 0);
    }

    #[test]
    fn empty_report() {
        let (mut traj, _) = scenario_a_run();
        traj.records.clear();
        let report = cost_recovery_report(&traj);
        assert!(report.min_profit.is_empty());
        assert!(report.recovered());
    }

    #[test]
    fn rest_comparison_is_identical() {
        let (mut cfg, _) = reference_scenario_a();
        cfg.horizon = 120.0;
        let sched = DisturbanceSchedule::default();
        let traj = closed_loop(&cfg, &sched).unwrap();
        let b = offline_baseline(&cfg.generators, &cfg.grid, &sched, 0.05, 0.25, 60.0, 120.0).unwrap();
        let cmp = compare_online_offline(&traj, &b).unwrap();
        for row in &cmp.rows {
            assert_eq!(row.lambda_online, row.lambda_offline);
            assert_eq!(row.profit_online, row.profit_offline);
        }
    }

    #[test]
    fn step_comparison_offline_is_flat_inside_windows() {
        let (cfg, mut sched) = reference_scenario_a();
        sched.outages.clear();
        let traj = closed_loop(&cfg, &sched).unwrap();
        let b = offline_baseline(&cfg.generators, &cfg.grid, &sched, 0.05, 0.25, 300.0, 600.0).unwrap();
        let cmp = compare_online_offline(&traj, &b).unwrap();
        let window = |lo: f64, hi: f64| cmp.rows.iter().filter(move |r| r.t >= lo && r.t < hi);
        let first = window(0.0, 300.0).next().unwrap().lambda_offline;
        assert!(window(0.0, 300.0).all(|r| r.lambda_offline == first));
        let online: Vec<f64> = window(0.0, 300.0).map(|r| r.lambda_online).collect();
        assert!(online.windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let (traj, sched) = scenario_a_run();
        let b = offline_baseline(&traj.fleet, &traj.grid, &sched, 0.05, 0.5, 300.0, 600.0).unwrap();
        assert!(matches!(
            compare_online_offline(&traj, &b),
            Err(Error::MismatchedTimebase(_))
        ));
    }

    #[test]
    fn tracking_error_settles() {
        let (traj, sched) = scenario_a_run();
        let err = tracking_error(&traj, &traj.fleet, &reference_grid(), &sched).unwrap();
        assert_eq!(err[0], 0.0);
        let at = |t: f64| err[(t / 0.25).round() as usize];
        assert!(at(299.0) <= 1e-3, "{}", at(299.0));
        assert!(at(599.0) <= 1e-3, "{}", at(599.0));
        assert!(at(30.25) > 1.0);
    }

    #[test]
    fn rest_tracking_error_is_zero() {
        let (mut cfg, _) = reference_scenario_a();
        cfg.horizon = 30.0;
        let sched = DisturbanceSchedule::default();
        let traj = closed_loop(&cfg, &sched).unwrap();
        let err = tracking_error(&traj, &cfg.generators, &cfg.grid, &sched).unwrap();
        assert!(err.iter().all(|&e| e < 1e-9));
    }

    #[test]
    fn rest_summary() {
        let (mut cfg, _) = reference_scenario_a();
        cfg.horizon = 30.0;
        let traj = closed_loop(&cfg, &DisturbanceSchedule::default()).unwrap();
        let s = summarize(&traj);
        assert_eq!(s.settling_time, Some(0.0));
        assert_eq!(s.peak_abs_omega, 0.0);
    }

    #[test]
    fn cumulative_profit_matches_trapezoid() {
        let (traj, _) = scenario_a_run();
        let s = summarize(&traj);
        for (i, gs) in s.generators.iter().enumerate() {
            let trap: f64 = traj
                .records
                .windows(2)
                .map(|w| 0.5 * (w[0].profit[i] + w[1].profit[i]) * traj.dt_sample)
                .sum::<f64>()
                / 3600.0;
            assert!(
                (gs.cumulative_profit - trap).abs() <= 0.01 * trap.abs(),
                "{} vs {trap}",
                gs.cumulative_profit
            );
            assert!(gs.energy_mwh.is_finite());
        }
        assert!(s.settling_time.is_some());
        assert!(s.final_lambda.is_finite());
    }
}
