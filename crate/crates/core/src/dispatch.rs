//! Economic dispatch with quadratic costs, box limits and one balance
//! constraint.
//!
//! The solver bisects on the shared price λ. For a candidate λ every unit
//! produces its clamped best response `clamp((λ − c_i)/C_ii, p̲_i, p̄_i)`.
//! Total output is continuous, nondecreasing and piecewise linear in λ, so
//! bisection on the balance residual converges to the clearing price.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GeneratorParams, GridParams};
use crate::scenario::{DisturbanceSchedule, DisturbanceSignal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binding {
    Lower,
    Interior,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchSolution {
    /// Optimal regulation `g − p*`.
    pub r_opt: Vec<f64>,
    /// Optimal outputs `p* + r*`.
    pub outputs: Vec<f64>,
    /// Dual of the balance constraint, $/MWh.
    pub lambda_opt: f64,
    pub total_cost: f64,
    pub binding: Vec<Binding>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdTolerances {
    /// Allowed |Σg − demand| in MW.
    pub balance: f64,
    /// Bound-detection slack in MW.
    pub bound: f64,
}

impl Default for EdTolerances {
    fn default() -> Self {
        Self {
            balance: 1e-9,
            bound: 1e-9,
        }
    }
}

/// KKT acceptance threshold used by the checks.
pub const KKT_TOLERANCE: f64 = 1e-6;

fn capacity_range(fleet: &[GeneratorParams]) -> (f64, f64) {
    fleet
        .iter()
        .fold((0.0, 0.0), |(lo, hi), g| (lo + g.p_min, hi + g.p_max))
}

fn check_feasible(fleet: &[GeneratorParams], demand: f64, tol: f64) -> Result<(f64, f64)> {
    let (min_output, max_output) = capacity_range(fleet);
    if demand > max_output + tol || demand < min_output - tol || !demand.is_finite() {
        let shortfall = if demand > max_output {
            demand - max_output
        } else {
            min_output - demand
        };
        return Err(Error::InfeasibleDemand {
            demand,
            min_output,
            max_output,
            shortfall,
        });
    }
    Ok((min_output, max_output))
}

fn total_output(fleet: &[GeneratorParams], lambda: f64) -> f64 {
    fleet.iter().map(|g| g.best_response(lambda)).sum()
}

fn classify(g: &GeneratorParams, output: f64, tol: f64) -> Binding {
    if output <= g.p_min + tol {
        Binding::Lower
    } else if output >= g.p_max - tol {
        Binding::Upper
    } else {
        Binding::Interior
    }
}

fn solution_from_outputs(
    fleet: &[GeneratorParams],
    outputs: Vec<f64>,
    lambda: f64,
    tol: f64,
) -> DispatchSolution {
    DispatchSolution {
        r_opt: fleet.iter().zip(&outputs).map(|(g, &p)| p - g.p_star).collect(),
        total_cost: fleet.iter().zip(&outputs).map(|(g, &p)| g.cost(p)).sum(),
        binding: fleet
            .iter()
            .zip(&outputs)
            .map(|(g, &p)| classify(g, p, tol))
            .collect(),
        outputs,
        lambda_opt: lambda,
    }
}

/// Solve for total output `demand` (MW) by bisection on λ.
pub fn solve_for_demand(
    fleet: &[GeneratorParams],
    demand: f64,
    tol: EdTolerances,
) -> Result<DispatchSolution> {
    solve_in_bracket(fleet, demand, tol, price_bracket)
}

/// As [`solve_for_demand`] with a caller-chosen bisection bracket.
pub fn solve_in_bracket(
    fleet: &[GeneratorParams],
    demand: f64,
    tol: EdTolerances,
    bracket: impl Fn(&[GeneratorParams]) -> (f64, f64),
) -> Result<DispatchSolution> {
    let (min_output, max_output) = check_feasible(fleet, demand, tol.balance)?;
    let target = demand.clamp(min_output, max_output);

    // Every clearing price works at the all-minimum corner; report the
    // infimum, the lowest marginal cost at p_min.
    if target <= min_output + tol.balance {
        let lambda = fleet
            .iter()
            .map(|g| g.marginal(g.p_min))
            .fold(f64::INFINITY, f64::min);
        let outputs = fleet.iter().map(|g| g.p_min).collect();
        return Ok(solution_from_outputs(fleet, outputs, lambda, tol.bound));
    }

    let (mut lo, mut hi) = bracket(fleet);
    // total(lo) < target <= total(hi); shrink to the smallest clearing λ.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total_output(fleet, mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let outputs = fleet.iter().map(|g| g.best_response(hi)).collect();
    Ok(solution_from_outputs(fleet, outputs, hi, tol.bound))
}

/// Initial bisection interval `[min c − 1, max(c + C·p̄) + 1]`: every unit
/// is at its floor below it and at its cap above it.
pub fn price_bracket(fleet: &[GeneratorParams]) -> (f64, f64) {
    let lo = fleet.iter().map(|g| g.lin_cost).fold(f64::INFINITY, f64::min) - 1.0;
    let hi = fleet
        .iter()
        .map(|g| g.marginal(g.p_max))
        .fold(f64::NEG_INFINITY, f64::max)
        + 1.0;
    (lo, hi)
}

/// Real-time dispatch for demand deviation `delta`: total output `d + δ`.
pub fn solve_ed(fleet: &[GeneratorParams], grid: &GridParams, delta: f64) -> Result<DispatchSolution> {
    solve_for_demand(fleet, grid.demand + delta, EdTolerances::default())
}

/// Day-ahead clearing at nominal demand: returns `(p*, λ^da)`.
///
/// The fleet's own `p_star` values are ignored.
pub fn day_ahead(fleet: &[GeneratorParams], grid: &GridParams) -> Result<(Vec<f64>, f64)> {
    let sol = solve_for_demand(fleet, grid.demand, EdTolerances::default())?;
    Ok((sol.outputs, sol.lambda_opt))
}

/// Exhaustive grid search for fleets of at most three units.
///
/// All but the last unit walk a grid of step `resolution`; the last one
/// takes up the balance. Intended as a test oracle.
pub fn brute_force_ed(
    fleet: &[GeneratorParams],
    demand: f64,
    resolution: f64,
) -> Result<DispatchSolution> {
    if fleet.len() > 3 {
        return Err(Error::OracleTooLarge(fleet.len()));
    }
    assert!(resolution > 0.0, "resolution must be positive");
    let tol = EdTolerances::default();
    check_feasible(fleet, demand, tol.balance)?;

    let n = fleet.len();
    let (head, last) = fleet.split_at(n - 1);
    let last = &last[0];
    let grids: Vec<Vec<f64>> = head
        .iter()
        .map(|g| {
            let steps = ((g.p_max - g.p_min) / resolution).floor() as usize;
            let mut pts: Vec<f64> = (0..=steps).map(|k| g.p_min + k as f64 * resolution).collect();
            if pts.last().is_some_and(|&p| p < g.p_max) {
                pts.push(g.p_max);
            }
            pts
        })
        .collect();

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut idx = vec![0usize; head.len()];
    loop {
        let mut outputs: Vec<f64> = idx.iter().zip(&grids).map(|(&i, g)| g[i]).collect();
        let rest = demand - outputs.iter().sum::<f64>();
        if rest >= last.p_min - tol.balance && rest <= last.p_max + tol.balance {
            outputs.push(rest.clamp(last.p_min, last.p_max));
            let cost: f64 = fleet.iter().zip(&outputs).map(|(g, &p)| g.cost(p)).sum();
            if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                best = Some((cost, outputs));
            }
        }
        // odometer increment over the head grids
        let mut k = 0;
        while k < idx.len() {
            idx[k] += 1;
            if idx[k] < grids[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == idx.len() {
            break;
        }
    }

    let (_, outputs) = best.ok_or(Error::InfeasibleDemand {
        demand,
        min_output: capacity_range(fleet).0,
        max_output: capacity_range(fleet).1,
        shortfall: 0.0,
    })?;
    // λ from an interior unit, preferring the continuous balancing unit.
    let lambda = fleet
        .iter()
        .zip(&outputs)
        .rev()
        .find(|(g, &p)| classify(g, p, tol.bound) == Binding::Interior)
        .map(|(g, &p)| g.marginal(p))
        .unwrap_or_else(|| last.marginal(outputs[n - 1]));
    Ok(solution_from_outputs(fleet, outputs, lambda, tol.bound))
}

/// Stationarity and complementary-slackness violation plus balance error.
///
/// Units at their lower bound may have marginal cost above λ, units at
/// their upper bound below λ; only the wrong-signed slack counts.
pub fn kkt_residual(fleet: &[GeneratorParams], sol: &DispatchSolution, demand: f64) -> f64 {
    let tol = EdTolerances::default().bound;
    let mut stationarity: f64 = 0.0;
    let mut total = 0.0;
    for (g, &r) in fleet.iter().zip(&sol.r_opt) {
        let p = g.output(r);
        total += p;
        let slack = g.marginal(p) - sol.lambda_opt;
        let v = if g.p_max - g.p_min <= tol {
            0.0
        } else if p <= g.p_min + tol {
            (-slack).max(0.0)
        } else if p >= g.p_max - tol {
            slack.max(0.0)
        } else {
            slack.abs()
        };
        stationarity = stationarity.max(v);
    }
    stationarity + (total - demand).abs()
}

/// One re-solve of the offline baseline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineSegment {
    pub index: usize,
    pub start: f64,
    pub delta: f64,
    pub solution: DispatchSolution,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineSample {
    pub t: f64,
    pub lambda: f64,
    pub outputs: Vec<f64>,
}

/// Piecewise-constant offline pricing re-solved every `interval` seconds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OfflineBaseline {
    pub interval: f64,
    pub segments: Vec<BaselineSegment>,
    /// The baseline evaluated on the controller's sample grid.
    pub samples: Vec<BaselineSample>,
}

impl OfflineBaseline {
    pub fn segment_at(&self, t: f64) -> &BaselineSegment {
        let i = self
            .segments
            .partition_point(|s| s.start <= t + 1e-9 * self.interval);
        &self.segments[i.saturating_sub(1)]
    }

    pub fn price_at(&self, t: f64) -> f64 {
        self.segment_at(t).solution.lambda_opt
    }
}

/// Re-solve dispatch at `0, interval, 2·interval, …` using δ and the fleet
/// state at each interval start, holding the result until the next one.
#[allow(clippy::too_many_arguments)]
pub fn offline_baseline(
    fleet: &[GeneratorParams],
    grid: &GridParams,
    schedule: &DisturbanceSchedule,
    dt_physics: f64,
    dt_sample: f64,
    interval: f64,
    horizon: f64,
) -> Result<OfflineBaseline> {
    assert!(interval > 0.0, "interval must be positive");
    let mut signal = DisturbanceSignal::new(schedule, dt_physics);
    let n_segments = (horizon / interval + 1e-9).floor() as usize + 1;
    let mut segments = Vec::with_capacity(n_segments);
    for index in 0..n_segments {
        let start = index as f64 * interval;
        if start > horizon + 1e-9 * interval {
            break;
        }
        signal.advance_to(start);
        let delta = signal.delta();
        let tag = |e: Error| Error::BaselineInterval {
            interval: index,
            source: Box::new(e),
        };
        let fleet_now = schedule.fleet_at(fleet, start, dt_physics).map_err(tag)?;
        let solution = solve_ed(&fleet_now, grid, delta).map_err(tag)?;
        segments.push(BaselineSegment {
            index,
            start,
            delta,
            solution,
        });
    }

    let mut baseline = OfflineBaseline {
        interval,
        segments,
        samples: Vec::new(),
    };
    let per_sample = (dt_sample / dt_physics).round().max(1.0) as usize;
    let n_phys = (horizon / dt_physics + 1e-9).floor() as usize;
    baseline.samples = (0..=n_phys / per_sample)
        .map(|k| {
            let t = (k * per_sample) as f64 * dt_physics;
            let seg = baseline.segment_at(t);
            BaselineSample {
                t,
                lambda: seg.solution.lambda_opt,
                outputs: seg.solution.outputs.clone(),
            }
        })
        .collect();
    Ok(baseline)
}
