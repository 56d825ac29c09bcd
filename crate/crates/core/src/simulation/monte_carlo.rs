//! Seeded Monte-Carlo ensembles and chained multi-day studies.
//!
//! Reductions sort their inputs before summing so every statistic is
//! independent of the order in which runs finish.

use std::fmt::Write as _;

use serde::Serialize;

use crate::milp::{plan_day, ChargePlan, DayPlanConfig};
use crate::scenario::Scenario;

use super::{simulate, SimConfig, SimError, SimRun, StrategyKind, TICK_MINUTES};

fn ordered_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

fn ordered_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    ordered_sum(v) / n
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub cost: f64,
    pub consumption: f64,
    pub baseline_demand: f64,
    pub tou_demand: f64,
    pub violation_ticks: usize,
    pub violated: bool,
    pub worst_shortfall_kwh: f64,
    pub failed: bool,
    pub final_soc_kwh: Vec<f64>,
}

impl RunSummary {
    fn of(run: &SimRun) -> Self {
        Self {
            seed: run.seed,
            cost: run.cost(),
            consumption: run.billing.consumption,
            baseline_demand: run.billing.baseline_demand,
            tou_demand: run.billing.tou_demand,
            violation_ticks: run.violation_ticks,
            violated: run.violated(),
            worst_shortfall_kwh: run.worst_shortfall_kwh,
            failed: run.failed,
            final_soc_kwh: run.final_soc().to_vec(),
        }
    }
}

/// Mean SOC fraction over runs and buses with a 3-sigma band of the
/// per-bus deviations from their cross-run mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub t: f64,
    pub mean_soc: f64,
    pub sigma3_lo: f64,
    pub sigma3_hi: f64,
}

impl TracePoint {
    pub fn sigma3(&self) -> f64 {
        0.5 * (self.sigma3_hi - self.sigma3_lo)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub strategy: StrategyKind,
    pub base_seed: u64,
    /// Runs in seed order.
    pub runs: Vec<RunSummary>,
    pub mean_cost: f64,
    pub violation_rate: f64,
    pub failure_rate: f64,
    pub trace: Vec<TracePoint>,
    /// Mean final SOC per bus, kWh.
    pub mean_final_soc: Vec<f64>,
}

impl McReport {
    pub fn terminal_sigma3(&self) -> f64 {
        self.trace.last().map_or(0.0, TracePoint::sigma3)
    }

    /// Per-run CSV.
    pub fn runs_csv(&self) -> String {
        let mut out = String::from(
            "seed,cost,consumption,baseline_demand,tou_demand,violation_ticks,worst_shortfall_kwh,failed\n",
        );
        for r in &self.runs {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{:.6},{},{:.6},{}",
                r.seed,
                r.cost,
                r.consumption,
                r.baseline_demand,
                r.tou_demand,
                r.violation_ticks,
                r.worst_shortfall_kwh,
                r.failed
            );
        }
        out
    }

    /// Trace CSV `t,mean_soc,sigma3_lo,sigma3_hi`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("t,mean_soc,sigma3_lo,sigma3_hi\n");
        for p in &self.trace {
            let _ = writeln!(out, "{},{:.9},{:.9},{:.9}", p.t, p.mean_soc, p.sigma3_lo, p.sigma3_hi);
        }
        out
    }

    pub fn summary_json(&self) -> String {
        let v = serde_json::json!({
            "strategy": self.strategy.name(),
            "base_seed": self.base_seed,
            "runs": self.runs.len(),
            "mean_cost": self.mean_cost,
            "violation_rate": self.violation_rate,
            "failure_rate": self.failure_rate,
            "terminal_sigma3": self.terminal_sigma3(),
            "mean_final_soc_kwh": self.mean_final_soc,
        });
        serde_json::to_string_pretty(&v).expect("plain json")
    }
}

fn run_seed(base: u64, i: usize) -> u64 {
    base.wrapping_add(i as u64)
}

fn run_all(
    scenario: &Scenario,
    strategy: StrategyKind,
    plan: Option<&ChargePlan>,
    cfg: &SimConfig,
    n_runs: usize,
    base_seed: u64,
    jobs: usize,
) -> Result<Vec<SimRun>, SimError> {
    let jobs = jobs.clamp(1, n_runs.max(1));
    if jobs == 1 {
        return (0..n_runs)
            .map(|i| simulate(scenario, strategy, plan, cfg, run_seed(base_seed, i)))
            .collect();
    }
    let mut slots: Vec<Option<Result<SimRun, SimError>>> = (0..n_runs).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|w| {
                scope.spawn(move || {
                    (w..n_runs)
                        .step_by(jobs)
                        .map(|i| (i, simulate(scenario, strategy, plan, cfg, run_seed(base_seed, i))))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("simulation worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|r| r.expect("every run finished")).collect()
}

fn reduce(strategy: StrategyKind, base_seed: u64, scenario: &Scenario, runs: &[SimRun]) -> McReport {
    let n = runs.len();
    let nb = scenario.buses.len();
    let cap: Vec<f64> = scenario.buses.iter().map(|b| b.capacity_kwh).collect();
    let ticks = runs.iter().map(|r| r.soc.len()).min().unwrap_or(0);
    let t0 = runs.first().map_or(scenario.day_start, |r| r.t0);
    let mut trace = Vec::with_capacity(ticks);
    for i in 0..ticks {
        let frac = |r: &SimRun, j: usize| r.soc[i][j] / cap[j];
        let bus_mean: Vec<f64> = (0..nb).map(|j| ordered_mean(runs.iter().map(|r| frac(r, j)))).collect();
        let mean = ordered_mean(bus_mean.iter().copied());
        let var = ordered_mean(
            runs.iter()
                .flat_map(|r| (0..nb).map(move |j| (r, j)))
                .map(|(r, j)| (frac(r, j) - bus_mean[j]).powi(2)),
        );
        let s3 = 3.0 * var.sqrt();
        trace.push(TracePoint {
            t: t0 + i as f64 * TICK_MINUTES,
            mean_soc: mean,
            sigma3_lo: mean - s3,
            sigma3_hi: mean + s3,
        });
    }
    let rate = |f: &dyn Fn(&SimRun) -> bool| {
        if n == 0 {
            0.0
        } else {
            runs.iter().filter(|r| f(r)).count() as f64 / n as f64
        }
    };
    McReport {
        strategy,
        base_seed,
        runs: runs.iter().map(RunSummary::of).collect(),
        mean_cost: ordered_mean(runs.iter().map(SimRun::cost)),
        violation_rate: rate(&|r| r.violated()),
        failure_rate: rate(&|r| r.failed),
        trace,
        mean_final_soc: (0..nb)
            .map(|j| ordered_mean(runs.iter().map(|r| r.final_soc()[j])))
            .collect(),
    }
}

/// `n_runs` independent days with seeds `base_seed, base_seed + 1, ...`,
/// spread over `jobs` threads.
pub fn monte_carlo(
    scenario: &Scenario,
    strategy: StrategyKind,
    plan: Option<&ChargePlan>,
    cfg: &SimConfig,
    n_runs: usize,
    base_seed: u64,
    jobs: usize,
) -> Result<McReport, SimError> {
    let runs = run_all(scenario, strategy, plan, cfg, n_runs, base_seed, jobs)?;
    Ok(reduce(strategy, base_seed, scenario, &runs))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DayOutcome {
    pub day: usize,
    pub initial_soc_kwh: Vec<f64>,
    /// Objective of the day plan, if one was needed and found.
    pub plan_objective: Option<f64>,
    /// Why the chain stopped on this day.
    pub failure: Option<String>,
    pub report: Option<McReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiDayReport {
    pub strategy: StrategyKind,
    pub days: Vec<DayOutcome>,
}

impl MultiDayReport {
    /// Largest per-bus change of mean SOC between the first and last
    /// completed day starts, kWh.
    pub fn drift(&self) -> f64 {
        let done: Vec<&DayOutcome> = self.days.iter().filter(|d| d.report.is_some()).collect();
        let (Some(first), Some(last)) = (done.first(), done.last()) else {
            return 0.0;
        };
        let end = &last.report.as_ref().expect("completed day").mean_final_soc;
        first
            .initial_soc_kwh
            .iter()
            .zip(end)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Chains days: each day starts from the previous day's mean final SOC and,
/// for plan-based strategies, gets a fresh day plan from that state.
#[allow(clippy::too_many_arguments)]
pub fn multi_day(
    scenario: &Scenario,
    strategy: StrategyKind,
    cfg: &SimConfig,
    day_cfg: &DayPlanConfig,
    n_days: usize,
    runs_per_day: usize,
    base_seed: u64,
    jobs: usize,
) -> Result<MultiDayReport, SimError> {
    let mut days = Vec::with_capacity(n_days);
    let mut soc: Vec<f64> = match &cfg.initial_soc {
        Some(v) => v.clone(),
        None => scenario.buses.iter().map(|b| b.initial_soc * b.capacity_kwh).collect(),
    };
    for d in 0..n_days {
        let mut outcome = DayOutcome {
            day: d,
            initial_soc_kwh: soc.clone(),
            plan_objective: None,
            failure: None,
            report: None,
        };
        let plan = if strategy.needs_plan() {
            let dc = DayPlanConfig {
                initial_soc: Some(soc.clone()),
                ..day_cfg.clone()
            };
            match plan_day(scenario, &dc) {
                Ok(p) => Some(p.plan),
                Err(e) => {
                    outcome.failure = Some(format!("day plan: {e}"));
                    days.push(outcome);
                    break;
                }
            }
        } else {
            None
        };
        outcome.plan_objective = plan.as_ref().map(|p| p.objective);
        let day_sim = SimConfig {
            initial_soc: Some(soc.clone()),
            ..cfg.clone()
        };
        let seed = base_seed.wrapping_add(d as u64 * 1_000_003);
        let report = monte_carlo(scenario, strategy, plan.as_ref(), &day_sim, runs_per_day, seed, jobs)?;
        soc = report.mean_final_soc.clone();
        outcome.report = Some(report);
        days.push(outcome);
    }
    Ok(MultiDayReport { strategy, days })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_random_scenario, GeneratorBounds};

    #[test]
    fn statistics_ignore_run_order() {
        let s = generate_random_scenario(2, 12, &GeneratorBounds::default()).unwrap();
        let mut runs = run_all(&s, StrategyKind::Qin, None, &SimConfig::default(), 5, 1, 1).unwrap();
        let a = reduce(StrategyKind::Qin, 1, &s, &runs);
        runs.reverse();
        let b = reduce(StrategyKind::Qin, 1, &s, &runs);
        assert_eq!(a.mean_cost.to_bits(), b.mean_cost.to_bits());
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.mean_final_soc, b.mean_final_soc);
    }

    #[test]
    fn ordered_sum_is_exact_on_reordering() {
        let v = [1e16, 1.0, -1e16, 3.5, 0.25];
        let mut w = v;
        w.reverse();
        assert_eq!(ordered_sum(v).to_bits(), ordered_sum(w).to_bits());
        assert_eq!(ordered_mean([]), 0.0);
    }
}
