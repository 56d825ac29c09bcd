//! Truth models, strategies, billing and Monte-Carlo evaluation.

mod billing;
mod env;
mod monte_carlo;
mod noise;
mod strategies;

pub use billing::{aggregate, billing_oracle, Billing};
pub use env::{Command, Environment, Presence, TICK_MINUTES};
pub use monte_carlo::{monte_carlo, multi_day, DayOutcome, McReport, MultiDayReport, RunSummary, TracePoint};
pub use noise::{perturb_arrivals, sample_run_noise, truth_charge_step, truth_discharge_step, NoiseParams, RunNoise};
pub use strategies::{OpenLoopController, QinController};

use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::milp::{ChargeInterval, ChargePlan};
use crate::receding_horizon::{run_day, HorizonConfig, HorizonError};
use crate::scenario::Scenario;

/// Grid on which realized energy is billed.
pub const BILLING_DELTA_MINUTES: f64 = 5.0;
pub const QIN_THRESHOLD: f64 = 0.7;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("strategy {0} needs a day plan")]
    MissingPlan(StrategyKind),
    #[error("invalid noise parameters")]
    Noise,
    #[error(transparent)]
    Horizon(#[from] HorizonError),
    #[error("day plan failed: {0}")]
    Plan(#[from] crate::milp::PlanError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum StrategyKind {
    Qin,
    OpenLoop,
    Hierarchical,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 3] = [StrategyKind::Qin, StrategyKind::OpenLoop, StrategyKind::Hierarchical];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Qin => "qin",
            StrategyKind::OpenLoop => "open-loop",
            StrategyKind::Hierarchical => "hierarchical",
        }
    }

    pub fn needs_plan(self) -> bool {
        self != StrategyKind::Qin
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown strategy {s:?}, expected qin, open-loop or hierarchical"))
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub noise: NoiseParams,
    pub qin_threshold: f64,
    pub horizon: HorizonConfig,
    /// Starting SOC per bus in kWh; scenario values if absent.
    pub initial_soc: Option<Vec<f64>>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            noise: NoiseParams::published(),
            qin_threshold: QIN_THRESHOLD,
            horizon: HorizonConfig::default(),
            initial_soc: None,
        }
    }
}

/// Outcome of one simulated day. Costs come from the billing oracle only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimRun {
    pub seed: u64,
    pub strategy: StrategyKind,
    pub t0: f64,
    /// SOC in kWh at each tick boundary, `soc[tick][bus]`.
    pub soc: Vec<Vec<f64>>,
    pub gains: Vec<Vec<f64>>,
    pub chargers: Vec<Vec<Option<usize>>>,
    /// Realized charging, merged per bus and charger on the tick grid.
    pub intervals: Vec<ChargeInterval>,
    pub billing: Billing,
    /// Bus-ticks spent below the minimum SOC.
    pub violation_ticks: usize,
    pub violated_buses: usize,
    pub worst_shortfall_kwh: f64,
    pub failed: bool,
    pub diagnostics: Vec<String>,
}

impl SimRun {
    pub(crate) fn from_env(
        env: &Environment,
        scenario: &Scenario,
        strategy: StrategyKind,
        seed: u64,
        failed: bool,
        diagnostics: Vec<String>,
    ) -> Self {
        let nb = env.num_buses();
        let mut intervals = Vec::new();
        for j in 0..nb {
            let mut i = 0;
            while i < env.charger_log.len() {
                let Some(l) = env.charger_log[i][j] else {
                    i += 1;
                    continue;
                };
                let start = i;
                let mut kwh = 0.0;
                while i < env.charger_log.len() && env.charger_log[i][j] == Some(l) {
                    kwh += env.gain_log[i][j];
                    i += 1;
                }
                intervals.push(ChargeInterval {
                    bus: j,
                    charger: l,
                    start_step: start,
                    end_step: i,
                    start_min: env.t0 + start as f64 * TICK_MINUTES,
                    end_min: env.t0 + i as f64 * TICK_MINUTES,
                    kwh,
                });
            }
        }
        intervals.sort_by(|a, b| a.start_min.total_cmp(&b.start_min).then(a.bus.cmp(&b.bus)));

        let per_step = (BILLING_DELTA_MINUTES / TICK_MINUTES).round() as usize;
        let bus_energy = aggregate(&env.tick_energy(), per_step);
        let load: Vec<f64> = (0..bus_energy.len())
            .map(|k| {
                let a = env.t0 + k as f64 * BILLING_DELTA_MINUTES;
                scenario.load_profile.energy_between(a, a + BILLING_DELTA_MINUTES)
            })
            .collect();
        let billing = billing_oracle(&bus_energy, &load, env.t0, BILLING_DELTA_MINUTES, &scenario.rates);
        Self {
            seed,
            strategy,
            t0: env.t0,
            soc: env.soc_log.clone(),
            gains: env.gain_log.clone(),
            chargers: env.charger_log.clone(),
            intervals,
            billing,
            violation_ticks: env.below_min.iter().sum(),
            violated_buses: env.below_min.iter().filter(|&&n| n > 0).count(),
            worst_shortfall_kwh: env.worst_shortfall,
            failed,
            diagnostics,
        }
    }

    pub fn cost(&self) -> f64 {
        self.billing.total()
    }

    pub fn violated(&self) -> bool {
        self.violation_ticks > 0
    }

    pub fn final_soc(&self) -> &[f64] {
        self.soc.last().map_or(&[], |v| v.as_slice())
    }

    /// Trajectory CSV `t_min,bus,soc_kwh,charging_type,gain_kwh`; each row
    /// closes one tick.
    pub fn trajectory_csv(&self, bus_ids: &[String], charger_ids: &[String]) -> String {
        let mut out = String::from("t_min,bus,soc_kwh,charging_type,gain_kwh\n");
        for (i, row) in self.soc.iter().enumerate() {
            let t = self.t0 + i as f64 * TICK_MINUTES;
            for (j, s) in row.iter().enumerate() {
                let (ty, g) = match i.checked_sub(1) {
                    Some(p) => (
                        self.chargers[p][j].map_or("", |l| charger_ids[l].as_str()),
                        self.gains[p][j],
                    ),
                    None => ("", 0.0),
                };
                let _ = writeln!(out, "{t},{},{s:.6},{ty},{g:.6}", bus_ids[j]);
            }
        }
        out
    }

    pub fn summary_json(&self) -> String {
        let v = serde_json::json!({
            "seed": self.seed,
            "strategy": self.strategy.name(),
            "cost": self.cost(),
            "consumption": self.billing.consumption,
            "baseline_demand": self.billing.baseline_demand,
            "tou_demand": self.billing.tou_demand,
            "peak_kw": self.billing.peak_kw,
            "peak_tou_kw": self.billing.peak_tou_kw,
            "charge_events": self.intervals.len(),
            "violation_ticks": self.violation_ticks,
            "violated_buses": self.violated_buses,
            "worst_shortfall_kwh": self.worst_shortfall_kwh,
            "final_soc_kwh": self.final_soc(),
            "failed": self.failed,
            "diagnostics": self.diagnostics,
        });
        serde_json::to_string_pretty(&v).expect("plain json")
    }
}

fn num_ticks(scenario: &Scenario) -> usize {
    ((scenario.day_end - scenario.day_start) / TICK_MINUTES + 1e-9).floor() as usize
}

/// Simulates one day of `strategy` with noise drawn from `seed`.
pub fn simulate(
    scenario: &Scenario,
    strategy: StrategyKind,
    plan: Option<&ChargePlan>,
    cfg: &SimConfig,
    seed: u64,
) -> Result<SimRun, SimError> {
    if !cfg.noise.is_valid() {
        return Err(SimError::Noise);
    }
    let initial = cfg.initial_soc.as_deref();
    if strategy == StrategyKind::Hierarchical {
        let plan = plan.ok_or(SimError::MissingPlan(strategy))?;
        return Ok(run_day(scenario, plan, &cfg.horizon, &cfg.noise, seed, initial)?);
    }
    let noise = sample_run_noise(&cfg.noise, seed, scenario, num_ticks(scenario));
    let mut env = Environment::new(scenario, noise, initial);
    match strategy {
        StrategyKind::Qin => {
            let mut c = QinController::new(scenario.buses.len(), cfg.qin_threshold);
            while !env.done() {
                let cmd = c.commands(&env);
                env.advance(&cmd);
            }
        }
        _ => {
            let plan = plan.ok_or(SimError::MissingPlan(strategy))?;
            let mut c = OpenLoopController::new(plan);
            while !env.done() {
                let cmd = c.commands(&env);
                env.advance(&cmd);
            }
        }
    }
    Ok(SimRun::from_env(&env, scenario, strategy, seed, false, Vec::new()))
}
