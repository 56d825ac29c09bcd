//! Lower layer of the hierarchy: short-horizon re-planning that tracks the
//! day plan and executes one step at a time against the environment.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::graph::{apply_plan_preference, build_action_graph, close_edges, GraphOptions};
use crate::milp::{
    add_terminal_cost, build_static_model, build_warm_start, extract_plan, lock_charged_visits, ChargePlan, FinalSoc,
    MilpError, ModelOptions, PlanModel, WindowSpec,
};
use crate::scenario::{discretize, Scenario, ScenarioError, VisitId};
use crate::simulation::{sample_run_noise, Command, Environment, NoiseParams, SimRun, StrategyKind, TICK_MINUTES};
use crate::solver::{MipOptions, MipResult, MipStatus};

pub const HORIZON_NODE_LIMIT: usize = 500;
/// Default terminal weight as a multiple of the on-peak consumption rate.
pub const TERMINAL_WEIGHT_FACTOR: f64 = 10.0;

#[derive(Debug, Error)]
pub enum HorizonError {
    #[error("invalid horizon configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Model(#[from] MilpError),
    #[error("no feasible horizon plan at t={clock} even with a soft minimum SOC")]
    Infeasible { clock: f64 },
}

#[derive(Debug, Clone)]
pub struct HorizonConfig {
    pub horizon_minutes: f64,
    pub delta_rh_minutes: f64,
    /// $/kWh of terminal SOC error; `TERMINAL_WEIGHT_FACTOR` times the
    /// on-peak consumption rate if absent.
    pub terminal_weight: Option<f64>,
    /// $ per edge kept from the previous plan; derived from the objective if absent.
    pub preference_bonus: Option<f64>,
    /// Soft minimum SOC penalty as a multiple of the terminal weight.
    pub soft_penalty_factor: f64,
    pub limits: MipOptions,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        Self {
            horizon_minutes: 60.0,
            delta_rh_minutes: 3.0,
            terminal_weight: None,
            preference_bonus: None,
            soft_penalty_factor: 100.0,
            limits: MipOptions {
                node_limit: Some(HORIZON_NODE_LIMIT),
                ..MipOptions::default()
            },
        }
    }
}

impl HorizonConfig {
    pub fn validate(&self) -> Result<(), HorizonError> {
        let step_ticks = self.delta_rh_minutes / TICK_MINUTES;
        if !(self.delta_rh_minutes > 0.0) || !(self.horizon_minutes >= self.delta_rh_minutes) {
            return Err(HorizonError::Config(format!(
                "need horizon >= step > 0, got {} and {}",
                self.horizon_minutes, self.delta_rh_minutes
            )));
        }
        if (step_ticks - step_ticks.round()).abs() > 1e-9 {
            return Err(HorizonError::Config(format!(
                "step {} is not a whole number of simulation ticks",
                self.delta_rh_minutes
            )));
        }
        if self.terminal_weight.is_some_and(|w| !(w >= 0.0)) || self.preference_bonus.is_some_and(|b| !(b >= 0.0)) {
            return Err(HorizonError::Config("weights must be non-negative".into()));
        }
        Ok(())
    }

    pub fn terminal_weight_for(&self, scenario: &Scenario) -> f64 {
        self.terminal_weight
            .unwrap_or(TERMINAL_WEIGHT_FACTOR * scenario.rates.c_onpeak)
    }

    /// Explicit bonus, or 1e-3 of the smallest positive objective coefficient.
    pub fn preference_bonus_for(&self, scenario: &Scenario) -> f64 {
        if let Some(b) = self.preference_bonus {
            return b;
        }
        let r = &scenario.rates;
        let smallest = [
            r.c_offpeak,
            r.c_onpeak,
            r.c_b,
            r.c_tou,
            self.terminal_weight_for(scenario),
        ]
        .into_iter()
        .filter(|c| *c > 0.0)
        .fold(f64::INFINITY, f64::min);
        if smallest.is_finite() {
            1e-3 * smallest
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionState {
    pub clock: f64,
    /// Per-bus SOC in kWh as reported by the environment.
    pub soc: Vec<f64>,
    pub charged_visits: BTreeSet<VisitId>,
    /// Realized energy (buses and load) per executed step since the day start.
    pub energy_history: Vec<f64>,
    pub previous_plan: Option<ChargePlan>,
    /// Charger type each bus stays plugged into across the step boundary.
    pub connected: Vec<Option<usize>>,
    /// Largest realized window average so far, overall and on-peak, kW.
    pub realized_peak: f64,
    pub realized_peak_tou: f64,
}

impl ExecutionState {
    pub fn new(scenario: &Scenario, soc: Vec<f64>) -> Self {
        Self {
            clock: scenario.day_start,
            connected: vec![None; soc.len()],
            soc,
            charged_visits: BTreeSet::new(),
            energy_history: Vec::new(),
            previous_plan: None,
            realized_peak: 0.0,
            realized_peak_tou: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HorizonPlan {
    pub plan: ChargePlan,
    /// The soft minimum-SOC fallback produced this plan.
    pub soft: bool,
    pub status: MipStatus,
    pub nodes: usize,
    /// First-step charger and power per bus.
    pub commands: Vec<Command>,
    /// Visit each bus is in during the first step.
    pub visits: Vec<Option<VisitId>>,
    /// The bus is still in the same visit during the second step.
    pub continues: Vec<bool>,
}

fn horizon_model(
    state: &ExecutionState,
    scenario: &Scenario,
    reference: &ChargePlan,
    cfg: &HorizonConfig,
    soft: bool,
) -> Result<PlanModel, HorizonError> {
    let delta = cfg.delta_rh_minutes;
    let t1 = (state.clock + cfg.horizon_minutes).min(scenario.day_end);
    let inst = discretize(scenario, delta, (state.clock, t1))?;
    let counts: Vec<u32> = scenario.charger_types.iter().map(|c| c.count).collect();
    let mut graph = build_action_graph(
        &inst,
        &counts,
        &GraphOptions {
            connected: state.connected.clone(),
        },
    );
    if let Some(prev) = &state.previous_plan {
        let close = close_edges(&graph, prev);
        graph = apply_plan_preference(&graph, &close, cfg.preference_bonus_for(scenario));
    }
    let window = WindowSpec::new(scenario.rates.demand_window_minutes, delta);
    let keep = window.m + 1;
    let hist = &state.energy_history;
    let weight = cfg.terminal_weight_for(scenario);
    let opts = ModelOptions {
        initial_soc: Some(state.soc.clone()),
        final_soc: FinalSoc::Free,
        soft_min_penalty: soft.then_some(cfg.soft_penalty_factor * weight),
        demand_history: hist[hist.len().saturating_sub(keep)..].to_vec(),
        demand_floor: (
            state.realized_peak.max(reference.peak_power),
            state.realized_peak_tou.max(reference.peak_power_tou),
        ),
        ..ModelOptions::default()
    };
    let model = build_static_model(&graph, &inst, scenario, &opts);
    let t_end = inst.t1();
    let target: Vec<f64> = (0..inst.num_buses).map(|j| reference.soc_at(j, t_end)).collect();
    let model = add_terminal_cost(model, &target, weight)?;
    let present: BTreeSet<VisitId> = state
        .charged_visits
        .iter()
        .filter(|id| model.graph.groups.iter().any(|g| g.visit == **id))
        .copied()
        .collect();
    Ok(lock_charged_visits(model, &present)?)
}

fn solve(model: &PlanModel, state: &ExecutionState, reference: &ChargePlan, cfg: &HorizonConfig) -> MipResult {
    let warm = build_warm_start(model, state.previous_plan.as_ref(), Some(reference));
    model.solve(&cfg.limits, warm.as_deref())
}

/// Plans `[clock, clock + horizon]` from the current state. Falls back to a
/// soft minimum SOC when the hard model has no solution.
pub fn plan_horizon(
    state: &ExecutionState,
    scenario: &Scenario,
    reference: &ChargePlan,
    cfg: &HorizonConfig,
) -> Result<HorizonPlan, HorizonError> {
    cfg.validate()?;
    let mut soft = false;
    let mut model = horizon_model(state, scenario, reference, cfg, false)?;
    let mut result = solve(&model, state, reference, cfg);
    if result.x.is_none() {
        soft = true;
        model = horizon_model(state, scenario, reference, cfg, true)?;
        result = solve(&model, state, reference, cfg);
    }
    let Some(x) = &result.x else {
        return Err(HorizonError::Infeasible { clock: state.clock });
    };
    let plan = extract_plan(&model, x)?;
    let inst = &model.instance;
    let nb = inst.num_buses;
    let dh = inst.delta_hours();
    let mut commands = vec![None; nb];
    for iv in plan.intervals.iter().filter(|iv| iv.start_step == 0) {
        commands[iv.bus] = Some((iv.charger, plan.gains[iv.bus][0][iv.charger] / dh));
    }
    let visits: Vec<Option<VisitId>> = (0..nb)
        .map(|j| inst.visit_at[j][0].map(|v| inst.visits[v].id))
        .collect();
    let continues = (0..nb)
        .map(|j| inst.num_steps > 1 && inst.visit_at[j][0].is_some() && inst.visit_at[j][1] == inst.visit_at[j][0])
        .collect();
    Ok(HorizonPlan {
        plan,
        soft,
        status: result.status,
        nodes: result.nodes,
        commands,
        visits,
        continues,
    })
}

/// Executes the first step of `plan` and folds the feedback into `state`.
/// `plan` may be absent after a failed solve; the step then rests.
pub fn step(
    state: &mut ExecutionState,
    plan: Option<&HorizonPlan>,
    env: &mut Environment,
    scenario: &Scenario,
    cfg: &HorizonConfig,
) {
    let nb = state.soc.len();
    let delta = cfg.delta_rh_minutes;
    let rest = vec![None; nb];
    let commands = plan.map_or(&rest, |p| &p.commands);
    let ticks = (delta / TICK_MINUTES).round() as usize;
    let mut energy = scenario.load_profile.energy_between(state.clock, state.clock + delta);
    for _ in 0..ticks {
        if env.done() {
            break;
        }
        env.advance(commands);
        energy += env.gain_log.last().map_or(0.0, |g| g.iter().sum::<f64>());
    }
    state.energy_history.push(energy);
    state.connected = vec![None; nb];
    if let Some(p) = plan {
        for j in 0..nb {
            if let Some((l, _)) = p.commands[j] {
                if let Some(v) = p.visits[j] {
                    state.charged_visits.insert(v);
                }
                if p.continues[j] {
                    state.connected[j] = Some(l);
                }
            }
        }
        state.previous_plan = Some(p.plan.clone());
    }
    state.soc = env.soc.clone();
    state.clock += delta;

    let window = WindowSpec::new(scenario.rates.demand_window_minutes, delta);
    let h = &state.energy_history;
    let n = h.len();
    let kwh: f64 = window
        .terms()
        .iter()
        .filter(|&&(off, _)| off <= n)
        .map(|&(off, w)| w * h[n - off])
        .sum();
    let p = kwh / window.hours;
    state.realized_peak = state.realized_peak.max(p);
    if scenario.rates.is_peak(state.clock - delta) {
        state.realized_peak_tou = state.realized_peak_tou.max(p);
    }
}

/// Closed-loop day under the hierarchical controller.
pub fn run_day(
    scenario: &Scenario,
    reference: &ChargePlan,
    cfg: &HorizonConfig,
    noise: &NoiseParams,
    seed: u64,
    initial_soc: Option<&[f64]>,
) -> Result<SimRun, HorizonError> {
    cfg.validate()?;
    let ticks = ((scenario.day_end - scenario.day_start) / TICK_MINUTES + 1e-9).floor() as usize;
    let mut env = Environment::new(scenario, sample_run_noise(noise, seed, scenario, ticks), initial_soc);
    let mut state = ExecutionState::new(scenario, env.soc.clone());
    let mut diagnostics = Vec::new();
    let mut soft_steps = 0;
    while !env.done() && state.clock + cfg.delta_rh_minutes <= scenario.day_end + 1e-9 {
        match plan_horizon(&state, scenario, reference, cfg) {
            Ok(hp) => {
                soft_steps += usize::from(hp.soft);
                step(&mut state, Some(&hp), &mut env, scenario, cfg);
            }
            Err(HorizonError::Infeasible { clock }) => {
                diagnostics.push(format!("t={clock}: no feasible horizon plan, resting"));
                step(&mut state, None, &mut env, scenario, cfg);
            }
            Err(e) => return Err(e),
        }
    }
    while !env.done() {
        env.advance(&vec![None; state.soc.len()]);
    }
    if soft_steps > 0 {
        diagnostics.push(format!("{soft_steps} steps used the soft minimum SOC"));
    }
    let failed = diagnostics.iter().any(|d| d.contains("no feasible"));
    Ok(SimRun::from_env(
        &env,
        scenario,
        StrategyKind::Hierarchical,
        seed,
        failed,
        diagnostics,
    ))
}

#[cfg(test)]
mod tests;
