//! Full-day planning on the nominal schedule.

use thiserror::Error;

use crate::graph::{build_action_graph, GraphOptions};
use crate::scenario::{discretize, Scenario, ScenarioError};
use crate::solver::{MipOptions, MipResult, MipStatus};

use super::{build_static_model, extract_plan, ChargePlan, FinalSoc, MilpError, ModelOptions, PlanModel};

pub const DAY_DELTA_MINUTES: f64 = 5.0;
pub const DAY_NODE_LIMIT: usize = 2000;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Model(#[from] MilpError),
    #[error("model is infeasible")]
    Infeasible,
    #[error("model is unbounded")]
    Unbounded,
    #[error("no feasible plan found within {nodes} nodes")]
    NoSolution { nodes: usize },
}

#[derive(Debug, Clone)]
pub struct DayPlanConfig {
    pub delta_minutes: f64,
    pub fixed_rate: bool,
    /// Starting SOC per bus in kWh; scenario values if absent.
    pub initial_soc: Option<Vec<f64>>,
    pub limits: MipOptions,
}

impl Default for DayPlanConfig {
    fn default() -> Self {
        Self {
            delta_minutes: DAY_DELTA_MINUTES,
            fixed_rate: false,
            initial_soc: None,
            limits: MipOptions {
                node_limit: Some(DAY_NODE_LIMIT),
                ..MipOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct DayPlan {
    pub model: PlanModel,
    pub result: MipResult,
    pub plan: ChargePlan,
}

/// Builds the static model for the whole day.
pub fn build_day_model(scenario: &Scenario, cfg: &DayPlanConfig) -> Result<PlanModel, PlanError> {
    let inst = discretize(scenario, cfg.delta_minutes, (scenario.day_start, scenario.day_end))?;
    let counts: Vec<u32> = scenario.charger_types.iter().map(|c| c.count).collect();
    let graph = build_action_graph(&inst, &counts, &GraphOptions::default());
    let opts = ModelOptions {
        fixed_rate: cfg.fixed_rate,
        initial_soc: cfg.initial_soc.clone(),
        final_soc: FinalSoc::Scenario,
        ..ModelOptions::default()
    };
    Ok(build_static_model(&graph, &inst, scenario, &opts))
}

/// Builds and solves the day model.
pub fn plan_day(scenario: &Scenario, cfg: &DayPlanConfig) -> Result<DayPlan, PlanError> {
    let model = build_day_model(scenario, cfg)?;
    let result = model.solve(&cfg.limits, None);
    let x = match (result.status, &result.x) {
        (MipStatus::Infeasible, _) => return Err(PlanError::Infeasible),
        (MipStatus::Unbounded, _) => return Err(PlanError::Unbounded),
        (_, Some(x)) => x.clone(),
        (_, None) => return Err(PlanError::NoSolution { nodes: result.nodes }),
    };
    let plan = extract_plan(&model, &x)?;
    Ok(DayPlan { model, result, plan })
}
