//! Charge-scheduling MILP: assembly from an action graph, receding-horizon
//! modifications, LP-format export and plan extraction.

mod day;
mod lp_format;
mod plan;
mod warm;

pub use day::{build_day_model, plan_day, DayPlan, DayPlanConfig, PlanError, DAY_DELTA_MINUTES, DAY_NODE_LIMIT};
pub use lp_format::{export_lp, parse_lp, LpDocument};
pub use plan::{extract_plan, validate_solution, ChargeInterval, ChargePlan, CostBreakdown, ResidualReport};
pub use warm::build_warm_start;

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::charge_model::{discretize_params, params_for, DiscreteChargeParams};
use crate::graph::ActionGraph;
use crate::scenario::{DiscreteInstance, Scenario, VisitId};
use crate::solver::{solve_mip, LpProblem, MipOptions, MipProblem, MipResult};

#[derive(Debug, Error, PartialEq)]
pub enum MilpError {
    #[error("reference has {got} entries, expected {expected}")]
    ReferenceLength { expected: usize, got: usize },
    #[error("model has no terminal step")]
    NoTerminalStep,
    #[error("unknown visit (bus {0}, block {1})")]
    UnknownVisit(usize, usize),
    #[error("assignment violates {family} by {residual:e}")]
    Infeasible { family: String, residual: f64 },
    #[error("assignment has {got} values, model has {expected} variables")]
    AssignmentLength { expected: usize, got: usize },
    #[error("lp format, line {line}: {msg}")]
    LpParse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarRole {
    Flow { edge: usize },
    Soc { bus: usize, k: usize },
    Gain { bus: usize, k: usize, charger: usize },
    Energy { k: usize },
    Power { k: usize },
    PeakPower,
    PeakPowerTou,
    TerminalError { bus: usize },
    SocSlack { bus: usize },
}

impl VarRole {
    pub fn name(&self) -> String {
        match *self {
            VarRole::Flow { edge } => format!("x_{edge}"),
            VarRole::Soc { bus, k } => format!("s_{bus}_{k}"),
            VarRole::Gain { bus, k, charger } => format!("g_{bus}_{k}_{charger}"),
            VarRole::Energy { k } => format!("e_{k}"),
            VarRole::Power { k } => format!("p_{k}"),
            VarRole::PeakPower => "pmax".into(),
            VarRole::PeakPowerTou => "pmax_tou".into(),
            VarRole::TerminalError { bus } => format!("serr_{bus}"),
            VarRole::SocSlack { bus } => format!("z_{bus}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub integer: bool,
    pub cost: f64,
    pub role: VarRole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RowFamily {
    Flow,
    Group,
    Dynamics,
    GainProfile,
    GainSelect,
    GainFixed,
    Energy,
    Window,
    PeakPower,
    PeakPowerTou,
    Terminal,
    SocFloor,
}

impl RowFamily {
    pub fn name(self) -> &'static str {
        match self {
            RowFamily::Flow => "flow",
            RowFamily::Group => "group",
            RowFamily::Dynamics => "dynamics",
            RowFamily::GainProfile => "gain",
            RowFamily::GainSelect => "gain_select",
            RowFamily::GainFixed => "gain_fixed",
            RowFamily::Energy => "energy",
            RowFamily::Window => "window",
            RowFamily::PeakPower => "peak",
            RowFamily::PeakPowerTou => "peak_tou",
            RowFamily::Terminal => "terminal",
            RowFamily::SocFloor => "soc_floor",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
    pub family: RowFamily,
}

/// Variables, rows and integrality marks of a minimization problem.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MilpModel {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    index: HashMap<String, usize>,
}

impl MilpModel {
    pub fn add_var(&mut self, role: VarRole, lower: f64, upper: f64, integer: bool, cost: f64) -> usize {
        let name = role.name();
        let i = self.variables.len();
        let prev = self.index.insert(name.clone(), i);
        debug_assert!(prev.is_none(), "duplicate variable {name}");
        self.variables.push(Variable {
            name,
            lower,
            upper,
            integer,
            cost,
            role,
        });
        i
    }

    pub fn add_constraint(
        &mut self,
        name: String,
        family: RowFamily,
        coeffs: Vec<(usize, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> usize {
        self.constraints.push(Constraint {
            name,
            coeffs,
            relation,
            rhs,
            family,
        });
        self.constraints.len() - 1
    }

    pub fn var(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.variables.iter().zip(x).map(|(v, xi)| v.cost * xi).sum()
    }

    pub fn to_mip(&self) -> MipProblem {
        let mut lp = LpProblem::default();
        for v in &self.variables {
            lp.add_col(v.cost, v.lower, v.upper);
        }
        for c in &self.constraints {
            let (lo, hi) = match c.relation {
                Relation::Le => (f64::NEG_INFINITY, c.rhs),
                Relation::Eq => (c.rhs, c.rhs),
                Relation::Ge => (c.rhs, f64::INFINITY),
            };
            lp.add_row(c.coeffs.clone(), lo, hi);
        }
        MipProblem {
            lp,
            integer: self.variables.iter().map(|v| v.integer).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FinalSoc {
    /// Each bus ends at its scenario `final_soc`.
    Scenario,
    Free,
    /// Per-bus end-of-window level in kWh.
    Kwh(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelOptions {
    /// Replace the profile bounds by `g = b_cc * x`; the final SOC becomes a
    /// lower bound.
    pub fixed_rate: bool,
    /// Drop the CV bound so only the CC rate limits gains.
    pub linear_profile: bool,
    /// Fraction of capacity added to the minimum and removed from the maximum SOC.
    pub soc_buffer: f64,
    /// Per-bus SOC at the window start in kWh; scenario values if absent.
    pub initial_soc: Option<Vec<f64>>,
    pub final_soc: FinalSoc,
    /// Penalty per kWh of a per-bus slack below the minimum SOC.
    pub soft_min_penalty: Option<f64>,
    /// Energy per step before the window start, oldest first, on the same grid.
    pub demand_history: Vec<f64>,
    /// Lower bounds on the peak and on-peak average power in kW.
    pub demand_floor: (f64, f64),
    /// Use `b_cc` instead of the capacity in the charger selection rows.
    pub tight_big_m: bool,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            fixed_rate: false,
            linear_profile: false,
            soc_buffer: 0.05,
            initial_soc: None,
            final_soc: FinalSoc::Scenario,
            soft_min_penalty: None,
            demand_history: Vec::new(),
            demand_floor: (0.0, 0.0),
            tight_big_m: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    /// `soc[j][k]` for `k = 0..=K`.
    pub soc: Vec<Vec<usize>>,
    pub gain: Vec<Vec<Vec<Option<usize>>>>,
    pub energy: Vec<usize>,
    /// Window average ending at time point `k + 1`.
    pub power: Vec<usize>,
    pub peak: usize,
    pub peak_tou: usize,
    pub terminal_error: Vec<Option<usize>>,
    pub soc_slack: Vec<Option<usize>>,
}

/// Demand-window geometry: `m` whole steps plus a fractional older step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    pub m: usize,
    pub frac: f64,
    pub hours: f64,
}

impl WindowSpec {
    pub fn new(window_minutes: f64, delta_minutes: f64) -> Self {
        let ratio = window_minutes / delta_minutes;
        let m = (ratio + 1e-9).floor() as usize;
        let mut frac = (window_minutes - m as f64 * delta_minutes) / delta_minutes;
        if frac < 1e-9 {
            frac = 0.0;
        }
        Self {
            m,
            frac,
            hours: window_minutes / 60.0,
        }
    }

    /// `(step offset back from the window end, weight)` pairs; offset 1 is the
    /// step just before the end point.
    pub fn terms(&self) -> Vec<(usize, f64)> {
        let mut t: Vec<(usize, f64)> = (1..=self.m).map(|o| (o, 1.0)).collect();
        if self.frac > 0.0 {
            t.push((self.m + 1, self.frac));
        }
        t
    }
}

/// A built charge-scheduling model together with the data it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanModel {
    pub milp: MilpModel,
    pub graph: ActionGraph,
    pub instance: DiscreteInstance,
    pub layout: Layout,
    /// Discrete charge parameters per bus and charger type.
    pub charge: Vec<Vec<DiscreteChargeParams>>,
    pub capacity_kwh: Vec<f64>,
    /// Buffered `(min, max)` SOC in kWh per bus.
    pub soc_bounds: Vec<(f64, f64)>,
    pub window: WindowSpec,
    pub c_b: f64,
    pub c_tou: f64,
    pub options: ModelOptions,
}

impl PlanModel {
    pub fn num_steps(&self) -> usize {
        self.instance.num_steps
    }

    /// Energy of step `k` relative to the window start; negative steps come
    /// from the demand history.
    pub(crate) fn history_energy(&self, k: isize) -> Option<f64> {
        let h = &self.options.demand_history;
        let i = h.len() as isize + k;
        (k < 0 && i >= 0).then(|| h[i as usize])
    }

    pub fn solve(&self, options: &MipOptions, warm: Option<&[f64]>) -> MipResult {
        solve_mip(&self.milp.to_mip(), options, warm)
    }
}

pub fn build_static_model(
    graph: &ActionGraph,
    inst: &DiscreteInstance,
    scenario: &Scenario,
    opts: &ModelOptions,
) -> PlanModel {
    let nb = inst.num_buses;
    let kk = inst.num_steps;
    let nl = inst.num_chargers;
    let dh = inst.delta_hours();
    let mut m = MilpModel::default();

    for (i, e) in graph.edges() {
        m.add_var(
            VarRole::Flow { edge: i },
            0.0,
            e.capacity as f64,
            true,
            graph.edge_costs[i],
        );
    }

    let charge: Vec<Vec<DiscreteChargeParams>> = scenario
        .buses
        .iter()
        .map(|b| {
            scenario
                .charger_types
                .iter()
                .map(|c| discretize_params(&params_for(c, b), dh))
                .collect()
        })
        .collect();
    let capacity: Vec<f64> = scenario.buses.iter().map(|b| b.capacity_kwh).collect();
    let soc_bounds: Vec<(f64, f64)> = scenario
        .buses
        .iter()
        .map(|b| {
            (
                (b.min_soc + opts.soc_buffer) * b.capacity_kwh,
                (b.max_soc - opts.soc_buffer) * b.capacity_kwh,
            )
        })
        .collect();
    let s0: Vec<f64> = match &opts.initial_soc {
        Some(v) => v.clone(),
        None => scenario.buses.iter().map(|b| b.initial_soc * b.capacity_kwh).collect(),
    };
    let s_final: Vec<Option<f64>> = match &opts.final_soc {
        FinalSoc::Scenario => scenario
            .buses
            .iter()
            .map(|b| Some(b.final_soc * b.capacity_kwh))
            .collect(),
        FinalSoc::Free => vec![None; nb],
        FinalSoc::Kwh(v) => v.iter().map(|x| Some(*x)).collect(),
    };

    let soft = opts.soft_min_penalty;
    let mut soc = vec![Vec::with_capacity(kk + 1); nb];
    let mut gain = vec![vec![vec![None; nl]; kk]; nb];
    for j in 0..nb {
        let (lo, hi) = soc_bounds[j];
        let hi = hi.max(s0[j]);
        let lo_bound = if soft.is_some() { 0.0 } else { lo };
        for k in 0..=kk {
            let (a, b) = if k == 0 {
                (s0[j], s0[j])
            } else if let (true, Some(f)) = (k == kk, s_final[j]) {
                // Whole-step gains rarely land exactly on the target.
                if opts.fixed_rate {
                    (f, hi.max(f))
                } else {
                    (f, f)
                }
            } else {
                (lo_bound, hi)
            };
            soc[j].push(m.add_var(VarRole::Soc { bus: j, k }, a, b, false, 0.0));
        }
    }
    for j in 0..nb {
        for k in 0..kk {
            for l in 0..nl {
                if inst.gamma[j][k][l] {
                    let ub = if opts.fixed_rate {
                        f64::INFINITY
                    } else {
                        charge[j][l].b_bar_cc
                    };
                    let rate = inst.consumption_rate[k];
                    gain[j][k][l] = Some(m.add_var(VarRole::Gain { bus: j, k, charger: l }, 0.0, ub, false, rate));
                }
            }
        }
    }
    let energy: Vec<usize> = (0..kk)
        .map(|k| m.add_var(VarRole::Energy { k }, f64::NEG_INFINITY, f64::INFINITY, false, 0.0))
        .collect();
    let power: Vec<usize> = (1..=kk)
        .map(|k| m.add_var(VarRole::Power { k }, f64::NEG_INFINITY, f64::INFINITY, false, 0.0))
        .collect();
    let rates = &scenario.rates;
    let peak = m.add_var(
        VarRole::PeakPower,
        opts.demand_floor.0.max(0.0),
        f64::INFINITY,
        false,
        rates.c_b,
    );
    let peak_tou = m.add_var(
        VarRole::PeakPowerTou,
        opts.demand_floor.1.max(0.0),
        f64::INFINITY,
        false,
        rates.c_tou,
    );
    let soc_slack: Vec<Option<usize>> = (0..nb)
        .map(|j| soft.map(|pen| m.add_var(VarRole::SocSlack { bus: j }, 0.0, f64::INFINITY, false, pen)))
        .collect();

    // Flow balance per sub-graph vertex.
    for (l, g) in graph.subgraphs.iter().enumerate() {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); g.vertices.len()];
        for (n, e) in g.edges.iter().enumerate() {
            let x = graph.edge_offset[l] + n;
            rows[e.tail].push((x, 1.0));
            rows[e.head].push((x, -1.0));
        }
        for (v, coeffs) in rows.into_iter().enumerate() {
            let rhs = if v == g.source {
                g.supply as f64
            } else if v == g.sink {
                -(g.supply as f64)
            } else {
                0.0
            };
            m.add_constraint(format!("flow_{l}_{v}"), RowFamily::Flow, coeffs, Relation::Eq, rhs);
        }
    }
    for (p, grp) in graph.groups.iter().enumerate() {
        if grp.entering.is_empty() {
            continue;
        }
        let coeffs = grp.entering.iter().map(|&i| (i, 1.0)).collect();
        m.add_constraint(format!("group_{p}"), RowFamily::Group, coeffs, Relation::Le, 1.0);
    }
    for j in 0..nb {
        for k in 0..kk {
            let mut coeffs = vec![(soc[j][k + 1], 1.0), (soc[j][k], -1.0)];
            for g in gain[j][k].iter().flatten() {
                coeffs.push((*g, -1.0));
            }
            m.add_constraint(
                format!("dyn_{j}_{k}"),
                RowFamily::Dynamics,
                coeffs,
                Relation::Eq,
                -inst.discharge[j][k],
            );
        }
    }
    for j in 0..nb {
        for k in 0..kk {
            for l in 0..nl {
                let Some(g) = gain[j][k][l] else { continue };
                let x = graph.sigma[j][k][l].expect("charge edge for available step");
                let d = &charge[j][l];
                if opts.fixed_rate {
                    m.add_constraint(
                        format!("gfix_{j}_{k}_{l}"),
                        RowFamily::GainFixed,
                        vec![(g, 1.0), (x, -d.b_bar_cc)],
                        Relation::Eq,
                        0.0,
                    );
                    continue;
                }
                if !opts.linear_profile {
                    m.add_constraint(
                        format!("gcv_{j}_{k}_{l}"),
                        RowFamily::GainProfile,
                        vec![(g, 1.0), (soc[j][k], -(d.a_bar_cv - 1.0))],
                        Relation::Le,
                        d.b_bar_cv,
                    );
                }
                let big_m = if opts.tight_big_m { d.b_bar_cc } else { capacity[j] };
                m.add_constraint(
                    format!("gsel_{j}_{k}_{l}"),
                    RowFamily::GainSelect,
                    vec![(g, 1.0), (x, -big_m)],
                    Relation::Le,
                    0.0,
                );
            }
        }
    }
    for k in 0..kk {
        let mut coeffs = vec![(energy[k], 1.0)];
        for j in 0..nb {
            for g in gain[j][k].iter().flatten() {
                coeffs.push((*g, -1.0));
            }
        }
        m.add_constraint(
            format!("energy_{k}"),
            RowFamily::Energy,
            coeffs,
            Relation::Eq,
            inst.load[k],
        );
    }
    let window = WindowSpec::new(rates.demand_window_minutes, inst.delta_minutes);
    let hist = &opts.demand_history;
    for k in 1..=kk {
        let mut coeffs = vec![(power[k - 1], 1.0)];
        let mut rhs = 0.0;
        for (off, w) in window.terms() {
            let kp = k as isize - off as isize;
            if kp >= 0 {
                coeffs.push((energy[kp as usize], -w / window.hours));
            } else {
                let i = hist.len() as isize + kp;
                if i >= 0 {
                    rhs += w * hist[i as usize] / window.hours;
                }
            }
        }
        m.add_constraint(format!("window_{k}"), RowFamily::Window, coeffs, Relation::Eq, rhs);
    }
    for k in 1..=kk {
        m.add_constraint(
            format!("peak_{k}"),
            RowFamily::PeakPower,
            vec![(peak, 1.0), (power[k - 1], -1.0)],
            Relation::Ge,
            0.0,
        );
        if inst.peak[k - 1] {
            m.add_constraint(
                format!("peak_tou_{k}"),
                RowFamily::PeakPowerTou,
                vec![(peak_tou, 1.0), (power[k - 1], -1.0)],
                Relation::Ge,
                0.0,
            );
        }
    }
    for j in 0..nb {
        let Some(z) = soc_slack[j] else { continue };
        let lo = soc_bounds[j].0;
        for k in 1..=kk {
            m.add_constraint(
                format!("smin_{j}_{k}"),
                RowFamily::SocFloor,
                vec![(soc[j][k], 1.0), (z, 1.0)],
                Relation::Ge,
                lo,
            );
        }
    }

    PlanModel {
        milp: m,
        graph: graph.clone(),
        instance: inst.clone(),
        layout: Layout {
            soc,
            gain,
            energy,
            power,
            peak,
            peak_tou,
            terminal_error: vec![None; nb],
            soc_slack,
        },
        charge,
        capacity_kwh: capacity,
        soc_bounds,
        window,
        c_b: rates.c_b,
        c_tou: rates.c_tou,
        options: opts.clone(),
    }
}

/// Adds `weight * |s_T - reference|` per bus through epigraph slacks.
pub fn add_terminal_cost(mut model: PlanModel, reference: &[f64], weight: f64) -> Result<PlanModel, MilpError> {
    let nb = model.instance.num_buses;
    if reference.len() != nb {
        return Err(MilpError::ReferenceLength {
            expected: nb,
            got: reference.len(),
        });
    }
    let kk = model.num_steps();
    if kk == 0 {
        return Err(MilpError::NoTerminalStep);
    }
    for j in 0..nb {
        let s_t = model.layout.soc[j][kk];
        let e = match model.layout.terminal_error[j] {
            Some(e) => {
                model.milp.variables[e].cost += weight;
                e
            }
            None => model
                .milp
                .add_var(VarRole::TerminalError { bus: j }, 0.0, f64::INFINITY, false, weight),
        };
        model.layout.terminal_error[j] = Some(e);
        model.milp.add_constraint(
            format!("terr_lo_{j}"),
            RowFamily::Terminal,
            vec![(e, 1.0), (s_t, -1.0)],
            Relation::Ge,
            -reference[j],
        );
        model.milp.add_constraint(
            format!("terr_hi_{j}"),
            RowFamily::Terminal,
            vec![(e, 1.0), (s_t, 1.0)],
            Relation::Ge,
            reference[j],
        );
    }
    Ok(model)
}

/// Forbids starting a new charge in each tracked visit. Charges continuing
/// from before the window keep their source edge.
pub fn lock_charged_visits(mut model: PlanModel, tracker: &BTreeSet<VisitId>) -> Result<PlanModel, MilpError> {
    for id in tracker {
        let grp = model
            .graph
            .groups
            .iter()
            .find(|g| g.visit == *id)
            .ok_or(MilpError::UnknownVisit(id.bus, id.block))?;
        for &i in &grp.entering {
            if !grp.continuation.contains(&i) {
                model.milp.variables[i].upper = 0.0;
            }
        }
    }
    Ok(model)
}
