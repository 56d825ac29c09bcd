//! Hand-built scenarios and an exhaustive oracle for small models.

use busplan_core::graph::EdgeKind;
use busplan_core::milp::{PlanModel, Relation, VarRole};
use busplan_core::scenario::{
    BlockKind, Bus, ChargerClass, ChargerType, LoadProfile, RateSchedule, Scenario, ScheduleBlock,
};
use minilp::{ComparisonOp, OptimizationDirection, Problem};

pub fn route(start: f64, end: f64, kw: f64) -> ScheduleBlock {
    ScheduleBlock {
        kind: BlockKind::OnRoute,
        start,
        end,
        available_chargers: vec![],
        route_power_kw: kw,
    }
}

pub fn station(start: f64, end: f64, chargers: &[&str]) -> ScheduleBlock {
    ScheduleBlock {
        kind: BlockKind::InStation,
        start,
        end,
        available_chargers: chargers.iter().map(|c| c.to_string()).collect(),
        route_power_kw: 0.0,
    }
}

pub fn bus(id: &str, schedule: Vec<ScheduleBlock>) -> Bus {
    Bus {
        id: id.into(),
        capacity_kwh: 200.0,
        eta: 0.9,
        initial_soc: 0.6,
        final_soc: 0.6,
        min_soc: 0.2,
        max_soc: 0.95,
        schedule,
        alpha_override: Default::default(),
    }
}

pub fn charger(id: &str, count: u32, p_cc: f64, alpha: f64) -> ChargerType {
    ChargerType {
        id: id.into(),
        count,
        p_cc,
        alpha,
        location: "station".into(),
        class: if p_cc >= 150.0 {
            ChargerClass::Fast
        } else {
            ChargerClass::Slow
        },
    }
}

pub fn scenario(buses: Vec<Bus>, chargers: Vec<ChargerType>, day: (f64, f64)) -> Scenario {
    Scenario {
        buses,
        charger_types: chargers,
        rates: RateSchedule::schedule8(),
        load_profile: LoadProfile::default(),
        day_start: day.0,
        day_end: day.1,
    }
}

/// What the oracle saw while enumerating.
#[derive(Debug, Clone, Copy)]
pub struct Enumeration {
    /// Best objective over all feasible assignments, if any.
    pub objective: Option<f64>,
    pub charge_edges: usize,
    /// Assignments passing the flow and group screens.
    pub screened: usize,
    /// Screened assignments whose continuous LP was feasible.
    pub feasible: usize,
}

/// Minimizes `model` by trying every subset of charge edges.
///
/// A subset survives the screen when no charger type is over-subscribed at
/// any step and each visit uses one charger type over one contiguous run of
/// steps. The survivor fixes every charge edge; the remaining flows and all
/// continuous variables go to an LP. The rest of the network is totally
/// unimodular, so the LP flows must come back integral.
pub fn brute_force(model: &PlanModel) -> Enumeration {
    let g = &model.graph;
    let charge: Vec<usize> = g
        .edges()
        .filter(|(_, e)| e.kind == EdgeKind::Charge)
        .map(|(i, _)| i)
        .collect();
    assert!(
        charge.len() <= 20,
        "{} charge edges is too many to enumerate",
        charge.len()
    );
    let var_of = |edge: usize| {
        model
            .milp
            .variables
            .iter()
            .position(|v| v.role == VarRole::Flow { edge })
            .expect("every edge has a flow variable")
    };
    let charge_vars: Vec<usize> = charge.iter().map(|&e| var_of(e)).collect();
    let counts: Vec<u32> = g.subgraphs.iter().map(|s| s.supply).collect();

    let mut out = Enumeration {
        objective: None,
        charge_edges: charge.len(),
        screened: 0,
        feasible: 0,
    };
    for mask in 0u32..(1 << charge.len()) {
        let on: Vec<usize> = (0..charge.len()).filter(|&i| mask >> i & 1 == 1).collect();
        if !screen(model, &charge, &on, &counts) {
            continue;
        }
        out.screened += 1;
        let mut fixed = vec![None; model.milp.variables.len()];
        for (i, &v) in charge_vars.iter().enumerate() {
            fixed[v] = Some(if mask >> i & 1 == 1 { 1.0 } else { 0.0 });
        }
        if let Some(obj) = solve_relaxed(model, &fixed) {
            out.feasible += 1;
            out.objective = Some(out.objective.map_or(obj, |b: f64| b.min(obj)));
        }
    }
    out
}

fn screen(model: &PlanModel, charge: &[usize], on: &[usize], counts: &[u32]) -> bool {
    let g = &model.graph;
    let inst = &model.instance;
    let mut used = vec![vec![0u32; inst.num_steps]; counts.len()];
    // Per visit: charger type and the steps it charges.
    let mut runs: std::collections::BTreeMap<(usize, usize), (usize, Vec<usize>)> = Default::default();
    for &i in on {
        let e = g.edge(charge[i]);
        let j = e.bus.unwrap();
        let k = e.k_from;
        used[e.charger][k] += 1;
        if used[e.charger][k] > counts[e.charger] {
            return false;
        }
        let visit = inst.visit_at[j][k].expect("charge edge inside a visit");
        let entry = runs.entry((j, visit)).or_insert((e.charger, Vec::new()));
        if entry.0 != e.charger {
            return false;
        }
        entry.1.push(k);
    }
    runs.values_mut().all(|(_, ks)| {
        ks.sort_unstable();
        ks.windows(2).all(|w| w[1] == w[0] + 1)
    })
}

/// LP over the model with `fixed` variables pinned and integrality dropped.
fn solve_relaxed(model: &PlanModel, fixed: &[Option<f64>]) -> Option<f64> {
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = model
        .milp
        .variables
        .iter()
        .zip(fixed)
        .map(|(v, f)| match f {
            Some(x) => p.add_var(v.cost, (*x, *x)),
            None => p.add_var(v.cost, (v.lower, v.upper)),
        })
        .collect();
    for c in &model.milp.constraints {
        let op = match c.relation {
            Relation::Le => ComparisonOp::Le,
            Relation::Eq => ComparisonOp::Eq,
            Relation::Ge => ComparisonOp::Ge,
        };
        let expr: Vec<_> = c.coeffs.iter().map(|&(i, a)| (vars[i], a)).collect();
        p.add_constraint(expr, op, c.rhs);
    }
    let sol = match p.solve() {
        Ok(s) => s,
        Err(minilp::Error::Infeasible) => return None,
        Err(e) => panic!("oracle LP failed: {e}"),
    };
    for (i, v) in model.milp.variables.iter().enumerate() {
        if v.integer {
            let x = *sol.var_value(vars[i]);
            assert!((x - x.round()).abs() < 1e-6, "{} = {x} is fractional", v.name);
        }
    }
    Some(sol.objective())
}
