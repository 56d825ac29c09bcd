use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::{MilpError, PlanModel, Relation, RowFamily, VarRole};

pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChargeInterval {
    pub bus: usize,
    pub charger: usize,
    pub start_step: usize,
    pub end_step: usize,
    pub start_min: f64,
    pub end_min: f64,
    pub kwh: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct CostBreakdown {
    pub consumption: f64,
    pub baseline_demand: f64,
    pub tou_demand: f64,
    pub terminal: f64,
    pub preference: f64,
    pub soc_slack: f64,
}

impl CostBreakdown {
    /// Utility bill: consumption plus both demand terms.
    pub fn utility(&self) -> f64 {
        self.consumption + self.baseline_demand + self.tou_demand
    }

    pub fn total(&self) -> f64 {
        self.utility() + self.terminal + self.preference + self.soc_slack
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ChargePlan {
    pub t0: f64,
    pub t1: f64,
    pub delta_minutes: f64,
    pub intervals: Vec<ChargeInterval>,
    /// `gains[j][k][l]` in kWh.
    pub gains: Vec<Vec<Vec<f64>>>,
    /// `soc[j][k]` for time points `0..=K`, kWh.
    pub soc: Vec<Vec<f64>>,
    /// Total energy per step, kWh.
    pub energy: Vec<f64>,
    /// Window average power ending at time point `k + 1`, kW.
    pub avg_power: Vec<f64>,
    pub peak_power: f64,
    pub peak_power_tou: f64,
    pub objective: f64,
    pub breakdown: CostBreakdown,
    /// Flow per graph edge.
    pub flows: Vec<f64>,
}

impl ChargePlan {
    pub fn num_steps(&self) -> usize {
        self.energy.len()
    }

    /// SOC of bus `j` at time `t`, linear between grid points and held
    /// constant outside the plan.
    pub fn soc_at(&self, j: usize, t: f64) -> f64 {
        let s = &self.soc[j];
        let u = ((t - self.t0) / self.delta_minutes).clamp(0.0, (s.len() - 1) as f64);
        let k = (u.floor() as usize).min(s.len().saturating_sub(2));
        if s.len() == 1 {
            return s[0];
        }
        let f = u - k as f64;
        s[k] + f * (s[k + 1] - s[k])
    }

    /// Charger type and average power for bus `j` at time `t`, if charging.
    pub fn charging_at(&self, j: usize, t: f64) -> Option<(usize, f64)> {
        let iv = self
            .intervals
            .iter()
            .find(|iv| iv.bus == j && iv.start_min <= t && t < iv.end_min)?;
        let k = ((t - self.t0) / self.delta_minutes).floor() as usize;
        let k = k.min(self.num_steps() - 1);
        let kw = self.gains[j][k][iv.charger] / (self.delta_minutes / 60.0);
        Some((iv.charger, kw))
    }

    /// Plan CSV `bus,charger_type,start_min,end_min,kwh_gained`.
    pub fn to_csv(&self, bus_ids: &[String], charger_ids: &[String]) -> String {
        let mut out = String::from("bus,charger_type,start_min,end_min,kwh_gained\n");
        for iv in &self.intervals {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6}",
                bus_ids[iv.bus], charger_ids[iv.charger], iv.start_min, iv.end_min, iv.kwh
            );
        }
        out
    }

    pub fn summary_json(&self) -> String {
        let v = serde_json::json!({
            "t0": self.t0,
            "t1": self.t1,
            "delta_minutes": self.delta_minutes,
            "objective": self.objective,
            "intervals": self.intervals.len(),
            "peak_power_kw": self.peak_power,
            "peak_power_tou_kw": self.peak_power_tou,
            "cost": self.breakdown,
            "utility_cost": self.breakdown.utility(),
        });
        serde_json::to_string_pretty(&v).expect("plain json")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    /// Largest violation per row family; gain bounds count towards `gain`.
    pub families: BTreeMap<&'static str, f64>,
    pub bounds: f64,
    pub integrality: f64,
    pub worst: (String, f64),
}

impl ResidualReport {
    pub fn passed(&self) -> bool {
        self.worst.1 <= FEASIBILITY_TOL
    }

    pub fn family(&self, name: &str) -> f64 {
        self.families.get(name).copied().unwrap_or(0.0)
    }
}

pub fn validate_solution(model: &PlanModel, x: &[f64]) -> Result<ResidualReport, MilpError> {
    let m = &model.milp;
    if x.len() != m.num_vars() {
        return Err(MilpError::AssignmentLength {
            expected: m.num_vars(),
            got: x.len(),
        });
    }
    let mut families: BTreeMap<&'static str, f64> = BTreeMap::new();
    let mut worst = (String::from("none"), 0.0);
    let mut note = |name: &'static str, r: f64, worst: &mut (String, f64)| {
        let e = families.entry(name).or_insert(0.0);
        *e = e.max(r);
        if r > worst.1 {
            *worst = (name.to_string(), r);
        }
    };
    for c in &m.constraints {
        let act: f64 = c.coeffs.iter().map(|&(i, a)| a * x[i]).sum();
        let r = match c.relation {
            Relation::Le => (act - c.rhs).max(0.0),
            Relation::Ge => (c.rhs - act).max(0.0),
            Relation::Eq => (act - c.rhs).abs(),
        };
        note(c.family.name(), r, &mut worst);
    }
    let mut bounds = 0.0f64;
    let mut integrality = 0.0f64;
    for (v, &xi) in m.variables.iter().zip(x) {
        let r = (v.lower - xi).max(xi - v.upper).max(0.0);
        if matches!(v.role, VarRole::Gain { .. }) {
            note(RowFamily::GainProfile.name(), r, &mut worst);
        } else {
            bounds = bounds.max(r);
        }
        if v.integer {
            integrality = integrality.max((xi - xi.round()).abs());
        }
    }
    if bounds > worst.1 {
        worst = ("bounds".into(), bounds);
    }
    if integrality > worst.1 {
        worst = ("integrality".into(), integrality);
    }
    Ok(ResidualReport {
        families,
        bounds,
        integrality,
        worst,
    })
}

/// Reads a validated assignment back into domain terms.
pub fn extract_plan(model: &PlanModel, x: &[f64]) -> Result<ChargePlan, MilpError> {
    let report = validate_solution(model, x)?;
    if !report.passed() {
        return Err(MilpError::Infeasible {
            family: report.worst.0,
            residual: report.worst.1,
        });
    }
    let inst = &model.instance;
    let lay = &model.layout;
    let (nb, kk, nl) = (inst.num_buses, inst.num_steps, inst.num_chargers);
    let graph = &model.graph;

    let gains: Vec<Vec<Vec<f64>>> = (0..nb)
        .map(|j| {
            (0..kk)
                .map(|k| {
                    (0..nl)
                        .map(|l| lay.gain[j][k][l].map_or(0.0, |g| x[g].max(0.0)))
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut intervals = Vec::new();
    for j in 0..nb {
        for l in 0..nl {
            let mut k = 0;
            while k < kk {
                let on = |k: usize| graph.sigma[j][k][l].is_some_and(|e| x[e] > 0.5);
                if !on(k) {
                    k += 1;
                    continue;
                }
                let start = k;
                while k < kk && on(k) {
                    k += 1;
                }
                intervals.push(ChargeInterval {
                    bus: j,
                    charger: l,
                    start_step: start,
                    end_step: k,
                    start_min: inst.time_of(start),
                    end_min: inst.time_of(k),
                    kwh: (start..k).map(|s| gains[j][s][l]).sum(),
                });
            }
        }
    }
    intervals.sort_by(|a, b| a.start_min.total_cmp(&b.start_min).then(a.bus.cmp(&b.bus)));

    let mut b = CostBreakdown::default();
    for (v, &xi) in model.milp.variables.iter().zip(x) {
        let c = v.cost * xi;
        match v.role {
            VarRole::Gain { .. } => b.consumption += c,
            VarRole::PeakPower => b.baseline_demand += c,
            VarRole::PeakPowerTou => b.tou_demand += c,
            VarRole::TerminalError { .. } => b.terminal += c,
            VarRole::Flow { .. } => b.preference += c,
            VarRole::SocSlack { .. } => b.soc_slack += c,
            _ => {}
        }
    }
    let objective = model.milp.objective_value(x);
    debug_assert!((objective - b.total()).abs() <= 1e-6 * objective.abs().max(1.0));

    Ok(ChargePlan {
        t0: inst.t0,
        t1: inst.t1(),
        delta_minutes: inst.delta_minutes,
        intervals,
        gains,
        soc: lay.soc.iter().map(|row| row.iter().map(|&i| x[i]).collect()).collect(),
        energy: lay.energy.iter().map(|&i| x[i]).collect(),
        avg_power: lay.power.iter().map(|&i| x[i]).collect(),
        peak_power: x[lay.peak],
        peak_power_tou: x[lay.peak_tou],
        objective,
        breakdown: b,
        flows: (0..graph.num_edges()).map(|i| x[i]).collect(),
    })
}
