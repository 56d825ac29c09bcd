//! Heuristic incumbent: follow the previous plan where it overlaps the
//! window, the reference plan after that, then simulate gains forward.

use crate::charge_model::gain_upper_bound;
use crate::graph::{EdgeKind, VertexKind};

use super::{validate_solution, ChargePlan, PlanModel, RowFamily, VarRole};

struct Run {
    bus: usize,
    charger: usize,
    start: usize,
    end: usize,
    continued: bool,
    kw: Vec<f64>,
}

fn desired(plan: &ChargePlan, j: usize, t: f64) -> Option<(usize, f64)> {
    if j >= plan.soc.len() {
        return None;
    }
    plan.charging_at(j, t)
}

/// Returns a validated assignment, or `None` when the heuristic result
/// violates the model.
pub fn build_warm_start(
    model: &PlanModel,
    previous: Option<&ChargePlan>,
    reference: Option<&ChargePlan>,
) -> Option<Vec<f64>> {
    let inst = &model.instance;
    let graph = &model.graph;
    let (nb, kk, nl) = (inst.num_buses, inst.num_steps, inst.num_chargers);
    let vars = &model.milp.variables;

    // Desired charger and power per bus and step.
    let mut want: Vec<Vec<Option<(usize, f64)>>> = vec![vec![None; kk]; nb];
    for (j, row) in want.iter_mut().enumerate() {
        for (k, w) in row.iter_mut().enumerate() {
            let t = inst.time_of(k) + 0.5 * inst.delta_minutes;
            let src = match previous {
                Some(p) if t >= p.t0 && t < p.t1 => Some(p),
                _ => reference,
            };
            *w = src.and_then(|p| desired(p, j, t)).filter(|&(l, _)| inst.gamma[j][k][l]);
        }
    }

    // Contiguous runs on one charger inside one visit.
    let mut runs: Vec<Run> = Vec::new();
    for j in 0..nb {
        let mut k = 0;
        while k < kk {
            let Some((l, _)) = want[j][k] else {
                k += 1;
                continue;
            };
            let visit = inst.visit_at[j][k];
            let start = k;
            let mut kw = Vec::new();
            while k < kk && want[j][k].map(|w| w.0) == Some(l) && inst.visit_at[j][k] == visit {
                kw.push(want[j][k].unwrap().1);
                k += 1;
            }
            runs.push(Run {
                bus: j,
                charger: l,
                start,
                end: k,
                continued: false,
                kw,
            });
        }
    }
    runs.sort_by_key(|r| (r.start, r.bus));

    // Entry edges, visit locks, one run per visit.
    let entry_edge = |r: &Run| -> Option<(usize, bool)> {
        let (j, l) = (r.bus, r.charger);
        let head_is = |e: &crate::graph::Edge| {
            let v = graph.subgraphs[l].vertices[e.head];
            v.kind == VertexKind::Charge && v.bus == Some(j) && v.k == r.start
        };
        let mut transition = None;
        for (i, e) in graph.edges() {
            if e.charger != l || !head_is(e) {
                continue;
            }
            match e.kind {
                EdgeKind::Source if r.start == 0 && vars[i].upper >= 1.0 => return Some((i, true)),
                EdgeKind::Transition if vars[i].upper >= 1.0 => transition = Some((i, false)),
                _ => {}
            }
        }
        transition
    };
    let mut used_visits = Vec::new();
    let mut kept: Vec<Run> = Vec::new();
    for mut r in runs {
        let visit = inst.visit_at[r.bus][r.start];
        if visit.is_some() && used_visits.contains(&visit) {
            continue;
        }
        let Some((_, continued)) = entry_edge(&r) else {
            continue;
        };
        r.continued = continued;
        used_visits.push(visit);
        kept.push(r);
    }

    // Charger counts.
    let mut busy = vec![vec![0u32; kk]; nl];
    let mut runs: Vec<Run> = Vec::new();
    for mut r in kept {
        let n = graph.subgraphs[r.charger].supply;
        let mut end = r.start;
        while end < r.end && busy[r.charger][end] < n {
            end += 1;
        }
        r.end = end;
        r.kw.truncate(end - r.start);
        if r.end == r.start {
            continue;
        }
        for k in r.start..r.end {
            busy[r.charger][k] += 1;
        }
        runs.push(r);
    }

    let mut x = vec![0.0; vars.len()];
    let mut on = vec![vec![None; kk]; nb];
    for r in &runs {
        for k in r.start..r.end {
            on[r.bus][k] = Some((r.charger, r.kw[k - r.start]));
        }
    }
    for (i, e) in graph.edges() {
        let l = e.charger;
        let n = graph.subgraphs[l].supply as f64;
        let sub = &graph.subgraphs[l];
        x[i] = match e.kind {
            EdgeKind::Charge => {
                let j = e.bus.unwrap();
                f64::from(on[j][e.k_from].map(|w| w.0) == Some(l))
            }
            EdgeKind::Rest => n - busy[l][e.k_from] as f64,
            EdgeKind::Sink => n,
            EdgeKind::Source => match e.bus {
                Some(j) => f64::from(runs.iter().any(|r| r.bus == j && r.charger == l && r.continued)),
                None => n - runs.iter().filter(|r| r.charger == l && r.continued).count() as f64,
            },
            EdgeKind::Transition => {
                let into_charge = sub.vertices[e.head].kind == VertexKind::Charge;
                let j = e.bus.unwrap();
                let k = e.k_from;
                let hit = if into_charge {
                    runs.iter()
                        .any(|r| r.bus == j && r.charger == l && r.start == k && !r.continued)
                } else {
                    runs.iter().any(|r| r.bus == j && r.charger == l && r.end == k)
                };
                f64::from(hit)
            }
        };
    }

    // Forward simulation of gains and SOC.
    let lay = &model.layout;
    let dh = inst.delta_hours();
    for j in 0..nb {
        let mut s = vars[lay.soc[j][0]].lower;
        x[lay.soc[j][0]] = s;
        let mut depth = 0.0f64;
        for k in 0..kk {
            let next = lay.soc[j][k + 1];
            let d_k = inst.discharge[j][k];
            let mut g_total = 0.0;
            if let Some((l, kw)) = on[j][k] {
                let d = &model.charge[j][l];
                let g = if model.options.fixed_rate {
                    d.b_bar_cc
                } else {
                    let mut cap = d.b_bar_cc;
                    if !model.options.linear_profile {
                        cap = cap.min(gain_upper_bound(s, d));
                    }
                    cap.min(kw * dh).min(vars[next].upper - s + d_k).max(0.0)
                };
                let gi = lay.gain[j][k][l].expect("gain variable on available step");
                x[gi] = g;
                g_total = g;
            }
            s = s + g_total - d_k;
            x[next] = s;
            depth = depth.max(model.soc_bounds[j].0 - s);
        }
        if let Some(z) = lay.soc_slack[j] {
            x[z] = depth.max(0.0);
        }
    }

    for k in 0..kk {
        let g: f64 = (0..nb)
            .flat_map(|j| lay.gain[j][k].iter().flatten().map(|&i| x[i]).collect::<Vec<_>>())
            .sum();
        x[lay.energy[k]] = inst.load[k] + g;
    }
    let terms = model.window.terms();
    let mut peak = vars[lay.peak].lower;
    let mut peak_tou = vars[lay.peak_tou].lower;
    for k in 1..=kk {
        let mut e = 0.0;
        for &(off, w) in &terms {
            let kp = k as isize - off as isize;
            let v = if kp >= 0 {
                x[lay.energy[kp as usize]]
            } else {
                model.history_energy(kp).unwrap_or(0.0)
            };
            e += w * v;
        }
        let p = e / model.window.hours;
        x[lay.power[k - 1]] = p;
        peak = peak.max(p);
        if inst.peak[k - 1] {
            peak_tou = peak_tou.max(p);
        }
    }
    x[lay.peak] = peak;
    x[lay.peak_tou] = peak_tou;

    // Terminal slacks: smallest value meeting every terminal row.
    for c in model
        .milp
        .constraints
        .iter()
        .filter(|c| c.family == RowFamily::Terminal)
    {
        let Some(&(e, _)) = c
            .coeffs
            .iter()
            .find(|(i, _)| matches!(vars[*i].role, VarRole::TerminalError { .. }))
        else {
            continue;
        };
        let rest: f64 = c.coeffs.iter().filter(|(i, _)| *i != e).map(|&(i, a)| a * x[i]).sum();
        x[e] = x[e].max(c.rhs - rest);
    }

    let report = validate_solution(model, &x).ok()?;
    report.passed().then_some(x)
}
