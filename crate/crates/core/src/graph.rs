//! Charger action-space graph.
//!
//! Each charger type gets a sub-graph over the time points `0..=K`: a chain
//! of rest vertices, one charging vertex per bus and time point while the bus
//! can use that charger, and explicit source/sink vertices carrying the
//! charger count. Flow along a charge edge means one charger of that type
//! charges the bus over that step.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::milp::ChargePlan;
use crate::scenario::{DiscreteInstance, VisitId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexKind {
    Source,
    Rest,
    Charge,
    Sink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vertex {
    pub kind: VertexKind,
    pub charger: usize,
    pub k: usize,
    pub bus: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Charge,
    Rest,
    Transition,
    Source,
    Sink,
}

impl EdgeKind {
    pub fn name(self) -> &'static str {
        match self {
            EdgeKind::Charge => "charge",
            EdgeKind::Rest => "rest",
            EdgeKind::Transition => "transition",
            EdgeKind::Source => "source",
            EdgeKind::Sink => "sink",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
    pub kind: EdgeKind,
    pub capacity: u32,
    pub charger: usize,
    pub bus: Option<usize>,
    pub k_from: usize,
    pub k_to: usize,
}

/// Vertices and edges of one charger type. Edge endpoints index `vertices`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Subgraph {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    pub source: usize,
    pub sink: usize,
    /// Units injected at the source and absorbed at the sink.
    pub supply: u32,
}

/// Sparse `{-1, 0, +1}` matrix: `+1` where an edge begins, `-1` where it ends.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix {
    pub rows: usize,
    pub cols: usize,
    /// `(row, col, value)` in column order.
    pub entries: Vec<(usize, usize, i8)>,
}

impl IncidenceMatrix {
    pub fn to_dense(&self) -> Vec<Vec<i8>> {
        let mut d = vec![vec![0i8; self.cols]; self.rows];
        for &(r, c, v) in &self.entries {
            d[r][c] = v;
        }
        d
    }
}

pub fn incidence_matrix(g: &Subgraph) -> IncidenceMatrix {
    let mut entries = Vec::with_capacity(2 * g.edges.len());
    for (n, e) in g.edges.iter().enumerate() {
        entries.push((e.tail, n, 1));
        entries.push((e.head, n, -1));
    }
    IncidenceMatrix {
        rows: g.vertices.len(),
        cols: g.edges.len(),
        entries,
    }
}

/// Net supply vector `(n, 0, ..., 0, -n)` in vertex order.
pub fn supply_vector(g: &Subgraph) -> Vec<f64> {
    let mut f = vec![0.0; g.vertices.len()];
    f[g.source] = g.supply as f64;
    f[g.sink] = -(g.supply as f64);
    f
}

/// Vertices of one visit across charger types and the edges entering them.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub visit: VisitId,
    pub bus: usize,
    /// `(charger type, local vertex)` pairs.
    pub vertices: Vec<(usize, usize)>,
    /// Global indices of edges entering the group.
    pub entering: Vec<usize>,
    /// Subset of `entering` that continues a charge begun before the window.
    pub continuation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionGraph {
    pub subgraphs: Vec<Subgraph>,
    /// Global index of the first edge of each sub-graph.
    pub edge_offset: Vec<usize>,
    /// `sigma[j][k][l]`: global charge-edge index.
    pub sigma: Vec<Vec<Vec<Option<usize>>>>,
    pub groups: Vec<Group>,
    pub edge_costs: Vec<f64>,
    pub t0: f64,
    pub delta_minutes: f64,
    pub num_steps: usize,
}

impl ActionGraph {
    pub fn num_edges(&self) -> usize {
        self.edge_costs.len()
    }

    /// Edge by global index.
    pub fn edge(&self, i: usize) -> &Edge {
        let l = match self.edge_offset.binary_search(&i) {
            Ok(mut l) => {
                // Skip empty sub-graphs sharing the same offset.
                while self.subgraphs[l].edges.is_empty() {
                    l += 1;
                }
                l
            }
            Err(l) => l - 1,
        };
        &self.subgraphs[l].edges[i - self.edge_offset[l]]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, &Edge)> {
        self.subgraphs.iter().enumerate().flat_map(move |(l, g)| {
            g.edges
                .iter()
                .enumerate()
                .map(move |(n, e)| (self.edge_offset[l] + n, e))
        })
    }

    pub fn edge_interval(&self, e: &Edge) -> (f64, f64) {
        (
            self.t0 + e.k_from as f64 * self.delta_minutes,
            self.t0 + e.k_to as f64 * self.delta_minutes,
        )
    }

    /// Edge list CSV `edge_id,kind,bus,charger_type,k_from,k_to,capacity,cost`.
    pub fn dump_csv(&self, bus_ids: &[String], charger_ids: &[String]) -> String {
        let mut out = String::from("edge_id,kind,bus,charger_type,k_from,k_to,capacity,cost\n");
        for (i, e) in self.edges() {
            let bus = e.bus.map(|j| bus_ids[j].as_str()).unwrap_or("");
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                i,
                e.kind.name(),
                bus,
                charger_ids[e.charger],
                e.k_from,
                e.k_to,
                e.capacity,
                self.edge_costs[i]
            );
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GraphOptions {
    /// Charger type each bus is already connected to at the window start.
    pub connected: Vec<Option<usize>>,
}

pub fn build_action_graph(inst: &DiscreteInstance, counts: &[u32], opts: &GraphOptions) -> ActionGraph {
    let nb = inst.num_buses;
    let kk = inst.num_steps;
    let mut subgraphs = Vec::with_capacity(inst.num_chargers);
    let mut sigma = vec![vec![vec![None; inst.num_chargers]; kk]; nb];
    let mut edge_offset = Vec::with_capacity(inst.num_chargers);
    let mut charge_vertex: Vec<Vec<Vec<Option<usize>>>> = Vec::new();
    let mut total_edges = 0usize;

    for l in 0..inst.num_chargers {
        let n = counts[l];
        let g_at = |j: usize, k: usize| k < kk && inst.gamma[j][k][l];
        let continuing = |j: usize| opts.connected.get(j).copied().flatten() == Some(l) && g_at(j, 0);
        let mut vertices = vec![Vertex {
            kind: VertexKind::Source,
            charger: l,
            k: 0,
            bus: None,
        }];
        let mut cv = vec![vec![None; kk + 1]; nb];
        let mut rest = Vec::with_capacity(kk + 1);
        for k in 0..=kk {
            for j in 0..nb {
                if g_at(j, k) || (k > 0 && g_at(j, k - 1)) {
                    cv[j][k] = Some(vertices.len());
                    vertices.push(Vertex {
                        kind: VertexKind::Charge,
                        charger: l,
                        k,
                        bus: Some(j),
                    });
                }
            }
            rest.push(vertices.len());
            vertices.push(Vertex {
                kind: VertexKind::Rest,
                charger: l,
                k,
                bus: None,
            });
        }
        let sink = vertices.len();
        vertices.push(Vertex {
            kind: VertexKind::Sink,
            charger: l,
            k: kk,
            bus: None,
        });

        let mut edges = Vec::new();
        let mk = |tail, head, kind, capacity, bus, k_from, k_to| Edge {
            tail,
            head,
            kind,
            capacity,
            charger: l,
            bus,
            k_from,
            k_to,
        };
        edges.push(mk(0, rest[0], EdgeKind::Source, n, None, 0, 0));
        for j in 0..nb {
            if continuing(j) {
                edges.push(mk(0, cv[j][0].unwrap(), EdgeKind::Source, 1, Some(j), 0, 0));
            }
        }
        for k in 0..=kk {
            if k < kk {
                edges.push(mk(rest[k], rest[k + 1], EdgeKind::Rest, n, None, k, k + 1));
            }
            for j in 0..nb {
                if g_at(j, k) {
                    let (a, b) = (cv[j][k].unwrap(), cv[j][k + 1].unwrap());
                    edges.push(mk(a, b, EdgeKind::Charge, 1, Some(j), k, k + 1));
                    edges.push(mk(rest[k], a, EdgeKind::Transition, 1, Some(j), k, k));
                }
                if k > 0 && g_at(j, k - 1) {
                    edges.push(mk(cv[j][k].unwrap(), rest[k], EdgeKind::Transition, 1, Some(j), k, k));
                }
            }
        }
        edges.push(mk(rest[kk], sink, EdgeKind::Sink, n, None, kk, kk));
        edges.sort_by_key(|e| (e.tail, e.head));

        edge_offset.push(total_edges);
        for (n_local, e) in edges.iter().enumerate() {
            if e.kind == EdgeKind::Charge {
                sigma[e.bus.unwrap()][e.k_from][l] = Some(total_edges + n_local);
            }
        }
        total_edges += edges.len();
        charge_vertex.push(cv);
        subgraphs.push(Subgraph {
            vertices,
            edges,
            source: 0,
            sink,
            supply: n,
        });
    }

    let mut groups = Vec::with_capacity(inst.visits.len());
    for v in &inst.visits {
        let j = v.id.bus;
        let mut members: Vec<(usize, usize)> = Vec::new();
        for &l in &v.chargers {
            for k in v.first..=v.end {
                if let Some(x) = charge_vertex[l][j][k] {
                    members.push((l, x));
                }
            }
        }
        members.sort_unstable();
        members.dedup();
        let mut entering = Vec::new();
        let mut continuation = Vec::new();
        for (l, g) in subgraphs.iter().enumerate() {
            for (n, e) in g.edges.iter().enumerate() {
                let head_in = members.binary_search(&(l, e.head)).is_ok();
                let tail_in = members.binary_search(&(l, e.tail)).is_ok();
                if head_in && !tail_in {
                    entering.push(edge_offset[l] + n);
                    if e.kind == EdgeKind::Source {
                        continuation.push(edge_offset[l] + n);
                    }
                }
            }
        }
        groups.push(Group {
            visit: v.id,
            bus: j,
            vertices: members,
            entering,
            continuation,
        });
    }

    ActionGraph {
        subgraphs,
        edge_offset,
        sigma,
        groups,
        edge_costs: vec![0.0; total_edges],
        t0: inst.t0,
        delta_minutes: inst.delta_minutes,
        num_steps: kk,
    }
}

const OVERLAP_EPS: f64 = 1e-9;

fn overlap(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.1.min(b.1) - a.0.max(b.0)).max(0.0)
}

/// Charge edges overlapping a charge interval of `previous` on the same bus
/// and charger type, plus rest edges inside the previous window where the
/// previous plan left at least one charger of that type idle.
pub fn close_edges(graph: &ActionGraph, previous: &ChargePlan) -> BTreeSet<usize> {
    let window = (previous.t0, previous.t1);
    let mut out = BTreeSet::new();
    for (i, e) in graph.edges() {
        let span = graph.edge_interval(e);
        match e.kind {
            EdgeKind::Charge => {
                let hit = previous.intervals.iter().any(|iv| {
                    Some(iv.bus) == e.bus
                        && iv.charger == e.charger
                        && overlap(span, (iv.start_min, iv.end_min)) > OVERLAP_EPS
                });
                if hit {
                    out.insert(i);
                }
            }
            EdgeKind::Rest => {
                if overlap(span, window) < span.1 - span.0 - OVERLAP_EPS {
                    continue;
                }
                let busy = previous
                    .intervals
                    .iter()
                    .filter(|iv| iv.charger == e.charger && overlap(span, (iv.start_min, iv.end_min)) > OVERLAP_EPS)
                    .count();
                if busy < e.capacity as usize {
                    out.insert(i);
                }
            }
            _ => {}
        }
    }
    out
}

/// Copy of `graph` with the cost of every edge in `close` lowered by `bonus`.
pub fn apply_plan_preference(graph: &ActionGraph, close: &BTreeSet<usize>, bonus: f64) -> ActionGraph {
    let mut g = graph.clone();
    for &i in close {
        g.edge_costs[i] -= bonus;
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::ChargeInterval;
    use crate::scenario::{
        discretize, BlockKind, Bus, ChargerClass, ChargerType, LoadProfile, RateSchedule, Scenario, ScheduleBlock,
    };

    fn edge(tail: usize, head: usize) -> Edge {
        Edge {
            tail,
            head,
            kind: EdgeKind::Rest,
            capacity: 1,
            charger: 0,
            bus: None,
            k_from: 0,
            k_to: 0,
        }
    }

    #[test]
    fn sample_graph_incidence() {
        let v = Vertex {
            kind: VertexKind::Rest,
            charger: 0,
            k: 0,
            bus: None,
        };
        let g = Subgraph {
            vertices: vec![v; 4],
            edges: vec![edge(0, 1), edge(1, 2), edge(2, 1), edge(2, 3), edge(1, 3)],
            source: 0,
            sink: 3,
            supply: 1,
        };
        let d = incidence_matrix(&g).to_dense();
        assert_eq!(
            d,
            vec![
                vec![1, 0, 0, 0, 0],
                vec![-1, 1, -1, 0, 1],
                vec![0, -1, 1, 1, 0],
                vec![0, 0, 0, -1, -1],
            ]
        );
    }

    #[test]
    fn single_edge_column() {
        let v = Vertex {
            kind: VertexKind::Rest,
            charger: 0,
            k: 0,
            bus: None,
        };
        let g = Subgraph {
            vertices: vec![v; 2],
            edges: vec![edge(0, 1)],
            source: 0,
            sink: 1,
            supply: 1,
        };
        assert_eq!(incidence_matrix(&g).to_dense(), vec![vec![1], vec![-1]]);
    }

    pub(crate) fn one_visit(steps: usize, buses: usize, count: u32) -> Scenario {
        let bus = |id: usize| Bus {
            id: format!("b{id}"),
            capacity_kwh: 400.0,
            eta: 0.9,
            initial_soc: 0.7,
            final_soc: 0.7,
            min_soc: 0.2,
            max_soc: 0.95,
            schedule: vec![ScheduleBlock {
                kind: BlockKind::InStation,
                start: 5.0,
                end: 5.0 + 5.0 * steps as f64,
                available_chargers: vec!["c".into()],
                route_power_kw: 0.0,
            }],
            alpha_override: Default::default(),
        };
        Scenario {
            buses: (0..buses).map(bus).collect(),
            charger_types: vec![ChargerType {
                id: "c".into(),
                count,
                p_cc: 100.0,
                alpha: 2.0,
                location: "s".into(),
                class: ChargerClass::Slow,
            }],
            rates: RateSchedule::schedule8(),
            load_profile: LoadProfile::default(),
            day_start: 0.0,
            day_end: 60.0,
        }
    }

    #[test]
    fn one_visit_group_entering_edges() {
        let s = one_visit(2, 1, 1);
        let inst = discretize(&s, 5.0, (0.0, 20.0)).unwrap();
        let g = build_action_graph(&inst, &[1], &GraphOptions::default());
        assert_eq!(g.groups.len(), 1);
        // Hand enumeration: visit steps 1 and 2, charge vertices at 1, 2, 3.
        // Entering edges are R1->C1 and R2->C2.
        let entering: Vec<(usize, usize)> = g.groups[0]
            .entering
            .iter()
            .map(|&i| {
                let e = g.edge(i);
                assert_eq!(e.kind, EdgeKind::Transition);
                (e.k_from, g.subgraphs[0].vertices[e.head].k)
            })
            .collect();
        assert_eq!(entering, vec![(1, 1), (2, 2)]);
        // Definitional check: head inside, tail outside.
        let members = &g.groups[0].vertices;
        for &i in &g.groups[0].entering {
            let e = g.edge(i);
            assert!(members.contains(&(0, e.head)) && !members.contains(&(0, e.tail)));
        }
        let n_charge = g.edges().filter(|(_, e)| e.kind == EdgeKind::Charge).count();
        assert_eq!(n_charge, 2);
        assert_eq!(g.sigma[0][1][0].map(|i| g.edge(i).kind), Some(EdgeKind::Charge));
        assert_eq!(g.sigma[0][0][0], None);
    }

    #[test]
    fn no_buses_gives_pure_rest_chain() {
        let mut s = one_visit(2, 1, 2);
        s.buses.clear();
        let inst = discretize(&s, 5.0, (0.0, 20.0)).unwrap();
        let g = build_action_graph(&inst, &[2], &GraphOptions::default());
        assert!(g
            .edges()
            .all(|(_, e)| matches!(e.kind, EdgeKind::Rest | EdgeKind::Source | EdgeKind::Sink)));
        assert_eq!(g.num_edges(), 4 + 2);
    }

    #[test]
    fn columns_sum_to_zero_and_rest_flow_is_feasible() {
        let s = one_visit(3, 2, 1);
        let inst = discretize(&s, 5.0, (0.0, 30.0)).unwrap();
        let g = build_action_graph(&inst, &[1], &GraphOptions::default());
        let sub = &g.subgraphs[0];
        let d = incidence_matrix(sub).to_dense();
        for c in 0..sub.edges.len() {
            assert_eq!(d.iter().map(|r| r[c] as i32).sum::<i32>(), 0);
        }
        // All flow down the rest chain.
        let x: Vec<f64> = sub
            .edges
            .iter()
            .map(|e| match e.kind {
                EdgeKind::Rest | EdgeKind::Sink => 1.0,
                EdgeKind::Source if e.bus.is_none() => 1.0,
                _ => 0.0,
            })
            .collect();
        let f = supply_vector(sub);
        for (r, row) in d.iter().enumerate() {
            let net: f64 = row.iter().zip(&x).map(|(a, b)| *a as f64 * b).sum();
            assert_eq!(net, f[r]);
        }
        // Ordering: edges sorted by (tail, head).
        assert!(sub
            .edges
            .windows(2)
            .all(|w| (w[0].tail, w[0].head) <= (w[1].tail, w[1].head)));
    }

    #[test]
    fn continuation_edge_enters_group() {
        let s = one_visit(3, 1, 1);
        let inst = discretize(&s, 5.0, (5.0, 20.0)).unwrap();
        let opts = GraphOptions {
            connected: vec![Some(0)],
        };
        let g = build_action_graph(&inst, &[1], &opts);
        let grp = &g.groups[0];
        assert_eq!(grp.continuation.len(), 1);
        let e = g.edge(grp.continuation[0]);
        assert_eq!(e.kind, EdgeKind::Source);
        assert_eq!(e.capacity, 1);
        assert!(grp.entering.contains(&grp.continuation[0]));
    }

    fn plan(t0: f64, t1: f64, intervals: Vec<ChargeInterval>) -> ChargePlan {
        ChargePlan {
            t0,
            t1,
            delta_minutes: 5.0,
            intervals,
            ..ChargePlan::default()
        }
    }

    #[test]
    fn close_edges_by_overlap() {
        let s = one_visit(4, 1, 1);
        let inst = discretize(&s, 5.0, (0.0, 30.0)).unwrap();
        let g = build_action_graph(&inst, &[1], &GraphOptions::default());
        let rest: BTreeSet<usize> = g
            .edges()
            .filter(|(_, e)| e.kind == EdgeKind::Rest)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(close_edges(&g, &plan(0.0, 30.0, vec![])), rest);

        let iv = ChargeInterval {
            bus: 0,
            charger: 0,
            start_step: 2,
            end_step: 4,
            start_min: 10.0,
            end_min: 20.0,
            kwh: 1.0,
        };
        let c = close_edges(&g, &plan(0.0, 30.0, vec![iv.clone()]));
        let charge: Vec<usize> = c
            .iter()
            .copied()
            .filter(|&i| g.edge(i).kind == EdgeKind::Charge)
            .collect();
        assert_eq!(charge, vec![g.sigma[0][2][0].unwrap(), g.sigma[0][3][0].unwrap()]);
        // The only charger is busy over [10, 20), so those rest edges drop out.
        for (i, e) in g.edges() {
            if e.kind == EdgeKind::Rest {
                let busy = e.k_from == 2 || e.k_from == 3;
                assert_eq!(c.contains(&i), !busy);
            }
        }
    }

    #[test]
    fn close_edges_on_shifted_window() {
        let s = one_visit(4, 1, 1);
        let inst = discretize(&s, 5.0, (5.0, 30.0)).unwrap();
        let g = build_action_graph(&inst, &[1], &GraphOptions::default());
        // Previous plan covered [0, 25) and charged over [5, 25).
        let iv = ChargeInterval {
            bus: 0,
            charger: 0,
            start_step: 1,
            end_step: 5,
            start_min: 5.0,
            end_min: 25.0,
            kwh: 1.0,
        };
        let prev = plan(0.0, 25.0, vec![iv]);
        let c = close_edges(&g, &prev);
        // Brute-force interval intersection oracle.
        for (i, e) in g.edges() {
            let (a, b) = g.edge_interval(e);
            let expect = match e.kind {
                EdgeKind::Charge => b.min(25.0) - a.max(5.0) > 0.0,
                EdgeKind::Rest => b <= 25.0 && !(b.min(25.0) - a.max(5.0) > 0.0),
                _ => false,
            };
            assert_eq!(c.contains(&i), expect, "edge {i} {e:?}");
        }
    }

    #[test]
    fn preference_shifts_only_close_edges() {
        let s = one_visit(2, 1, 1);
        let inst = discretize(&s, 5.0, (0.0, 20.0)).unwrap();
        let g = build_action_graph(&inst, &[1], &GraphOptions::default());
        let close: BTreeSet<usize> = [1usize, 3].into_iter().collect();
        let same = apply_plan_preference(&g, &close, 0.0);
        assert_eq!(same.edge_costs, g.edge_costs);
        let p = apply_plan_preference(&g, &close, 0.25);
        for i in 0..g.num_edges() {
            let delta = p.edge_costs[i] - g.edge_costs[i];
            assert_eq!(delta, if close.contains(&i) { -0.25 } else { 0.0 });
        }
        assert!(g.edge_costs.iter().all(|&c| c == 0.0));
    }
}
