//! LP-based branch and bound for mixed-integer programs.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;
use std::time::{Duration, Instant};

use super::lp::{Basis, LpProblem, LpStatus, Simplex};

const INT_TOL: f64 = 1e-6;
const FEAS_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct MipProblem {
    pub lp: LpProblem,
    pub integer: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct MipOptions {
    pub node_limit: Option<usize>,
    pub time_limit: Option<Duration>,
    /// Relative gap at which the search stops.
    pub gap_tolerance: f64,
    /// Collect progress lines `time_s,nodes,incumbent,bound,gap`.
    pub log: bool,
}

impl Default for MipOptions {
    fn default() -> Self {
        Self {
            node_limit: None,
            time_limit: None,
            gap_tolerance: 1e-4,
            log: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MipStatus {
    Optimal,
    /// A limit stopped the search with an incumbent in hand.
    Feasible,
    Infeasible,
    Unbounded,
    /// A limit stopped the search before any integer solution was found.
    NoSolution,
}

#[derive(Debug, Clone)]
pub struct MipResult {
    pub status: MipStatus,
    pub x: Option<Vec<f64>>,
    pub objective: f64,
    pub bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub lp_iterations: usize,
    pub log: Vec<String>,
}

impl MipResult {
    pub fn has_solution(&self) -> bool {
        self.x.is_some()
    }
}

struct Node {
    id: usize,
    bound: f64,
    changes: Vec<(usize, f64, f64)>,
    basis: Option<Rc<Basis>>,
}

struct Open(Node);

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Open {
    // Max-heap: smallest bound first, then oldest node.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .bound
            .total_cmp(&self.0.bound)
            .then_with(|| other.0.id.cmp(&self.0.id))
    }
}

/// Open nodes: depth first until the first incumbent, best bound after.
#[derive(Default)]
struct Frontier {
    heap: BinaryHeap<Open>,
    stack: Vec<Node>,
}

impl Frontier {
    fn push(&mut self, node: Node, depth_first: bool) {
        if depth_first {
            self.stack.push(node);
        } else {
            self.heap.push(Open(node));
        }
    }

    fn pop(&mut self, depth_first: bool) -> Option<Node> {
        if depth_first {
            if let Some(n) = self.stack.pop() {
                return Some(n);
            }
        } else if !self.stack.is_empty() {
            self.heap.extend(self.stack.drain(..).map(Open));
        }
        self.heap.pop().map(|o| o.0)
    }

    fn bounds(&self) -> impl Iterator<Item = f64> + '_ {
        self.heap
            .iter()
            .map(|o| o.0.bound)
            .chain(self.stack.iter().map(|n| n.bound))
    }

    fn clear(&mut self) {
        self.heap.clear();
        self.stack.clear();
    }
}

/// Relative gap between an incumbent objective and a lower bound.
pub fn relative_gap(objective: f64, bound: f64) -> f64 {
    if !objective.is_finite() {
        return f64::INFINITY;
    }
    if !bound.is_finite() {
        return f64::INFINITY;
    }
    ((objective - bound) / objective.abs().max(1e-9)).max(0.0)
}

/// Largest violation of bounds, rows and integrality for `x`.
pub fn max_violation(problem: &MipProblem, x: &[f64]) -> f64 {
    let lp = &problem.lp;
    if x.len() != lp.num_cols() {
        return f64::INFINITY;
    }
    let mut worst = 0.0f64;
    for j in 0..x.len() {
        if !x[j].is_finite() {
            return f64::INFINITY;
        }
        worst = worst.max(lp.col_lower[j] - x[j]).max(x[j] - lp.col_upper[j]);
        if problem.integer[j] {
            worst = worst.max((x[j] - x[j].round()).abs());
        }
    }
    for (i, row) in lp.rows.iter().enumerate() {
        let act: f64 = row.iter().map(|&(j, a)| a * x[j]).sum();
        let scale = 1.0f64.max(row.iter().map(|&(_, a)| a.abs()).fold(0.0, f64::max));
        worst = worst
            .max((lp.row_lower[i] - act) / scale)
            .max((act - lp.row_upper[i]) / scale);
    }
    worst
}

fn objective_of(lp: &LpProblem, x: &[f64]) -> f64 {
    lp.objective.iter().zip(x).map(|(c, v)| c * v).sum()
}

struct Search<'a> {
    problem: &'a MipProblem,
    options: &'a MipOptions,
    lp: Simplex,
    root_lower: Vec<f64>,
    root_upper: Vec<f64>,
    applied: Vec<(usize, f64, f64)>,
    incumbent: Option<Vec<f64>>,
    incumbent_obj: f64,
    nodes: usize,
    next_id: usize,
    start: Instant,
    log: Vec<String>,
    incomplete: bool,
}

impl<'a> Search<'a> {
    fn apply(&mut self, changes: &[(usize, f64, f64)]) {
        for &(j, _, _) in &self.applied {
            self.lp.set_col_bounds(j, self.root_lower[j], self.root_upper[j]);
        }
        for &(j, lo, hi) in changes {
            self.lp.set_col_bounds(j, lo, hi);
        }
        self.applied = changes.to_vec();
    }

    fn cutoff(&self) -> f64 {
        if self.incumbent.is_none() {
            return f64::INFINITY;
        }
        let tol = (self.options.gap_tolerance * self.incumbent_obj.abs()).max(1e-9 * self.incumbent_obj.abs().max(1.0));
        self.incumbent_obj - tol
    }

    fn try_incumbent(&mut self, x: Vec<f64>) -> bool {
        let obj = objective_of(&self.problem.lp, &x);
        if self.incumbent.is_some() && obj >= self.incumbent_obj {
            return false;
        }
        if max_violation(self.problem, &x) > FEAS_TOL {
            return false;
        }
        self.incumbent_obj = obj;
        self.incumbent = Some(x);
        true
    }

    fn emit(&mut self, bound: f64) {
        if !self.options.log {
            return;
        }
        let inc = if self.incumbent.is_some() {
            format!("{:.6}", self.incumbent_obj)
        } else {
            "inf".to_string()
        };
        let gap = relative_gap(self.incumbent_obj, bound);
        self.log.push(format!(
            "{:.3},{},{},{:.6},{:.6}",
            self.start.elapsed().as_secs_f64(),
            self.nodes,
            inc,
            bound,
            gap
        ));
    }

    fn out_of_budget(&self) -> bool {
        if let Some(limit) = self.options.node_limit {
            if self.nodes >= limit {
                return true;
            }
        }
        if let Some(limit) = self.options.time_limit {
            if self.start.elapsed() >= limit {
                return true;
            }
        }
        false
    }

    /// Fix integer columns of `x` and re-optimize the continuous part.
    fn polish(&mut self, x: &[f64]) -> Option<Vec<f64>> {
        let mut fixed = LpProblem::clone(&self.problem.lp);
        for j in 0..x.len() {
            if self.problem.integer[j] {
                let v = x[j].round();
                fixed.col_lower[j] = v;
                fixed.col_upper[j] = v;
            }
        }
        let sol = super::lp::solve_lp(&fixed);
        if sol.status != LpStatus::Optimal {
            return None;
        }
        let mut out = sol.x;
        for j in 0..out.len() {
            if self.problem.integer[j] {
                out[j] = out[j].round();
            }
        }
        Some(out)
    }

    fn most_fractional(&self, x: &[f64]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (j, &v) in x.iter().enumerate() {
            if !self.problem.integer[j] {
                continue;
            }
            let f = v - v.floor();
            let dist = f.min(1.0 - f);
            if dist <= INT_TOL {
                continue;
            }
            if best.is_none_or(|(_, d)| dist > d + 1e-12) {
                best = Some((j, dist));
            }
        }
        best.map(|(j, _)| j)
    }

    fn solve_current(&mut self) -> LpStatus {
        let status = self.lp.solve();
        match status {
            LpStatus::IterationLimit | LpStatus::NumericalFailure => {
                self.lp.reset_to_slack_basis();
                self.lp.solve()
            }
            s => s,
        }
    }

    fn new_id(&mut self) -> usize {
        self.next_id += 1;
        self.next_id
    }
}

/// Solve a MIP by branch and bound, optionally seeded with a candidate
/// solution that is validated and polished before use.
pub fn solve_mip(problem: &MipProblem, options: &MipOptions, warm: Option<&[f64]>) -> MipResult {
    let lp = Simplex::new(&problem.lp);
    let mut search = Search {
        problem,
        options,
        lp,
        root_lower: problem.lp.col_lower.clone(),
        root_upper: problem.lp.col_upper.clone(),
        applied: Vec::new(),
        incumbent: None,
        incumbent_obj: f64::INFINITY,
        nodes: 0,
        next_id: 0,
        start: Instant::now(),
        log: Vec::new(),
        incomplete: false,
    };

    if let Some(w) = warm {
        if max_violation(problem, w) <= FEAS_TOL {
            let candidate = search.polish(w).unwrap_or_else(|| w.to_vec());
            if !search.try_incumbent(candidate) {
                search.try_incumbent(w.to_vec());
            }
        }
    }

    let mut open = Frontier::default();
    let mut current: Option<Node> = Some(Node {
        id: 0,
        bound: f64::NEG_INFINITY,
        changes: Vec::new(),
        basis: None,
    });
    let mut root_unbounded = false;
    let mut stopped = false;
    // Set when the current node is the child we just created, so the LP
    // engine already holds the parent's optimal basis.
    let mut plunging = false;
    let mut closed_bound: Option<f64> = None;

    loop {
        let node = match current.take() {
            Some(n) => n,
            None => match open.pop(search.incumbent.is_none()) {
                Some(n) => {
                    plunging = false;
                    n
                }
                None => break,
            },
        };
        if node.bound >= search.cutoff() {
            continue;
        }
        if search.out_of_budget() {
            open.push(node, false);
            stopped = true;
            break;
        }
        search.nodes += 1;
        search.apply(&node.changes);
        if !plunging {
            if let Some(b) = &node.basis {
                search.lp.set_basis(b);
            }
        }
        let status = search.solve_current();
        match status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => {
                plunging = false;
                continue;
            }
            LpStatus::Unbounded => {
                if node.id == 0 {
                    root_unbounded = true;
                    break;
                }
                search.incomplete = true;
                plunging = false;
                continue;
            }
            _ => {
                search.incomplete = true;
                plunging = false;
                continue;
            }
        }
        let sol = search.lp.solution(LpStatus::Optimal);
        let obj = sol.objective;
        if obj >= search.cutoff() {
            plunging = false;
            continue;
        }
        match search.most_fractional(&sol.x) {
            None => {
                let mut x = sol.x;
                for j in 0..x.len() {
                    if problem.integer[j] {
                        x[j] = x[j].round();
                    }
                }
                let found = search.try_incumbent(x.clone())
                    || search.polish(&x).map(|p| search.try_incumbent(p)).unwrap_or(false);
                if found {
                    let bound = open.bounds().fold(obj, f64::min).min(search.incumbent_obj);
                    search.emit(bound);
                }
                plunging = false;
            }
            Some(j) => {
                let v = sol.x[j];
                let (lo, hi) = {
                    let mut lo = search.root_lower[j];
                    let mut hi = search.root_upper[j];
                    for &(k, l, h) in &node.changes {
                        if k == j {
                            lo = l;
                            hi = h;
                        }
                    }
                    (lo, hi)
                };
                let basis = Rc::new(search.lp.basis());
                let mut down = node.changes.clone();
                down.retain(|&(k, _, _)| k != j);
                let mut up = down.clone();
                down.push((j, lo, v.floor()));
                up.push((j, v.ceil(), hi));
                let down_first = v - v.floor() <= 0.5;
                let (first, second) = if down_first { (down, up) } else { (up, down) };
                let first_id = search.new_id();
                let second_id = search.new_id();
                open.push(
                    Node {
                        id: second_id,
                        bound: obj,
                        changes: second,
                        basis: Some(basis.clone()),
                    },
                    search.incumbent.is_none(),
                );
                current = Some(Node {
                    id: first_id,
                    bound: obj,
                    changes: first,
                    basis: Some(basis),
                });
                plunging = true;
            }
        }
        if search.options.log && search.nodes % 1000 == 0 {
            let bound = open.bounds().fold(obj, f64::min);
            search.emit(bound);
        }
        if search.incumbent.is_some() {
            let bound = open
                .bounds()
                .chain(current.as_ref().map(|c| c.bound))
                .fold(search.incumbent_obj, f64::min);
            if relative_gap(search.incumbent_obj, bound) <= options.gap_tolerance && options.gap_tolerance > 0.0 {
                closed_bound = Some(bound);
                open.clear();
                current = None;
            }
        }
    }

    let lp_iterations = search.lp.iterations();
    if root_unbounded {
        return MipResult {
            status: MipStatus::Unbounded,
            x: None,
            objective: f64::NEG_INFINITY,
            bound: f64::NEG_INFINITY,
            gap: f64::INFINITY,
            nodes: search.nodes,
            lp_iterations,
            log: search.log,
        };
    }
    let open_bound = open
        .bounds()
        .chain(current.as_ref().map(|c| c.bound))
        .fold(f64::INFINITY, f64::min);
    let bound = if let Some(b) = closed_bound {
        b
    } else if search.incumbent.is_some() {
        open_bound.min(search.incumbent_obj)
    } else {
        open_bound
    };
    let status = match (&search.incumbent, stopped || search.incomplete) {
        (Some(_), false) => MipStatus::Optimal,
        (Some(_), true) => MipStatus::Feasible,
        (None, false) => MipStatus::Infeasible,
        (None, true) => MipStatus::NoSolution,
    };
    let gap = relative_gap(search.incumbent_obj, bound);
    search.emit(bound);
    MipResult {
        status,
        objective: search.incumbent_obj,
        x: search.incumbent,
        bound,
        gap,
        nodes: search.nodes,
        lp_iterations,
        log: search.log,
    }
}
