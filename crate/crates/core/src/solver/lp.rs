//! Bounded-variable revised simplex.
//!
//! Every row `i` carries a logical variable `r_i` with `A x - r = 0` and the
//! row bounds moved onto `r_i`, so the whole problem is expressed through
//! variable bounds. The engine keeps a factored basis between calls: after
//! bound changes it re-optimizes with the dual simplex when the basis is
//! still dual feasible, otherwise it falls back to the primal method.

use super::lu::{LuFactor, SparseCol};

const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 80;
const DEGENERATE_BEFORE_BLAND: usize = 200;

/// A linear program `min c^T x` subject to `row_lower <= A x <= row_upper`
/// and `col_lower <= x <= col_upper`.
#[derive(Debug, Clone, Default)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub col_lower: Vec<f64>,
    pub col_upper: Vec<f64>,
    /// Sparse rows: `(column, coefficient)`.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub row_lower: Vec<f64>,
    pub row_upper: Vec<f64>,
}

impl LpProblem {
    pub fn num_cols(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_col(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(cost);
        self.col_lower.push(lower);
        self.col_upper.push(upper);
        self.objective.len() - 1
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, lower: f64, upper: f64) -> usize {
        self.rows.push(coeffs);
        self.row_lower.push(lower);
        self.row_upper.push(upper);
        self.rows.len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarState {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable parked at zero.
    AtZero,
}

/// Snapshot of a basis that can be restored into an engine built from the
/// same problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    states: Vec<VarState>,
    weights: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub row_activity: Vec<f64>,
    pub duals: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    One,
    Two,
}

enum Step {
    Continue,
    Done,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct Simplex {
    n: usize,
    m: usize,
    col_start: Vec<usize>,
    col_row: Vec<usize>,
    col_val: Vec<f64>,
    row_start: Vec<usize>,
    row_col: Vec<usize>,
    row_val: Vec<f64>,
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    pos_of: Vec<usize>,
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
    lu: LuFactor,
    dirty: bool,
    primal_dirty: bool,
    iterations: usize,
    logical_rows: Vec<usize>,
    neg_ones: Vec<f64>,
    /// Dual steepest-edge weights, indexed by variable.
    weights: Vec<f64>,
}

impl Simplex {
    pub fn new(problem: &LpProblem) -> Self {
        let n = problem.num_cols();
        let m = problem.num_rows();
        let mut counts = vec![0usize; n + 1];
        for row in &problem.rows {
            for &(j, _) in row {
                counts[j + 1] += 1;
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let nnz = counts[n];
        let mut col_row = vec![0usize; nnz];
        let mut col_val = vec![0.0; nnz];
        let mut fill = counts.clone();
        let mut row_start = Vec::with_capacity(m + 1);
        let mut row_col = Vec::with_capacity(nnz);
        let mut row_val = Vec::with_capacity(nnz);
        row_start.push(0);
        for (i, row) in problem.rows.iter().enumerate() {
            // Merge duplicate column entries.
            let mut merged: Vec<(usize, f64)> = row.clone();
            merged.sort_by_key(|&(j, _)| j);
            let mut out: Vec<(usize, f64)> = Vec::with_capacity(merged.len());
            for (j, v) in merged {
                match out.last_mut() {
                    Some(last) if last.0 == j => last.1 += v,
                    _ => out.push((j, v)),
                }
            }
            for (j, v) in out {
                if v == 0.0 {
                    continue;
                }
                col_row[fill[j]] = i;
                col_val[fill[j]] = v;
                fill[j] += 1;
                row_col.push(j);
                row_val.push(v);
            }
            row_start.push(row_col.len());
        }
        // Compact columns after dropping zero/duplicate entries.
        let mut col_start = vec![0usize; n + 1];
        let mut c_row = Vec::with_capacity(nnz);
        let mut c_val = Vec::with_capacity(nnz);
        for j in 0..n {
            for k in counts[j]..fill[j] {
                c_row.push(col_row[k]);
                c_val.push(col_val[k]);
            }
            col_start[j + 1] = c_row.len();
        }

        let mut cost = problem.objective.clone();
        cost.resize(n + m, 0.0);
        let mut lower = problem.col_lower.clone();
        lower.extend_from_slice(&problem.row_lower);
        let mut upper = problem.col_upper.clone();
        upper.extend_from_slice(&problem.row_upper);

        let mut s = Self {
            n,
            m,
            col_start,
            col_row: c_row,
            col_val: c_val,
            row_start,
            row_col,
            row_val,
            cost,
            lower,
            upper,
            state: vec![VarState::AtLower; n + m],
            basis: (n..n + m).collect(),
            pos_of: vec![usize::MAX; n + m],
            x: vec![0.0; n + m],
            y: vec![0.0; m],
            d: vec![0.0; n + m],
            lu: LuFactor::default(),
            dirty: true,
            primal_dirty: true,
            iterations: 0,
            logical_rows: (0..m).collect(),
            neg_ones: vec![-1.0; m],
            weights: vec![1.0; n + m],
        };
        for j in 0..n {
            s.state[j] = s.default_state(j);
        }
        for (p, &v) in s.basis.iter().enumerate() {
            s.state[v] = VarState::Basic;
            s.pos_of[v] = p;
        }
        s
    }

    pub fn num_cols(&self) -> usize {
        self.n
    }

    pub fn num_rows(&self) -> usize {
        self.m
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn col_bounds(&self, j: usize) -> (f64, f64) {
        (self.lower[j], self.upper[j])
    }

    fn default_state(&self, j: usize) -> VarState {
        if self.lower[j].is_finite() {
            VarState::AtLower
        } else if self.upper[j].is_finite() {
            VarState::AtUpper
        } else {
            VarState::AtZero
        }
    }

    fn fix_nonbasic_state(&mut self, j: usize) {
        let st = match self.state[j] {
            VarState::Basic => return,
            VarState::AtLower if self.lower[j].is_finite() => VarState::AtLower,
            VarState::AtUpper if self.upper[j].is_finite() => VarState::AtUpper,
            VarState::AtZero if !self.lower[j].is_finite() && !self.upper[j].is_finite() => VarState::AtZero,
            _ => self.default_state(j),
        };
        self.state[j] = st;
        self.x[j] = self.nonbasic_value(j);
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.state[j] {
            VarState::AtLower => self.lower[j],
            VarState::AtUpper => self.upper[j],
            VarState::AtZero => 0.0,
            VarState::Basic => self.x[j],
        }
    }

    /// Change the bounds of structural column `j`.
    pub fn set_col_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        assert!(j < self.n);
        self.lower[j] = lower;
        self.upper[j] = upper;
        self.fix_nonbasic_state(j);
        self.primal_dirty = true;
    }

    pub fn basis(&self) -> Basis {
        Basis {
            states: self.state.clone(),
            weights: self.weights.iter().map(|w| w.to_bits()).collect(),
        }
    }

    /// Restore a basis snapshot. Snapshots with the wrong basic count are
    /// ignored and the slack basis is used instead.
    pub fn set_basis(&mut self, basis: &Basis) {
        let basics = basis.states.iter().filter(|&&s| s == VarState::Basic).count();
        if basis.states.len() != self.n + self.m || basics != self.m {
            self.reset_to_slack_basis();
            return;
        }
        self.state = basis.states.clone();
        self.weights = basis.weights.iter().map(|&w| f64::from_bits(w)).collect();
        self.basis.clear();
        self.pos_of.iter_mut().for_each(|p| *p = usize::MAX);
        for j in 0..self.n + self.m {
            if self.state[j] == VarState::Basic {
                self.pos_of[j] = self.basis.len();
                self.basis.push(j);
            } else {
                self.fix_nonbasic_state(j);
            }
        }
        self.dirty = true;
    }

    pub fn reset_to_slack_basis(&mut self) {
        self.weights.iter_mut().for_each(|w| *w = 1.0);
        self.basis = (self.n..self.n + self.m).collect();
        self.pos_of.iter_mut().for_each(|p| *p = usize::MAX);
        for j in 0..self.n {
            self.state[j] = self.default_state(j);
            self.x[j] = self.nonbasic_value(j);
        }
        for p in 0..self.m {
            let v = self.basis[p];
            self.state[v] = VarState::Basic;
            self.pos_of[v] = p;
        }
        self.dirty = true;
    }

    fn column(&self, j: usize) -> SparseCol<'_> {
        if j < self.n {
            let (a, b) = (self.col_start[j], self.col_start[j + 1]);
            SparseCol {
                rows: &self.col_row[a..b],
                vals: &self.col_val[a..b],
            }
        } else {
            let i = j - self.n;
            SparseCol {
                rows: &self.logical_rows[i..i + 1],
                vals: &self.neg_ones[i..i + 1],
            }
        }
    }

    fn refactor(&mut self) -> Result<(), LpStatus> {
        for _attempt in 0..4 {
            let cols: Vec<SparseCol<'_>> = self.basis.iter().map(|&v| self.column(v)).collect();
            match LuFactor::factorize(self.m, &cols) {
                Ok(lu) => {
                    self.lu = lu;
                    self.recompute_primal();
                    self.dirty = false;
                    self.primal_dirty = false;
                    return Ok(());
                }
                Err(sing) => {
                    // Swap logicals of the unpivoted rows into the unpivoted positions.
                    for (&r, &p) in sing.rows.iter().zip(&sing.positions) {
                        let old = self.basis[p];
                        let logical = self.n + r;
                        if self.state[logical] == VarState::Basic {
                            continue;
                        }
                        self.state[old] = self.default_state(old);
                        self.pos_of[old] = usize::MAX;
                        self.x[old] = self.nonbasic_value(old);
                        self.basis[p] = logical;
                        self.state[logical] = VarState::Basic;
                        self.pos_of[logical] = p;
                    }
                }
            }
        }
        Err(LpStatus::NumericalFailure)
    }

    fn recompute_primal(&mut self) {
        self.primal_dirty = false;
        let mut rhs = vec![0.0; self.m];
        for j in 0..self.n + self.m {
            if self.state[j] == VarState::Basic {
                continue;
            }
            let v = self.nonbasic_value(j);
            self.x[j] = v;
            if v == 0.0 {
                continue;
            }
            let col = self.column(j);
            for (&r, &a) in col.rows.iter().zip(col.vals) {
                rhs[r] -= a * v;
            }
        }
        let mut out = vec![0.0; self.m];
        self.lu.ftran(&mut rhs, &mut out);
        for (p, &v) in self.basis.iter().enumerate() {
            self.x[v] = out[p];
        }
    }

    fn ftran_col(&self, j: usize) -> Vec<f64> {
        let mut rhs = vec![0.0; self.m];
        let col = self.column(j);
        for (&r, &a) in col.rows.iter().zip(col.vals) {
            rhs[r] = a;
        }
        let mut out = vec![0.0; self.m];
        self.lu.ftran(&mut rhs, &mut out);
        out
    }

    fn infeasibility(&self, v: usize) -> f64 {
        let x = self.x[v];
        if x < self.lower[v] - PRIMAL_TOL {
            self.lower[v] - x
        } else if x > self.upper[v] + PRIMAL_TOL {
            x - self.upper[v]
        } else {
            0.0
        }
    }

    fn primal_feasible(&self) -> bool {
        self.basis.iter().all(|&v| self.infeasibility(v) == 0.0)
    }

    /// Compute simplex multipliers and reduced costs for the given phase.
    fn compute_duals(&mut self, phase: Phase) {
        let mut cb = vec![0.0; self.m];
        for (p, &v) in self.basis.iter().enumerate() {
            cb[p] = match phase {
                Phase::Two => self.cost[v],
                Phase::One => {
                    let x = self.x[v];
                    if x < self.lower[v] - PRIMAL_TOL {
                        -1.0
                    } else if x > self.upper[v] + PRIMAL_TOL {
                        1.0
                    } else {
                        0.0
                    }
                }
            };
        }
        let mut y = vec![0.0; self.m];
        self.lu.btran(&mut cb, &mut y);
        for j in 0..self.n {
            if self.state[j] == VarState::Basic {
                self.d[j] = 0.0;
                continue;
            }
            let c = if phase == Phase::Two { self.cost[j] } else { 0.0 };
            let mut dot = 0.0;
            for k in self.col_start[j]..self.col_start[j + 1] {
                dot += y[self.col_row[k]] * self.col_val[k];
            }
            self.d[j] = c - dot;
        }
        for i in 0..self.m {
            let j = self.n + i;
            self.d[j] = if self.state[j] == VarState::Basic { 0.0 } else { y[i] };
        }
        self.y = y;
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.lower[j] == self.upper[j]
    }

    fn dual_feasible(&self) -> bool {
        (0..self.n + self.m).all(|j| {
            if self.is_fixed(j) {
                return true;
            }
            match self.state[j] {
                VarState::Basic => true,
                VarState::AtLower => self.d[j] >= -DUAL_TOL,
                VarState::AtUpper => self.d[j] <= DUAL_TOL,
                VarState::AtZero => self.d[j].abs() <= DUAL_TOL,
            }
        })
    }

    fn iteration_limit(&self) -> usize {
        50 * (self.n + self.m) + 20_000
    }

    /// Re-optimize from the current basis.
    pub fn solve(&mut self) -> LpStatus {
        if self.dirty {
            if let Err(s) = self.refactor() {
                return s;
            }
        } else if self.primal_dirty {
            self.recompute_primal();
            self.primal_dirty = false;
        }
        if !self.primal_feasible() {
            self.compute_duals(Phase::Two);
            if self.dual_feasible() {
                match self.run_dual() {
                    Ok(()) => {}
                    Err(LpStatus::Infeasible) => return LpStatus::Infeasible,
                    Err(LpStatus::IterationLimit) => return LpStatus::IterationLimit,
                    Err(_) => {
                        // Fall through to the primal method from a clean basis.
                        self.reset_to_slack_basis();
                        if let Err(s) = self.refactor() {
                            return s;
                        }
                    }
                }
            }
            if !self.primal_feasible() {
                match self.run_primal(Phase::One) {
                    Ok(()) => {}
                    Err(s) => return s,
                }
                if !self.primal_feasible() {
                    return LpStatus::Infeasible;
                }
            }
        }
        match self.run_primal(Phase::Two) {
            Ok(()) => LpStatus::Optimal,
            Err(s) => s,
        }
    }

    fn maybe_refactor(&mut self) -> Result<(), LpStatus> {
        if self.lu.num_updates() >= REFACTOR_EVERY {
            self.refactor()?;
        }
        Ok(())
    }

    fn run_primal(&mut self, phase: Phase) -> Result<(), LpStatus> {
        let mut degenerate = 0usize;
        let limit = self.iteration_limit();
        loop {
            if self.iterations > limit {
                return Err(LpStatus::IterationLimit);
            }
            self.maybe_refactor()?;
            if phase == Phase::One && self.primal_feasible() {
                return Ok(());
            }
            let bland = degenerate > DEGENERATE_BEFORE_BLAND;
            match self.primal_iteration(phase, bland)? {
                (Step::Continue, theta) => {
                    if theta > PRIMAL_TOL {
                        degenerate = 0;
                    } else {
                        degenerate += 1;
                    }
                }
                (Step::Done, _) => {
                    if phase == Phase::One || self.primal_feasible() {
                        return Ok(());
                    }
                    // Drift made the basis infeasible again; clean up.
                    self.refactor()?;
                    if self.primal_feasible() {
                        return Ok(());
                    }
                    self.run_primal(Phase::One)?;
                    if !self.primal_feasible() {
                        return Err(LpStatus::Infeasible);
                    }
                }
                (Step::Unbounded, _) => return Err(LpStatus::Unbounded),
            }
        }
    }

    fn primal_iteration(&mut self, phase: Phase, bland: bool) -> Result<(Step, f64), LpStatus> {
        self.compute_duals(phase);
        // Pricing.
        let mut entering: Option<(usize, f64)> = None;
        for j in 0..self.n + self.m {
            if self.state[j] == VarState::Basic || self.is_fixed(j) {
                continue;
            }
            let dj = self.d[j];
            let eligible = match self.state[j] {
                VarState::AtLower => dj < -DUAL_TOL,
                VarState::AtUpper => dj > DUAL_TOL,
                VarState::AtZero => dj.abs() > DUAL_TOL,
                VarState::Basic => false,
            };
            if !eligible {
                continue;
            }
            if bland {
                entering = Some((j, dj));
                break;
            }
            if entering.is_none_or(|(_, best)| dj.abs() > best.abs()) {
                entering = Some((j, dj));
            }
        }
        let Some((q, dq)) = entering else {
            return Ok((Step::Done, 0.0));
        };
        let dir = if dq < 0.0 { 1.0 } else { -1.0 };
        let alpha = self.ftran_col(q);

        // Harris two-pass ratio test.
        let limit_for = |s: &Self, p: usize, relaxed: bool| -> Option<(f64, f64)> {
            let a = alpha[p];
            if a.abs() <= PIVOT_TOL {
                return None;
            }
            let rate = -dir * a;
            let v = s.basis[p];
            let x = s.x[v];
            let (l, u) = (s.lower[v], s.upper[v]);
            let tol = if relaxed { PRIMAL_TOL } else { 0.0 };
            if rate < 0.0 {
                let bound = if phase == Phase::One && x > u + PRIMAL_TOL {
                    u
                } else if x >= l - PRIMAL_TOL {
                    l
                } else {
                    return None;
                };
                if !bound.is_finite() {
                    return None;
                }
                Some((((x - bound) + tol) / (-rate), bound))
            } else {
                let bound = if phase == Phase::One && x < l - PRIMAL_TOL {
                    l
                } else if x <= u + PRIMAL_TOL {
                    u
                } else {
                    return None;
                };
                if !bound.is_finite() {
                    return None;
                }
                Some((((bound - x) + tol) / rate, bound))
            }
        };
        let mut theta_max = f64::INFINITY;
        for p in 0..self.m {
            if let Some((t, _)) = limit_for(self, p, true) {
                theta_max = theta_max.min(t);
            }
        }
        let mut leave: Option<(usize, f64, f64)> = None;
        if theta_max.is_finite() {
            for p in 0..self.m {
                if let Some((t, bound)) = limit_for(self, p, false) {
                    if t <= theta_max {
                        let better = match leave {
                            None => true,
                            Some((bp, _, _)) => {
                                if bland {
                                    self.basis[p] < self.basis[bp]
                                } else {
                                    alpha[p].abs() > alpha[bp].abs()
                                }
                            }
                        };
                        if better {
                            leave = Some((p, t.max(0.0), bound));
                        }
                    }
                }
            }
        }
        let range = self.upper[q] - self.lower[q];
        let flip = range.is_finite() && leave.is_none_or(|(_, t, _)| range <= t);
        if flip {
            // Entering variable moves to its opposite bound.
            for p in 0..self.m {
                if alpha[p] != 0.0 {
                    let v = self.basis[p];
                    self.x[v] -= dir * range * alpha[p];
                }
            }
            if dir > 0.0 {
                self.state[q] = VarState::AtUpper;
                self.x[q] = self.upper[q];
            } else {
                self.state[q] = VarState::AtLower;
                self.x[q] = self.lower[q];
            }
            self.iterations += 1;
            return Ok((Step::Continue, range));
        }
        let Some((p, theta, bound)) = leave else {
            return Ok((Step::Unbounded, 0.0));
        };
        self.pivot(q, p, &alpha, dir * theta, bound);
        Ok((Step::Continue, theta))
    }

    /// Bring `q` into the basis at position `p`, moving `q` by `delta` and
    /// parking the leaving variable at `bound`.
    fn pivot(&mut self, q: usize, p: usize, alpha: &[f64], delta: f64, bound: f64) {
        for i in 0..self.m {
            if alpha[i] != 0.0 {
                let v = self.basis[i];
                self.x[v] -= delta * alpha[i];
            }
        }
        self.x[q] += delta;
        let leaving = self.basis[p];
        self.x[leaving] = bound;
        self.state[leaving] = if bound == self.lower[leaving] {
            VarState::AtLower
        } else {
            VarState::AtUpper
        };
        self.pos_of[leaving] = usize::MAX;
        self.basis[p] = q;
        self.pos_of[q] = p;
        self.state[q] = VarState::Basic;
        self.weights[q] = self.weights[q].max(1.0);
        self.lu.update(p, alpha);
        self.iterations += 1;
    }

    /// Deterministic cost shift in `[0.5, 1] * scale` used to break dual
    /// degeneracy.
    fn perturbation(&self, j: usize) -> f64 {
        let h = (j as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 40;
        let u = 0.5 + 0.5 * (h as f64 / (1u64 << 24) as f64);
        5e-7 * (1.0 + self.cost[j].abs()) * u
    }

    /// Dual simplex on slightly perturbed costs; the caller finishes with a
    /// primal pass on the true costs.
    fn run_dual(&mut self) -> Result<(), LpStatus> {
        let saved = self.cost.clone();
        for j in 0..self.n {
            if self.is_fixed(j) {
                continue;
            }
            let e = self.perturbation(j);
            match self.state[j] {
                VarState::AtLower => self.cost[j] += e,
                VarState::AtUpper => self.cost[j] -= e,
                _ => {}
            }
        }
        let r = self.dual_loop();
        self.cost = saved;
        r
    }

    fn dual_loop(&mut self) -> Result<(), LpStatus> {
        let limit = self.iteration_limit();
        let (n, m) = (self.n, self.m);
        let mut fresh = false;
        let mut rho = vec![0.0; m];
        let mut tau = vec![0.0; m];
        let mut alpha_row = vec![0.0; n + m];
        loop {
            if self.iterations > limit {
                return Err(LpStatus::IterationLimit);
            }
            if self.lu.num_updates() >= REFACTOR_EVERY {
                self.refactor()?;
                fresh = false;
            }
            if !fresh {
                self.compute_duals(Phase::Two);
                fresh = true;
            }
            // Leaving row: dual steepest edge.
            let mut leave: Option<(usize, f64)> = None;
            for p in 0..m {
                let v = self.basis[p];
                let inf = self.infeasibility(v);
                if inf > 0.0 {
                    let score = inf * inf / self.weights[v].max(1e-12);
                    if leave.is_none_or(|(_, b)| score > b) {
                        leave = Some((p, score));
                    }
                }
            }
            let Some((p, _)) = leave else {
                return Ok(());
            };
            let v = self.basis[p];
            let below = self.x[v] < self.lower[v];
            let target = if below { self.lower[v] } else { self.upper[v] };

            let mut unit = vec![0.0; m];
            unit[p] = 1.0;
            self.lu.btran(&mut unit, &mut rho);
            alpha_row.iter_mut().for_each(|a| *a = 0.0);
            for (i, &ri) in rho.iter().enumerate() {
                if ri == 0.0 {
                    continue;
                }
                for k in self.row_start[i]..self.row_start[i + 1] {
                    alpha_row[self.row_col[k]] += ri * self.row_val[k];
                }
                alpha_row[n + i] = -ri;
            }

            let eligible = |s: &Self, j: usize| -> Option<f64> {
                if s.state[j] == VarState::Basic || s.is_fixed(j) {
                    return None;
                }
                let a = alpha_row[j];
                if a.abs() <= PIVOT_TOL {
                    return None;
                }
                let ok = match s.state[j] {
                    VarState::AtLower => (below && a < 0.0) || (!below && a > 0.0),
                    VarState::AtUpper => (below && a > 0.0) || (!below && a < 0.0),
                    VarState::AtZero => true,
                    VarState::Basic => false,
                };
                if !ok {
                    return None;
                }
                let dj = match s.state[j] {
                    VarState::AtLower => s.d[j].max(0.0),
                    VarState::AtUpper => (-s.d[j]).max(0.0),
                    _ => s.d[j].abs(),
                };
                Some(dj)
            };
            let mut bound = f64::INFINITY;
            for j in 0..n + m {
                if let Some(dj) = eligible(self, j) {
                    bound = bound.min((dj + DUAL_TOL) / alpha_row[j].abs());
                }
            }
            if !bound.is_finite() {
                return Err(LpStatus::Infeasible);
            }
            let mut enter: Option<usize> = None;
            for j in 0..n + m {
                if let Some(dj) = eligible(self, j) {
                    if dj / alpha_row[j].abs() <= bound && enter.is_none_or(|e| alpha_row[j].abs() > alpha_row[e].abs())
                    {
                        enter = Some(j);
                    }
                }
            }
            let q = enter.expect("candidate exists when bound is finite");
            let alpha = self.ftran_col(q);
            let piv = alpha[p];
            if piv.abs() <= PIVOT_TOL || (piv - alpha_row[q]).abs() > 1e-6 * (1.0 + piv.abs()) {
                if self.lu.num_updates() == 0 {
                    return Err(LpStatus::NumericalFailure);
                }
                self.refactor()?;
                fresh = false;
                continue;
            }

            // Steepest-edge weights for the new basis.
            let wp: f64 = rho.iter().map(|r| r * r).sum();
            let mut rhs = rho.clone();
            self.lu.ftran(&mut rhs, &mut tau);
            for i in 0..m {
                if i == p || alpha[i] == 0.0 {
                    continue;
                }
                let r = alpha[i] / piv;
                let b = self.basis[i];
                self.weights[b] = (self.weights[b] - 2.0 * r * tau[i] + r * r * wp).max(1e-6);
            }

            // Reduced costs move along the pivot row.
            let theta_d = self.d[q] / alpha_row[q];
            for j in 0..n + m {
                if self.state[j] != VarState::Basic && alpha_row[j] != 0.0 {
                    self.d[j] -= theta_d * alpha_row[j];
                }
            }

            let delta = (self.x[v] - target) / piv;
            self.pivot(q, p, &alpha, delta, target);
            self.d[q] = 0.0;
            self.d[v] = -theta_d;
            self.weights[q] = (wp / (piv * piv)).max(1e-6);
        }
    }

    pub fn objective_value(&self) -> f64 {
        (0..self.n).map(|j| self.cost[j] * self.x[j]).sum()
    }

    pub fn solution(&mut self, status: LpStatus) -> LpSolution {
        if status == LpStatus::Optimal {
            self.compute_duals(Phase::Two);
        }
        LpSolution {
            status,
            x: self.x[..self.n].to_vec(),
            row_activity: self.x[self.n..].to_vec(),
            duals: self.y.clone(),
            objective: self.objective_value(),
            iterations: self.iterations,
        }
    }

    /// Largest violation of `A x = r` and of the variable bounds.
    pub fn primal_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.m {
            let mut act = 0.0;
            for k in self.row_start[i]..self.row_start[i + 1] {
                act += self.row_val[k] * self.x[self.row_col[k]];
            }
            worst = worst.max((act - self.x[self.n + i]).abs());
        }
        for j in 0..self.n + self.m {
            worst = worst.max(self.lower[j] - self.x[j]).max(self.x[j] - self.upper[j]);
        }
        worst
    }

    /// Largest wrong-signed reduced cost of the current basis.
    pub fn dual_residual(&mut self) -> f64 {
        self.compute_duals(Phase::Two);
        let mut worst = 0.0f64;
        for j in 0..self.n + self.m {
            if self.is_fixed(j) {
                continue;
            }
            let v = match self.state[j] {
                VarState::Basic => 0.0,
                VarState::AtLower => (-self.d[j]).max(0.0),
                VarState::AtUpper => self.d[j].max(0.0),
                VarState::AtZero => self.d[j].abs(),
            };
            worst = worst.max(v);
        }
        worst
    }
}

/// Solve a standalone LP from the slack basis.
pub fn solve_lp(problem: &LpProblem) -> LpSolution {
    let mut s = Simplex::new(problem);
    let status = s.solve();
    s.solution(status)
}
