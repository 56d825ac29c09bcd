//! Sparse LU factorization of a simplex basis with product-form updates.
//!
//! The basis is factored with a right-looking Markowitz elimination
//! (singletons first, threshold pivoting on the remaining nucleus). Column
//! replacements after each simplex pivot are appended as eta matrices until
//! the next refactorization.

/// Sparse column given as parallel row-index / value slices.
pub(crate) struct SparseCol<'a> {
    pub rows: &'a [usize],
    pub vals: &'a [f64],
}

#[derive(Debug, Clone)]
struct LowerEta {
    pivot_row: usize,
    entries: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
struct UpperRow {
    row: usize,
    pos: usize,
    diag: f64,
    entries: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
struct UpdateEta {
    pos: usize,
    pivot: f64,
    entries: Vec<(usize, f64)>,
}

/// Positions and rows left without a pivot when the basis is singular.
#[derive(Debug, Clone)]
pub(crate) struct Singular {
    pub rows: Vec<usize>,
    pub positions: Vec<usize>,
}

const DROP_TOL: f64 = 1e-14;
const PIVOT_ABS_TOL: f64 = 1e-11;
const THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, Default)]
pub(crate) struct LuFactor {
    m: usize,
    lower: Vec<LowerEta>,
    upper: Vec<UpperRow>,
    updates: Vec<UpdateEta>,
}

impl LuFactor {
    pub fn num_updates(&self) -> usize {
        self.updates.len()
    }

    /// Factor the basis whose column at position `p` is `columns[p]`.
    pub fn factorize(m: usize, columns: &[SparseCol<'_>]) -> Result<Self, Singular> {
        debug_assert_eq!(columns.len(), m);
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        let mut col_rows: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (p, col) in columns.iter().enumerate() {
            for (&r, &v) in col.rows.iter().zip(col.vals) {
                if v.abs() > DROP_TOL {
                    rows[r].push((p, v));
                    col_rows[p].push(r);
                }
            }
        }
        let mut row_done = vec![false; m];
        let mut col_done = vec![false; m];
        let mut col_stack: Vec<usize> = (0..m).filter(|&c| col_rows[c].len() == 1).collect();
        col_stack.reverse();
        let mut row_stack: Vec<usize> = (0..m).filter(|&r| rows[r].len() == 1).collect();
        row_stack.reverse();

        let mut lower = Vec::new();
        let mut upper = Vec::with_capacity(m);
        let mut work = vec![0.0f64; m];
        let mut in_work = vec![false; m];

        for _ in 0..m {
            let pivot = Self::pick_pivot(&rows, &col_rows, &row_done, &col_done, &mut col_stack, &mut row_stack);
            let Some((r, c)) = pivot else {
                let rows_left = (0..m).filter(|&r| !row_done[r]).collect();
                let positions = (0..m).filter(|&c| !col_done[c]).collect();
                return Err(Singular {
                    rows: rows_left,
                    positions,
                });
            };
            let pivot_val = rows[r]
                .iter()
                .find(|&&(cc, _)| cc == c)
                .map(|&(_, v)| v)
                .expect("pivot entry present");
            row_done[r] = true;
            col_done[c] = true;

            let pivot_row: Vec<(usize, f64)> = rows[r].clone();
            // Detach the pivot row from the column lists.
            for &(cc, _) in &pivot_row {
                if let Some(idx) = col_rows[cc].iter().position(|&x| x == r) {
                    col_rows[cc].swap_remove(idx);
                }
            }
            let elim_rows: Vec<usize> = col_rows[c].clone();
            col_rows[c].clear();

            let mut eta = LowerEta {
                pivot_row: r,
                entries: Vec::with_capacity(elim_rows.len()),
            };
            for i in elim_rows {
                let a_ic = match rows[i].iter().find(|&&(cc, _)| cc == c) {
                    Some(&(_, v)) => v,
                    None => continue,
                };
                let mult = a_ic / pivot_val;
                eta.entries.push((i, mult));
                // Scatter row i, subtract mult * pivot row, gather.
                for &(cc, v) in &rows[i] {
                    work[cc] = v;
                    in_work[cc] = true;
                }
                let mut fill = Vec::new();
                for &(cc, v) in &pivot_row {
                    if cc == c {
                        continue;
                    }
                    if in_work[cc] {
                        work[cc] -= mult * v;
                    } else {
                        work[cc] = -mult * v;
                        in_work[cc] = true;
                        fill.push(cc);
                    }
                }
                let mut new_row = Vec::with_capacity(rows[i].len() + fill.len());
                for &(cc, _) in &rows[i] {
                    if cc == c {
                        in_work[cc] = false;
                        continue;
                    }
                    let v = work[cc];
                    in_work[cc] = false;
                    if v.abs() > DROP_TOL {
                        new_row.push((cc, v));
                    } else if let Some(idx) = col_rows[cc].iter().position(|&x| x == i) {
                        col_rows[cc].swap_remove(idx);
                        if col_rows[cc].len() == 1 {
                            col_stack.push(cc);
                        }
                    }
                }
                for cc in fill {
                    let v = work[cc];
                    in_work[cc] = false;
                    if v.abs() > DROP_TOL {
                        new_row.push((cc, v));
                        col_rows[cc].push(i);
                    }
                }
                rows[i] = new_row;
                if rows[i].len() == 1 {
                    row_stack.push(i);
                }
            }
            if !eta.entries.is_empty() {
                lower.push(eta);
            }
            for &(cc, _) in &pivot_row {
                if cc != c && !col_done[cc] && col_rows[cc].len() == 1 {
                    col_stack.push(cc);
                }
            }
            let entries = pivot_row.into_iter().filter(|&(cc, _)| cc != c).collect();
            upper.push(UpperRow {
                row: r,
                pos: c,
                diag: pivot_val,
                entries,
            });
            rows[r].clear();
        }
        Ok(Self {
            m,
            lower,
            upper,
            updates: Vec::new(),
        })
    }

    fn pick_pivot(
        rows: &[Vec<(usize, f64)>],
        col_rows: &[Vec<usize>],
        row_done: &[bool],
        col_done: &[bool],
        col_stack: &mut Vec<usize>,
        row_stack: &mut Vec<usize>,
    ) -> Option<(usize, usize)> {
        let value =
            |r: usize, c: usize| -> f64 { rows[r].iter().find(|&&(cc, _)| cc == c).map(|&(_, v)| v).unwrap_or(0.0) };
        let col_max = |c: usize| -> f64 { col_rows[c].iter().map(|&r| value(r, c).abs()).fold(0.0, f64::max) };
        while let Some(c) = col_stack.pop() {
            if col_done[c] || col_rows[c].len() != 1 {
                continue;
            }
            let r = col_rows[c][0];
            if value(r, c).abs() > PIVOT_ABS_TOL {
                return Some((r, c));
            }
        }
        while let Some(r) = row_stack.pop() {
            if row_done[r] || rows[r].len() != 1 {
                continue;
            }
            let (c, v) = rows[r][0];
            if v.abs() > PIVOT_ABS_TOL && v.abs() >= THRESHOLD * col_max(c) {
                return Some((r, c));
            }
        }
        // Markowitz search over the nucleus.
        let mut best: Option<(usize, usize, usize, f64)> = None;
        for c in 0..col_rows.len() {
            if col_done[c] || col_rows[c].is_empty() {
                continue;
            }
            let cc = col_rows[c].len();
            let cmax = col_max(c);
            for &r in &col_rows[c] {
                let v = value(r, c).abs();
                if v <= PIVOT_ABS_TOL || v < THRESHOLD * cmax {
                    continue;
                }
                let cost = (rows[r].len() - 1) * (cc - 1);
                let better = match best {
                    None => true,
                    Some((_, _, bc, bv)) => cost < bc || (cost == bc && v > bv * (1.0 + 1e-12)),
                };
                if better {
                    best = Some((r, c, cost, v));
                }
            }
            if let Some((_, _, 0, _)) = best {
                break;
            }
        }
        best.map(|(r, c, _, _)| (r, c))
    }

    /// Solve `B x = b`. `b` is indexed by row and overwritten; the result is
    /// indexed by basis position.
    pub fn ftran(&self, b: &mut [f64], out: &mut [f64]) {
        for eta in &self.lower {
            let br = b[eta.pivot_row];
            if br != 0.0 {
                for &(i, l) in &eta.entries {
                    b[i] -= l * br;
                }
            }
        }
        for u in self.upper.iter().rev() {
            let mut acc = b[u.row];
            for &(p, v) in &u.entries {
                acc -= v * out[p];
            }
            out[u.pos] = acc / u.diag;
        }
        for eta in &self.updates {
            let xp = out[eta.pos] / eta.pivot;
            if xp != 0.0 {
                for &(i, a) in &eta.entries {
                    out[i] -= a * xp;
                }
            }
            out[eta.pos] = xp;
        }
        debug_assert_eq!(out.len(), self.m);
    }

    /// Solve `y^T B = c^T`. `c` is indexed by basis position and overwritten;
    /// the result is indexed by row.
    pub fn btran(&self, c: &mut [f64], out: &mut [f64]) {
        for eta in self.updates.iter().rev() {
            let mut acc = c[eta.pos];
            for &(i, a) in &eta.entries {
                acc -= c[i] * a;
            }
            c[eta.pos] = acc / eta.pivot;
        }
        for u in &self.upper {
            let z = c[u.pos] / u.diag;
            out[u.row] = z;
            if z != 0.0 {
                for &(p, v) in &u.entries {
                    c[p] -= v * z;
                }
            }
        }
        for eta in self.lower.iter().rev() {
            let mut acc = out[eta.pivot_row];
            for &(i, l) in &eta.entries {
                acc -= l * out[i];
            }
            out[eta.pivot_row] = acc;
        }
    }

    /// Record the replacement of the basis column at `pos` by a column whose
    /// FTRAN image is `alpha`.
    pub fn update(&mut self, pos: usize, alpha: &[f64]) {
        let entries = alpha
            .iter()
            .enumerate()
            .filter(|&(i, &a)| i != pos && a.abs() > DROP_TOL)
            .map(|(i, &a)| (i, a))
            .collect();
        self.updates.push(UpdateEta {
            pos,
            pivot: alpha[pos],
            entries,
        });
    }
}
