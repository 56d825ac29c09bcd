//! CPLEX-style LP text export and a reader for the subset it writes.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{MilpError, MilpModel, Relation};

const TERMS_PER_LINE: usize = 8;

fn write_terms(out: &mut String, terms: &[(usize, f64)], names: &[String]) {
    for (n, &(i, a)) in terms.iter().filter(|(_, a)| *a != 0.0).enumerate() {
        if n > 0 && n % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let sign = if a < 0.0 { '-' } else { '+' };
        let _ = write!(out, " {sign} {} {}", a.abs(), names[i]);
    }
}

pub fn export_lp(model: &MilpModel) -> String {
    let names: Vec<String> = model.variables.iter().map(|v| v.name.clone()).collect();
    let mut out = String::from("Minimize\n obj:");
    let obj: Vec<(usize, f64)> = model.variables.iter().enumerate().map(|(i, v)| (i, v.cost)).collect();
    write_terms(&mut out, &obj, &names);
    out.push('\n');
    if model.variables.is_empty() && model.constraints.is_empty() {
        out.push_str("End\n");
        return out;
    }
    out.push_str("Subject To\n");
    for c in &model.constraints {
        let _ = write!(out, " {}:", c.name);
        write_terms(&mut out, &c.coeffs, &names);
        if c.coeffs.iter().all(|(_, a)| *a == 0.0) {
            let _ = write!(out, " + 0 {}", names.first().map(String::as_str).unwrap_or("x"));
        }
        let _ = writeln!(out, " {} {}", c.relation.symbol(), c.rhs);
    }
    out.push_str("Bounds\n");
    for v in &model.variables {
        let (lo, hi) = (v.lower, v.upper);
        let _ = if lo == hi {
            writeln!(out, " {} = {}", v.name, lo)
        } else if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
            writeln!(out, " {} free", v.name)
        } else if hi == f64::INFINITY {
            writeln!(out, " {} >= {}", v.name, lo)
        } else if lo == f64::NEG_INFINITY {
            writeln!(out, " -inf <= {} <= {}", v.name, hi)
        } else {
            writeln!(out, " {} <= {} <= {}", lo, v.name, hi)
        };
    }
    let ints: Vec<&str> = model
        .variables
        .iter()
        .filter(|v| v.integer)
        .map(|v| v.name.as_str())
        .collect();
    if !ints.is_empty() {
        out.push_str("Generals\n");
        for chunk in ints.chunks(TERMS_PER_LINE) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
    }
    out.push_str("End\n");
    out
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LpDocument {
    pub names: Vec<String>,
    pub objective: Vec<f64>,
    pub rows: Vec<(String, Vec<(usize, f64)>, Relation, f64)>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub integer: Vec<bool>,
    index: HashMap<String, usize>,
}

impl LpDocument {
    fn var(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        self.index.insert(name.to_string(), self.names.len());
        self.names.push(name.to_string());
        self.objective.push(0.0);
        self.lower.push(0.0);
        self.upper.push(f64::INFINITY);
        self.integer.push(false);
        self.names.len() - 1
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Objective,
    Constraints,
    Bounds,
    Generals,
}

fn parse_num(tok: &str, line: usize) -> Result<f64, MilpError> {
    match tok {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        _ => tok.parse().map_err(|_| MilpError::LpParse {
            line,
            msg: format!("expected a number, got {tok:?}"),
        }),
    }
}

/// Parses `[+|-] coef name ...` into terms.
fn parse_terms(toks: &[(usize, String)], doc: &mut LpDocument) -> Result<Vec<(usize, f64)>, MilpError> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        let (line, t) = (&toks[i].0, toks[i].1.as_str());
        let sign = match t {
            "+" => 1.0,
            "-" => -1.0,
            _ => {
                return Err(MilpError::LpParse {
                    line: *line,
                    msg: format!("expected sign, got {t:?}"),
                })
            }
        };
        let (coef, name) = match (toks.get(i + 1), toks.get(i + 2)) {
            (Some(c), Some(n)) => (parse_num(&c.1, c.0)?, n.1.clone()),
            _ => {
                return Err(MilpError::LpParse {
                    line: *line,
                    msg: "truncated term".into(),
                })
            }
        };
        let v = doc.var(&name);
        match out.iter_mut().find(|(j, _)| *j == v) {
            Some(t) => t.1 += sign * coef,
            None => out.push((v, sign * coef)),
        }
        i += 3;
    }
    Ok(out)
}

/// Reads the LP subset written by [`export_lp`]. Variables are numbered in
/// the order of the Bounds section, then by first appearance.
pub fn parse_lp(text: &str) -> Result<LpDocument, MilpError> {
    let mut doc = LpDocument::default();
    // Pre-register names from the Bounds section so ordering follows it.
    let mut in_bounds = false;
    for raw in text.lines() {
        let l = raw.trim();
        match l.to_ascii_lowercase().as_str() {
            "bounds" => in_bounds = true,
            "generals" | "end" | "subject to" | "minimize" => in_bounds = false,
            _ if in_bounds && !l.is_empty() => {
                let toks: Vec<&str> = l.split_whitespace().collect();
                let name = match toks.as_slice() {
                    [_, "<=", n, "<=", _] => n,
                    [n, ..] => n,
                    [] => continue,
                };
                doc.var(name);
            }
            _ => {}
        }
    }

    let mut section = Section::None;
    let mut pending: Vec<(usize, String)> = Vec::new();
    let mut pending_name: Option<String> = None;
    let flush = |section: Section,
                 name: &mut Option<String>,
                 toks: &mut Vec<(usize, String)>,
                 doc: &mut LpDocument|
     -> Result<(), MilpError> {
        let Some(n) = name.take() else {
            return Ok(());
        };
        let t = std::mem::take(toks);
        match section {
            Section::Objective => {
                for (v, a) in parse_terms(&t, doc)? {
                    doc.objective[v] += a;
                }
            }
            Section::Constraints => {
                let pos = t
                    .iter()
                    .position(|(_, s)| s == "<=" || s == ">=" || s == "=")
                    .ok_or_else(|| MilpError::LpParse {
                        line: t.first().map_or(0, |x| x.0),
                        msg: format!("row {n} has no relation"),
                    })?;
                let rel = match t[pos].1.as_str() {
                    "<=" => Relation::Le,
                    ">=" => Relation::Ge,
                    _ => Relation::Eq,
                };
                let rhs_tok = t.get(pos + 1).ok_or_else(|| MilpError::LpParse {
                    line: t[pos].0,
                    msg: format!("row {n} has no right-hand side"),
                })?;
                let rhs = parse_num(&rhs_tok.1, rhs_tok.0)?;
                let mut terms = parse_terms(&t[..pos], doc)?;
                terms.retain(|(_, a)| *a != 0.0);
                doc.rows.push((n, terms, rel, rhs));
            }
            _ => {}
        }
        Ok(())
    };

    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('\\') {
            continue;
        }
        let next = match l.to_ascii_lowercase().as_str() {
            "minimize" => Some(Section::Objective),
            "subject to" => Some(Section::Constraints),
            "bounds" => Some(Section::Bounds),
            "generals" => Some(Section::Generals),
            "end" => Some(Section::None),
            _ => None,
        };
        if let Some(s) = next {
            flush(section, &mut pending_name, &mut pending, &mut doc)?;
            section = s;
            continue;
        }
        match section {
            Section::Objective | Section::Constraints => {
                for tok in l.split_whitespace() {
                    if let Some(name) = tok.strip_suffix(':') {
                        flush(section, &mut pending_name, &mut pending, &mut doc)?;
                        pending_name = Some(name.to_string());
                    } else {
                        pending.push((line, tok.to_string()));
                    }
                }
            }
            Section::Bounds => {
                let toks: Vec<&str> = l.split_whitespace().collect();
                match toks.as_slice() {
                    [n, "free"] => {
                        let v = doc.var(n);
                        doc.lower[v] = f64::NEG_INFINITY;
                        doc.upper[v] = f64::INFINITY;
                    }
                    [n, "=", x] => {
                        let v = doc.var(n);
                        let x = parse_num(x, line)?;
                        doc.lower[v] = x;
                        doc.upper[v] = x;
                    }
                    [n, ">=", x] => {
                        let v = doc.var(n);
                        doc.lower[v] = parse_num(x, line)?;
                    }
                    [n, "<=", x] => {
                        let v = doc.var(n);
                        doc.upper[v] = parse_num(x, line)?;
                    }
                    [lo, "<=", n, "<=", hi] => {
                        let v = doc.var(n);
                        doc.lower[v] = parse_num(lo, line)?;
                        doc.upper[v] = parse_num(hi, line)?;
                    }
                    _ => {
                        return Err(MilpError::LpParse {
                            line,
                            msg: format!("unrecognized bound {l:?}"),
                        })
                    }
                }
            }
            Section::Generals => {
                for n in l.split_whitespace() {
                    let v = doc.var(n);
                    doc.integer[v] = true;
                }
            }
            Section::None => {
                return Err(MilpError::LpParse {
                    line,
                    msg: "text outside any section".into(),
                })
            }
        }
    }
    flush(section, &mut pending_name, &mut pending, &mut doc)?;
    Ok(doc)
}

impl LpDocument {
    /// True when the document encodes exactly `model`, matching by name.
    pub fn matches(&self, model: &MilpModel) -> bool {
        document_matches(self, model)
    }
}

fn document_matches(doc: &LpDocument, model: &MilpModel) -> bool {
    if doc.names.len() != model.variables.len() || doc.rows.len() != model.constraints.len() {
        return false;
    }
    let pos: HashMap<&str, usize> = doc.names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    for v in &model.variables {
        let Some(&i) = pos.get(v.name.as_str()) else {
            return false;
        };
        if doc.objective[i] != v.cost
            || doc.lower[i] != v.lower
            || doc.upper[i] != v.upper
            || doc.integer[i] != v.integer
        {
            return false;
        }
    }
    for (row, c) in doc.rows.iter().zip(&model.constraints) {
        let mut want: Vec<(usize, f64)> = c
            .coeffs
            .iter()
            .filter(|(_, a)| *a != 0.0)
            .map(|&(i, a)| (pos[model.variables[i].name.as_str()], a))
            .collect();
        want.sort_by_key(|t| t.0);
        let mut got = row.1.clone();
        got.sort_by_key(|t| t.0);
        if row.0 != c.name || got != want || row.2 != c.relation || row.3 != c.rhs {
            return false;
        }
    }
    true
}
