//! Linear and mixed-integer programming engine.

mod bnb;
mod lp;
mod lu;

pub use bnb::{max_violation, relative_gap, solve_mip, MipOptions, MipProblem, MipResult, MipStatus};
pub use lp::{solve_lp, Basis, LpProblem, LpSolution, LpStatus, Simplex, VarState};

pub use crate::milp::{build_warm_start, validate_solution, ResidualReport};
