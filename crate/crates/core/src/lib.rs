pub mod charge_model;
pub mod graph;
pub mod milp;
pub mod receding_horizon;
pub mod scenario;
pub mod simulation;
pub mod solver;

#[cfg(test)]
pub(crate) mod testutil;
