//! Constant-current / constant-voltage charging profile.
//!
//! The continuous model charges at `p_cc` until the switching level
//! `eta * E`, then follows `ds/dt = -alpha * s + b_cv`. Its exact
//! discretization is affine per phase, and the optimizer uses the concave
//! bound `min(b_bar_cc, (a_bar_cv - 1) s + b_bar_cv)` on the per-step gain.
//! Units: hours, kWh, kW.

use thiserror::Error;

use crate::scenario::{Bus, ChargerType};

#[derive(Debug, Error, PartialEq)]
pub enum ChargeModelError {
    #[error("negative duration {0}")]
    NegativeDuration(f64),
    #[error("error target {0} needs a step below {1} h")]
    StepUnderflow(f64, f64),
    #[error("error target must be positive, got {0}")]
    BadTarget(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousChargeParams {
    pub a_cc: f64,
    pub b_cc: f64,
    pub a_cv: f64,
    pub b_cv: f64,
    /// Time to reach the switching level from empty, hours.
    pub t_cc: f64,
    /// Switching level `eta * E`, kWh.
    pub eta_e: f64,
    pub capacity: f64,
}

impl ContinuousChargeParams {
    pub fn p_cc(&self) -> f64 {
        self.b_cc
    }

    pub fn alpha(&self) -> f64 {
        -self.a_cv
    }

    /// Level approached by the CV phase.
    pub fn cv_asymptote(&self) -> f64 {
        self.b_cv / self.alpha()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteChargeParams {
    pub a_bar_cc: f64,
    pub b_bar_cc: f64,
    pub a_bar_cv: f64,
    pub b_bar_cv: f64,
    /// Step length in hours.
    pub delta: f64,
}

pub fn continuous_params(p_cc: f64, alpha: f64, eta: f64, capacity: f64) -> ContinuousChargeParams {
    let t_cc = eta * capacity / p_cc;
    ContinuousChargeParams {
        a_cc: 0.0,
        b_cc: p_cc,
        a_cv: -alpha,
        b_cv: alpha * p_cc * t_cc + p_cc,
        t_cc,
        eta_e: eta * capacity,
        capacity,
    }
}

pub fn params_for(charger: &ChargerType, bus: &Bus) -> ContinuousChargeParams {
    continuous_params(charger.p_cc, bus.alpha_for(charger), bus.eta, bus.capacity_kwh)
}

pub fn discretize_params(c: &ContinuousChargeParams, delta: f64) -> DiscreteChargeParams {
    let a_bar_cv = (c.a_cv * delta).exp();
    DiscreteChargeParams {
        a_bar_cc: 1.0,
        b_bar_cc: c.b_cc * delta,
        a_bar_cv,
        // (e^{a d} - 1) / a, written with expm1 for small steps.
        b_bar_cv: (c.a_cv * delta).exp_m1() / c.a_cv * c.b_cv,
        delta,
    }
}

/// Concave gain bound used by the optimizer, floored at zero.
pub fn gain_upper_bound(s: f64, d: &DiscreteChargeParams) -> f64 {
    d.b_bar_cc.min((d.a_bar_cv - 1.0) * s + d.b_bar_cv).max(0.0)
}

/// Two-phase gain of the exact discrete system, floored at zero.
pub fn ideal_gain_bound(s: f64, d: &DiscreteChargeParams, c: &ContinuousChargeParams) -> f64 {
    if s < c.eta_e {
        d.b_bar_cc
    } else {
        ((d.a_bar_cv - 1.0) * s + d.b_bar_cv).max(0.0)
    }
}

/// Level where the two lines of the concave bound intersect.
pub fn switching_point(d: &DiscreteChargeParams, c: &ContinuousChargeParams) -> f64 {
    let p = c.p_cc();
    p * d.delta / (d.a_bar_cv - 1.0) + p * c.t_cc + p / c.alpha()
}

/// `1 - (1 - e^{-z}) / z`, accurate for small `z`.
fn error_factor(z: f64) -> f64 {
    if z < 1e-4 {
        z / 2.0 - z * z / 6.0 + z * z * z / 24.0
    } else {
        1.0 + (-z).exp_m1() / z
    }
}

/// Largest gap between the two-phase gain and the concave bound.
pub fn max_gain_error(d: &DiscreteChargeParams, c: &ContinuousChargeParams) -> f64 {
    error_factor(c.alpha() * d.delta) * d.b_bar_cc
}

const STEP_FLOOR_H: f64 = 1e-9;
const STEP_CEILING_H: f64 = 10.0;

/// Largest step (hours) whose maximum gain error stays within `eps`.
pub fn step_size_for_error(c: &ContinuousChargeParams, eps: f64) -> Result<f64, ChargeModelError> {
    if !(eps > 0.0) {
        return Err(ChargeModelError::BadTarget(eps));
    }
    let err = |delta: f64| max_gain_error(&discretize_params(c, delta), c);
    if err(STEP_CEILING_H) <= eps {
        return Ok(STEP_CEILING_H);
    }
    if err(STEP_FLOOR_H) > eps {
        return Err(ChargeModelError::StepUnderflow(eps, STEP_FLOOR_H));
    }
    let (mut lo, mut hi) = (STEP_FLOOR_H, STEP_CEILING_H);
    // Geometric bisection keeps `err(lo) <= eps < err(hi)`.
    while hi - lo > 1e-6_f64.min(0.5 * lo) {
        let mid = (lo * hi).sqrt();
        let mid = if mid <= lo || mid >= hi { 0.5 * (lo + hi) } else { mid };
        if err(mid) <= eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Charge level after charging at full rate for `duration` hours from `s0`.
/// The result never drops below `s0` and never exceeds the capacity.
pub fn simulate_exact(s0: f64, duration: f64, c: &ContinuousChargeParams) -> Result<f64, ChargeModelError> {
    if duration < 0.0 {
        return Err(ChargeModelError::NegativeDuration(duration));
    }
    let p = c.p_cc();
    let mut s = s0;
    let mut left = duration;
    if s < c.eta_e {
        let to_switch = (c.eta_e - s) / p;
        if left <= to_switch {
            return Ok((s + p * left).min(c.capacity).max(s0));
        }
        s = c.eta_e;
        left -= to_switch;
    }
    let target = c.cv_asymptote();
    let cv = target + (s - target) * (-c.alpha() * left).exp();
    Ok(cv.max(s0).min(c.capacity.max(s0)))
}

/// Energy attainable over `duration` hours from `s0`.
pub fn attainable_gain(s0: f64, duration: f64, c: &ContinuousChargeParams) -> f64 {
    simulate_exact(s0, duration, c).map_or(0.0, |s| s - s0)
}
