//! Problem instances: buses, schedules, charger types, utility rates and
//! uncontrolled loads.

mod discrete;
mod file;
mod generate;

pub use discrete::{discretize, DiscreteInstance, Visit, VisitId};
pub use file::{format_hhmm, load_scenario, load_scenario_file, parse_hhmm, scenario_to_toml};
pub use generate::{generate_random_scenario, GeneratorBounds};

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid time {0:?}, expected HH:MM")]
    Time(String),
    #[error("no buses")]
    NoBuses,
    #[error("no charger types")]
    NoChargers,
    #[error("charger type {id}: {msg}")]
    Charger { id: String, msg: String },
    #[error("bus {bus}: {msg}")]
    Bus { bus: String, msg: String },
    #[error("bus {bus}: blocks {first} and {second} overlap or are out of order")]
    Overlap { bus: String, first: usize, second: usize },
    #[error("rates: {0}")]
    Rates(String),
    #[error("load profile: {0}")]
    Load(String),
    #[error("empty horizon [{0}, {1}]")]
    EmptyHorizon(f64, f64),
    #[error("invalid generator bounds: {0}")]
    Bounds(String),
    #[error("io error: {0}")]
    Io(String),
}

/// Noise class of a charger type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ChargerClass {
    Slow,
    Fast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChargerType {
    pub id: String,
    pub count: u32,
    /// Constant-current power in kW.
    pub p_cc: f64,
    /// CV decay rate in 1/h.
    pub alpha: f64,
    pub location: String,
    pub class: ChargerClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    OnRoute,
    InStation,
    AtDepot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleBlock {
    pub kind: BlockKind,
    /// Wall-clock minutes since midnight.
    pub start: f64,
    pub end: f64,
    pub available_chargers: Vec<String>,
    pub route_power_kw: f64,
}

impl ScheduleBlock {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: String,
    pub capacity_kwh: f64,
    pub eta: f64,
    pub initial_soc: f64,
    pub final_soc: f64,
    pub min_soc: f64,
    pub max_soc: f64,
    pub schedule: Vec<ScheduleBlock>,
    /// Per-charger-type decay-rate overrides.
    pub alpha_override: BTreeMap<String, f64>,
}

impl Bus {
    pub fn alpha_for(&self, charger: &ChargerType) -> f64 {
        self.alpha_override.get(&charger.id).copied().unwrap_or(charger.alpha)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateSchedule {
    pub c_offpeak: f64,
    pub c_onpeak: f64,
    pub c_b: f64,
    pub c_tou: f64,
    /// Half-open `[start, end)` wall-clock intervals in minutes.
    pub peak_windows: Vec<(f64, f64)>,
    pub demand_window_minutes: f64,
}

impl RateSchedule {
    /// Rocky Mountain Power schedule 8 winter rates.
    pub fn schedule8() -> Self {
        Self {
            c_offpeak: 0.026216,
            c_onpeak: 0.051577,
            c_b: 4.81,
            c_tou: 13.92,
            peak_windows: vec![(360.0, 540.0), (1080.0, 1320.0)],
            demand_window_minutes: 15.0,
        }
    }

    pub fn is_peak(&self, t: f64) -> bool {
        self.peak_windows.iter().any(|&(a, b)| t >= a && t < b)
    }

    pub fn consumption_rate_at(&self, t: f64) -> f64 {
        if self.is_peak(t) {
            self.c_onpeak
        } else {
            self.c_offpeak
        }
    }
}

/// Uncontrolled load as piecewise-constant power. Sample `i` holds the
/// energy used over `[times[i], times[i+1])`; the last sample spans one
/// more profile step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadProfile {
    pub times: Vec<f64>,
    pub kwh_per_step: Vec<f64>,
}

impl LoadProfile {
    fn segment(&self, i: usize) -> (f64, f64) {
        let start = self.times[i];
        let end = if i + 1 < self.times.len() {
            self.times[i + 1]
        } else if i > 0 {
            start + (start - self.times[i - 1])
        } else {
            start
        };
        (start, end)
    }

    /// Uncontrolled energy over `[a, b)` in kWh.
    pub fn energy_between(&self, a: f64, b: f64) -> f64 {
        let mut total = 0.0;
        for i in 0..self.times.len() {
            let (s, e) = self.segment(i);
            if e <= s {
                continue;
            }
            let overlap = (b.min(e) - a.max(s)).max(0.0);
            total += self.kwh_per_step[i] * overlap / (e - s);
        }
        total
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub buses: Vec<Bus>,
    pub charger_types: Vec<ChargerType>,
    pub rates: RateSchedule,
    pub load_profile: LoadProfile,
    pub day_start: f64,
    pub day_end: f64,
}

impl Scenario {
    pub fn charger_index(&self, id: &str) -> Option<usize> {
        self.charger_types.iter().position(|c| c.id == id)
    }

    /// Check every structural invariant.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.buses.is_empty() {
            return Err(ScenarioError::NoBuses);
        }
        if self.charger_types.is_empty() {
            return Err(ScenarioError::NoChargers);
        }
        if self.day_end <= self.day_start {
            return Err(ScenarioError::EmptyHorizon(self.day_start, self.day_end));
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.charger_types {
            let err = |msg: &str| ScenarioError::Charger {
                id: c.id.clone(),
                msg: msg.to_string(),
            };
            if !seen.insert(c.id.clone()) {
                return Err(err("duplicate id"));
            }
            if c.count < 1 {
                return Err(err("count must be at least 1"));
            }
            if !(c.p_cc > 0.0) {
                return Err(err("p_cc must be positive"));
            }
            if !(c.alpha > 0.0) {
                return Err(err("alpha must be positive"));
            }
        }
        let r = &self.rates;
        if [r.c_offpeak, r.c_onpeak, r.c_b, r.c_tou].iter().any(|v| !(*v >= 0.0)) {
            return Err(ScenarioError::Rates("rates must be non-negative".into()));
        }
        if !(r.demand_window_minutes > 0.0) {
            return Err(ScenarioError::Rates("demand window must be positive".into()));
        }
        let mut windows = r.peak_windows.clone();
        windows.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in &windows {
            if w.1 <= w.0 {
                return Err(ScenarioError::Rates("empty peak window".into()));
            }
        }
        for pair in windows.windows(2) {
            if pair[1].0 < pair[0].1 {
                return Err(ScenarioError::Rates("peak windows overlap".into()));
            }
        }
        let lp = &self.load_profile;
        if lp.times.len() != lp.kwh_per_step.len() {
            return Err(ScenarioError::Load("length mismatch".into()));
        }
        if lp.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ScenarioError::Load("times must increase".into()));
        }
        if lp.kwh_per_step.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ScenarioError::Load("energies must be non-negative".into()));
        }
        let mut ids = std::collections::BTreeSet::new();
        for b in &self.buses {
            let err = |msg: String| ScenarioError::Bus { bus: b.id.clone(), msg };
            if !ids.insert(b.id.clone()) {
                return Err(err("duplicate id".into()));
            }
            if !(b.capacity_kwh > 0.0) {
                return Err(err("capacity must be positive".into()));
            }
            if !(b.eta > 0.0 && b.eta <= 1.0) {
                return Err(err("eta must be in (0, 1]".into()));
            }
            if !(0.0 <= b.min_soc && b.min_soc < b.max_soc && b.max_soc <= 1.0) {
                return Err(err("need 0 <= min_soc < max_soc <= 1".into()));
            }
            for (name, v) in [("initial_soc", b.initial_soc), ("final_soc", b.final_soc)] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(err(format!("{name} must be in [0, 1]")));
                }
            }
            for (cid, a) in &b.alpha_override {
                if self.charger_index(cid).is_none() {
                    return Err(err(format!("alpha override for unknown charger {cid}")));
                }
                if !(*a > 0.0) {
                    return Err(err(format!("alpha override for {cid} must be positive")));
                }
            }
            for (i, blk) in b.schedule.iter().enumerate() {
                if !(blk.end > blk.start) {
                    return Err(err(format!("block {i} has end <= start")));
                }
                if blk.start < self.day_start || blk.end > self.day_end {
                    return Err(err(format!("block {i} lies outside the day")));
                }
                let station = blk.kind == BlockKind::InStation;
                if station == blk.available_chargers.is_empty() {
                    return Err(err(format!(
                        "block {i}: chargers must be listed exactly for station blocks"
                    )));
                }
                for cid in &blk.available_chargers {
                    if self.charger_index(cid).is_none() {
                        return Err(err(format!("block {i} references unknown charger {cid}")));
                    }
                }
                if !(blk.route_power_kw >= 0.0) {
                    return Err(err(format!("block {i} has negative route power")));
                }
                if i > 0 && blk.start < b.schedule[i - 1].end {
                    return Err(ScenarioError::Overlap {
                        bus: b.id.clone(),
                        first: i - 1,
                        second: i,
                    });
                }
            }
        }
        Ok(())
    }
}
