//! Random schedules that alternate route and station blocks through the day.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    BlockKind, Bus, ChargerClass, ChargerType, LoadProfile, RateSchedule, Scenario, ScenarioError, ScheduleBlock,
};

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorBounds {
    /// Route length range in minutes.
    pub route_minutes: (f64, f64),
    /// Station dwell range in minutes.
    pub dwell_minutes: (f64, f64),
    /// On-route power range in kW.
    pub route_power_kw: (f64, f64),
    /// Window for the first departure from the depot.
    pub first_departure: (f64, f64),
    /// Latest time a bus may finish its last route.
    pub return_time: f64,
    pub day_start: f64,
    pub day_end: f64,
    pub capacity_kwh: f64,
    pub eta: f64,
    pub initial_soc: f64,
    pub final_soc: f64,
    pub min_soc: f64,
    pub max_soc: f64,
    pub charger_types: Vec<ChargerType>,
    pub rates: RateSchedule,
}

impl Default for GeneratorBounds {
    fn default() -> Self {
        Self {
            route_minutes: (45.0, 150.0),
            dwell_minutes: (20.0, 45.0),
            route_power_kw: (28.0, 36.0),
            first_departure: (330.0, 420.0),
            return_time: 23.0 * 60.0,
            day_start: 300.0,
            day_end: 23.0 * 60.0 + 30.0,
            capacity_kwh: 440.0,
            eta: 0.9,
            initial_soc: 0.7,
            final_soc: 0.7,
            min_soc: 0.2,
            max_soc: 0.95,
            charger_types: vec![
                ChargerType {
                    id: "slow".into(),
                    count: 2,
                    p_cc: 60.0,
                    alpha: 2.0,
                    location: "station".into(),
                    class: ChargerClass::Slow,
                },
                ChargerType {
                    id: "fast".into(),
                    count: 1,
                    p_cc: 450.0,
                    alpha: 3.0,
                    location: "station".into(),
                    class: ChargerClass::Fast,
                },
            ],
            rates: RateSchedule::schedule8(),
        }
    }
}

fn check_range(name: &str, r: (f64, f64)) -> Result<(), ScenarioError> {
    if !(r.0.is_finite() && r.1.is_finite() && r.0 <= r.1) {
        return Err(ScenarioError::Bounds(format!("{name} range is empty")));
    }
    Ok(())
}

fn sample(rng: &mut ChaCha8Rng, r: (f64, f64)) -> f64 {
    if r.0 == r.1 {
        r.0
    } else {
        rng.random_range(r.0..=r.1)
    }
}

/// Deterministic random scenario. Each bus gets one route length, dwell and
/// route power; blocks alternate route/station from its first departure as
/// long as the next route still ends by the return time.
pub fn generate_random_scenario(
    n_buses: usize,
    seed: u64,
    bounds: &GeneratorBounds,
) -> Result<Scenario, ScenarioError> {
    if n_buses == 0 {
        return Err(ScenarioError::NoBuses);
    }
    check_range("route", bounds.route_minutes)?;
    check_range("dwell", bounds.dwell_minutes)?;
    check_range("route power", bounds.route_power_kw)?;
    check_range("first departure", bounds.first_departure)?;
    if bounds.route_minutes.0 <= 0.0 || bounds.dwell_minutes.0 <= 0.0 {
        return Err(ScenarioError::Bounds("durations must be positive".into()));
    }
    if bounds.first_departure.0 < bounds.day_start || bounds.return_time > bounds.day_end {
        return Err(ScenarioError::Bounds("service must fit inside the day".into()));
    }
    let chargers: Vec<String> = bounds.charger_types.iter().map(|c| c.id.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buses = Vec::with_capacity(n_buses);
    for j in 0..n_buses {
        let depart = sample(&mut rng, bounds.first_departure).round();
        let route = sample(&mut rng, bounds.route_minutes).round();
        let dwell = sample(&mut rng, bounds.dwell_minutes).round();
        let power = (sample(&mut rng, bounds.route_power_kw) * 100.0).round() / 100.0;
        let mut schedule = Vec::new();
        if depart > bounds.day_start {
            schedule.push(ScheduleBlock {
                kind: BlockKind::AtDepot,
                start: bounds.day_start,
                end: depart,
                available_chargers: vec![],
                route_power_kw: 0.0,
            });
        }
        let mut t = depart;
        if t + route <= bounds.return_time {
            schedule.push(ScheduleBlock {
                kind: BlockKind::OnRoute,
                start: t,
                end: t + route,
                available_chargers: vec![],
                route_power_kw: power,
            });
            t += route;
            while t + dwell + route <= bounds.return_time {
                schedule.push(ScheduleBlock {
                    kind: BlockKind::InStation,
                    start: t,
                    end: t + dwell,
                    available_chargers: chargers.clone(),
                    route_power_kw: 0.0,
                });
                t += dwell;
                schedule.push(ScheduleBlock {
                    kind: BlockKind::OnRoute,
                    start: t,
                    end: t + route,
                    available_chargers: vec![],
                    route_power_kw: power,
                });
                t += route;
            }
        }
        if t < bounds.day_end {
            schedule.push(ScheduleBlock {
                kind: BlockKind::AtDepot,
                start: t,
                end: bounds.day_end,
                available_chargers: vec![],
                route_power_kw: 0.0,
            });
        }
        buses.push(Bus {
            id: format!("bus{}", j + 1),
            capacity_kwh: bounds.capacity_kwh,
            eta: bounds.eta,
            initial_soc: bounds.initial_soc,
            final_soc: bounds.final_soc,
            min_soc: bounds.min_soc,
            max_soc: bounds.max_soc,
            schedule,
            alpha_override: Default::default(),
        });
    }
    let scenario = Scenario {
        buses,
        charger_types: bounds.charger_types.clone(),
        rates: bounds.rates.clone(),
        load_profile: LoadProfile::default(),
        day_start: bounds.day_start,
        day_end: bounds.day_end,
    };
    scenario.validate()?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::scenario_to_toml;

    #[test]
    fn thirty_buses_respect_ranges() {
        let s = generate_random_scenario(30, 7, &GeneratorBounds::default()).unwrap();
        assert_eq!(s.buses.len(), 30);
        for b in &s.buses {
            for blk in &b.schedule {
                match blk.kind {
                    BlockKind::OnRoute => {
                        assert!((45.0..=150.0).contains(&blk.duration()));
                        assert!((28.0..=36.0).contains(&blk.route_power_kw));
                        assert!(blk.end <= 23.0 * 60.0);
                    }
                    BlockKind::InStation => assert!((20.0..=45.0).contains(&blk.duration())),
                    BlockKind::AtDepot => {}
                }
            }
        }
    }

    #[test]
    fn same_seed_same_document() {
        let b = GeneratorBounds::default();
        let a = scenario_to_toml(&generate_random_scenario(5, 11, &b).unwrap());
        let c = scenario_to_toml(&generate_random_scenario(5, 11, &b).unwrap());
        assert_eq!(a, c);
        let d = scenario_to_toml(&generate_random_scenario(5, 12, &b).unwrap());
        assert_ne!(a, d);
    }

    #[test]
    fn collapsed_ranges_alternate_exactly() {
        let b = GeneratorBounds {
            route_minutes: (60.0, 60.0),
            dwell_minutes: (30.0, 30.0),
            ..GeneratorBounds::default()
        };
        let s = generate_random_scenario(1, 1, &b).unwrap();
        let service: Vec<&ScheduleBlock> = s.buses[0]
            .schedule
            .iter()
            .filter(|blk| blk.kind != BlockKind::AtDepot)
            .collect();
        assert!(service.len() >= 3);
        for (i, blk) in service.iter().enumerate() {
            if i % 2 == 0 {
                assert_eq!(blk.kind, BlockKind::OnRoute);
                assert_eq!(blk.duration(), 60.0);
            } else {
                assert_eq!(blk.kind, BlockKind::InStation);
                assert_eq!(blk.duration(), 30.0);
            }
            if i > 0 {
                assert_eq!(blk.start, service[i - 1].end);
            }
        }
    }

    #[test]
    fn rejects_zero_buses() {
        assert_eq!(
            generate_random_scenario(0, 1, &GeneratorBounds::default()).unwrap_err(),
            ScenarioError::NoBuses
        );
    }
}
