//! Small hand-built scenarios shared by unit tests.

use crate::scenario::{BlockKind, Bus, ChargerClass, ChargerType, LoadProfile, RateSchedule, Scenario, ScheduleBlock};

pub fn route(start: f64, end: f64, kw: f64) -> ScheduleBlock {
    ScheduleBlock {
        kind: BlockKind::OnRoute,
        start,
        end,
        available_chargers: vec![],
        route_power_kw: kw,
    }
}

pub fn station(start: f64, end: f64, chargers: &[&str]) -> ScheduleBlock {
    ScheduleBlock {
        kind: BlockKind::InStation,
        start,
        end,
        available_chargers: chargers.iter().map(|c| c.to_string()).collect(),
        route_power_kw: 0.0,
    }
}

pub fn bus(id: &str, schedule: Vec<ScheduleBlock>) -> Bus {
    Bus {
        id: id.into(),
        capacity_kwh: 200.0,
        eta: 0.9,
        initial_soc: 0.6,
        final_soc: 0.6,
        min_soc: 0.2,
        max_soc: 0.95,
        schedule,
        alpha_override: Default::default(),
    }
}

pub fn charger(id: &str, count: u32, p_cc: f64, alpha: f64) -> ChargerType {
    ChargerType {
        id: id.into(),
        count,
        p_cc,
        alpha,
        location: "station".into(),
        class: if p_cc >= 150.0 {
            ChargerClass::Fast
        } else {
            ChargerClass::Slow
        },
    }
}

pub fn scenario(buses: Vec<Bus>, chargers: Vec<ChargerType>, day: (f64, f64)) -> Scenario {
    Scenario {
        buses,
        charger_types: chargers,
        rates: RateSchedule::schedule8(),
        load_profile: LoadProfile::default(),
        day_start: day.0,
        day_end: day.1,
    }
}

/// One bus: route, a 20-minute visit, route; it must regain 20 kWh.
pub fn one_bus(offset: f64) -> Scenario {
    let o = offset;
    scenario(
        vec![bus(
            "b0",
            vec![
                route(o, o + 20.0, 30.0),
                station(o + 20.0, o + 40.0, &["c"]),
                route(o + 40.0, o + 60.0, 30.0),
            ],
        )],
        vec![charger("c", 1, 100.0, 2.0)],
        (o, o + 60.0),
    )
}
