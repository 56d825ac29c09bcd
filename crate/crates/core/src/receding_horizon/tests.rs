use super::*;
use crate::milp::{plan_day, DayPlanConfig};
use crate::scenario::generate_random_scenario;
use crate::scenario::GeneratorBounds;
use crate::testutil::*;

fn reference(s: &Scenario) -> ChargePlan {
    plan_day(s, &DayPlanConfig::default()).unwrap().plan
}

fn zero_env(s: &Scenario) -> Environment {
    let ticks = ((s.day_end - s.day_start) / TICK_MINUTES).round() as usize;
    Environment::new(s, sample_run_noise(&NoiseParams::zero(), 0, s, ticks), None)
}

fn two_charger_visit() -> Scenario {
    scenario(
        vec![bus(
            "b0",
            vec![
                route(0.0, 20.0, 30.0),
                station(20.0, 40.0, &["a", "b"]),
                route(40.0, 60.0, 30.0),
            ],
        )],
        vec![charger("a", 1, 100.0, 2.0), charger("b", 1, 100.0, 2.0)],
        (0.0, 60.0),
    )
}

#[test]
fn config_validation() {
    assert!(HorizonConfig::default().validate().is_ok());
    let bad = |f: fn(&mut HorizonConfig)| {
        let mut c = HorizonConfig::default();
        f(&mut c);
        c.validate().is_err()
    };
    assert!(bad(|c| c.delta_rh_minutes = 0.0));
    assert!(bad(|c| c.horizon_minutes = 2.0));
    assert!(bad(|c| c.delta_rh_minutes = 2.5));
    assert!(bad(|c| c.terminal_weight = Some(-1.0)));
}

#[test]
fn default_weights_scale_with_rates() {
    let s = one_bus(0.0);
    let c = HorizonConfig::default();
    let w = c.terminal_weight_for(&s);
    assert_eq!(w, TERMINAL_WEIGHT_FACTOR * s.rates.c_onpeak);
    let r = &s.rates;
    let smallest = [r.c_offpeak, r.c_onpeak, r.c_b, r.c_tou, w]
        .into_iter()
        .filter(|v| *v > 0.0)
        .fold(f64::INFINITY, f64::min);
    assert!((c.preference_bonus_for(&s) - 1e-3 * smallest).abs() < 1e-15);
}

#[test]
fn rest_step_only_discharges() {
    let s = one_bus(0.0);
    let cfg = HorizonConfig::default();
    let mut env = zero_env(&s);
    let mut state = ExecutionState::new(&s, env.soc.clone());
    step(&mut state, None, &mut env, &s, &cfg);
    // 3 minutes on route at 30 kW.
    assert!((state.soc[0] - (120.0 - 1.5)).abs() < 1e-9);
    assert!(state.charged_visits.is_empty());
    assert_eq!(state.clock, 3.0);
    assert_eq!(state.energy_history, vec![0.0]);
    assert!(state.previous_plan.is_none());
}

#[test]
fn first_charging_step_enters_tracker() {
    let s = one_bus(0.0);
    let plan = reference(&s);
    let cfg = HorizonConfig::default();
    let mut env = zero_env(&s);
    let mut state = ExecutionState::new(&s, env.soc.clone());
    while state.clock + cfg.delta_rh_minutes <= s.day_end + 1e-9 {
        let hp = plan_horizon(&state, &s, &plan, &cfg).unwrap();
        let charging = hp.commands[0].is_some();
        let before = state.charged_visits.clone();
        step(&mut state, Some(&hp), &mut env, &s, &cfg);
        if charging {
            assert!(state.charged_visits.contains(&hp.visits[0].unwrap()));
        } else {
            assert_eq!(state.charged_visits, before);
        }
    }
    assert_eq!(state.charged_visits.len(), 1);
}

#[test]
fn history_window_sum_matches_constant_power() {
    let s = one_bus(0.0);
    let plan = reference(&s);
    let cfg = HorizonConfig::default();
    let mut env = zero_env(&s);
    for _ in 0..20 {
        env.advance(&[None]);
    }
    let mut state = ExecutionState::new(&s, env.soc.clone());
    state.clock = 20.0;
    let mut hp = plan_horizon(&state, &s, &plan, &cfg).unwrap();
    hp.commands = vec![Some((0, 60.0))];
    let window = WindowSpec::new(s.rates.demand_window_minutes, cfg.delta_rh_minutes);
    for _ in 0..window.m {
        step(&mut state, Some(&hp), &mut env, &s, &cfg);
    }
    let sum: f64 = state.energy_history.iter().sum();
    let expect = 60.0 * s.rates.demand_window_minutes / 60.0;
    assert!((sum - expect).abs() < 1e-9, "{sum} vs {expect}");
    assert!((state.realized_peak - 60.0).abs() < 1e-9);
}

#[test]
fn window_without_station_time_rests() {
    let s = one_bus(0.0);
    let plan = reference(&s);
    let cfg = HorizonConfig {
        horizon_minutes: 15.0,
        ..HorizonConfig::default()
    };
    let state = ExecutionState::new(&s, vec![120.0]);
    let hp = plan_horizon(&state, &s, &plan, &cfg).unwrap();
    assert!(hp.plan.intervals.is_empty());
    assert_eq!(hp.commands, vec![None]);
    assert!(hp.plan.energy.iter().all(|&e| e.abs() < 1e-9));
    assert!(!hp.soft);
}

#[test]
fn previous_plan_breaks_ties() {
    let s = two_charger_visit();
    let plan = reference(&s);
    assert!(!plan.intervals.is_empty());
    let cfg = HorizonConfig::default();
    for l in 0..2 {
        let mut prev = plan.clone();
        for iv in &mut prev.intervals {
            iv.charger = l;
        }
        let mut state = ExecutionState::new(&s, vec![plan.soc_at(0, 20.0)]);
        state.clock = 20.0;
        state.previous_plan = Some(prev);
        let hp = plan_horizon(&state, &s, &plan, &cfg).unwrap();
        assert!(!hp.plan.intervals.is_empty());
        assert!(
            hp.plan.intervals.iter().all(|iv| iv.charger == l),
            "expected charger {l}"
        );
    }
}

#[test]
fn zero_noise_day_tracks_reference() {
    let s = one_bus(0.0);
    let plan = reference(&s);
    let run = run_day(&s, &plan, &HorizonConfig::default(), &NoiseParams::zero(), 0, None).unwrap();
    assert!(!run.failed);
    assert_eq!(run.violation_ticks, 0);
    assert!((run.cost() - plan.objective).abs() <= 0.05 * plan.objective);
    // One horizon step of full-rate charging.
    let step_kwh = s.charger_types[0].p_cc * HorizonConfig::default().delta_rh_minutes / 60.0;
    assert!((run.final_soc()[0] - plan.soc_at(0, s.day_end)).abs() <= step_kwh);
}

#[test]
fn one_charge_per_visit_over_a_day() {
    let s = generate_random_scenario(2, 5, &GeneratorBounds::default()).unwrap();
    let plan = reference(&s);
    let run = run_day(&s, &plan, &HorizonConfig::default(), &NoiseParams::published(), 3, None).unwrap();
    for (j, bus) in s.buses.iter().enumerate() {
        let ivs: Vec<_> = run.intervals.iter().filter(|iv| iv.bus == j).collect();
        for blk in &bus.schedule {
            let inside = ivs
                .iter()
                .filter(|iv| iv.start_min < blk.end && iv.end_min > blk.start)
                .count();
            assert!(inside <= 1, "bus {j} charged {inside} times in one visit");
        }
    }
}

#[test]
fn terminal_weight_attracts_to_reference() {
    let s = one_bus(0.0);
    let plan = reference(&s);
    let miss = |w: f64| {
        let cfg = HorizonConfig {
            terminal_weight: Some(w),
            ..HorizonConfig::default()
        };
        let run = run_day(&s, &plan, &cfg, &NoiseParams::zero(), 0, None).unwrap();
        let n = run.soc.len();
        (0..n)
            .map(|i| (run.soc[i][0] - plan.soc_at(0, run.t0 + i as f64 * TICK_MINUTES)).abs())
            .sum::<f64>()
            / n as f64
    };
    assert!(miss(1.0) <= miss(0.0) + 1e-9);
}

#[test]
fn same_seed_same_trajectory() {
    let s = generate_random_scenario(2, 2, &GeneratorBounds::default()).unwrap();
    let plan = reference(&s);
    let cfg = HorizonConfig::default();
    let a = run_day(&s, &plan, &cfg, &NoiseParams::published(), 11, None).unwrap();
    let b = run_day(&s, &plan, &cfg, &NoiseParams::published(), 11, None).unwrap();
    assert_eq!(a, b);
}
