//! Time discretization of a scenario over a planning window.

use super::{BlockKind, Scenario, ScenarioError};

const TIME_EPS: f64 = 1e-9;

/// A bus's station visit, keyed by the schedule block it comes from so the
/// id is stable across planning windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VisitId {
    pub bus: usize,
    pub block: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Visit {
    pub id: VisitId,
    /// Steps `first..end` lie fully inside the station block.
    pub first: usize,
    pub end: usize,
    pub chargers: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteInstance {
    pub t0: f64,
    pub delta_minutes: f64,
    pub num_steps: usize,
    pub num_buses: usize,
    pub num_chargers: usize,
    /// `gamma[j][k][l]`: bus `j` can charge on type `l` over step `k`.
    pub gamma: Vec<Vec<Vec<bool>>>,
    /// Visit covering step `k` of bus `j`, if any charger is available.
    pub visit_at: Vec<Vec<Option<usize>>>,
    pub visits: Vec<Visit>,
    /// Route discharge `d[j][k]` in kWh.
    pub discharge: Vec<Vec<f64>>,
    /// Uncontrolled energy per step in kWh.
    pub load: Vec<f64>,
    /// Consumption rate per step in $/kWh.
    pub consumption_rate: Vec<f64>,
    /// Step starts inside a peak window.
    pub peak: Vec<bool>,
}

impl DiscreteInstance {
    pub fn time_of(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.delta_minutes
    }

    pub fn t1(&self) -> f64 {
        self.time_of(self.num_steps)
    }

    pub fn delta_hours(&self) -> f64 {
        self.delta_minutes / 60.0
    }

    /// Charger types available to bus `j` over step `k`.
    pub fn chargers_at(&self, j: usize, k: usize) -> Vec<usize> {
        (0..self.num_chargers).filter(|&l| self.gamma[j][k][l]).collect()
    }

    /// Steps at which bus `j` may use charger type `l`.
    pub fn steps_for(&self, j: usize, l: usize) -> Vec<usize> {
        (0..self.num_steps).filter(|&k| self.gamma[j][k][l]).collect()
    }

    pub fn visit_index(&self, id: VisitId) -> Option<usize> {
        self.visits.iter().position(|v| v.id == id)
    }
}

/// Discretize `[t0, t1]` into steps of `delta_minutes`. A trailing partial
/// step is dropped; charging is available only on steps fully inside a
/// station block.
pub fn discretize(
    scenario: &Scenario,
    delta_minutes: f64,
    horizon: (f64, f64),
) -> Result<DiscreteInstance, ScenarioError> {
    let (t0, t1) = horizon;
    if !(delta_minutes > 0.0) || !(t1 > t0) {
        return Err(ScenarioError::EmptyHorizon(t0, t1));
    }
    let num_steps = ((t1 - t0) / delta_minutes + TIME_EPS).floor() as usize;
    if num_steps == 0 {
        return Err(ScenarioError::EmptyHorizon(t0, t1));
    }
    let nb = scenario.buses.len();
    let nl = scenario.charger_types.len();
    let at = |k: usize| t0 + k as f64 * delta_minutes;

    let mut gamma = vec![vec![vec![false; nl]; num_steps]; nb];
    let mut visit_at = vec![vec![None; num_steps]; nb];
    let mut visits = Vec::new();
    let mut discharge = vec![vec![0.0; num_steps]; nb];
    for (j, bus) in scenario.buses.iter().enumerate() {
        for (bi, blk) in bus.schedule.iter().enumerate() {
            match blk.kind {
                BlockKind::OnRoute => {
                    let kw = blk.route_power_kw;
                    for (k, d) in discharge[j].iter_mut().enumerate() {
                        let overlap = (blk.end.min(at(k + 1)) - blk.start.max(at(k))).max(0.0);
                        *d += kw * overlap / 60.0;
                    }
                }
                BlockKind::InStation => {
                    let chargers: Vec<usize> = {
                        let mut c: Vec<usize> = blk
                            .available_chargers
                            .iter()
                            .filter_map(|id| scenario.charger_index(id))
                            .collect();
                        c.sort_unstable();
                        c.dedup();
                        c
                    };
                    let steps: Vec<usize> = (0..num_steps)
                        .filter(|&k| at(k) >= blk.start - TIME_EPS && at(k + 1) <= blk.end + TIME_EPS)
                        .collect();
                    if steps.is_empty() || chargers.is_empty() {
                        continue;
                    }
                    let vi = visits.len();
                    for &k in &steps {
                        for &l in &chargers {
                            gamma[j][k][l] = true;
                        }
                        visit_at[j][k] = Some(vi);
                    }
                    visits.push(Visit {
                        id: VisitId { bus: j, block: bi },
                        first: steps[0],
                        end: steps[steps.len() - 1] + 1,
                        chargers,
                    });
                }
                BlockKind::AtDepot => {}
            }
        }
    }
    let load = (0..num_steps)
        .map(|k| scenario.load_profile.energy_between(at(k), at(k + 1)))
        .collect();
    let consumption_rate = (0..num_steps)
        .map(|k| scenario.rates.consumption_rate_at(at(k)))
        .collect();
    let peak = (0..num_steps).map(|k| scenario.rates.is_peak(at(k))).collect();
    Ok(DiscreteInstance {
        t0,
        delta_minutes,
        num_steps,
        num_buses: nb,
        num_chargers: nl,
        gamma,
        visit_at,
        visits,
        discharge,
        load,
        consumption_rate,
        peak,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Bus, ChargerClass, ChargerType, LoadProfile, RateSchedule, ScheduleBlock};

    fn example() -> Scenario {
        Scenario {
            buses: vec![Bus {
                id: "b".into(),
                capacity_kwh: 400.0,
                eta: 0.9,
                initial_soc: 0.7,
                final_soc: 0.7,
                min_soc: 0.2,
                max_soc: 0.95,
                schedule: vec![
                    ScheduleBlock {
                        kind: BlockKind::OnRoute,
                        start: 330.0,
                        end: 360.0,
                        available_chargers: vec![],
                        route_power_kw: 30.0,
                    },
                    ScheduleBlock {
                        kind: BlockKind::InStation,
                        start: 360.0,
                        end: 370.0,
                        available_chargers: vec!["1".into()],
                        route_power_kw: 0.0,
                    },
                    ScheduleBlock {
                        kind: BlockKind::OnRoute,
                        start: 370.0,
                        end: 392.0,
                        available_chargers: vec![],
                        route_power_kw: 30.0,
                    },
                ],
                alpha_override: Default::default(),
            }],
            charger_types: vec![ChargerType {
                id: "1".into(),
                count: 1,
                p_cc: 450.0,
                alpha: 2.0,
                location: "a".into(),
                class: ChargerClass::Fast,
            }],
            rates: RateSchedule::schedule8(),
            load_profile: LoadProfile::default(),
            day_start: 300.0,
            day_end: 420.0,
        }
    }

    #[test]
    fn six_am_visit_covers_two_steps() {
        let d = discretize(&example(), 5.0, (330.0, 400.0)).unwrap();
        assert_eq!(d.num_steps, 14);
        let avail: Vec<usize> = d.steps_for(0, 0);
        // 06:00 and 06:05 steps.
        assert_eq!(avail, vec![6, 7]);
        assert_eq!(d.visits.len(), 1);
        assert_eq!((d.visits[0].first, d.visits[0].end), (6, 8));
        assert_eq!(d.visits[0].id, VisitId { bus: 0, block: 1 });
    }

    #[test]
    fn route_discharge_per_step() {
        let d = discretize(&example(), 5.0, (330.0, 400.0)).unwrap();
        for k in 0..6 {
            assert!((d.discharge[0][k] - 2.5).abs() < 1e-12);
        }
        assert_eq!(d.discharge[0][6], 0.0);
        // 06:30-06:35 is on route for 2 of 5 minutes.
        assert!((d.discharge[0][11] - 2.5).abs() < 1e-12);
        assert!((d.discharge[0][12] - 1.0).abs() < 1e-12);
        let total: f64 = d.discharge[0].iter().sum();
        assert!((total - 30.0 * 52.0 / 60.0).abs() < 1e-9);
    }

    #[test]
    fn partial_final_step_is_dropped() {
        let d = discretize(&example(), 4.0, (330.0, 400.0)).unwrap();
        assert_eq!(d.num_steps, 17);
        assert_eq!(d.t1(), 398.0);
        // Steps fully inside [06:00, 06:10]: 06:02-06:06 and 06:06-06:10.
        assert_eq!(d.steps_for(0, 0), vec![8, 9]);
    }

    #[test]
    fn bus_never_in_station_has_no_availability() {
        let mut s = example();
        s.buses[0].schedule.remove(1);
        let d = discretize(&s, 5.0, (330.0, 400.0)).unwrap();
        assert!(d.steps_for(0, 0).is_empty());
        assert!(d.visits.is_empty());
    }

    #[test]
    fn empty_horizon_is_an_error() {
        assert!(discretize(&example(), 5.0, (400.0, 400.0)).is_err());
        assert!(discretize(&example(), 5.0, (400.0, 403.0)).is_err());
    }
}
