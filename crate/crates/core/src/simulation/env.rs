//! Minute-resolution truth environment for one run.

use crate::charge_model::{params_for, ContinuousChargeParams};
use crate::scenario::{BlockKind, Scenario};

use super::noise::{perturb_arrivals, truth_charge_step, truth_discharge_step, RunNoise};

pub const TICK_MINUTES: f64 = 1.0;
const TICK_SECONDS: f64 = 60.0 * TICK_MINUTES;

/// Charger type and commanded power in kW for one bus over one tick.
pub type Command = Option<(usize, f64)>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Presence {
    pub block: usize,
    /// Share of the tick the bus spends at the station.
    pub fraction: f64,
}

#[derive(Debug, Clone)]
pub struct Environment {
    truth: Scenario,
    noise: RunNoise,
    params: Vec<Vec<ContinuousChargeParams>>,
    route_kwh: Vec<Vec<f64>>,
    presence: Vec<Vec<Option<Presence>>>,
    block_chargers: Vec<Vec<Vec<usize>>>,
    pub t0: f64,
    pub ticks: usize,
    pub tick: usize,
    pub soc: Vec<f64>,
    /// SOC per tick boundary and bus, `ticks + 1` rows.
    pub soc_log: Vec<Vec<f64>>,
    /// Realized gain and connected charger per tick and bus.
    pub gain_log: Vec<Vec<f64>>,
    pub charger_log: Vec<Vec<Option<usize>>>,
    /// Ticks spent below the minimum SOC per bus, and the deepest shortfall in kWh.
    pub below_min: Vec<usize>,
    pub worst_shortfall: f64,
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

impl Environment {
    /// Builds the truth for a run: arrivals are perturbed by `noise`.
    /// `initial_soc` is in kWh; scenario values if absent.
    pub fn new(nominal: &Scenario, noise: RunNoise, initial_soc: Option<&[f64]>) -> Self {
        let truth = perturb_arrivals(nominal, &noise.arrival_s);
        let t0 = truth.day_start;
        let ticks = ((truth.day_end - t0) / TICK_MINUTES + 1e-9).floor() as usize;
        let nb = truth.buses.len();
        let params = truth
            .buses
            .iter()
            .map(|b| truth.charger_types.iter().map(|c| params_for(c, b)).collect())
            .collect();
        let mut route_kwh = vec![vec![0.0; ticks]; nb];
        let mut presence = vec![vec![None; ticks]; nb];
        let mut block_chargers = Vec::with_capacity(nb);
        for (j, bus) in truth.buses.iter().enumerate() {
            let mut chargers = Vec::with_capacity(bus.schedule.len());
            for (bi, blk) in bus.schedule.iter().enumerate() {
                let ids: Vec<usize> = blk
                    .available_chargers
                    .iter()
                    .filter_map(|id| truth.charger_index(id))
                    .collect();
                for i in 0..ticks {
                    let a = t0 + i as f64 * TICK_MINUTES;
                    let o = overlap(a, a + TICK_MINUTES, blk.start, blk.end);
                    if o <= 0.0 {
                        continue;
                    }
                    match blk.kind {
                        BlockKind::OnRoute => route_kwh[j][i] += blk.route_power_kw * o / 60.0,
                        BlockKind::InStation if !ids.is_empty() => {
                            let f = o / TICK_MINUTES;
                            if presence[j][i].is_none_or(|p: Presence| p.fraction < f) {
                                presence[j][i] = Some(Presence { block: bi, fraction: f });
                            }
                        }
                        _ => {}
                    }
                }
                chargers.push(ids);
            }
            block_chargers.push(chargers);
        }
        let soc: Vec<f64> = match initial_soc {
            Some(s) => s.to_vec(),
            None => truth.buses.iter().map(|b| b.initial_soc * b.capacity_kwh).collect(),
        };
        Self {
            noise,
            params,
            route_kwh,
            presence,
            block_chargers,
            t0,
            ticks,
            tick: 0,
            soc_log: vec![soc.clone()],
            soc,
            gain_log: Vec::with_capacity(ticks),
            charger_log: Vec::with_capacity(ticks),
            below_min: vec![0; nb],
            worst_shortfall: 0.0,
            truth,
        }
    }

    pub fn truth(&self) -> &Scenario {
        &self.truth
    }

    pub fn num_buses(&self) -> usize {
        self.soc.len()
    }

    pub fn time(&self) -> f64 {
        self.t0 + self.tick as f64 * TICK_MINUTES
    }

    pub fn done(&self) -> bool {
        self.tick >= self.ticks
    }

    /// Where bus `j` is during the current tick, if at a station with chargers.
    pub fn presence(&self, j: usize) -> Option<Presence> {
        self.presence[j].get(self.tick).copied().flatten()
    }

    pub fn block_chargers(&self, j: usize, block: usize) -> &[usize] {
        &self.block_chargers[j][block]
    }

    pub fn charge_params(&self, j: usize, l: usize) -> &ContinuousChargeParams {
        &self.params[j][l]
    }

    /// Applies one tick of commands and advances the clock.
    pub fn advance(&mut self, commands: &[Command]) {
        assert!(!self.done(), "environment already finished");
        let i = self.tick;
        let nb = self.num_buses();
        let mut gains = vec![0.0; nb];
        let mut used = vec![None; nb];
        for j in 0..nb {
            let bus = &self.truth.buses[j];
            let mut s = self.soc[j];
            if let (Some((l, kw)), Some(p)) = (commands.get(j).copied().flatten(), self.presence(j)) {
                // A zero command keeps the bus plugged in without drawing power.
                if kw >= 0.0 && self.block_chargers[j][p.block].contains(&l) {
                    if kw > 0.0 {
                        let dt = TICK_SECONDS * p.fraction;
                        let class = self.truth.charger_types[l].class;
                        let white = self.noise.params.charger_nu(class) * dt.sqrt() * self.noise.z_c[l][i];
                        let (next, g) =
                            truth_charge_step(s, kw * dt / 3600.0, self.noise.beta_c[l], white, dt, &self.params[j][l]);
                        s = next;
                        gains[j] = g;
                    }
                    used[j] = Some(l);
                }
            }
            let white = self.noise.params.sigma_nu_d * TICK_SECONDS.sqrt() * self.noise.z_d[j][i];
            s = truth_discharge_step(
                s,
                self.route_kwh[j][i],
                self.noise.beta_d[j],
                white,
                TICK_SECONDS,
                bus.capacity_kwh,
            );
            let floor = bus.min_soc * bus.capacity_kwh;
            if s < floor - 1e-9 {
                self.below_min[j] += 1;
                self.worst_shortfall = self.worst_shortfall.max(floor - s);
            }
            self.soc[j] = s;
        }
        self.soc_log.push(self.soc.clone());
        self.gain_log.push(gains);
        self.charger_log.push(used);
        self.tick += 1;
    }

    /// Energy charged into all buses per elapsed tick.
    pub fn tick_energy(&self) -> Vec<f64> {
        self.gain_log.iter().map(|g| g.iter().sum()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_random_scenario, GeneratorBounds};
    use crate::simulation::noise::{sample_run_noise, NoiseParams};

    fn env(params: &NoiseParams) -> Environment {
        let s = generate_random_scenario(2, 3, &GeneratorBounds::default()).unwrap();
        let ticks = ((s.day_end - s.day_start) / TICK_MINUTES) as usize;
        let n = sample_run_noise(params, 1, &s, ticks);
        Environment::new(&s, n, None)
    }

    #[test]
    fn resting_day_discharges_by_route_energy() {
        let mut e = env(&NoiseParams::zero());
        let s0 = e.soc.clone();
        while !e.done() {
            e.advance(&[None, None]);
        }
        for (j, bus) in e.truth().buses.iter().enumerate() {
            let route: f64 = bus
                .schedule
                .iter()
                .filter(|b| b.kind == BlockKind::OnRoute)
                .map(|b| b.route_power_kw * b.duration() / 60.0)
                .sum();
            // Without noise the SOC only falls, so the clamp acts at the end.
            assert!((e.soc[j] - (s0[j] - route).max(0.0)).abs() < 1e-9);
        }
        assert!(e.tick_energy().iter().all(|&g| g == 0.0));
        assert_eq!(e.soc_log.len(), e.ticks + 1);
    }

    #[test]
    fn commands_only_apply_at_a_station() {
        let mut e = env(&NoiseParams::zero());
        let mut charging_ticks = 0;
        while !e.done() {
            let here = e.presence(0);
            let before = e.soc[0];
            e.advance(&[Some((0, 60.0)), None]);
            let g = e.gain_log.last().unwrap()[0];
            match here {
                None => assert_eq!(g, 0.0),
                Some(p) if p.fraction == 1.0 && before + 1.0 < e.charge_params(0, 0).eta_e => {
                    assert!((g - 1.0).abs() < 1e-9);
                    charging_ticks += 1;
                }
                Some(_) => assert!(g <= 1.0 + 1e-9),
            }
        }
        assert!(charging_ticks > 0);
    }

    #[test]
    fn soc_stays_in_range_under_noise() {
        let mut e = env(&NoiseParams::published());
        while !e.done() {
            e.advance(&[Some((1, 450.0)), Some((0, 60.0))]);
        }
        for row in &e.soc_log {
            for (j, s) in row.iter().enumerate() {
                assert!(*s >= 0.0 && *s <= e.truth().buses[j].capacity_kwh);
            }
        }
    }
}
