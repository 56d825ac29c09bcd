//! Stochastic truth model: discharge and charge noise, arrival jitter.
//!
//! Normal variates come from `rand_distr::StandardNormal` (ziggurat) driven
//! by ChaCha8 streams. Stream 0 of a run seed draws the per-run biases and
//! arrival offsets; streams `1 + j` hold bus white noise and streams
//! `1 + n_buses + l` charger white noise, one variate per tick.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::charge_model::{attainable_gain, ContinuousChargeParams};
use crate::scenario::{BlockKind, ChargerClass, Scenario};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    /// Discharge white noise, kWh per sqrt(s).
    pub sigma_nu_d: f64,
    /// Discharge bias, kW.
    pub sigma_beta_d: f64,
    /// Charger white noise per class `[slow, fast]`, kWh per sqrt(s).
    pub sigma_nu_c: [f64; 2],
    /// Charger bias per class `[slow, fast]`, kW.
    pub sigma_beta_c: [f64; 2],
    /// Arrival jitter, seconds.
    pub sigma_a: f64,
}

impl NoiseParams {
    pub fn zero() -> Self {
        Self {
            sigma_nu_d: 0.0,
            sigma_beta_d: 0.0,
            sigma_nu_c: [0.0; 2],
            sigma_beta_c: [0.0; 2],
            sigma_a: 0.0,
        }
    }

    /// Published noise levels.
    pub fn published() -> Self {
        Self {
            sigma_nu_d: 0.05,
            sigma_beta_d: 1.2,
            sigma_nu_c: [0.04167, 0.0833],
            sigma_beta_c: [1.2, 2.4],
            sigma_a: 120.0,
        }
    }

    fn class_index(class: ChargerClass) -> usize {
        match class {
            ChargerClass::Slow => 0,
            ChargerClass::Fast => 1,
        }
    }

    pub fn charger_nu(&self, class: ChargerClass) -> f64 {
        self.sigma_nu_c[Self::class_index(class)]
    }

    pub fn charger_beta(&self, class: ChargerClass) -> f64 {
        self.sigma_beta_c[Self::class_index(class)]
    }

    pub fn is_valid(&self) -> bool {
        let all = [
            self.sigma_nu_d,
            self.sigma_beta_d,
            self.sigma_nu_c[0],
            self.sigma_nu_c[1],
            self.sigma_beta_c[0],
            self.sigma_beta_c[1],
            self.sigma_a,
        ];
        all.iter().all(|s| s.is_finite() && *s >= 0.0)
    }
}

/// Realized noise of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunNoise {
    pub params: NoiseParams,
    /// Discharge bias per bus, kW.
    pub beta_d: Vec<f64>,
    /// Bias per charger type, kW.
    pub beta_c: Vec<f64>,
    /// Arrival offset in seconds per bus and schedule block; zero for blocks
    /// that are not arrivals.
    pub arrival_s: Vec<Vec<f64>>,
    /// Standard normal per bus and tick.
    pub z_d: Vec<Vec<f64>>,
    /// Standard normal per charger type and tick.
    pub z_c: Vec<Vec<f64>>,
}

fn normals(seed: u64, stream: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn is_arrival(s: &Scenario, j: usize, b: usize) -> bool {
    let sched = &s.buses[j].schedule;
    b > 0 && sched[b].kind == BlockKind::InStation && sched[b - 1].kind == BlockKind::OnRoute
}

pub fn sample_run_noise(params: &NoiseParams, seed: u64, scenario: &Scenario, ticks: usize) -> RunNoise {
    let nb = scenario.buses.len();
    let nl = scenario.charger_types.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let mut z = || rng.sample::<f64, _>(StandardNormal);
    let beta_d = (0..nb).map(|_| params.sigma_beta_d * z()).collect();
    let beta_c = scenario
        .charger_types
        .iter()
        .map(|c| params.charger_beta(c.class) * z())
        .collect();
    let arrival_s = (0..nb)
        .map(|j| {
            (0..scenario.buses[j].schedule.len())
                .map(|b| {
                    let v = z();
                    if is_arrival(scenario, j, b) {
                        params.sigma_a * v
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let z_d = (0..nb).map(|j| normals(seed, 1 + j as u64, ticks)).collect();
    let z_c = (0..nl).map(|l| normals(seed, 1 + (nb + l) as u64, ticks)).collect();
    RunNoise {
        params: *params,
        beta_d,
        beta_c,
        arrival_s,
        z_d,
        z_c,
    }
}

/// Moves each arrival (a station block following a route) by its offset.
/// The arrival stays within `[route start, station end]`; departures do
/// not move.
pub fn perturb_arrivals(scenario: &Scenario, arrival_s: &[Vec<f64>]) -> Scenario {
    let mut out = scenario.clone();
    for (j, bus) in out.buses.iter_mut().enumerate() {
        for b in 1..bus.schedule.len() {
            if !is_arrival(scenario, j, b) {
                continue;
            }
            let nu = arrival_s.get(j).and_then(|v| v.get(b)).copied().unwrap_or(0.0);
            if nu == 0.0 {
                continue;
            }
            let lo = bus.schedule[b - 1].start;
            let hi = bus.schedule[b].end;
            let t = (bus.schedule[b].start + nu / 60.0).clamp(lo, hi);
            bus.schedule[b - 1].end = t;
            bus.schedule[b].start = t;
        }
    }
    out
}

/// One discharge step: `soc - d + bias * dt + white`, clamped to `[0, E]`.
/// `white` is the already scaled white-noise term in kWh.
pub fn truth_discharge_step(soc: f64, d_kwh: f64, bias_kw: f64, white_kwh: f64, dt_s: f64, capacity: f64) -> f64 {
    (soc - d_kwh + bias_kw * dt_s / 3600.0 + white_kwh).clamp(0.0, capacity)
}

/// One charging step on a single charger. The commanded energy is capped by
/// what the CC-CV profile can deliver from `soc` over `dt_s`; bias and white
/// noise are added on top. Returns the new SOC and the realized gain.
pub fn truth_charge_step(
    soc: f64,
    commanded_kwh: f64,
    bias_kw: f64,
    white_kwh: f64,
    dt_s: f64,
    params: &ContinuousChargeParams,
) -> (f64, f64) {
    if commanded_kwh <= 0.0 {
        return (soc, 0.0);
    }
    let cap = attainable_gain(soc, dt_s / 3600.0, params);
    let g = commanded_kwh.min(cap) + bias_kw * dt_s / 3600.0 + white_kwh;
    let next = (soc + g.max(0.0)).min(params.capacity.max(soc));
    (next, next - soc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charge_model::{continuous_params, simulate_exact};
    use crate::scenario::{generate_random_scenario, GeneratorBounds};

    fn desk() -> Scenario {
        generate_random_scenario(3, 5, &GeneratorBounds::default()).unwrap()
    }

    #[test]
    fn zero_parameters_give_zero_noise() {
        let s = desk();
        let n = sample_run_noise(&NoiseParams::zero(), 9, &s, 50);
        assert!(n.beta_d.iter().chain(&n.beta_c).all(|&b| b == 0.0));
        assert!(n.arrival_s.iter().flatten().all(|&a| a == 0.0));
        assert_eq!(perturb_arrivals(&s, &n.arrival_s), s);
    }

    #[test]
    fn published_parameters() {
        let p = NoiseParams::published();
        assert_eq!(p.sigma_a, 120.0);
        assert_eq!(p.charger_beta(ChargerClass::Slow), 1.2);
        assert_eq!(p.charger_beta(ChargerClass::Fast), 2.4);
        assert!(p.is_valid());
    }

    #[test]
    fn sampling_is_deterministic() {
        let s = desk();
        let p = NoiseParams::published();
        assert_eq!(sample_run_noise(&p, 3, &s, 20), sample_run_noise(&p, 3, &s, 20));
        assert_ne!(sample_run_noise(&p, 3, &s, 20), sample_run_noise(&p, 4, &s, 20));
    }

    #[test]
    fn bias_spread_matches_sigma() {
        let s = desk();
        let p = NoiseParams::published();
        let mut v = Vec::new();
        for seed in 0..34_000u64 {
            v.extend(sample_run_noise(&p, seed, &s, 0).beta_d);
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(v.len() >= 100_000);
        assert!((sd / 1.2 - 1.0).abs() < 0.02, "sd {sd}");
    }

    #[test]
    fn discharge_step_units() {
        assert_eq!(truth_discharge_step(100.0, 2.0, 0.0, 0.0, 60.0, 200.0), 98.0);
        let s = truth_discharge_step(100.0, 0.0, 1.2, 0.0, 300.0, 200.0);
        assert!((s - 100.1).abs() < 1e-12);
        assert_eq!(truth_discharge_step(1.0, 5.0, 0.0, 0.0, 60.0, 200.0), 0.0);
    }

    #[test]
    fn white_noise_scales_with_sqrt_dt() {
        let z = normals(11, 2, 200_000);
        let sigma = 0.05f64;
        let dt = 60.0f64;
        let w: Vec<f64> = z.iter().map(|z| sigma * dt.sqrt() * z).collect();
        let sd = (w.iter().map(|x| x * x).sum::<f64>() / w.len() as f64).sqrt();
        assert!((sd / (sigma * dt.sqrt()) - 1.0).abs() < 0.01);
    }

    #[test]
    fn charge_step_caps_at_profile() {
        let c = continuous_params(100.0, 2.0, 0.8, 200.0);
        let (s, g) = truth_charge_step(150.0, 50.0, 0.0, 0.0, 600.0, &c);
        let exact = simulate_exact(150.0, 600.0 / 3600.0, &c).unwrap();
        assert!((s - exact).abs() < 1e-12);
        assert!((g - (exact - 150.0)).abs() < 1e-12);
        assert_eq!(truth_charge_step(150.0, 0.0, 2.0, 1.0, 60.0, &c), (150.0, 0.0));
        let (s, _) = truth_charge_step(10.0, 1.0, 0.0, 0.0, 60.0, &c);
        assert!((s - 11.0).abs() < 1e-12);
    }

    #[test]
    fn late_arrival_shortens_visit() {
        let s = desk();
        let j = 0;
        let b = (1..s.buses[j].schedule.len()).find(|&b| is_arrival(&s, j, b)).unwrap();
        let mut offs: Vec<Vec<f64>> = s.buses.iter().map(|x| vec![0.0; x.schedule.len()]).collect();
        offs[j][b] = 120.0;
        let p = perturb_arrivals(&s, &offs);
        let (old, new) = (&s.buses[j].schedule[b], &p.buses[j].schedule[b]);
        assert_eq!(new.duration(), old.duration() - 2.0);
        assert_eq!(new.end, old.end);
        assert_eq!(p.buses[j].schedule[b - 1].end, new.start);

        offs[j][b] = -1e9;
        let p = perturb_arrivals(&s, &offs);
        assert_eq!(p.buses[j].schedule[b].start, s.buses[j].schedule[b - 1].start);
    }
}
