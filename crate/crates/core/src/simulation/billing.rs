//! Utility bill computed from a realized energy series.
//!
//! Window averages are evaluated by overlapping each step interval with the
//! demand window in continuous time, so a step that only partly falls into
//! the window contributes in proportion.

use serde::Serialize;

use crate::scenario::RateSchedule;

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Billing {
    pub consumption: f64,
    pub baseline_demand: f64,
    pub tou_demand: f64,
    /// Window average power ending at each grid point after the first, kW.
    pub avg_power: Vec<f64>,
    pub peak_kw: f64,
    pub peak_tou_kw: f64,
}

impl Billing {
    pub fn total(&self) -> f64 {
        self.consumption + self.baseline_demand + self.tou_demand
    }
}

/// Bills `bus_energy[k]` (kWh charged into buses over step `k`) plus the
/// uncontrolled `load[k]` on a grid starting at `t0` with steps of
/// `delta_minutes`. Only bus energy pays the consumption rate; both count
/// towards demand. Windows before the series start see no energy.
pub fn billing_oracle(bus_energy: &[f64], load: &[f64], t0: f64, delta_minutes: f64, rates: &RateSchedule) -> Billing {
    let n = bus_energy.len();
    let total = |k: usize| bus_energy[k] + load.get(k).copied().unwrap_or(0.0);
    let width = rates.demand_window_minutes;
    let mut avg_power = Vec::with_capacity(n);
    let mut peak = 0.0f64;
    let mut peak_tou = 0.0f64;
    for end in 1..=n {
        let t_end = t0 + end as f64 * delta_minutes;
        let t_start = t_end - width;
        let mut kwh = 0.0;
        for i in (0..end).rev() {
            let a = t0 + i as f64 * delta_minutes;
            let b = a + delta_minutes;
            if b <= t_start {
                break;
            }
            let overlap = b.min(t_end) - a.max(t_start);
            kwh += total(i) * overlap / delta_minutes;
        }
        let p = kwh / (width / 60.0);
        avg_power.push(p);
        peak = peak.max(p);
        if rates.is_peak(t_end - delta_minutes) {
            peak_tou = peak_tou.max(p);
        }
    }
    let consumption = bus_energy
        .iter()
        .enumerate()
        .map(|(k, e)| rates.consumption_rate_at(t0 + k as f64 * delta_minutes) * e)
        .sum();
    Billing {
        consumption,
        baseline_demand: rates.c_b * peak,
        tou_demand: rates.c_tou * peak_tou,
        avg_power,
        peak_kw: peak,
        peak_tou_kw: peak_tou,
    }
}

/// Sums a fine series into groups of `per_step` consecutive entries.
pub fn aggregate(series: &[f64], per_step: usize) -> Vec<f64> {
    series.chunks(per_step.max(1)).map(|c| c.iter().sum()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_power_whole_day() {
        let rates = RateSchedule::schedule8();
        let n = 18 * 12;
        let e = vec![5.0; n];
        let b = billing_oracle(&e, &[], 300.0, 5.0, &rates);
        assert!((b.peak_kw - 60.0).abs() < 1e-12);
        assert!((b.peak_tou_kw - 60.0).abs() < 1e-12);
        assert!((b.avg_power[0] - 20.0).abs() < 1e-12);
        assert!((b.avg_power[1] - 40.0).abs() < 1e-12);
    }

    #[test]
    fn off_peak_energy_has_no_tou_term() {
        let rates = RateSchedule::schedule8();
        let mut e = vec![0.0; 12];
        e[3] = 10.0;
        // 09:00 to 10:00 is off-peak.
        let b = billing_oracle(&e, &[], 540.0, 5.0, &rates);
        assert_eq!(b.tou_demand, 0.0);
        assert!((b.peak_kw - 40.0).abs() < 1e-12);
        assert!((b.consumption - 10.0 * rates.c_offpeak).abs() < 1e-12);
    }

    #[test]
    fn fractional_window_weights_oldest_step() {
        let rates = RateSchedule::schedule8();
        // 4-minute steps: a 15-minute window spans 3 full steps and 3/4 of one.
        let e = [4.0, 8.0, 0.0, 0.0, 0.0];
        let b = billing_oracle(&e, &[], 0.0, 4.0, &rates);
        let w = 0.25;
        assert!((b.avg_power[3] - (4.0 * 0.75 + 8.0) / w).abs() < 1e-12);
        assert!((b.avg_power[4] - 8.0 * 0.75 / w).abs() < 1e-12);
    }

    #[test]
    fn load_counts_towards_demand_only() {
        let rates = RateSchedule::schedule8();
        let b = billing_oracle(&[0.0; 3], &[5.0; 3], 600.0, 5.0, &rates);
        assert_eq!(b.consumption, 0.0);
        assert!((b.peak_kw - 60.0).abs() < 1e-12);
    }

    #[test]
    fn aggregation() {
        assert_eq!(aggregate(&[1.0, 2.0, 3.0, 4.0, 5.0], 2), vec![3.0, 7.0, 5.0]);
    }
}
