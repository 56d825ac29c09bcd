//! Rule-based controllers driven tick by tick.

use crate::milp::ChargePlan;

use super::env::{Command, Environment, TICK_MINUTES};

/// Threshold charging: a bus arriving below the threshold queues for the
/// fastest free charger at its station and charges at full rate until its
/// maximum SOC or departure. Waiting buses are served first come first
/// served; one charge per visit.
#[derive(Debug, Clone)]
pub struct QinController {
    threshold: f64,
    /// Per bus: current visit block, arrival tick, charger in use, finished.
    visit: Vec<Option<QinVisit>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct QinVisit {
    block: usize,
    arrived: usize,
    charger: Option<usize>,
    done: bool,
}

impl QinController {
    pub fn new(num_buses: usize, threshold: f64) -> Self {
        Self {
            threshold,
            visit: vec![None; num_buses],
        }
    }

    pub fn commands(&mut self, env: &Environment) -> Vec<Command> {
        let s = env.truth();
        let nb = env.num_buses();
        for j in 0..nb {
            let here = env.presence(j);
            let bus = &s.buses[j];
            match (here, self.visit[j]) {
                (None, _) => self.visit[j] = None,
                (Some(p), Some(v)) if v.block == p.block => {}
                (Some(p), _) => {
                    let below = env.soc[j] < self.threshold * bus.capacity_kwh;
                    self.visit[j] = Some(QinVisit {
                        block: p.block,
                        arrived: env.tick,
                        charger: None,
                        done: !below,
                    });
                }
            }
            if let Some(v) = self.visit[j].as_mut() {
                if v.charger.is_some() && env.soc[j] >= bus.max_soc * bus.capacity_kwh - 1e-9 {
                    v.charger = None;
                    v.done = true;
                }
            }
        }

        let mut busy = vec![0u32; s.charger_types.len()];
        for v in self.visit.iter().flatten() {
            if let Some(l) = v.charger {
                busy[l] += 1;
            }
        }
        let mut waiting: Vec<(usize, usize)> = self
            .visit
            .iter()
            .enumerate()
            .filter_map(|(j, v)| v.filter(|v| v.charger.is_none() && !v.done).map(|v| (v.arrived, j)))
            .collect();
        waiting.sort_unstable();
        for (_, j) in waiting {
            let bus = &s.buses[j];
            let v = self.visit[j].as_mut().expect("waiting bus has a visit");
            if env.soc[j] >= self.threshold * bus.capacity_kwh {
                v.done = true;
                continue;
            }
            let best = env
                .block_chargers(j, v.block)
                .iter()
                .copied()
                .filter(|&l| busy[l] < s.charger_types[l].count)
                .min_by(|&a, &b| {
                    let (ca, cb) = (&s.charger_types[a], &s.charger_types[b]);
                    cb.p_cc.total_cmp(&ca.p_cc).then_with(|| ca.id.cmp(&cb.id))
                });
            if let Some(l) = best {
                busy[l] += 1;
                v.charger = Some(l);
            }
        }

        (0..nb)
            .map(|j| {
                let v = self.visit[j]?;
                let l = v.charger?;
                let bus = &s.buses[j];
                let room = (bus.max_soc * bus.capacity_kwh - env.soc[j]).max(0.0);
                let kw = s.charger_types[l].p_cc.min(room * 60.0 / TICK_MINUTES);
                Some((l, kw))
            })
            .collect()
    }
}

/// Replays the day plan: charges only inside planned intervals at the
/// planned power, staying connected through zero-power steps. A late bus
/// loses the front of its interval; an absent bus loses the whole interval.
#[derive(Debug, Clone)]
pub struct OpenLoopController<'a> {
    plan: &'a ChargePlan,
}

impl<'a> OpenLoopController<'a> {
    pub fn new(plan: &'a ChargePlan) -> Self {
        Self { plan }
    }

    pub fn commands(&mut self, env: &Environment) -> Vec<Command> {
        let t = env.time() + 0.5 * TICK_MINUTES;
        (0..env.num_buses())
            .map(|j| {
                if t < self.plan.t0 || t >= self.plan.t1 {
                    return None;
                }
                self.plan.charging_at(j, t)
            })
            .collect()
    }
}
