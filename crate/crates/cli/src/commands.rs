use std::fmt;
use std::fs;
use std::path::Path;

use serde_json::json;

use busplan_core::charge_model::{
    attainable_gain, continuous_params, discretize_params, gain_upper_bound, ideal_gain_bound,
};
use busplan_core::milp::{build_day_model, export_lp, plan_day, DayPlan, DayPlanConfig, PlanError};
use busplan_core::receding_horizon::HorizonConfig;
use busplan_core::scenario::{
    format_hhmm, generate_random_scenario, load_scenario_file, scenario_to_toml, BlockKind, GeneratorBounds, Scenario,
};
use busplan_core::simulation::{monte_carlo, multi_day, McReport, NoiseParams, SimConfig, SimError};
use busplan_core::solver::MipOptions;

use crate::{GenArgs, McArgs, NoiseLevel, PlanArgs, PlanOpts, ProbeArgs, SimOpts, SimulateArgs};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Infeasible(String),
    Limit(String),
    Io(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Limit(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Infeasible(m) | CliError::Limit(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::Infeasible | PlanError::Unbounded => CliError::Infeasible(format!("day plan: {e}")),
            PlanError::NoSolution { .. } => CliError::Limit(format!("day plan: {e}")),
            PlanError::Scenario(_) | PlanError::Model(_) => CliError::Usage(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Plan(p) => p.into(),
            SimError::MissingPlan(_) => CliError::Io(e.to_string()),
            SimError::Noise | SimError::Horizon(_) => CliError::Usage(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load(path: &Path) -> Result<Scenario> {
    load_scenario_file(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn ids(s: &Scenario) -> (Vec<String>, Vec<String>) {
    (
        s.buses.iter().map(|b| b.id.clone()).collect(),
        s.charger_types.iter().map(|c| c.id.clone()).collect(),
    )
}

fn day_config(o: &PlanOpts) -> Result<DayPlanConfig> {
    if !(o.delta > 0.0) {
        return Err(CliError::Usage(format!("--delta must be positive, got {}", o.delta)));
    }
    Ok(DayPlanConfig {
        delta_minutes: o.delta,
        fixed_rate: o.fixed_rate,
        initial_soc: None,
        limits: MipOptions {
            node_limit: Some(o.node_limit),
            ..MipOptions::default()
        },
    })
}

fn sim_config(o: &SimOpts) -> Result<SimConfig> {
    let horizon = HorizonConfig {
        horizon_minutes: o.horizon,
        delta_rh_minutes: o.step,
        terminal_weight: o.terminal_weight,
        limits: MipOptions {
            node_limit: Some(o.horizon_node_limit),
            ..MipOptions::default()
        },
        ..HorizonConfig::default()
    };
    horizon.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if !(0.0..=1.0).contains(&o.threshold) {
        return Err(CliError::Usage(format!(
            "--threshold must be in [0, 1], got {}",
            o.threshold
        )));
    }
    Ok(SimConfig {
        noise: match o.noise {
            NoiseLevel::Zero => NoiseParams::zero(),
            NoiseLevel::Published => NoiseParams::published(),
        },
        qin_threshold: o.threshold,
        horizon,
        initial_soc: None,
    })
}

pub fn gen(a: GenArgs) -> Result<()> {
    let s = generate_random_scenario(a.buses as usize, a.seed, &GeneratorBounds::default())
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let visits: usize = s
        .buses
        .iter()
        .map(|b| b.schedule.iter().filter(|k| k.kind == BlockKind::InStation).count())
        .sum();
    let summary = format!(
        "{} buses, {} charger types, {} station visits, {}-{}",
        s.buses.len(),
        s.charger_types.len(),
        visits,
        format_hhmm(s.day_start),
        format_hhmm(s.day_end)
    );
    let doc = scenario_to_toml(&s);
    match a.out {
        Some(p) => {
            write(&p, &doc)?;
            println!("{summary} -> {}", p.display());
        }
        None => {
            print!("{doc}");
            eprintln!("{summary}");
        }
    }
    Ok(())
}

fn solver_json(day: &DayPlan) -> serde_json::Value {
    json!({
        "status": format!("{:?}", day.result.status),
        "gap": day.result.gap,
        "bound": day.result.bound,
        "nodes": day.result.nodes,
    })
}

pub fn plan(a: PlanArgs) -> Result<()> {
    let s = load(&a.scenario)?;
    let cfg = day_config(&a.plan)?;
    if a.export_lp {
        let model = build_day_model(&s, &cfg)?;
        let path = a.out_dir.join("model.lp");
        write(&path, &export_lp(&model.milp))?;
        println!("wrote {}", path.display());
    }
    let day = plan_day(&s, &cfg)?;
    let (buses, chargers) = ids(&s);
    write(&a.out_dir.join("plan.csv"), &day.plan.to_csv(&buses, &chargers))?;
    let mut summary: serde_json::Value = serde_json::from_str(&day.plan.summary_json()).expect("plan summary is json");
    summary["fixed_rate"] = json!(cfg.fixed_rate);
    summary["solver"] = solver_json(&day);
    write(
        &a.out_dir.join("plan.json"),
        &serde_json::to_string_pretty(&summary).expect("plain json"),
    )?;
    let b = &day.plan.breakdown;
    println!(
        "objective {:.4}: consumption {:.4}, baseline demand {:.4}, tou demand {:.4}",
        day.plan.objective, b.consumption, b.baseline_demand, b.tou_demand
    );
    println!(
        "{:?} after {} nodes, gap {:.4}, {} charge intervals",
        day.result.status,
        day.result.nodes,
        day.result.gap,
        day.plan.intervals.len()
    );
    Ok(())
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let s = load(&a.scenario)?;
    let cfg = sim_config(&a.sim)?;
    let plan = if a.strategy.needs_plan() {
        Some(plan_day(&s, &day_config(&a.plan)?)?.plan)
    } else {
        None
    };
    let run = busplan_core::simulation::simulate(&s, a.strategy, plan.as_ref(), &cfg, a.seed)?;
    let (buses, chargers) = ids(&s);
    write(
        &a.out_dir.join("trajectory.csv"),
        &run.trajectory_csv(&buses, &chargers),
    )?;
    write(&a.out_dir.join("run.json"), &run.summary_json())?;
    println!(
        "{} seed {}: cost {:.4}, {} charge events, {} violation ticks{}",
        a.strategy,
        a.seed,
        run.cost(),
        run.intervals.len(),
        run.violation_ticks,
        if run.failed { ", failed" } else { "" }
    );
    if let Some(p) = &plan {
        println!("nominal plan cost {:.4}", p.objective);
    }
    Ok(())
}

fn write_report(dir: &Path, stem: &str, r: &McReport) -> Result<()> {
    write(&dir.join(format!("{stem}_runs.csv")), &r.runs_csv())?;
    write(&dir.join(format!("{stem}_trace.csv")), &r.trace_csv())?;
    write(&dir.join(format!("{stem}.json")), &r.summary_json())
}

fn report_line(name: &str, r: &McReport) -> String {
    format!(
        "{:<13} {:>12.4} {:>9.3} {:>9.3} {:>11.5}",
        name,
        r.mean_cost,
        r.violation_rate,
        r.failure_rate,
        r.terminal_sigma3()
    )
}

const HEADER: &str = "strategy         mean_cost violation   failure  terminal_3s";

pub fn mc(a: McArgs) -> Result<()> {
    let s = load(&a.scenario)?;
    let cfg = sim_config(&a.sim)?;
    let day_cfg = day_config(&a.plan)?;
    let runs = a.runs as usize;
    let jobs = a.jobs as usize;
    if a.days > 1 {
        return mc_days(&s, &a, &cfg, &day_cfg);
    }
    let needs_plan = a.strategy.0.iter().any(|k| k.needs_plan());
    let plan = if needs_plan {
        Some(plan_day(&s, &day_cfg)?.plan)
    } else {
        None
    };
    if let Some(p) = &plan {
        println!("nominal plan cost {:.4}", p.objective);
    }
    println!("{HEADER}");
    for &k in &a.strategy.0 {
        let r = monte_carlo(&s, k, plan.as_ref(), &cfg, runs, a.seed, jobs)?;
        write_report(&a.out_dir, &format!("mc_{k}"), &r)?;
        println!("{}", report_line(k.name(), &r));
    }
    Ok(())
}

fn mc_days(s: &Scenario, a: &McArgs, cfg: &SimConfig, day_cfg: &DayPlanConfig) -> Result<()> {
    println!("day {HEADER}");
    for &k in &a.strategy.0 {
        let chain = multi_day(
            s,
            k,
            cfg,
            day_cfg,
            a.days as usize,
            a.runs as usize,
            a.seed,
            a.jobs as usize,
        )?;
        let mut days = Vec::new();
        for d in &chain.days {
            match (&d.report, &d.failure) {
                (Some(r), _) => {
                    write_report(&a.out_dir, &format!("mc_{k}_day{}", d.day), r)?;
                    println!("{:>3} {}", d.day, report_line(k.name(), r));
                }
                (None, Some(f)) => println!("{:>3} {:<13} {f}", d.day, k.name()),
                (None, None) => {}
            }
            days.push(json!({
                "day": d.day,
                "initial_soc_kwh": d.initial_soc_kwh,
                "plan_objective": d.plan_objective,
                "failure": d.failure,
                "mean_cost": d.report.as_ref().map(|r| r.mean_cost),
                "violation_rate": d.report.as_ref().map(|r| r.violation_rate),
                "terminal_sigma3": d.report.as_ref().map(McReport::terminal_sigma3),
                "mean_final_soc_kwh": d.report.as_ref().map(|r| r.mean_final_soc.clone()),
            }));
        }
        let doc = json!({
            "strategy": k.name(),
            "base_seed": a.seed,
            "runs_per_day": a.runs,
            "drift_kwh": chain.drift(),
            "days": days,
        });
        write(
            &a.out_dir.join(format!("mc_{k}_days.json")),
            &serde_json::to_string_pretty(&doc).expect("plain json"),
        )?;
        println!("{:<13} drift {:.4} kWh", k.name(), chain.drift());
    }
    Ok(())
}

pub fn probe(a: ProbeArgs) -> Result<()> {
    let positive = [
        ("--p-cc", a.p_cc),
        ("--alpha", a.alpha),
        ("--capacity", a.capacity),
        ("--delta", a.delta),
    ];
    if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(CliError::Usage(format!("{name} must be positive, got {v}")));
    }
    if !(a.eta > 0.0 && a.eta <= 1.0) {
        return Err(CliError::Usage(format!("--eta must be in (0, 1], got {}", a.eta)));
    }
    let c = continuous_params(a.p_cc, a.alpha, a.eta, a.capacity);
    let hours = a.delta / 60.0;
    let d = discretize_params(&c, hours);
    let mut out = String::from("soc_kwh,concave_bound_kwh,ideal_bound_kwh,exact_gain_kwh\n");
    let n = a.points as usize;
    for i in 0..n {
        let soc = a.capacity * i as f64 / (n - 1) as f64;
        out.push_str(&format!(
            "{soc:.6},{:.9},{:.9},{:.9}\n",
            gain_upper_bound(soc, &d),
            ideal_gain_bound(soc, &d, &c),
            attainable_gain(soc, hours, &c)
        ));
    }
    match a.out {
        Some(p) => write(&p, &out),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}
