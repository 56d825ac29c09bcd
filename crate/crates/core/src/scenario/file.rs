//! TOML scenario documents.
//!
//! ```toml
//! day_start = "05:00"
//! day_end = "23:30"
//!
//! [rates]
//! c_offpeak = 0.026216
//! c_onpeak = 0.051577
//! c_b = 4.81
//! c_tou = 13.92
//! peak_windows = [["06:00", "09:00"], ["18:00", "22:00"]]
//! demand_window_minutes = 15.0
//!
//! [[charger_types]]
//! id = "fast"
//! count = 1
//! p_cc = 450.0
//! alpha = 2.0
//! location = "station_a"
//! class = "fast"
//!
//! [[buses]]
//! id = "bus1"
//! capacity_kwh = 440.0
//! eta = 0.9
//! initial_soc = 0.7
//! final_soc = 0.7
//! min_soc = 0.2
//! max_soc = 0.95
//!
//! [[buses.schedule]]
//! kind = "in_station"
//! start = "06:00"
//! end = "06:10"
//! chargers = ["fast"]
//!
//! [load_profile]
//! csv = "time,kwh_per_step\n05:00,2.5\n"
//! ```
//!
//! `load_profile` may instead give `file = "load.csv"`, resolved relative to
//! the scenario file. Buses accept an optional `[buses.alpha]` table of
//! per-charger-type decay-rate overrides.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    BlockKind, Bus, ChargerClass, ChargerType, LoadProfile, RateSchedule, Scenario, ScenarioError, ScheduleBlock,
};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Doc {
    day_start: String,
    day_end: String,
    rates: RatesDoc,
    charger_types: Vec<ChargerDoc>,
    buses: Vec<BusDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    load_profile: Option<LoadDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RatesDoc {
    c_offpeak: f64,
    c_onpeak: f64,
    c_b: f64,
    c_tou: f64,
    #[serde(default)]
    peak_windows: Vec<[String; 2]>,
    demand_window_minutes: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChargerDoc {
    id: String,
    count: u32,
    p_cc: f64,
    alpha: f64,
    #[serde(default)]
    location: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BusDoc {
    id: String,
    capacity_kwh: f64,
    eta: f64,
    initial_soc: f64,
    final_soc: f64,
    min_soc: f64,
    max_soc: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    alpha: BTreeMap<String, f64>,
    #[serde(default)]
    schedule: Vec<BlockDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockDoc {
    kind: String,
    start: String,
    end: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    chargers: Vec<String>,
    #[serde(default, skip_serializing_if = "is_zero")]
    route_power_kw: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LoadDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    file: Option<String>,
}

/// Parse `HH:MM` or `HH:MM:SS` into minutes since midnight. Hours may run
/// past 23 for schedules that cross midnight.
pub fn parse_hhmm(s: &str) -> Result<f64, ScenarioError> {
    let bad = || ScenarioError::Time(s.to_string());
    let parts: Vec<&str> = s.trim().split(':').collect();
    if parts.len() < 2 || parts.len() > 3 {
        return Err(bad());
    }
    let h: u32 = parts[0].parse().map_err(|_| bad())?;
    let m: u32 = parts[1].parse().map_err(|_| bad())?;
    let sec: f64 = if parts.len() == 3 {
        parts[2].parse().map_err(|_| bad())?
    } else {
        0.0
    };
    if m >= 60 || !(0.0..60.0).contains(&sec) {
        return Err(bad());
    }
    Ok(h as f64 * 60.0 + m as f64 + sec / 60.0)
}

pub fn format_hhmm(t: f64) -> String {
    let total_s = (t * 60.0).round() as i64;
    let h = total_s / 3600;
    let m = (total_s % 3600) / 60;
    let s = total_s % 60;
    if s == 0 {
        format!("{h:02}:{m:02}")
    } else {
        format!("{h:02}:{m:02}:{s:02}")
    }
}

fn parse_kind(s: &str) -> Result<BlockKind, String> {
    match s {
        "on_route" => Ok(BlockKind::OnRoute),
        "in_station" => Ok(BlockKind::InStation),
        "at_depot" => Ok(BlockKind::AtDepot),
        other => Err(format!("unknown block kind {other:?}")),
    }
}

fn kind_name(k: BlockKind) -> &'static str {
    match k {
        BlockKind::OnRoute => "on_route",
        BlockKind::InStation => "in_station",
        BlockKind::AtDepot => "at_depot",
    }
}

fn parse_load_csv(text: &str) -> Result<LoadProfile, ScenarioError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| ScenarioError::Load(e.to_string()))?.clone();
    if headers.len() != 2 || &headers[0] != "time" || &headers[1] != "kwh_per_step" {
        return Err(ScenarioError::Load("expected header `time,kwh_per_step`".into()));
    }
    let mut lp = LoadProfile::default();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| ScenarioError::Load(e.to_string()))?;
        let t = parse_hhmm(&rec[0])?;
        let v: f64 = rec[1]
            .parse()
            .map_err(|_| ScenarioError::Load(format!("row {}: bad energy {:?}", i + 1, &rec[1])))?;
        lp.times.push(t);
        lp.kwh_per_step.push(v);
    }
    Ok(lp)
}

fn load_csv_text(lp: &LoadProfile) -> String {
    let mut out = String::from("time,kwh_per_step\n");
    for (t, v) in lp.times.iter().zip(&lp.kwh_per_step) {
        out.push_str(&format!("{},{}\n", format_hhmm(*t), v));
    }
    out
}

fn from_doc(doc: Doc, base: Option<&Path>) -> Result<Scenario, ScenarioError> {
    let rates = RateSchedule {
        c_offpeak: doc.rates.c_offpeak,
        c_onpeak: doc.rates.c_onpeak,
        c_b: doc.rates.c_b,
        c_tou: doc.rates.c_tou,
        peak_windows: doc
            .rates
            .peak_windows
            .iter()
            .map(|[a, b]| Ok((parse_hhmm(a)?, parse_hhmm(b)?)))
            .collect::<Result<_, ScenarioError>>()?,
        demand_window_minutes: doc.rates.demand_window_minutes,
    };
    let charger_types = doc
        .charger_types
        .into_iter()
        .map(|c| {
            let class = match c.class.as_deref() {
                Some("slow") => ChargerClass::Slow,
                Some("fast") => ChargerClass::Fast,
                None if c.p_cc >= 150.0 => ChargerClass::Fast,
                None => ChargerClass::Slow,
                Some(other) => {
                    return Err(ScenarioError::Charger {
                        id: c.id.clone(),
                        msg: format!("unknown class {other:?}"),
                    })
                }
            };
            Ok(ChargerType {
                id: c.id,
                count: c.count,
                p_cc: c.p_cc,
                alpha: c.alpha,
                location: c.location,
                class,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let buses = doc
        .buses
        .into_iter()
        .map(|b| {
            let schedule = b
                .schedule
                .into_iter()
                .map(|blk| {
                    Ok(ScheduleBlock {
                        kind: parse_kind(&blk.kind).map_err(|msg| ScenarioError::Bus { bus: b.id.clone(), msg })?,
                        start: parse_hhmm(&blk.start)?,
                        end: parse_hhmm(&blk.end)?,
                        available_chargers: blk.chargers,
                        route_power_kw: blk.route_power_kw,
                    })
                })
                .collect::<Result<Vec<_>, ScenarioError>>()?;
            Ok(Bus {
                id: b.id,
                capacity_kwh: b.capacity_kwh,
                eta: b.eta,
                initial_soc: b.initial_soc,
                final_soc: b.final_soc,
                min_soc: b.min_soc,
                max_soc: b.max_soc,
                schedule,
                alpha_override: b.alpha,
            })
        })
        .collect::<Result<Vec<_>, ScenarioError>>()?;
    let load_profile = match doc.load_profile {
        None => LoadProfile::default(),
        Some(LoadDoc {
            csv: Some(text),
            file: None,
        }) => parse_load_csv(&text)?,
        Some(LoadDoc {
            csv: None,
            file: Some(path),
        }) => {
            let full = match base {
                Some(dir) => dir.join(&path),
                None => Path::new(&path).to_path_buf(),
            };
            let text =
                std::fs::read_to_string(&full).map_err(|e| ScenarioError::Io(format!("{}: {e}", full.display())))?;
            parse_load_csv(&text)?
        }
        Some(_) => return Err(ScenarioError::Load("give exactly one of `csv` or `file`".into())),
    };
    let scenario = Scenario {
        buses,
        charger_types,
        rates,
        load_profile,
        day_start: parse_hhmm(&doc.day_start)?,
        day_end: parse_hhmm(&doc.day_end)?,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Parse and validate a scenario document. Load-profile files are resolved
/// against the working directory.
pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let doc: Doc = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    from_doc(doc, None)
}

pub fn load_scenario_file(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
    let doc: Doc = toml::from_str(&text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    from_doc(doc, path.parent())
}

/// Serialize a scenario; the load profile is written inline.
pub fn scenario_to_toml(s: &Scenario) -> String {
    let doc = Doc {
        day_start: format_hhmm(s.day_start),
        day_end: format_hhmm(s.day_end),
        rates: RatesDoc {
            c_offpeak: s.rates.c_offpeak,
            c_onpeak: s.rates.c_onpeak,
            c_b: s.rates.c_b,
            c_tou: s.rates.c_tou,
            peak_windows: s
                .rates
                .peak_windows
                .iter()
                .map(|&(a, b)| [format_hhmm(a), format_hhmm(b)])
                .collect(),
            demand_window_minutes: s.rates.demand_window_minutes,
        },
        charger_types: s
            .charger_types
            .iter()
            .map(|c| ChargerDoc {
                id: c.id.clone(),
                count: c.count,
                p_cc: c.p_cc,
                alpha: c.alpha,
                location: c.location.clone(),
                class: Some(
                    match c.class {
                        ChargerClass::Slow => "slow",
                        ChargerClass::Fast => "fast",
                    }
                    .to_string(),
                ),
            })
            .collect(),
        buses: s
            .buses
            .iter()
            .map(|b| BusDoc {
                id: b.id.clone(),
                capacity_kwh: b.capacity_kwh,
                eta: b.eta,
                initial_soc: b.initial_soc,
                final_soc: b.final_soc,
                min_soc: b.min_soc,
                max_soc: b.max_soc,
                alpha: b.alpha_override.clone(),
                schedule: b
                    .schedule
                    .iter()
                    .map(|blk| BlockDoc {
                        kind: kind_name(blk.kind).to_string(),
                        start: format_hhmm(blk.start),
                        end: format_hhmm(blk.end),
                        chargers: blk.available_chargers.clone(),
                        route_power_kw: blk.route_power_kw,
                    })
                    .collect(),
            })
            .collect(),
        load_profile: if s.load_profile.is_empty() {
            None
        } else {
            Some(LoadDoc {
                csv: Some(load_csv_text(&s.load_profile)),
                file: None,
            })
        },
    };
    toml::to_string(&doc).expect("scenario documents always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
day_start = "05:00"
day_end = "23:30"

[rates]
c_offpeak = 0.026216
c_onpeak = 0.051577
c_b = 4.81
c_tou = 13.92
peak_windows = [["06:00", "09:00"], ["18:00", "22:00"]]
demand_window_minutes = 15.0

[[charger_types]]
id = "1"
count = 1
p_cc = 450.0
alpha = 2.0
location = "station_a"

[[buses]]
id = "bus1"
capacity_kwh = 440.0
eta = 0.9
initial_soc = 0.7
final_soc = 0.7
min_soc = 0.2
max_soc = 0.95

[[buses.schedule]]
kind = "on_route"
start = "05:00"
end = "06:00"
route_power_kw = 30.0

[[buses.schedule]]
kind = "in_station"
start = "06:00"
end = "06:10"
chargers = ["1"]
"#;

    #[test]
    fn parses_example_visit() {
        let s = load_scenario(EXAMPLE).unwrap();
        assert_eq!(s.buses.len(), 1);
        let blk = &s.buses[0].schedule[1];
        assert_eq!(blk.kind, BlockKind::InStation);
        assert_eq!((blk.start, blk.end), (360.0, 370.0));
        assert_eq!(blk.available_chargers, vec!["1".to_string()]);
        assert_eq!(s.charger_types[0].class, ChargerClass::Fast);
        assert!(s.load_profile.is_empty());
    }

    #[test]
    fn round_trips_through_toml() {
        let s = load_scenario(EXAMPLE).unwrap();
        let text = scenario_to_toml(&s);
        let again = load_scenario(&text).unwrap();
        assert_eq!(s, again);
        assert_eq!(text, scenario_to_toml(&again));
    }

    #[test]
    fn rejects_empty_bus_list() {
        let head = EXAMPLE.split("[[buses]]").next().unwrap();
        let err = load_scenario(&format!("buses = []\n{head}")).unwrap_err();
        assert_eq!(err, ScenarioError::NoBuses);
    }

    #[test]
    fn rejects_overlapping_blocks() {
        let text = EXAMPLE.replace(
            "start = \"06:00\"\nend = \"06:10\"",
            "start = \"05:50\"\nend = \"06:10\"",
        );
        match load_scenario(&text).unwrap_err() {
            ScenarioError::Overlap { bus, first, second } => {
                assert_eq!(bus, "bus1");
                assert_eq!((first, second), (0, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = load_scenario("day_start = \n").unwrap_err();
        match err {
            ScenarioError::Parse(msg) => assert!(msg.contains("line 1"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inline_load_profile() {
        let text = format!("{EXAMPLE}\n[load_profile]\ncsv = \"time,kwh_per_step\\n05:00,2.5\\n05:15,3.0\\n\"\n");
        let s = load_scenario(&text).unwrap();
        assert_eq!(s.load_profile.times, vec![300.0, 315.0]);
        assert_eq!(s.load_profile.kwh_per_step, vec![2.5, 3.0]);
        let again = load_scenario(&scenario_to_toml(&s)).unwrap();
        assert_eq!(again.load_profile, s.load_profile);
    }

    #[test]
    fn time_formatting() {
        assert_eq!(parse_hhmm("06:10").unwrap(), 370.0);
        assert_eq!(format_hhmm(370.0), "06:10");
        assert_eq!(format_hhmm(370.5), "06:10:30");
        assert_eq!(parse_hhmm("06:10:30").unwrap(), 370.5);
        assert!(parse_hhmm("6h").is_err());
        assert!(parse_hhmm("06:61").is_err());
    }
}
