//! Instance files.
//!
//! Every instance is one JSON document with a shared header —
//! `problem_type`, `level_domain {m, M}`, `n`, `objective`, `scenarios` —
//! plus one problem-specific block (`acca`, `nhss`, or `alp`). The
//! scenario array holds the raw per-scenario records (jobs for the queue
//! problems, calls for dispatch); everything derivable — period layout,
//! boundary rules, distance tables — is rebuilt on load and re-validated,
//! so hand-edited files cannot smuggle in inconsistent data.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::apps::acca::{AccaInstance, AccaParams, FlightSpec};
use crate::apps::alp::{AlpInstance, AlpParams, AlpScenario, Call, CityGraph};
use crate::apps::nhss::{self, NhssInstance, NhssParams};
use crate::engine::SimProblem;
use crate::instance::{LevelDomain, ObjectiveMode, ObjectiveSpec};
use crate::queue::{Boundary, Job, QueueScenario};
use crate::MICROS_PER_MINUTE;

/// Any of the three bundled problem instances.
#[derive(Clone, Debug, PartialEq)]
pub enum Instance {
    Acca(AccaInstance),
    Nhss(NhssInstance),
    Alp(AlpInstance),
}

impl Instance {
    pub fn problem_type(&self) -> &'static str {
        match self {
            Instance::Acca(_) => "acca",
            Instance::Nhss(_) => "nhss",
            Instance::Alp(_) => "alp",
        }
    }

    /// The instance as the solver sees it.
    pub fn problem(&self) -> &dyn SimProblem {
        match self {
            Instance::Acca(inner) => inner,
            Instance::Nhss(inner) => inner,
            Instance::Alp(inner) => inner,
        }
    }

    pub fn objective(&self, mode: ObjectiveMode) -> ObjectiveSpec {
        match self {
            Instance::Acca(inner) => inner.objective(mode),
            Instance::Nhss(inner) => inner.objective(mode),
            Instance::Alp(inner) => inner.objective(mode),
        }
    }

    pub fn level_domain(&self) -> LevelDomain {
        match self {
            Instance::Acca(inner) => inner.level_domain(),
            Instance::Nhss(inner) => inner.level_domain(),
            Instance::Alp(inner) => inner.level_domain(),
        }
    }
}

#[derive(Debug)]
pub enum IoError {
    Io(std::io::Error),
    Parse(serde_json::Error),
    Invalid(String),
}

impl fmt::Display for IoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IoError::Io(e) => write!(f, "file error: {e}"),
            IoError::Parse(e) => write!(f, "malformed instance file: {e}"),
            IoError::Invalid(reason) => write!(f, "invalid instance: {reason}"),
        }
    }
}

impl std::error::Error for IoError {}

impl From<std::io::Error> for IoError {
    fn from(e: std::io::Error) -> Self {
        IoError::Io(e)
    }
}

impl From<serde_json::Error> for IoError {
    fn from(e: serde_json::Error) -> Self {
        IoError::Parse(e)
    }
}

fn invalid(reason: impl Into<String>) -> IoError {
    IoError::Invalid(reason.into())
}

#[derive(Serialize, Deserialize)]
struct AccaBlock {
    flights: Vec<FlightSpec>,
    #[serde(rename = "L")]
    period_minutes: i64,
    #[serde(rename = "M")]
    max_counters: u32,
    #[serde(rename = "D")]
    counter_cost: f64,
    #[serde(rename = "Q")]
    queue_cost: f64,
    arrival_profile: Vec<f64>,
    service_mean: f64,
    quantum: i64,
    seed: u64,
    flight_service: Vec<Vec<i64>>,
    #[serde(rename = "A")]
    service_forward: Vec<i64>,
    #[serde(rename = "B")]
    service_deadline: Vec<i64>,
}

#[derive(Serialize, Deserialize)]
struct NhssBlock {
    #[serde(rename = "L")]
    period_minutes: i64,
    shift_hours: Vec<u32>,
    hours_cap: u32,
    night_staff: u32,
    night_hours: u32,
    peak_periods: Vec<usize>,
    peak_weight: f64,
    rate: f64,
    short_prob: f64,
    short_mean: f64,
    long_mean: f64,
    quantum: i64,
    seed: u64,
    scheduled: Vec<Job>,
}

#[derive(Serialize, Deserialize)]
struct AlpBlock {
    nodes: Vec<(f64, f64)>,
    edges: Vec<(usize, usize)>,
    stations: Vec<usize>,
    hospitals: Vec<usize>,
    params: AlpParams,
}

/// One file struct per problem keeps the serialized field order fixed.
#[derive(Serialize, Deserialize)]
struct AccaFile {
    problem_type: String,
    level_domain: LevelDomain,
    n: usize,
    objective: ObjectiveSpec,
    scenarios: Vec<Vec<Job>>,
    acca: AccaBlock,
}

#[derive(Serialize, Deserialize)]
struct NhssFile {
    problem_type: String,
    level_domain: LevelDomain,
    n: usize,
    objective: ObjectiveSpec,
    scenarios: Vec<Vec<Job>>,
    nhss: NhssBlock,
}

#[derive(Serialize, Deserialize)]
struct AlpFile {
    problem_type: String,
    level_domain: LevelDomain,
    n: usize,
    objective: ObjectiveSpec,
    scenarios: Vec<Vec<Call>>,
    alp: AlpBlock,
}

/// Serializes an instance (pretty-printed, trailing newline). The mode is
/// stored inside the objective block and recovered by [`from_json`].
pub fn to_json(instance: &Instance, mode: ObjectiveMode) -> Result<String, IoError> {
    let text = match instance {
        Instance::Acca(inner) => {
            let p = &inner.params;
            let file = AccaFile {
                problem_type: "acca".into(),
                level_domain: inner.level_domain(),
                n: p.periods,
                objective: inner.objective(mode),
                scenarios: inner.scenarios.iter().map(|s| s.jobs.clone()).collect(),
                acca: AccaBlock {
                    flights: p.flights.clone(),
                    period_minutes: p.period_minutes,
                    max_counters: p.max_counters,
                    counter_cost: p.counter_cost,
                    queue_cost: p.queue_cost,
                    arrival_profile: p.arrival_profile.clone(),
                    service_mean: p.service_mean_minutes,
                    quantum: p.service_quantum,
                    seed: p.seed,
                    flight_service: inner.flight_service.clone(),
                    service_forward: inner.service_forward.clone(),
                    service_deadline: inner.service_deadline.clone(),
                },
            };
            serde_json::to_string_pretty(&file)?
        }
        Instance::Nhss(inner) => {
            let p = &inner.params;
            let file = NhssFile {
                problem_type: "nhss".into(),
                level_domain: inner.level_domain(),
                n: p.periods,
                objective: inner.objective(mode),
                scenarios: inner.scenarios.iter().map(|s| s.jobs.clone()).collect(),
                nhss: NhssBlock {
                    period_minutes: p.period_minutes,
                    shift_hours: p.shift_hours.clone(),
                    hours_cap: p.hours_cap,
                    night_staff: p.night_staff,
                    night_hours: p.night_hours,
                    peak_periods: p.peak_periods.clone(),
                    peak_weight: p.peak_weight,
                    rate: p.arrival_rate,
                    short_prob: p.short_prob,
                    short_mean: p.short_mean_minutes,
                    long_mean: p.long_mean_minutes,
                    quantum: p.service_quantum,
                    seed: p.seed,
                    scheduled: inner.scheduled.clone(),
                },
            };
            serde_json::to_string_pretty(&file)?
        }
        Instance::Alp(inner) => {
            let file = AlpFile {
                problem_type: "alp".into(),
                level_domain: inner.level_domain(),
                n: inner.city.stations.len(),
                objective: inner.objective(mode),
                scenarios: inner.scenarios.iter().map(|s| s.calls.clone()).collect(),
                alp: AlpBlock {
                    nodes: inner.city.points.clone(),
                    edges: inner.city.edges.clone(),
                    stations: inner.city.stations.clone(),
                    hospitals: inner.city.hospitals.clone(),
                    params: inner.params.clone(),
                },
            };
            serde_json::to_string_pretty(&file)?
        }
    };
    Ok(text + "\n")
}

/// Checks that the header of a parsed file agrees with what the rebuilt
/// instance derives for itself.
fn check_header(
    instance: &Instance,
    level_domain: LevelDomain,
    n: usize,
    objective: &ObjectiveSpec,
) -> Result<ObjectiveMode, IoError> {
    if instance.level_domain() != level_domain {
        return Err(invalid("level_domain disagrees with the problem block"));
    }
    if instance.problem().objects() != n {
        return Err(invalid("n disagrees with the problem block"));
    }
    let expected = instance.objective(objective.mode);
    if *objective != expected {
        return Err(invalid("objective block disagrees with the problem block"));
    }
    Ok(objective.mode)
}

fn queue_scenarios(
    jobs_per_scenario: Vec<Vec<Job>>,
    periods: usize,
    period_minutes: i64,
    boundary: Boundary,
) -> Result<Vec<QueueScenario>, IoError> {
    let mut scenarios = Vec::with_capacity(jobs_per_scenario.len());
    for (index, jobs) in jobs_per_scenario.into_iter().enumerate() {
        let scenario = QueueScenario {
            jobs,
            periods,
            period_len: period_minutes * MICROS_PER_MINUTE,
            boundary,
        };
        scenario
            .validate()
            .map_err(|e| invalid(format!("scenario {index}: {e}")))?;
        scenarios.push(scenario);
    }
    Ok(scenarios)
}

/// Parses an instance file, rebuilding all derived state and validating
/// the result. Returns the instance together with the objective mode the
/// file was saved with.
pub fn from_json(text: &str) -> Result<(Instance, ObjectiveMode), IoError> {
    #[derive(Deserialize)]
    struct Probe {
        problem_type: String,
    }
    let probe: Probe = serde_json::from_str(text)?;
    match probe.problem_type.as_str() {
        "acca" => {
            let file: AccaFile = serde_json::from_str(text)?;
            let params = AccaParams {
                periods: file.n,
                period_minutes: file.acca.period_minutes,
                max_counters: file.acca.max_counters,
                counter_cost: file.acca.counter_cost,
                queue_cost: file.acca.queue_cost,
                arrival_profile: file.acca.arrival_profile,
                service_mean_minutes: file.acca.service_mean,
                service_quantum: file.acca.quantum,
                flights: file.acca.flights,
                scenarios: file.scenarios.len(),
                seed: file.acca.seed,
            };
            params.validate().map_err(invalid)?;
            let scenarios = queue_scenarios(
                file.scenarios,
                params.periods,
                params.period_minutes,
                Boundary::Penalty {
                    per_unserved: params.periods as i64
                        * params.period_minutes
                        * MICROS_PER_MINUTE,
                },
            )?;
            if file.acca.flight_service.len() != scenarios.len()
                || file.acca.service_forward.len() != params.periods
                || file.acca.service_deadline.len() != params.periods
            {
                return Err(invalid("service-mass vectors have the wrong shape"));
            }
            let instance = Instance::Acca(AccaInstance {
                params,
                scenarios,
                flight_service: file.acca.flight_service,
                service_forward: file.acca.service_forward,
                service_deadline: file.acca.service_deadline,
            });
            let mode = check_header(&instance, file.level_domain, file.n, &file.objective)?;
            Ok((instance, mode))
        }
        "nhss" => {
            let file: NhssFile = serde_json::from_str(text)?;
            let params = NhssParams {
                periods: file.n,
                period_minutes: file.nhss.period_minutes,
                min_level: file.level_domain.min_level,
                max_level: file.level_domain.max_level,
                shift_hours: file.nhss.shift_hours,
                hours_cap: file.nhss.hours_cap,
                night_staff: file.nhss.night_staff,
                night_hours: file.nhss.night_hours,
                scheduled_count: file.nhss.scheduled.len(),
                peak_periods: file.nhss.peak_periods,
                peak_weight: file.nhss.peak_weight,
                arrival_rate: file.nhss.rate,
                short_prob: file.nhss.short_prob,
                short_mean_minutes: file.nhss.short_mean,
                long_mean_minutes: file.nhss.long_mean,
                service_quantum: file.nhss.quantum,
                scenarios: file.scenarios.len(),
                seed: file.nhss.seed,
            };
            params.validate().map_err(invalid)?;
            let shifts =
                nhss::shift_catalog(params.periods, params.period_minutes, &params.shift_hours)
                    .map_err(invalid)?;
            let scenarios = queue_scenarios(
                file.scenarios,
                params.periods,
                params.period_minutes,
                Boundary::Overtime {
                    extra_agents: params.night_staff,
                    extra_periods: (i64::from(params.night_hours) * 60 / params.period_minutes)
                        as u32,
                },
            )?;
            let instance = Instance::Nhss(NhssInstance {
                params,
                shifts,
                scheduled: file.nhss.scheduled,
                scenarios,
            });
            let mode = check_header(&instance, file.level_domain, file.n, &file.objective)?;
            Ok((instance, mode))
        }
        "alp" => {
            let file: AlpFile = serde_json::from_str(text)?;
            let params = file.alp.params;
            params.validate().map_err(invalid)?;
            if params.nodes != file.alp.nodes.len()
                || params.stations != file.alp.stations.len()
                || params.hospitals != file.alp.hospitals.len()
            {
                return Err(invalid("graph sizes disagree with the parameters"));
            }
            let city = CityGraph::from_parts(
                file.alp.nodes,
                file.alp.edges,
                file.alp.stations,
                file.alp.hospitals,
            )
            .map_err(invalid)?;
            let mut scenarios = Vec::with_capacity(file.scenarios.len());
            for (index, calls) in file.scenarios.into_iter().enumerate() {
                let scenario = AlpScenario { calls };
                scenario
                    .validate(params.horizon_minutes)
                    .map_err(|e| invalid(format!("scenario {index}: {e}")))?;
                scenarios.push(scenario);
            }
            if scenarios.len() != params.scenarios {
                return Err(invalid("scenario count disagrees with the parameters"));
            }
            let instance = Instance::Alp(AlpInstance {
                params,
                city,
                scenarios,
            });
            let mode = check_header(&instance, file.level_domain, file.n, &file.objective)?;
            Ok((instance, mode))
        }
        other => Err(invalid(format!(
            "unknown problem_type '{other}' (expected acca, nhss, or alp)"
        ))),
    }
}

pub fn save(path: &Path, instance: &Instance, mode: ObjectiveMode) -> Result<(), IoError> {
    std::fs::write(path, to_json(instance, mode)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(Instance, ObjectiveMode), IoError> {
    from_json(&std::fs::read_to_string(path)?)
}

/// Parses a scheduled-visit roster: a CSV with header
/// `start_minute,duration_microunits`, one visit per row.
pub fn parse_scheduled_csv(text: &str) -> Result<Vec<Job>, IoError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default().trim();
    if header != "start_minute,duration_microunits" {
        return Err(invalid(
            "expected header 'start_minute,duration_microunits'",
        ));
    }
    let mut jobs = Vec::new();
    for (number, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut cells = line.split(',');
        let (start, duration) = match (cells.next(), cells.next(), cells.next()) {
            (Some(start), Some(duration), None) => (start.trim(), duration.trim()),
            _ => {
                return Err(invalid(format!(
                    "row {}: expected two cells",
                    number + 2
                )))
            }
        };
        let start_minute: i64 = start
            .parse()
            .map_err(|_| invalid(format!("row {}: bad start minute", number + 2)))?;
        let processing: i64 = duration
            .parse()
            .map_err(|_| invalid(format!("row {}: bad duration", number + 2)))?;
        if start_minute < 0 || processing < 0 {
            return Err(invalid(format!("row {}: negative value", number + 2)));
        }
        jobs.push(Job {
            release: start_minute * MICROS_PER_MINUTE,
            processing,
        });
    }
    Ok(jobs)
}

pub fn load_scheduled_csv(path: &Path) -> Result<Vec<Job>, IoError> {
    parse_scheduled_csv(&std::fs::read_to_string(path)?)
}
