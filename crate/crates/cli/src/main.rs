//! Command-line front end for the branch-and-simulate solver.
//!
//! Subcommands: `generate` (write an instance file), `solve` (run the
//! decomposition with any cut configuration), `profile` and `stability`
//! (summarize batches of solution files), and `oracle` (budgeted
//! exhaustive enumeration for ground truth).
//!
//! Exit codes: 0 success (including a clean time-out), 2 usage or input
//! errors, 3 infeasible model, 4 oracle budget refused.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use branchsim_core::apps::acca::{self, AccaParams};
use branchsim_core::apps::alp::{self, AlpParams};
use branchsim_core::apps::nhss::{self, NhssParams};
use branchsim_core::bnb::SolveStatus;
use branchsim_core::cuts::CutKind;
use branchsim_core::engine::{Engine, EngineConfig, SolveOutput};
use branchsim_core::instance::ObjectiveMode;
use branchsim_core::io::{self, Instance};
use branchsim_core::oracle::{self, OracleError, OracleResult};
use branchsim_core::report::{
    build_profile, cut_terms_csv, cuts_csv, stability_csv, ProfileEntry, SolutionRecord,
    SolveReport,
};

const EXIT_USAGE: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_BUDGET: u8 = 4;

/// A failure that ends the run with a message and a specific exit code.
struct Failure {
    message: String,
    code: u8,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Failure {
        Failure {
            message: message.into(),
            code: EXIT_USAGE,
        }
    }
}

type CmdResult = Result<u8, Failure>;

/// Prints to stdout, tolerating a closed pipe (e.g. `… | head`).
fn emit(text: std::fmt::Arguments<'_>) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{text}");
}

macro_rules! say {
    ($($arg:tt)*) => { emit(format_args!($($arg)*)) };
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

#[derive(Parser)]
#[command(
    name = "branchsim",
    about = "Exact optimization of simulated systems by branch and bound with lazy cuts",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write an instance file for one of the bundled problems.
    #[command(subcommand)]
    Generate(GenerateCommand),
    /// Solve an instance and write reports.
    Solve(SolveArgs),
    /// Build a two-regime performance profile from solution files.
    Profile(ProfileArgs),
    /// Summarize how solutions spread per variable across runs.
    Stability(StabilityArgs),
    /// Enumerate every allocation to find the exact optimum.
    Oracle(OracleArgs),
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Generate(generate) => cmd_generate(generate),
        Command::Solve(args) => cmd_solve(args),
        Command::Profile(args) => cmd_profile(args),
        Command::Stability(args) => cmd_stability(args),
        Command::Oracle(args) => cmd_oracle(args),
    }
}

// ---------------------------------------------------------------- generate

#[derive(Subcommand)]
enum GenerateCommand {
    /// Airport check-in counter allocation.
    Acca(GenAccaArgs),
    /// Nurse home-service staffing.
    Nhss(GenNhssArgs),
    /// Ambulance location and dispatch.
    Alp(GenAlpArgs),
}

#[derive(Args)]
struct GenAccaArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 25)]
    scenarios: usize,
    /// Queueing cost per period of delay (standard layout only).
    #[arg(long, default_value_t = 10.0)]
    queue_cost: f64,
    /// Use the small enumerable layout instead of the benchmark one.
    #[arg(long)]
    toy: bool,
    /// Horizon length for the toy layout.
    #[arg(long, default_value_t = 4)]
    periods: usize,
    /// Counter cap for the toy layout.
    #[arg(long, default_value_t = 3)]
    max_counters: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenNhssArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 25)]
    scenarios: usize,
    /// Unscheduled arrivals per hour.
    #[arg(long, default_value_t = 20.0)]
    rate: f64,
    /// Probability that a visit is short.
    #[arg(long, default_value_t = 0.8)]
    short_prob: f64,
    /// Staffed-hours budget.
    #[arg(long, default_value_t = 40)]
    hours_cap: u32,
    /// Use the small enumerable layout instead of the benchmark one.
    #[arg(long)]
    toy: bool,
    /// Load the scheduled visits from a CSV
    /// (`start_minute,duration_microunits`) instead of sampling them.
    #[arg(long)]
    scheduled_csv: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlpPreset {
    Standard,
    Small,
    Tiny,
}

#[derive(Args)]
struct GenAlpArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Base configuration before any overrides.
    #[arg(long, value_enum, default_value_t = AlpPreset::Standard)]
    preset: AlpPreset,
    #[arg(long)]
    scenarios: Option<usize>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    stations: Option<usize>,
    #[arg(long)]
    hospitals: Option<usize>,
    #[arg(long)]
    fleet: Option<u32>,
    /// City side length.
    #[arg(long)]
    box_size: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

fn cmd_generate(command: GenerateCommand) -> CmdResult {
    let (instance, out) = match command {
        GenerateCommand::Acca(args) => {
            let params = if args.toy {
                AccaParams::toy(args.seed, args.scenarios, args.periods, args.max_counters)
            } else {
                AccaParams::standard(args.seed, args.scenarios, args.queue_cost)
            };
            let instance = acca::generate(params).map_err(Failure::usage)?;
            (Instance::Acca(instance), args.out)
        }
        GenerateCommand::Nhss(args) => {
            let mut params = if args.toy {
                NhssParams::toy(args.seed, args.scenarios)
            } else {
                NhssParams::standard(args.seed, args.scenarios, args.rate, args.short_prob)
            };
            if !args.toy {
                params.hours_cap = args.hours_cap;
            }
            let instance = match args.scheduled_csv {
                Some(path) => {
                    let scheduled =
                        io::load_scheduled_csv(&path).map_err(|e| Failure::usage(e.to_string()))?;
                    nhss::generate_with_scheduled(params, scheduled)
                }
                None => nhss::generate(params),
            }
            .map_err(Failure::usage)?;
            (Instance::Nhss(instance), args.out)
        }
        GenerateCommand::Alp(args) => {
            let mut params = match args.preset {
                AlpPreset::Standard => AlpParams::standard(args.seed, args.scenarios.unwrap_or(25)),
                AlpPreset::Small => AlpParams::small(args.seed),
                AlpPreset::Tiny => AlpParams::tiny(args.seed),
            };
            if args.preset != AlpPreset::Standard {
                if let Some(scenarios) = args.scenarios {
                    params.scenarios = scenarios;
                }
            }
            if let Some(nodes) = args.nodes {
                params.nodes = nodes;
            }
            if let Some(stations) = args.stations {
                params.stations = stations;
            }
            if let Some(hospitals) = args.hospitals {
                params.hospitals = hospitals;
            }
            if let Some(fleet) = args.fleet {
                params.fleet = fleet;
            }
            if let Some(box_size) = args.box_size {
                params.box_size = box_size;
            }
            let instance = alp::generate(params).map_err(Failure::usage)?;
            (Instance::Alp(instance), args.out)
        }
    };
    io::save(&out, &instance, ObjectiveMode::Mean).map_err(|e| Failure::usage(e.to_string()))?;
    say!(
        "wrote {} instance ({} objects, {} scenarios) to {}",
        instance.problem_type(),
        instance.problem().objects(),
        instance.problem().scenarios(),
        out.display()
    );
    Ok(0)
}

// ------------------------------------------------------------------- solve

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ObjectiveArg {
    Mean,
    Cvar,
}

#[derive(Args)]
struct ObjectiveFlags {
    /// Override the aggregation stored in the instance file.
    #[arg(long, value_enum)]
    objective: Option<ObjectiveArg>,
    /// Weight of the mean term (cvar only).
    #[arg(long, default_value_t = 0.5)]
    w0: f64,
    /// Weight of the tail term (cvar only).
    #[arg(long, default_value_t = 0.5)]
    w1: f64,
    /// Tail level (cvar only).
    #[arg(long, default_value_t = 0.95)]
    beta: f64,
}

impl ObjectiveFlags {
    fn resolve(&self, stored: ObjectiveMode) -> ObjectiveMode {
        match self.objective {
            None => stored,
            Some(ObjectiveArg::Mean) => ObjectiveMode::Mean,
            Some(ObjectiveArg::Cvar) => ObjectiveMode::Cvar {
                mean_weight: self.w0,
                tail_weight: self.w1,
                beta: self.beta,
            },
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    /// Cut family separated at incumbents.
    #[arg(long, default_value = "strong")]
    cuts: CutKind,
    /// Seed the search with two-dimensional table cuts.
    #[arg(long)]
    initial_cuts: bool,
    /// Wall-clock limit in seconds.
    #[arg(long, default_value_t = 3600.0)]
    time_limit: f64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Recorded in the solution file for bookkeeping; solving is fully
    /// determined by the instance file.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    objective: ObjectiveFlags,
    /// Write the one-row report CSV here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the full solution JSON here.
    #[arg(long)]
    solution: Option<PathBuf>,
    /// Write every cut (plus a `.terms.csv` sidecar) here.
    #[arg(long)]
    dump_cuts: Option<PathBuf>,
    /// Re-simulate the incumbent and write one queue trace CSV per
    /// scenario (queue problems only).
    #[arg(long)]
    trace: Option<PathBuf>,
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents)
        .map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))
}

fn cmd_solve(args: SolveArgs) -> CmdResult {
    let (instance, stored_mode) =
        io::load(&args.instance).map_err(|e| Failure::usage(e.to_string()))?;
    if args.trace.is_some() && matches!(instance, Instance::Alp(_)) {
        return Err(Failure::usage(
            "--trace is only available for the queue problems (acca, nhss)",
        ));
    }
    let mode = args.objective.resolve(stored_mode);
    let mut cfg = EngineConfig::new(args.cuts, args.initial_cuts, instance.objective(mode));
    cfg.time_limit = Some(args.time_limit);
    cfg.threads = args.threads.max(1);
    let method = cfg.method_label();

    let out = match &instance {
        Instance::Acca(inner) => Engine::new(inner, cfg).solve(),
        Instance::Nhss(inner) => Engine::new(inner, cfg).solve(),
        Instance::Alp(inner) => Engine::new(inner, cfg).solve(),
    }
    .map_err(|e| Failure::usage(e.to_string()))?;

    print_solve_summary(&method, &out);

    if let Some(path) = &args.report {
        let report = SolveReport::from_output(&out);
        write(path, &format!("{}\n{}\n", SolveReport::csv_header(), report.csv_row()))?;
    }
    if let Some(path) = &args.solution {
        let name = args
            .instance
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| args.instance.display().to_string());
        let mut record = SolutionRecord::new(instance.problem_type(), &method, &name, &out);
        record.seed = args.seed;
        if let (Instance::Nhss(inner), Some(y)) = (&instance, &out.best_y) {
            record.x = Some(inner.recover_shift_counts(y).map_err(Failure::usage)?);
        }
        let text = serde_json::to_string_pretty(&record)
            .map_err(|e| Failure::usage(e.to_string()))?;
        write(path, &(text + "\n"))?;
    }
    if let Some(path) = &args.dump_cuts {
        write(path, &cuts_csv(&out.cuts))?;
        write(&path.with_extension("terms.csv"), &cut_terms_csv(&out.cuts))?;
    }
    if let Some(path) = &args.trace {
        match (&instance, &out.best_y) {
            (_, None) => eprintln!("no incumbent to trace"),
            (Instance::Acca(inner), Some(y)) => write_traces(path, &inner.scenarios, y)?,
            (Instance::Nhss(inner), Some(y)) => write_traces(path, &inner.scenarios, y)?,
            (Instance::Alp(_), Some(_)) => unreachable!("rejected above"),
        }
    }

    Ok(match out.status {
        SolveStatus::Optimal | SolveStatus::TimeLimit => 0,
        SolveStatus::Infeasible => EXIT_INFEASIBLE,
    })
}

fn print_solve_summary(method: &str, out: &SolveOutput) {
    say!("method {method}");
    say!("status {}", out.status.label());
    match out.objective {
        Some(objective) => say!("objective {objective:.6}"),
        None => say!("objective none"),
    }
    say!("bound {:.6}", out.bound);
    match out.gap {
        Some(gap) => say!("gap {gap:.6}"),
        None => say!("gap none"),
    }
    if let Some(y) = &out.best_y {
        let levels: Vec<String> = y.iter().map(u32::to_string).collect();
        say!("y {}", levels.join(","));
    }
    say!("nodes {}", out.nodes);
    say!(
        "cuts {} initial, {} separated",
        out.initial_cuts, out.benders_cuts
    );
    say!("simulations {}", out.sim_count);
    if out.monotonicity_violations > 0 {
        say!(
            "monotonicity violations {} (approximate mode)",
            out.monotonicity_violations
        );
    }
    say!(
        "time {:.3}s total ({:.3} initial, {:.3} solver, {:.3} callback, {:.3} simulating)",
        out.timings.total,
        out.timings.initial,
        out.timings.solver,
        out.timings.callback,
        out.timings.simulation
    );
}

/// One trace file per scenario, `<path>.s<index>.csv`, one row per job.
fn write_traces(
    path: &Path,
    scenarios: &[branchsim_core::queue::QueueScenario],
    levels: &[u32],
) -> Result<(), Failure> {
    for (index, scenario) in scenarios.iter().enumerate() {
        let outcome = scenario.simulate(levels);
        let mut text = String::from("job,release,processing,start,served,wait\n");
        for (job_index, job) in scenario.jobs.iter().enumerate() {
            text.push_str(&format!(
                "{job_index},{},{},{},{},{}\n",
                job.release,
                job.processing,
                outcome.starts[job_index],
                outcome.served[job_index],
                outcome.starts[job_index] - job.release
            ));
        }
        let file = PathBuf::from(format!("{}.s{index}.csv", path.display()));
        write(&file, &text)?;
    }
    Ok(())
}

// ----------------------------------------------------------------- profile

#[derive(Args)]
struct ProfileArgs {
    /// Directory of solution JSON files (one per run).
    dir: PathBuf,
    /// Time axis end; defaults to the longest runtime in the batch.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Output prefix; writes `<prefix>.csv` and `<prefix>.svg`.
    #[arg(long)]
    out_prefix: Option<PathBuf>,
}

fn read_solutions(dir: &Path) -> Result<Vec<SolutionRecord>, Failure> {
    let mut records = Vec::new();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Failure::usage(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|path| path.extension().is_some_and(|ext| ext == "json"))
        .collect();
    paths.sort();
    for path in paths {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
        let record: SolutionRecord = serde_json::from_str(&text)
            .map_err(|e| Failure::usage(format!("{} is not a solution file: {e}", path.display())))?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(Failure::usage(format!(
            "no solution files (*.json) found in {}",
            dir.display()
        )));
    }
    Ok(records)
}

fn cmd_profile(args: ProfileArgs) -> CmdResult {
    let records = read_solutions(&args.dir)?;
    let entries: Vec<ProfileEntry> = records.iter().map(ProfileEntry::from_record).collect();
    let time_limit = args.time_limit.unwrap_or_else(|| {
        entries
            .iter()
            .map(|e| e.runtime)
            .fold(0.0f64, f64::max)
            .max(1e-9)
    });
    let profile = build_profile(&entries, time_limit).map_err(Failure::usage)?;
    let prefix = args
        .out_prefix
        .unwrap_or_else(|| args.dir.join("profile"));
    let csv_path = prefix.with_extension("csv");
    let svg_path = prefix.with_extension("svg");
    write(&csv_path, &profile.csv())?;
    write(&svg_path, &profile.svg())?;
    say!(
        "profiled {} runs across {} methods -> {}, {}",
        entries.len(),
        profile.curves.len(),
        csv_path.display(),
        svg_path.display()
    );
    Ok(0)
}

// --------------------------------------------------------------- stability

#[derive(Args)]
struct StabilityArgs {
    /// Directory of solution JSON files (one per run).
    dir: PathBuf,
    /// Output CSV path; defaults to `<dir>/stability.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_stability(args: StabilityArgs) -> CmdResult {
    let records = read_solutions(&args.dir)?;
    let mut solutions = Vec::with_capacity(records.len());
    for record in &records {
        match &record.y {
            Some(y) => solutions.push(y.clone()),
            None => {
                return Err(Failure::usage(format!(
                    "run '{}' of {} carries no incumbent",
                    record.method, record.instance
                )))
            }
        }
    }
    let csv = stability_csv(&solutions).map_err(Failure::usage)?;
    let out = args.out.unwrap_or_else(|| args.dir.join("stability.csv"));
    write(&out, &csv)?;
    say!("summarized {} solutions -> {}", solutions.len(), out.display());
    Ok(0)
}

// ------------------------------------------------------------------ oracle

#[derive(Args)]
struct OracleArgs {
    instance: PathBuf,
    /// Largest candidate count the oracle will enumerate.
    #[arg(long, default_value_t = 5_000_000)]
    budget: u64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[command(flatten)]
    objective: ObjectiveFlags,
}

fn cmd_oracle(args: OracleArgs) -> CmdResult {
    let (instance, stored_mode) =
        io::load(&args.instance).map_err(|e| Failure::usage(e.to_string()))?;
    let mode = args.objective.resolve(stored_mode);
    let result: Result<OracleResult, OracleError> = match &instance {
        Instance::Acca(inner) => oracle::acca_optimum(inner, mode, args.budget),
        Instance::Nhss(inner) => oracle::nhss_optimum(inner, mode, args.budget),
        Instance::Alp(inner) => oracle::alp_optimum(inner, mode, args.budget, args.threads),
    };
    match result {
        Ok(optimum) => {
            say!("objective {:.6}", optimum.objective);
            let levels: Vec<String> = optimum.y.iter().map(u32::to_string).collect();
            say!("y {}", levels.join(","));
            say!("candidates {}", optimum.candidates);
            Ok(0)
        }
        Err(refusal @ OracleError::BudgetExceeded { .. }) => Err(Failure {
            message: refusal.to_string(),
            code: EXIT_BUDGET,
        }),
        Err(OracleError::Infeasible) => Err(Failure {
            message: "no allocation satisfies the constraints".into(),
            code: EXIT_INFEASIBLE,
        }),
    }
}
