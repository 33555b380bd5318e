//! Decomposition engine: connects a simulation-defined problem to the
//! master LP and the branch-and-bound driver.
//!
//! The engine owns the memoized simulation cache, builds initial cuts
//! from pairwise level sweeps, and answers incumbent callbacks by
//! simulating the candidate allocation and emitting one cut per violated
//! estimator in the configured family. Window-based families (local,
//! strengthened) run their window search here, against the cache.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::bnb::{
    branch_and_bound, BnbOptions, CallbackOutput, CutPool, IncumbentEvaluator, SolveError,
    SolveStatus,
};
use crate::cuts::{self, CutKind, LinearCut};
use crate::instance::{delta, LevelDomain, MeasureId, ObjectiveSpec, PerformanceCache};
use crate::master::MasterModel;

/// Whether a problem's measures are exactly monotone (raising any level
/// never increases any measure) or only approximately so.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValidityMode {
    /// Monotonicity holds exactly; cuts are valid as constructed.
    Exact,
    /// Monotonicity can fail; compensations are clamped so cuts stay
    /// conservative, violations are counted, and incumbents are always
    /// certified by direct simulation.
    Approximate,
}

/// How the window search around a measure's anchor expands.
pub enum WindowPlan {
    /// Objects are ordered (time periods): grow an interval around the
    /// anchor one object per side.
    Interval,
    /// Objects are sites: `expansions[i]` lists the objects to add in
    /// round `i` (e.g. successive preference ranks of the demand points
    /// anchored at this measure's site).
    Preferences(Vec<Vec<usize>>),
}

/// A problem whose performance measures come from a discrete-event
/// simulation, solved over per-object integer levels.
pub trait SimProblem: Sync {
    /// Number of level-controlled objects (periods, sites, ...).
    fn objects(&self) -> usize;
    /// Admissible level range, shared by every object.
    fn domain(&self) -> LevelDomain;
    /// Number of scenarios.
    fn scenarios(&self) -> usize;
    /// Number of measures each scenario produces.
    fn measures_per_scenario(&self) -> usize;
    /// The object whose level anchors measure `key`.
    fn anchor_object(&self, key: usize) -> usize;
    /// Partner objects paired with `key`'s anchor for initial cuts.
    fn initial_partners(&self, key: usize) -> Vec<usize>;
    /// Expansion plan for window searches on measure `key`.
    fn window_plan(&self, _key: usize) -> WindowPlan {
        WindowPlan::Interval
    }
    /// Runs scenario `scenario` under `levels` and returns every measure
    /// in integer performance units.
    fn simulate(&self, scenario: usize, levels: &[u32]) -> Vec<i64>;
    /// Factor converting integer performance units into objective units.
    fn measure_scale(&self) -> f64;
    fn validity(&self) -> ValidityMode {
        ValidityMode::Exact
    }
    /// Adds problem-specific columns and rows to the master.
    fn extend_master(&self, _master: &mut MasterModel) {}
    /// A feasible allocation to start from, if the problem has one.
    fn warm_start(&self) -> Option<Vec<u32>> {
        None
    }
}

/// Engine configuration.
#[derive(Clone)]
pub struct EngineConfig {
    pub cut_kind: CutKind,
    pub initial_cuts: bool,
    pub objective: ObjectiveSpec,
    pub time_limit: Option<f64>,
    /// Worker threads for simulation fan-out; 1 keeps everything serial.
    pub threads: usize,
    pub gap_tolerance: f64,
}

impl EngineConfig {
    pub fn new(cut_kind: CutKind, initial_cuts: bool, objective: ObjectiveSpec) -> Self {
        EngineConfig {
            cut_kind,
            initial_cuts,
            objective,
            time_limit: None,
            threads: 1,
            gap_tolerance: 1e-6,
        }
    }

    /// Short label identifying the method, e.g. "S+In" for strengthened
    /// cuts with initial cuts.
    pub fn method_label(&self) -> String {
        let mut label = self.cut_kind.short_label().to_string();
        if self.initial_cuts {
            label.push_str("+In");
        }
        label
    }
}

/// Wall-clock breakdown of a solve.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct Timings {
    /// Building initial cuts (including their simulations).
    pub initial: f64,
    /// LP solving, separation, and tree management.
    pub solver: f64,
    /// Incumbent callbacks (including their simulations).
    pub callback: f64,
    /// Total time inside simulation calls, wherever they happened.
    pub simulation: f64,
    pub total: f64,
}

/// Everything a solve produces.
pub struct SolveOutput {
    pub status: SolveStatus,
    pub objective: Option<f64>,
    pub bound: f64,
    pub gap: Option<f64>,
    pub best_y: Option<Vec<u32>>,
    pub nodes: u64,
    pub initial_cuts: usize,
    pub benders_cuts: usize,
    pub sim_count: usize,
    pub heuristic_objective: Option<f64>,
    pub monotonicity_violations: usize,
    pub timings: Timings,
    /// Every cut the solve generated (pooled, not necessarily active).
    pub cuts: Vec<LinearCut>,
}

#[derive(Debug)]
pub enum EngineError {
    Config(String),
    Solver(SolveError),
}

impl std::fmt::Display for EngineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EngineError::Config(detail) => write!(f, "bad configuration: {detail}"),
            EngineError::Solver(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for EngineError {}

impl From<SolveError> for EngineError {
    fn from(e: SolveError) -> Self {
        EngineError::Solver(e)
    }
}

/// Relative tolerance for deciding that an estimator violates its
/// simulated value.
const ESTIMATOR_TOL: f64 = 1e-7;

pub struct Engine<'p, P: SimProblem + ?Sized> {
    problem: &'p P,
    pub cache: PerformanceCache,
    cfg: EngineConfig,
    violations: AtomicUsize,
}

impl<'p, P: SimProblem + ?Sized> Engine<'p, P> {
    pub fn new(problem: &'p P, cfg: EngineConfig) -> Self {
        Engine {
            problem,
            cache: PerformanceCache::new(),
            cfg,
            violations: AtomicUsize::new(0),
        }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn monotonicity_violations(&self) -> usize {
        self.violations.load(Ordering::Relaxed)
    }

    /// All measures of one scenario at `levels`, memoized.
    pub fn measures(&self, scenario: usize, levels: &[u32]) -> Arc<[i64]> {
        self.cache.evaluate_all(scenario as u32, levels, |lv| {
            self.problem.simulate(scenario, lv)
        })
    }

    fn measure_value(&self, scenario: usize, key: usize, levels: &[u32]) -> i64 {
        self.measures(scenario, levels)[key]
    }

    /// Weighted measure sum of each scenario at `y` (objective units,
    /// without the per-scenario divisor).
    pub fn scenario_costs(&self, y: &[u32]) -> Vec<f64> {
        let weight = self.cfg.objective.measure_weight * self.problem.measure_scale();
        let one = |s: usize| -> f64 {
            let values = self.measures(s, y);
            weight * values.iter().map(|&v| v as f64).sum::<f64>()
        };
        if self.cfg.threads > 1 {
            (0..self.problem.scenarios())
                .into_par_iter()
                .map(one)
                .collect()
        } else {
            (0..self.problem.scenarios()).map(one).collect()
        }
    }

    /// The exact objective of allocation `y`: level costs plus the
    /// aggregated simulated measure costs.
    pub fn true_objective(&self, y: &[u32]) -> f64 {
        let costs = self.scenario_costs(y);
        self.cfg.objective.level_cost(y) + self.cfg.objective.aggregate(&costs)
    }

    /// Builds the full set of initial cuts: for every scenario and every
    /// measure with at least one partner object, a two-dimensional sweep
    /// of (anchor level, partner level) with everything else maxed out.
    pub fn generate_initial_cuts(&self) -> Vec<LinearCut> {
        let domain = self.problem.domain();
        let scenarios = self.problem.scenarios();
        let keys = self.problem.measures_per_scenario();
        let mut tasks: Vec<(usize, usize, usize)> = Vec::new();
        for s in 0..scenarios {
            for key in 0..keys {
                for partner in self.problem.initial_partners(key) {
                    tasks.push((s, key, partner));
                }
            }
        }
        let one = |&(s, key, partner): &(usize, usize, usize)| -> Vec<LinearCut> {
            self.pair_cuts(s, key, partner, domain)
        };
        let groups: Vec<Vec<LinearCut>> = if self.cfg.threads > 1 {
            tasks.par_iter().map(one).collect()
        } else {
            tasks.iter().map(one).collect()
        };
        groups.into_iter().flatten().collect()
    }

    fn pair_cuts(
        &self,
        scenario: usize,
        key: usize,
        partner: usize,
        domain: LevelDomain,
    ) -> Vec<LinearCut> {
        let anchor = self.problem.anchor_object(key);
        debug_assert_ne!(anchor, partner);
        let n = self.problem.objects();
        let scale = self.problem.measure_scale();
        let size = domain.size();
        let mut w = vec![vec![0.0f64; size]; size];
        let mut levels = vec![domain.max_level; n];
        for (i1, l1) in domain.levels().enumerate() {
            for (i2, l2) in domain.levels().enumerate() {
                levels[anchor] = l1;
                levels[partner] = l2;
                w[i1][i2] = scale * self.measure_value(scenario, key, &levels) as f64;
            }
        }
        // Audit the table: the measure must not increase when either
        // level goes up.
        let mut bad = 0usize;
        for i1 in 0..size {
            for i2 in 0..size {
                if i1 + 1 < size && w[i1 + 1][i2] > w[i1][i2] + 1e-9 {
                    bad += 1;
                }
                if i2 + 1 < size && w[i1][i2 + 1] > w[i1][i2] + 1e-9 {
                    bad += 1;
                }
            }
        }
        if bad > 0 {
            self.violations.fetch_add(bad, Ordering::Relaxed);
        }
        let clamp = self.problem.validity() == ValidityMode::Approximate || bad > 0;
        let id = MeasureId {
            scenario: scenario as u32,
            key: key as u32,
        };
        cuts::initial_2d_pair(id, anchor, partner, domain, &w, clamp)
    }

    /// Runs the configured window search for measure `id` at incumbent
    /// `y` whose simulated value is `f_int`.
    fn search_window(&self, id: MeasureId, y: &[u32], f_int: i64) -> Vec<usize> {
        let scenario = id.scenario as usize;
        let key = id.key as usize;
        let anchor = self.problem.anchor_object(key);
        let n = self.problem.objects();
        let max = self.problem.domain().max_level;
        let mut eval = |window: &[usize]| -> i64 {
            let levels = delta(window, y, max).expect("window indices in range");
            self.measure_value(scenario, key, &levels)
        };
        let result = match self.problem.window_plan(key) {
            WindowPlan::Interval => cuts::find_window_interval(anchor, n, f_int, &mut eval),
            WindowPlan::Preferences(expansions) => {
                cuts::find_window_preferences(anchor, n, &expansions, f_int, &mut eval)
            }
        };
        if result.fell_back {
            self.violations.fetch_add(1, Ordering::Relaxed);
        }
        result.window
    }

    /// Builds one cut of family `kind` for measure `id` at incumbent `y`.
    pub fn cut_at(&self, kind: CutKind, id: MeasureId, y: &[u32]) -> LinearCut {
        let scenario = id.scenario as usize;
        let key = id.key as usize;
        let domain = self.problem.domain();
        let scale = self.problem.measure_scale();
        let f_int = self.measure_value(scenario, key, y);
        let f_model = scale * f_int as f64;
        match kind {
            CutKind::NoGood => cuts::no_good_cut(id, y, domain, f_model),
            CutKind::Monotonic => cuts::monotonic_cut(id, y, domain, f_model),
            CutKind::Local => {
                let window = self.search_window(id, y, f_int);
                cuts::local_cut(id, y, &window, domain, f_model)
            }
            CutKind::Strengthened => {
                let window = self.search_window(id, y, f_int);
                let anchor = self.problem.anchor_object(key);
                let n = self.problem.objects();
                let mut levels = vec![domain.max_level; n];
                levels[anchor] = y[anchor];
                let base_int = self.measure_value(scenario, key, &levels);
                let mut anchor_values = Vec::new();
                let mut prev = base_int;
                let mut bad = 0usize;
                for level in (y[anchor] + 1)..=domain.max_level {
                    levels[anchor] = level;
                    let v = self.measure_value(scenario, key, &levels);
                    if v > prev {
                        bad += 1;
                    }
                    prev = v;
                    anchor_values.push(scale * v as f64);
                }
                if base_int > f_int {
                    bad += 1;
                }
                if bad > 0 {
                    self.violations.fetch_add(bad, Ordering::Relaxed);
                }
                let clamp =
                    self.problem.validity() == ValidityMode::Approximate || bad > 0;
                cuts::strengthened_cut(
                    id,
                    y,
                    &window,
                    anchor,
                    domain,
                    f_model,
                    &anchor_values,
                    scale * base_int as f64,
                    clamp,
                )
            }
        }
    }

    /// Simulates incumbent `y`, returns its true objective, and cuts off
    /// every estimator that underestimates its simulated measure.
    pub fn evaluate_incumbent(&self, y: &[u32], theta_bar: &[f64]) -> CallbackOutput {
        let scenarios = self.problem.scenarios();
        let keys = self.problem.measures_per_scenario();
        let one = |s: usize| self.measures(s, y);
        let per_scenario: Vec<Arc<[i64]>> = if self.cfg.threads > 1 {
            (0..scenarios).into_par_iter().map(one).collect()
        } else {
            (0..scenarios).map(one).collect()
        };
        let weight = self.cfg.objective.measure_weight * self.problem.measure_scale();
        let costs: Vec<f64> = per_scenario
            .iter()
            .map(|values| weight * values.iter().map(|&v| v as f64).sum::<f64>())
            .collect();
        let true_objective =
            self.cfg.objective.level_cost(y) + self.cfg.objective.aggregate(&costs);
        let scale = self.problem.measure_scale();
        let mut new_cuts = Vec::new();
        for s in 0..scenarios {
            for key in 0..keys {
                let f_model = scale * per_scenario[s][key] as f64;
                let estimator = theta_bar[s * keys + key];
                if estimator >= f_model - ESTIMATOR_TOL * f_model.abs().max(1.0) {
                    continue;
                }
                let id = MeasureId {
                    scenario: s as u32,
                    key: key as u32,
                };
                new_cuts.push(self.cut_at(self.cfg.cut_kind, id, y));
            }
        }
        CallbackOutput {
            true_objective,
            cuts: new_cuts,
        }
    }

    /// Full solve: build the master, seed the pool, run branch and bound.
    pub fn solve(&self) -> Result<SolveOutput, EngineError> {
        let t_total = Instant::now();
        self.cfg
            .objective
            .validate()
            .map_err(EngineError::Config)?;
        let n = self.problem.objects();
        if self.cfg.objective.level_costs.len() != n {
            return Err(EngineError::Config(format!(
                "{} level costs for {} objects",
                self.cfg.objective.level_costs.len(),
                n
            )));
        }
        if self.cfg.objective.scenarios != self.problem.scenarios() {
            return Err(EngineError::Config(
                "objective scenario count differs from the problem's".into(),
            ));
        }
        let domain = self.problem.domain();
        let scenarios = self.problem.scenarios();
        let keys = self.problem.measures_per_scenario();
        let mut master = MasterModel::build(n, domain, scenarios, keys, &self.cfg.objective);
        self.problem.extend_master(&mut master);
        let mut pool = CutPool::new(scenarios * keys);

        let t_initial = Instant::now();
        if self.cfg.initial_cuts && self.cfg.time_limit != Some(0.0) {
            for cut in self.generate_initial_cuts() {
                pool.add(&master, cut);
            }
        }
        let initial_seconds = t_initial.elapsed().as_secs_f64();

        let warm = match self.problem.warm_start() {
            Some(y) => {
                if y.len() != n || y.iter().any(|&v| !domain.contains(v)) {
                    return Err(EngineError::Config(
                        "warm-start allocation is outside the level domain".into(),
                    ));
                }
                let objective = self.true_objective(&y);
                Some((y, objective))
            }
            None => None,
        };
        let heuristic_objective = warm.as_ref().map(|&(_, obj)| obj);

        let opts = BnbOptions {
            time_limit: self
                .cfg
                .time_limit
                .map(|limit| (limit - t_total.elapsed().as_secs_f64()).max(0.0)),
            gap_tolerance: self.cfg.gap_tolerance,
            ..BnbOptions::default()
        };
        let mut callback = EngineCallback { engine: self };
        let t_solve = Instant::now();
        let outcome = branch_and_bound(&mut master, &mut pool, &mut callback, warm, &opts)?;
        let solve_wall = t_solve.elapsed().as_secs_f64();

        let timings = Timings {
            initial: initial_seconds,
            solver: (solve_wall - outcome.callback_seconds).max(0.0),
            callback: outcome.callback_seconds,
            simulation: self.cache.sim_seconds(),
            total: t_total.elapsed().as_secs_f64(),
        };
        Ok(SolveOutput {
            status: outcome.status,
            objective: outcome.objective,
            bound: outcome.bound,
            gap: outcome.gap,
            best_y: outcome.best_y,
            nodes: outcome.nodes,
            initial_cuts: pool.initial_count,
            benders_cuts: pool.benders_count,
            sim_count: self.cache.sim_count(),
            heuristic_objective,
            monotonicity_violations: self.monotonicity_violations(),
            timings,
            cuts: pool.into_cuts(),
        })
    }
}

struct EngineCallback<'a, 'p, P: SimProblem + ?Sized> {
    engine: &'a Engine<'p, P>,
}

impl<'a, 'p, P: SimProblem + ?Sized> IncumbentEvaluator for EngineCallback<'a, 'p, P> {
    fn evaluate(&mut self, y: &[u32], theta_bar: &[f64]) -> CallbackOutput {
        self.engine.evaluate_incumbent(y, theta_bar)
    }
}
