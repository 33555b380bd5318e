//! Budgeted exhaustive search.
//!
//! The oracle ranks candidate allocations by simulating every scenario
//! directly — no master model, no cuts, no tree — so its answers are an
//! independent reference for the decomposition. Because candidate sets
//! grow geometrically, every entry point bounds the candidate count
//! before doing any work and refuses budgets it would blow through.

use num_bigint::BigUint;
use rayon::prelude::*;

use crate::apps::acca::AccaInstance;
use crate::apps::alp::{feasible_count, AlpInstance};
use crate::apps::nhss::NhssInstance;
use crate::engine::SimProblem;
use crate::instance::{LevelDomain, ObjectiveMode, ObjectiveSpec};

/// Outcome of an exhaustive search.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    pub objective: f64,
    pub y: Vec<u32>,
    /// Number of candidate allocations actually evaluated.
    pub candidates: u64,
}

#[derive(Debug, PartialEq, Eq)]
pub enum OracleError {
    /// The candidate space is larger than the caller's budget.
    BudgetExceeded { required: BigUint, budget: u64 },
    /// No candidate passed the feasibility screen.
    Infeasible,
}

impl std::fmt::Display for OracleError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OracleError::BudgetExceeded { required, budget } => write!(
                f,
                "exhaustive search needs {required} candidates but the budget is {budget}"
            ),
            OracleError::Infeasible => write!(f, "no feasible allocation exists"),
        }
    }
}

impl std::error::Error for OracleError {}

/// Exact objective of `y` straight from the simulator: level costs plus
/// the aggregated weighted measure sums.
pub fn direct_objective(problem: &dyn SimProblem, spec: &ObjectiveSpec, y: &[u32]) -> f64 {
    let weight = spec.measure_weight * problem.measure_scale();
    let costs: Vec<f64> = (0..problem.scenarios())
        .map(|s| {
            let values = problem.simulate(s, y);
            weight * values.iter().map(|&v| v as f64).sum::<f64>()
        })
        .collect();
    spec.level_cost(y) + spec.aggregate(&costs)
}

/// Evaluates `candidates` in order and keeps the first minimizer.
pub fn search<I>(
    problem: &dyn SimProblem,
    spec: &ObjectiveSpec,
    candidates: I,
) -> Result<OracleResult, OracleError>
where
    I: IntoIterator<Item = Vec<u32>>,
{
    let mut best: Option<(f64, Vec<u32>)> = None;
    let mut evaluated = 0u64;
    for y in candidates {
        let objective = direct_objective(problem, spec, &y);
        evaluated += 1;
        if best.as_ref().is_none_or(|(obj, _)| objective < *obj) {
            best = Some((objective, y));
        }
    }
    match best {
        Some((objective, y)) => Ok(OracleResult {
            objective,
            y,
            candidates: evaluated,
        }),
        None => Err(OracleError::Infeasible),
    }
}

/// Full level grid `domain^n` as an odometer; the caller filters.
pub fn level_grid(n: usize, domain: LevelDomain) -> impl Iterator<Item = Vec<u32>> {
    let mut current = vec![domain.min_level; n];
    let mut done = n == 0;
    std::iter::from_fn(move || {
        if done {
            return None;
        }
        let out = current.clone();
        let mut j = n;
        loop {
            if j == 0 {
                done = true;
                break;
            }
            j -= 1;
            if current[j] < domain.max_level {
                current[j] += 1;
                break;
            }
            current[j] = domain.min_level;
        }
        Some(out)
    })
}

/// Refuses up front when the grid alone exceeds the budget.
fn check_grid_budget(n: usize, domain: LevelDomain, budget: u64) -> Result<(), OracleError> {
    let required = BigUint::from(domain.size() as u64).pow(n as u32);
    if required > BigUint::from(budget) {
        return Err(OracleError::BudgetExceeded {
            required,
            budget,
        });
    }
    Ok(())
}

/// Exhaustive optimum of a check-in instance: every allocation on the
/// level grid that satisfies the service-capacity rows.
pub fn acca_optimum(
    instance: &AccaInstance,
    mode: ObjectiveMode,
    budget: u64,
) -> Result<OracleResult, OracleError> {
    let domain = instance.level_domain();
    check_grid_budget(instance.params.periods, domain, budget)?;
    let spec = instance.objective(mode);
    let feasible = level_grid(instance.params.periods, domain)
        .filter(|y| instance.satisfies_service_rows(y));
    search(instance, &spec, feasible)
}

/// Evaluates a materialized candidate list, optionally in parallel; the
/// minimizer with the lowest index wins, so the answer is identical for
/// any thread count.
pub fn search_slice(
    problem: &dyn SimProblem,
    spec: &ObjectiveSpec,
    candidates: &[Vec<u32>],
    threads: usize,
) -> Result<OracleResult, OracleError> {
    if candidates.is_empty() {
        return Err(OracleError::Infeasible);
    }
    let score = |index: usize| {
        (
            direct_objective(problem, spec, &candidates[index]),
            index,
        )
    };
    let pick = |a: (f64, usize), b: (f64, usize)| {
        if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
            b
        } else {
            a
        }
    };
    let (objective, index) = if threads > 1 {
        (0..candidates.len())
            .into_par_iter()
            .map(score)
            .reduce(|| (f64::INFINITY, usize::MAX), pick)
    } else {
        (0..candidates.len())
            .map(score)
            .fold((f64::INFINITY, usize::MAX), pick)
    };
    Ok(OracleResult {
        objective,
        y: candidates[index].clone(),
        candidates: candidates.len() as u64,
    })
}

/// All ways to split `fleet` units over `stations` slots of capacity
/// `cap`, in ascending lexicographic order.
pub fn compositions(stations: usize, cap: u32, fleet: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut current = vec![0u32; stations];
    fn descend(
        current: &mut Vec<u32>,
        idx: usize,
        remaining: u32,
        cap: u32,
        out: &mut Vec<Vec<u32>>,
    ) {
        if idx == current.len() {
            if remaining == 0 {
                out.push(current.clone());
            }
            return;
        }
        let slots_after = (current.len() - idx - 1) as u64;
        for take in 0..=cap.min(remaining) {
            // Skip branches whose tail cannot absorb the remainder.
            if u64::from(remaining - take) > slots_after * u64::from(cap) {
                continue;
            }
            current[idx] = take;
            descend(current, idx + 1, remaining - take, cap, out);
        }
        current[idx] = 0;
    }
    descend(&mut current, 0, fleet, cap, &mut out);
    out
}

/// Exhaustive optimum of an ambulance instance: every split of the fleet
/// over the stations under the per-station cap.
pub fn alp_optimum(
    instance: &AlpInstance,
    mode: ObjectiveMode,
    budget: u64,
    threads: usize,
) -> Result<OracleResult, OracleError> {
    let stations = instance.city.stations.len();
    let cap = instance.params.max_per_station;
    let fleet = instance.params.fleet;
    let required = feasible_count(stations, cap, fleet);
    if required > BigUint::from(budget) {
        return Err(OracleError::BudgetExceeded { required, budget });
    }
    let candidates = compositions(stations, cap, fleet);
    let spec = instance.objective(mode);
    search_slice(instance, &spec, &candidates, threads)
}

/// Exhaustive optimum of a staffing instance: every level profile within
/// the hours budget that some whole-shift combination covers exactly.
pub fn nhss_optimum(
    instance: &NhssInstance,
    mode: ObjectiveMode,
    budget: u64,
) -> Result<OracleResult, OracleError> {
    let domain = instance.level_domain();
    check_grid_budget(instance.params.periods, domain, budget)?;
    let spec = instance.objective(mode);
    let cap_minutes = i64::from(instance.params.hours_cap) * 60;
    let minutes = instance.params.period_minutes;
    let feasible = level_grid(instance.params.periods, domain).filter(move |y| {
        let staffed: i64 = y.iter().map(|&v| minutes * i64::from(v)).sum();
        staffed <= cap_minutes && instance.recover_shift_counts(y).is_ok()
    });
    search(instance, &spec, feasible)
}
