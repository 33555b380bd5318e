//! Branch and bound over the master LP with lazy cut separation.
//!
//! Nodes restrict each object's level to an interval; applying a node
//! means swapping variable bounds in the persistent simplex, so the warm
//! basis carries across the whole tree and no LP is ever built twice.
//! Node selection is best-bound with depth-first plunging: after a branch
//! the child on the incumbent side of the split is explored immediately,
//! the other child joins the global heap.
//!
//! Cuts live in a pool. After every LP solve the pool is scanned and, per
//! measure, the single most violated inactive cut becomes an LP row; rows
//! that have been loose for a while are excised again (the pool keeps the
//! cut). When an LP optimum is integral the incumbent evaluator is asked
//! for the true objective and fresh cuts; an empty answer certifies the
//! point as optimal for its subtree.
//!
//! Only the level variables branch. Indicator variables are never
//! branched on: if an indicator is fractional while its level variable is
//! integral, splitting the level's range at that value separates the
//! fractional mass, because the linking rows force mass both above and
//! below the split point.

use std::collections::{BinaryHeap, HashSet};
use std::time::Instant;

use branchsim_lp::{LpStatus, Row};

use crate::cuts::{CutOrigin, LinearCut};
use crate::master::MasterModel;

/// Final state of a search.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    TimeLimit,
    Infeasible,
}

impl SolveStatus {
    pub fn label(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "Optimal",
            SolveStatus::TimeLimit => "TimeLimit",
            SolveStatus::Infeasible => "Infeasible",
        }
    }
}

/// What the incumbent evaluator hands back: the candidate's true objective
/// (always valid as an upper bound, even when cuts are returned) plus any
/// cuts the estimators still violate. No cuts means the point is accepted.
pub struct CallbackOutput {
    pub true_objective: f64,
    pub cuts: Vec<LinearCut>,
}

/// Evaluates integer candidates against the true (simulated) measures.
pub trait IncumbentEvaluator {
    fn evaluate(&mut self, y: &[u32], theta_bar: &[f64]) -> CallbackOutput;
}

/// Global cut store. Every cut ever generated stays here; only a subset
/// is installed as LP rows at any time.
pub struct CutPool {
    cuts: Vec<LinearCut>,
    active: Vec<Option<Row>>,
    by_measure: Vec<Vec<usize>>,
    fingerprints: HashSet<u64>,
    pub initial_count: usize,
    pub benders_count: usize,
}

impl CutPool {
    pub fn new(total_measures: usize) -> Self {
        CutPool {
            cuts: Vec::new(),
            active: Vec::new(),
            by_measure: vec![Vec::new(); total_measures],
            fingerprints: HashSet::new(),
            initial_count: 0,
            benders_count: 0,
        }
    }

    /// Registers a cut unless an identical one is already pooled. Returns
    /// whether the cut was new.
    pub fn add(&mut self, model: &MasterModel, cut: LinearCut) -> bool {
        if !self.fingerprints.insert(cut.dedup_key()) {
            return false;
        }
        match cut.origin {
            CutOrigin::Initial => self.initial_count += 1,
            CutOrigin::Benders(_) => self.benders_count += 1,
        }
        let measure = model.measure_index(cut.measure);
        self.by_measure[measure].push(self.cuts.len());
        self.cuts.push(cut);
        self.active.push(None);
        true
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }

    pub fn cuts(&self) -> &[LinearCut] {
        &self.cuts
    }

    pub fn into_cuts(self) -> Vec<LinearCut> {
        self.cuts
    }

    fn active_rows(&self) -> usize {
        self.active.iter().filter(|r| r.is_some()).count()
    }

    /// Installs, for each measure, the single most violated inactive cut
    /// at the current LP point. Returns how many rows were added.
    fn activate_violated(&mut self, model: &mut MasterModel, tol: f64) -> usize {
        let theta = model.theta_values();
        let mut chosen: Vec<usize> = Vec::new();
        for (measure, members) in self.by_measure.iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            let estimator = theta[measure];
            let mut best: Option<(usize, f64)> = None;
            for &idx in members {
                if self.active[idx].is_some() {
                    continue;
                }
                let rhs = self.cuts[idx]
                    .rhs_at_fractional(|object, level| model.z_value(object as usize, level));
                let violation = rhs - estimator;
                if violation > tol && best.map_or(true, |(_, v)| violation > v) {
                    best = Some((idx, violation));
                }
            }
            if let Some((idx, _)) = best {
                chosen.push(idx);
            }
        }
        for &idx in &chosen {
            self.active[idx] = Some(model.add_cut_row(&self.cuts[idx]));
        }
        chosen.len()
    }

    /// Excises active cut rows that are currently loose (slack basic), so
    /// the LP stays small. The cuts remain pooled and can come back.
    fn collect_garbage(&mut self, model: &mut MasterModel) {
        let candidates: Vec<(usize, Row)> = self
            .active
            .iter()
            .enumerate()
            .filter_map(|(idx, row)| row.map(|r| (idx, r)))
            .filter(|&(_, row)| model.lp.row_is_loose(row))
            .collect();
        let rows: Vec<Row> = candidates.iter().map(|&(_, row)| row).collect();
        let removed = model.lp.remove_slack_rows(&rows);
        let removed_set: HashSet<Row> = removed.into_iter().collect();
        for (idx, row) in candidates {
            if removed_set.contains(&row) {
                self.active[idx] = None;
            }
        }
    }
}

/// Search options.
pub struct BnbOptions {
    pub time_limit: Option<f64>,
    /// Relative gap below which a run reports Optimal.
    pub gap_tolerance: f64,
    /// Relative fathoming slack; kept far below the objective's quantum so
    /// exact optima survive.
    pub fathom_scale: f64,
    /// Active cut rows beyond which loose rows are excised between nodes.
    pub max_active_cut_rows: usize,
}

impl Default for BnbOptions {
    fn default() -> Self {
        BnbOptions {
            time_limit: None,
            gap_tolerance: 1e-6,
            fathom_scale: 1e-9,
            max_active_cut_rows: 2000,
        }
    }
}

/// Search result.
pub struct BnbOutcome {
    pub status: SolveStatus,
    pub best_y: Option<Vec<u32>>,
    pub objective: Option<f64>,
    pub bound: f64,
    pub gap: Option<f64>,
    pub nodes: u64,
    pub callback_seconds: f64,
}

#[derive(Debug)]
pub enum SolveError {
    Numerical(String),
}

impl std::fmt::Display for SolveError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolveError::Numerical(detail) => write!(f, "LP engine failed: {detail}"),
        }
    }
}

impl std::error::Error for SolveError {}

#[derive(Clone)]
struct Node {
    bounds: Vec<(u32, u32)>,
    bound: f64,
    seq: u64,
}

/// Heap adapter: pops the smallest bound first, oldest node on ties.
struct OpenNode(Node);

impl PartialEq for OpenNode {
    fn eq(&self, other: &Self) -> bool {
        self.0.seq == other.0.seq
    }
}
impl Eq for OpenNode {}
impl PartialOrd for OpenNode {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OpenNode {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .0
            .bound
            .total_cmp(&self.0.bound)
            .then(other.0.seq.cmp(&self.0.seq))
    }
}

const INT_TOL: f64 = 1e-6;
const CUT_VIOLATION_TOL: f64 = 1e-7;

fn fathomed(bound: f64, ub: f64, opts: &BnbOptions) -> bool {
    let slack = opts.fathom_scale.max(opts.gap_tolerance) * ub.abs().max(1.0);
    ub.is_finite() && bound >= ub - slack
}

enum Fractional {
    /// A level variable has value `v` strictly between integers.
    Level { object: usize, value: f64 },
    /// Levels are integral but object's indicators are split; branch the
    /// level range at its current integer value.
    Indicator { object: usize, value: u32 },
    None,
}

fn find_fractional(model: &MasterModel) -> Fractional {
    // Most fractional level variable first (fraction closest to one half,
    // ties to the lowest index).
    let mut best: Option<(usize, f64, f64)> = None;
    for j in 0..model.objects {
        let v = model.y_value(j);
        if (v - v.round()).abs() > INT_TOL {
            let dist_to_half = (v - v.floor() - 0.5).abs();
            if best.map_or(true, |(_, d, _)| dist_to_half < d) {
                best = Some((j, dist_to_half, v));
            }
        }
    }
    if let Some((object, _, value)) = best {
        return Fractional::Level { object, value };
    }
    for j in 0..model.objects {
        for level in model.domain.levels() {
            let z = model.z_value(j, level);
            if z > INT_TOL && z < 1.0 - INT_TOL {
                return Fractional::Indicator {
                    object: j,
                    value: model.y_value(j).round() as u32,
                };
            }
        }
    }
    Fractional::None
}

/// Runs the search. `warm` injects a known feasible allocation and its
/// true objective as the starting incumbent.
pub fn branch_and_bound(
    model: &mut MasterModel,
    pool: &mut CutPool,
    evaluator: &mut dyn IncumbentEvaluator,
    warm: Option<(Vec<u32>, f64)>,
    opts: &BnbOptions,
) -> Result<BnbOutcome, SolveError> {
    let started = Instant::now();
    let mut callback_seconds = 0.0f64;
    let domain = model.domain;
    let objects = model.objects;

    let mut ub = f64::INFINITY;
    let mut best_y: Option<Vec<u32>> = None;
    if let Some((y, objective)) = warm {
        ub = objective;
        best_y = Some(y);
    }

    let mut heap: BinaryHeap<OpenNode> = BinaryHeap::new();
    let mut stack: Vec<Node> = vec![Node {
        bounds: vec![(domain.min_level, domain.max_level); objects],
        bound: f64::NEG_INFINITY,
        seq: 0,
    }];
    let mut next_seq = 1u64;
    let mut applied: Vec<(u32, u32)> = vec![(domain.min_level, domain.max_level); objects];
    let mut nodes = 0u64;
    let mut hit_limit = false;

    let out_of_time = |nodes: u64, started: &Instant| -> bool {
        match opts.time_limit {
            Some(limit) => nodes > 0 && started.elapsed().as_secs_f64() >= limit,
            None => false,
        }
    };

    // Lowest bound ever pruned by the gap slack; keeps the final reported
    // bound a valid global lower bound instead of a hopeful `ub`.
    let mut pruned_bound = f64::INFINITY;

    'search: loop {
        // Pick the next open node: plunge stack first, then best bound.
        let node = loop {
            let candidate = match stack.pop() {
                Some(n) => Some(n),
                None => heap.pop().map(|o| o.0),
            };
            match candidate {
                None => break 'search,
                Some(n) => {
                    if !fathomed(n.bound, ub, opts) {
                        break n;
                    }
                    pruned_bound = pruned_bound.min(n.bound);
                }
            }
        };
        if out_of_time(nodes, &started) {
            heap.push(OpenNode(node));
            hit_limit = true;
            break 'search;
        }
        nodes += 1;
        for j in 0..objects {
            if applied[j] != node.bounds[j] {
                model.apply_object_bounds(j, node.bounds[j].0, node.bounds[j].1);
                applied[j] = node.bounds[j];
            }
        }
        if pool.active_rows() > opts.max_active_cut_rows {
            pool.collect_garbage(model);
        }

        // Process the node: solve, separate pooled cuts, evaluate integer
        // points, branch.
        loop {
            let result = model.solve().map_err(|e| SolveError::Numerical(e.detail))?;
            match result.status {
                LpStatus::Infeasible => continue 'search,
                LpStatus::Unbounded => {
                    return Err(SolveError::Numerical(
                        "master relaxation is unbounded".into(),
                    ))
                }
                LpStatus::Optimal => {}
            }
            let node_obj = result.objective;
            if fathomed(node_obj, ub, opts) {
                pruned_bound = pruned_bound.min(node_obj);
                continue 'search;
            }
            if pool.activate_violated(model, CUT_VIOLATION_TOL) > 0 {
                if out_of_time(nodes, &started) {
                    stack.push(Node {
                        bounds: node.bounds.clone(),
                        bound: node_obj,
                        seq: node.seq,
                    });
                    hit_limit = true;
                    break 'search;
                }
                continue;
            }
            if out_of_time(nodes, &started) {
                stack.push(Node {
                    bounds: node.bounds.clone(),
                    bound: node_obj,
                    seq: node.seq,
                });
                hit_limit = true;
                break 'search;
            }
            match find_fractional(model) {
                Fractional::Level { object, value } => {
                    let (lo, hi) = node.bounds[object];
                    let split = value.floor() as u32;
                    let split = split.clamp(lo, hi.saturating_sub(1).max(lo));
                    let mut down = node.bounds.clone();
                    down[object] = (lo, split);
                    let mut up = node.bounds.clone();
                    up[object] = (split + 1, hi);
                    let down_node = Node {
                        bounds: down,
                        bound: node_obj,
                        seq: next_seq,
                    };
                    let up_node = Node {
                        bounds: up,
                        bound: node_obj,
                        seq: next_seq + 1,
                    };
                    next_seq += 2;
                    // Plunge toward the side the LP value leans to.
                    if value - value.floor() <= 0.5 {
                        heap.push(OpenNode(up_node));
                        stack.push(down_node);
                    } else {
                        heap.push(OpenNode(down_node));
                        stack.push(up_node);
                    }
                    continue 'search;
                }
                Fractional::Indicator { object, value } => {
                    let (lo, hi) = node.bounds[object];
                    let split = value.clamp(lo, hi.saturating_sub(1).max(lo));
                    let mut down = node.bounds.clone();
                    down[object] = (lo, split);
                    let mut up = node.bounds.clone();
                    up[object] = (split + 1, hi);
                    let down_node = Node {
                        bounds: down,
                        bound: node_obj,
                        seq: next_seq,
                    };
                    let up_node = Node {
                        bounds: up,
                        bound: node_obj,
                        seq: next_seq + 1,
                    };
                    next_seq += 2;
                    heap.push(OpenNode(up_node));
                    stack.push(down_node);
                    continue 'search;
                }
                Fractional::None => {
                    let ybar: Vec<u32> = (0..objects)
                        .map(|j| model.y_value(j).round() as u32)
                        .collect();
                    let theta_bar = model.theta_values();
                    let t0 = Instant::now();
                    let output = evaluator.evaluate(&ybar, &theta_bar);
                    callback_seconds += t0.elapsed().as_secs_f64();
                    if output.true_objective < ub {
                        ub = output.true_objective;
                        best_y = Some(ybar);
                    }
                    if output.cuts.is_empty() {
                        // Estimators match the simulation: this node's LP
                        // optimum is its true optimum.
                        continue 'search;
                    }
                    for cut in output.cuts {
                        pool.add(model, cut);
                    }
                    if pool.activate_violated(model, CUT_VIOLATION_TOL) == 0 {
                        // Every returned cut was already active and the LP
                        // point satisfies them within tolerance; accept.
                        continue 'search;
                    }
                    // Re-solve with the new rows.
                }
            }
        }
    }

    // Global bound over whatever remains open or was pruned by the slack.
    let open_bound = stack
        .iter()
        .map(|n| n.bound)
        .chain(heap.iter().map(|o| o.0.bound))
        .fold(f64::INFINITY, f64::min);
    let (status, bound) = if hit_limit {
        (SolveStatus::TimeLimit, open_bound.min(pruned_bound).min(ub))
    } else if best_y.is_none() {
        (SolveStatus::Infeasible, f64::INFINITY)
    } else {
        (SolveStatus::Optimal, pruned_bound.min(ub))
    };
    let objective = best_y.as_ref().map(|_| ub);
    let gap = match (status, objective) {
        (_, Some(obj)) => Some(((obj - bound) / obj.abs().max(1e-9)).max(0.0)),
        _ => None,
    };
    Ok(BnbOutcome {
        status,
        best_y,
        objective,
        bound,
        gap,
        nodes,
        callback_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cuts::monotonic_cut;
    use crate::instance::{LevelDomain, MeasureId, ObjectiveMode, ObjectiveSpec};
    use branchsim_lp::INF;

    /// Synthetic monotone measure over two objects: f(y) = max(0, 6 - y0 - 2 y1).
    fn true_f(y: &[u32]) -> f64 {
        (6.0 - f64::from(y[0]) - 2.0 * f64::from(y[1])).max(0.0)
    }

    struct TestEval {
        calls: usize,
    }

    impl IncumbentEvaluator for TestEval {
        fn evaluate(&mut self, y: &[u32], theta_bar: &[f64]) -> CallbackOutput {
            self.calls += 1;
            let f = true_f(y);
            let true_objective = f64::from(y[0]) + f64::from(y[1]) + f;
            let cuts = if theta_bar[0] < f - 1e-7 {
                vec![monotonic_cut(
                    MeasureId { scenario: 0, key: 0 },
                    y,
                    LevelDomain::new(0, 3).unwrap(),
                    f,
                )]
            } else {
                vec![]
            };
            CallbackOutput {
                true_objective,
                cuts,
            }
        }
    }

    fn toy_model() -> MasterModel {
        let domain = LevelDomain::new(0, 3).unwrap();
        let spec = ObjectiveSpec {
            level_costs: vec![1.0, 1.0],
            measure_weight: 1.0,
            scenarios: 1,
            mode: ObjectiveMode::Mean,
        };
        MasterModel::build(2, domain, 1, 1, &spec)
    }

    #[test]
    fn finds_the_brute_force_optimum() {
        // Enumeration over the 16 allocations puts the optimum at
        // y = (0, 3) with objective 3.
        let mut model = toy_model();
        let mut pool = CutPool::new(1);
        let mut eval = TestEval { calls: 0 };
        let outcome = branch_and_bound(
            &mut model,
            &mut pool,
            &mut eval,
            None,
            &BnbOptions::default(),
        )
        .unwrap();
        assert_eq!(outcome.status, SolveStatus::Optimal);
        assert_eq!(outcome.best_y, Some(vec![0, 3]));
        assert!((outcome.objective.unwrap() - 3.0).abs() < 1e-9);
        assert_eq!(outcome.gap, Some(0.0));
        assert!(eval.calls >= 1);
        assert!(pool.benders_count >= 1);
    }

    #[test]
    fn warm_start_bounds_the_final_objective() {
        let mut model = toy_model();
        let mut pool = CutPool::new(1);
        let mut eval = TestEval { calls: 0 };
        let warm_y = vec![3, 3];
        let warm_obj = 3.0 + 3.0 + true_f(&warm_y);
        let outcome = branch_and_bound(
            &mut model,
            &mut pool,
            &mut eval,
            Some((warm_y, warm_obj)),
            &BnbOptions::default(),
        )
        .unwrap();
        assert_eq!(outcome.status, SolveStatus::Optimal);
        assert!(outcome.objective.unwrap() <= warm_obj);
        assert!((outcome.objective.unwrap() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn zero_time_limit_reports_the_root_bound() {
        let mut model = toy_model();
        let mut pool = CutPool::new(1);
        let mut eval = TestEval { calls: 0 };
        let opts = BnbOptions {
            time_limit: Some(0.0),
            ..BnbOptions::default()
        };
        let outcome =
            branch_and_bound(&mut model, &mut pool, &mut eval, None, &opts).unwrap();
        assert_eq!(outcome.status, SolveStatus::TimeLimit);
        assert_eq!(outcome.nodes, 1);
        assert!(outcome.objective.is_none());
        // Root relaxation: estimators sit at zero, levels at their lower
        // bounds.
        assert!((outcome.bound - 0.0).abs() < 1e-9);
        assert_eq!(eval.calls, 0);
    }

    #[test]
    fn contradictory_rows_report_infeasible() {
        let mut model = toy_model();
        let y0 = model.y_col(0);
        model.add_row(&[(y0, 1.0)], 5.0, INF);
        let mut pool = CutPool::new(1);
        let mut eval = TestEval { calls: 0 };
        let outcome = branch_and_bound(
            &mut model,
            &mut pool,
            &mut eval,
            None,
            &BnbOptions::default(),
        )
        .unwrap();
        assert_eq!(outcome.status, SolveStatus::Infeasible);
        assert!(outcome.best_y.is_none());
        assert!(outcome.gap.is_none());
    }

    #[test]
    fn reruns_are_identical(){
        let run = || {
            let mut model = toy_model();
            let mut pool = CutPool::new(1);
            let mut eval = TestEval { calls: 0 };
            let outcome = branch_and_bound(
                &mut model,
                &mut pool,
                &mut eval,
                None,
                &BnbOptions::default(),
            )
            .unwrap();
            (
                outcome.best_y,
                outcome.objective,
                outcome.nodes,
                pool.benders_count,
                eval.calls,
            )
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn pool_deduplicates_identical_cuts() {
        let model = toy_model();
        let mut pool = CutPool::new(1);
        let cut = monotonic_cut(
            MeasureId { scenario: 0, key: 0 },
            &[1, 1],
            LevelDomain::new(0, 3).unwrap(),
            4.0,
        );
        assert!(pool.add(&model, cut.clone()));
        assert!(!pool.add(&model, cut));
        assert_eq!(pool.len(), 1);
        assert_eq!(pool.benders_count, 1);
    }
}
