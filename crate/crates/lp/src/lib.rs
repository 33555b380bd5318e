//! Bounded-variable revised simplex.
//!
//! Solves `min c·x  s.t.  lo_i <= a_i·x <= hi_i,  lb_j <= x_j <= ub_j`
//! with an explicit dense basis inverse. The solver is built for repeated
//! re-optimization inside a branch-and-bound loop:
//!
//! * column bounds can change between solves (node bound changes) — the
//!   current basis is kept and primal feasibility is repaired in phase 1,
//! * rows can be appended at any time (cutting planes); the basis inverse
//!   is extended in place,
//! * rows whose slack is basic (nonbinding) can be removed again without
//!   refactorizing.
//!
//! Every constraint is handled as `a_i·x - r_i = 0` where `r_i` is a ranged
//! logical variable with bounds `[lo_i, hi_i]`, so the all-logical basis is
//! trivially available as a cold start. Phase 1 minimizes the total bound
//! violation of basic variables; phase 2 runs Dantzig pricing and falls back
//! to Bland's rule after a streak of degenerate pivots.

use std::fmt;

/// Handle of a structural column. Stable for the lifetime of the solver.
pub type Col = u32;
/// Handle of a row. Stable even when other rows are removed.
pub type Row = u32;

pub const INF: f64 = f64::INFINITY;

const FEAS_TOL: f64 = 1e-7;
const DUAL_TOL: f64 = 1e-7;
const PIVOT_TOL: f64 = 1e-8;
/// Pivots smaller than this are avoided whenever any alternative exists;
/// a 1e-8 pivot scales the inverse by 1e8 and destroys it.
const PIVOT_ACCEPT: f64 = 5e-7;
/// Harris ratio-test slack: blockers may overshoot their bound by this
/// much (relative) if that buys a larger pivot.
const HARRIS_SLACK: f64 = 1e-7;
const DEGEN_STEP: f64 = 1e-9;
/// Consecutive degenerate pivots before bounds are perturbed.
const PERTURB_TRIGGER: usize = 60;
/// Perturbation magnitude (relative to each bound).
const PERTURB_EPS: f64 = 1e-7;
/// Perturbation rounds allowed per solve before falling back to Bland.
const MAX_PERTURB_ROUNDS: usize = 3;
/// Consecutive degenerate pivots before Bland's rule, the last resort.
const BLAND_TRIGGER: usize = 1500;
/// Pivots between refactorizations of the dense inverse.
const REFACTOR_EVERY: usize = 400;
/// Basic-value drift (relative) that forces an early refactorization.
const DRIFT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, Copy)]
pub struct LpResult {
    pub status: LpStatus,
    pub objective: f64,
    pub iterations: usize,
}

/// Numerical breakdown that survived a cold restart. Callers treat this as a
/// hard error; it indicates data far outside the solver's conditioning range.
#[derive(Debug, Clone)]
pub struct NumericalFailure {
    pub detail: String,
}

impl fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "simplex numerical failure: {}", self.detail)
    }
}

impl std::error::Error for NumericalFailure {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarKey {
    Col(u32),
    Slack(u32), // row handle
}

impl VarKey {
    /// Total order used by Bland's rule; structural columns first.
    fn ord_index(self) -> u64 {
        match self {
            VarKey::Col(j) => j as u64,
            VarKey::Slack(h) => (1u64 << 32) + h as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarStatus {
    Basic(u32), // basis slot
    AtLower,
    AtUpper,
    FreeZero, // nonbasic free variable pinned at zero
}

struct VarData {
    lb: f64,
    ub: f64,
    status: VarStatus,
}

pub struct Simplex {
    // Structural columns.
    obj: Vec<f64>,
    cols: Vec<Vec<(Row, f64)>>, // scaled coefficients, keyed by row handle
    col_data: Vec<VarData>,

    // Rows. `handle_pos[h]` is the dense position of row `h`, or NONE.
    handle_pos: Vec<u32>,
    pos_handle: Vec<Row>,
    slack_data: Vec<VarData>, // indexed by handle; bounds already scaled

    // Basis: slot -> variable, plus dense inverse (m x m, row-major: slot-major).
    basic: Vec<VarKey>,
    binv: Vec<f64>,
    xb: Vec<f64>, // value of basic variable per slot

    // Saved bounds while anti-degeneracy perturbation is active.
    saved_bounds: Option<SavedBounds>,
    pivots_since_refactor: usize,
    iterations: usize,
}

struct SavedBounds {
    cols: Vec<(f64, f64)>,
    slacks: Vec<(f64, f64)>,
}

const NONE: u32 = u32::MAX;

impl Simplex {
    pub fn new() -> Self {
        Simplex {
            obj: Vec::new(),
            cols: Vec::new(),
            col_data: Vec::new(),
            handle_pos: Vec::new(),
            pos_handle: Vec::new(),
            slack_data: Vec::new(),
            basic: Vec::new(),
            binv: Vec::new(),
            xb: Vec::new(),
            saved_bounds: None,
            pivots_since_refactor: 0,
            iterations: 0,
        }
    }

    pub fn num_rows(&self) -> usize {
        self.pos_handle.len()
    }

    pub fn num_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn add_col(&mut self, obj: f64, lb: f64, ub: f64) -> Col {
        assert!(lb <= ub, "column bounds crossed: [{lb}, {ub}]");
        let j = self.cols.len() as Col;
        self.obj.push(obj);
        self.cols.push(Vec::new());
        self.col_data.push(VarData {
            lb,
            ub,
            status: initial_status(lb, ub),
        });
        j
    }

    pub fn set_col_bounds(&mut self, j: Col, lb: f64, ub: f64) {
        assert!(lb <= ub, "column bounds crossed: [{lb}, {ub}]");
        let d = &mut self.col_data[j as usize];
        d.lb = lb;
        d.ub = ub;
        // Nonbasic statuses referencing a bound that no longer exists are
        // repaired at the start of the next solve.
    }

    pub fn col_bounds(&self, j: Col) -> (f64, f64) {
        let d = &self.col_data[j as usize];
        (d.lb, d.ub)
    }

    pub fn set_obj(&mut self, j: Col, c: f64) {
        self.obj[j as usize] = c;
    }

    /// Appends one row `lo <= terms·x <= hi`. Duplicate column entries are
    /// summed. The row's slack enters the basis, so the current basis stays
    /// valid. Returns a stable row handle.
    pub fn add_row(&mut self, terms: &[(Col, f64)], lo: f64, hi: f64) -> Row {
        self.add_rows(std::iter::once((terms, lo, hi))).pop().unwrap()
    }

    /// Batch append; one inverse re-layout for the whole batch.
    pub fn add_rows<'a, I>(&mut self, rows: I) -> Vec<Row>
    where
        I: IntoIterator<Item = (&'a [(Col, f64)], f64, f64)>,
    {
        let m_old = self.num_rows();
        let mut handles = Vec::new();
        let mut new_rows: Vec<(Row, Vec<(Col, f64)>)> = Vec::new();
        for (terms, lo, hi) in rows {
            assert!(lo <= hi, "row bounds crossed: [{lo}, {hi}]");
            let h = self.slack_data.len() as Row;
            // Combine duplicates and drop explicit zeros.
            let mut combined: Vec<(Col, f64)> = Vec::with_capacity(terms.len());
            let mut sorted: Vec<(Col, f64)> = terms.to_vec();
            sorted.sort_unstable_by_key(|&(c, _)| c);
            for (c, a) in sorted {
                if let Some(last) = combined.last_mut() {
                    if last.0 == c {
                        last.1 += a;
                        continue;
                    }
                }
                combined.push((c, a));
            }
            combined.retain(|&(_, a)| a != 0.0);
            // Scale the row so its largest coefficient has magnitude 1.
            let scale = combined
                .iter()
                .fold(0.0f64, |acc, &(_, a)| acc.max(a.abs()))
                .max(1e-12);
            for e in combined.iter_mut() {
                e.1 /= scale;
            }
            let (slo, shi) = (lo / scale, hi / scale);
            self.slack_data.push(VarData {
                lb: slo,
                ub: shi,
                status: VarStatus::Basic(NONE), // slot assigned below
            });
            self.handle_pos.push(NONE);
            handles.push(h);
            new_rows.push((h, combined));
        }
        let k = new_rows.len();
        if k == 0 {
            return handles;
        }
        let m_new = m_old + k;

        // Re-layout the inverse with the larger stride, zero-padding new
        // columns; new slots get the bordered rows  [c_B·B^{-1} | -I].
        let mut binv = vec![0.0; m_new * m_new];
        for p in 0..m_old {
            binv[p * m_new..p * m_new + m_old]
                .copy_from_slice(&self.binv[p * m_old..(p + 1) * m_old]);
        }
        for (idx, (h, terms)) in new_rows.iter().enumerate() {
            let pos = (m_old + idx) as u32;
            self.handle_pos[*h as usize] = pos;
            self.pos_handle.push(*h);
            let slot = m_old + idx;
            // Bordered inverse row: coefficients of the new row on currently
            // basic structural columns, propagated through B^{-1}.
            for &(j, a) in terms.iter() {
                if let VarStatus::Basic(p) = self.col_data[j as usize].status {
                    let p = p as usize;
                    let (dst, src) = split_rows(&mut binv, slot, p, m_new);
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += a * *s;
                    }
                }
            }
            binv[slot * m_new + pos as usize] = -1.0;
            self.slack_data[*h as usize].status = VarStatus::Basic(slot as u32);
            self.basic.push(VarKey::Slack(*h));
            self.xb.push(0.0);
            // Register coefficients in the column file.
            for &(j, a) in terms.iter() {
                self.cols[j as usize].push((*h, a));
            }
        }
        self.binv = binv;
        self.recompute_xb();
        handles
    }

    /// Removes every row in `rows` whose slack is currently basic; binding
    /// rows are left in place. Returns the handles actually removed.
    pub fn remove_slack_rows(&mut self, rows: &[Row]) -> Vec<Row> {
        let mut removable = Vec::new();
        for &h in rows {
            if self.handle_pos[h as usize] == NONE {
                continue;
            }
            if matches!(self.slack_data[h as usize].status, VarStatus::Basic(_)) {
                removable.push(h);
            }
        }
        if removable.is_empty() {
            return removable;
        }
        let m_old = self.num_rows();
        let mut drop_pos = vec![false; m_old];
        let mut drop_slot = vec![false; m_old];
        for &h in &removable {
            drop_pos[self.handle_pos[h as usize] as usize] = true;
            match self.slack_data[h as usize].status {
                VarStatus::Basic(s) => drop_slot[s as usize] = true,
                _ => unreachable!(),
            }
        }
        // Excising (slot, row) pairs of basic slacks keeps the inverse exact:
        // the slack column is a unit vector, so the remaining block of B^{-1}
        // is exactly the inverse of the remaining basis.
        let m_new = m_old - removable.len();
        let mut binv = vec![0.0; m_new * m_new];
        let mut new_slot = 0usize;
        let mut slot_map = vec![NONE; m_old];
        for s in 0..m_old {
            if drop_slot[s] {
                continue;
            }
            slot_map[s] = new_slot as u32;
            let mut new_pos = 0usize;
            for i in 0..m_old {
                if drop_pos[i] {
                    continue;
                }
                binv[new_slot * m_new + new_pos] = self.binv[s * m_old + i];
                new_pos += 1;
            }
            new_slot += 1;
        }
        self.binv = binv;

        // Rebuild dense row positions and basis arrays.
        let mut pos_handle = Vec::with_capacity(m_new);
        for i in 0..m_old {
            let h = self.pos_handle[i];
            if drop_pos[i] {
                self.handle_pos[h as usize] = NONE;
            } else {
                self.handle_pos[h as usize] = pos_handle.len() as u32;
                pos_handle.push(h);
            }
        }
        self.pos_handle = pos_handle;
        let mut basic = Vec::with_capacity(m_new);
        let mut xb = Vec::with_capacity(m_new);
        for s in 0..m_old {
            if drop_slot[s] {
                continue;
            }
            let v = self.basic[s];
            match v {
                VarKey::Col(j) => {
                    self.col_data[j as usize].status = VarStatus::Basic(basic.len() as u32)
                }
                VarKey::Slack(h) => {
                    self.slack_data[h as usize].status = VarStatus::Basic(basic.len() as u32)
                }
            }
            basic.push(v);
            xb.push(self.xb[s]);
        }
        self.basic = basic;
        self.xb = xb;

        // Purge removed handles from the column file.
        let handle_pos = &self.handle_pos;
        for col in self.cols.iter_mut() {
            col.retain(|&(h, _)| handle_pos[h as usize] != NONE);
        }
        removable
    }

    /// True if the row's slack is basic and strictly inside its bounds, i.e.
    /// the constraint is currently nonbinding.
    pub fn row_is_loose(&self, h: Row) -> bool {
        if self.handle_pos[h as usize] == NONE {
            return false;
        }
        let d = &self.slack_data[h as usize];
        match d.status {
            VarStatus::Basic(s) => {
                let v = self.xb[s as usize];
                v > d.lb + FEAS_TOL && v < d.ub - FEAS_TOL
            }
            _ => false,
        }
    }

    pub fn col_value(&self, j: Col) -> f64 {
        let d = &self.col_data[j as usize];
        match d.status {
            VarStatus::Basic(s) => self.xb[s as usize],
            _ => nonbasic_value(d),
        }
    }

    pub fn objective_value(&self) -> f64 {
        (0..self.cols.len())
            .map(|j| self.obj[j] * self.col_value(j as Col))
            .sum()
    }

    /// Drops the current basis and reverts to the all-slack basis.
    pub fn reset_basis(&mut self) {
        let m = self.num_rows();
        for d in self.col_data.iter_mut() {
            d.status = initial_status(d.lb, d.ub);
        }
        for (h, d) in self.slack_data.iter_mut().enumerate() {
            if self.handle_pos[h] != NONE {
                d.status = VarStatus::Basic(self.handle_pos[h]);
            }
        }
        self.basic = self
            .pos_handle
            .iter()
            .map(|&h| VarKey::Slack(h))
            .collect();
        self.binv = vec![0.0; m * m];
        for p in 0..m {
            self.binv[p * m + p] = -1.0;
        }
        self.xb = vec![0.0; m];
        self.pivots_since_refactor = 0;
        self.recompute_xb();
    }

    /// Rebuilds the dense inverse from the basis itself, discarding the
    /// rounding error accumulated by pivot updates. Fails if the basis
    /// matrix has become numerically singular.
    fn refactorize(&mut self) -> Result<(), NumericalFailure> {
        let m = self.num_rows();
        self.pivots_since_refactor = 0;
        if m == 0 {
            return Ok(());
        }
        // Basis matrix in row-position space: column `s` is the constraint
        // column of `basic[s]`.
        let mut mat = vec![0.0; m * m];
        for (s, &v) in self.basic.iter().enumerate() {
            match v {
                VarKey::Col(j) => {
                    for &(h, a) in &self.cols[j as usize] {
                        let p = self.handle_pos[h as usize] as usize;
                        mat[p * m + s] = a;
                    }
                }
                VarKey::Slack(h) => {
                    let p = self.handle_pos[h as usize] as usize;
                    mat[p * m + s] = -1.0;
                }
            }
        }
        // Gauss-Jordan with partial pivoting on [mat | inv].
        let mut inv = vec![0.0; m * m];
        for s in 0..m {
            inv[s * m + s] = 1.0;
        }
        for k in 0..m {
            let mut best = k;
            let mut best_mag = mat[k * m + k].abs();
            for r in k + 1..m {
                let mag = mat[r * m + k].abs();
                if mag > best_mag {
                    best = r;
                    best_mag = mag;
                }
            }
            if best_mag < 1e-11 {
                return Err(NumericalFailure {
                    detail: format!("singular basis at column {k}"),
                });
            }
            if best != k {
                for c in 0..m {
                    mat.swap(k * m + c, best * m + c);
                    inv.swap(k * m + c, best * m + c);
                }
            }
            let scale = 1.0 / mat[k * m + k];
            for c in 0..m {
                mat[k * m + c] *= scale;
                inv[k * m + c] *= scale;
            }
            for r in 0..m {
                if r == k {
                    continue;
                }
                let factor = mat[r * m + k];
                if factor == 0.0 {
                    continue;
                }
                let (mdst, msrc) = split_rows(&mut mat, r, k, m);
                for (d, s) in mdst.iter_mut().zip(msrc) {
                    *d -= factor * *s;
                }
                let (idst, isrc) = split_rows(&mut inv, r, k, m);
                for (d, s) in idst.iter_mut().zip(isrc) {
                    *d -= factor * *s;
                }
            }
        }
        // Row `s` of the reduced right block solves mat·x = e for slot `s`,
        // which is exactly the (slot, row-position) layout binv uses.
        self.binv.copy_from_slice(&inv);
        self.recompute_xb();
        Ok(())
    }

    /// Shifts every finite bound outward by a tiny deterministic amount,
    /// so degenerate vertices split apart and pivots make real progress.
    fn apply_perturbation(&mut self) {
        if self.saved_bounds.is_some() {
            return;
        }
        let saved = SavedBounds {
            cols: self.col_data.iter().map(|d| (d.lb, d.ub)).collect(),
            slacks: self.slack_data.iter().map(|d| (d.lb, d.ub)).collect(),
        };
        let widen = |d: &mut VarData, idx: u64| {
            if d.lb.is_finite() {
                d.lb -= PERTURB_EPS * (1.0 + d.lb.abs()) * jitter(2 * idx);
            }
            if d.ub.is_finite() {
                d.ub += PERTURB_EPS * (1.0 + d.ub.abs()) * jitter(2 * idx + 1);
            }
        };
        for (j, d) in self.col_data.iter_mut().enumerate() {
            widen(d, j as u64);
        }
        let offset = self.col_data.len() as u64;
        for (h, d) in self.slack_data.iter_mut().enumerate() {
            if self.handle_pos[h] != NONE {
                widen(d, offset + h as u64);
            }
        }
        self.saved_bounds = Some(saved);
        self.recompute_xb();
    }

    /// Restores the bounds saved by `apply_perturbation`.
    fn remove_perturbation(&mut self) {
        let Some(saved) = self.saved_bounds.take() else {
            return;
        };
        for (d, (lb, ub)) in self.col_data.iter_mut().zip(saved.cols) {
            d.lb = lb;
            d.ub = ub;
        }
        for (d, (lb, ub)) in self.slack_data.iter_mut().zip(saved.slacks) {
            d.lb = lb;
            d.ub = ub;
        }
        self.recompute_xb();
    }

    /// Optimizes from the current basis, repairing feasibility first.
    pub fn solve(&mut self) -> Result<LpResult, NumericalFailure> {
        let mut outcome = self.solve_inner();
        self.remove_perturbation();
        if outcome.is_err() {
            // Recovery ladder: a fresh inverse for the same basis, then a
            // cold restart from the all-slack basis.
            if self.refactorize().is_ok() {
                outcome = self.solve_inner();
                self.remove_perturbation();
            }
            if outcome.is_err() {
                self.reset_basis();
                outcome = self.solve_inner();
                self.remove_perturbation();
            }
        }
        outcome
    }

    fn solve_inner(&mut self) -> Result<LpResult, NumericalFailure> {
        self.repin_nonbasic();
        self.recompute_xb();
        self.iterations = 0;
        let mut bland = false;
        let mut degen_streak = 0usize;
        let mut perturb_rounds = 0usize;
        let m = self.num_rows();
        let iter_limit = 200_000 + 200 * m;
        let mut scratch_y = vec![0.0; m];
        let mut scratch_w = vec![0.0; m];
        let mut repairs = 0usize;
        let mut phase1 = self.total_infeasibility() > FEAS_TOL;
        loop {
            self.iterations += 1;
            if self.iterations > iter_limit {
                return Err(NumericalFailure {
                    detail: format!("iteration limit {iter_limit} exceeded"),
                });
            }
            // Incremental basic values drift; refresh them periodically and
            // rebuild the inverse outright once the drift is visible.
            if self.iterations % 512 == 0 {
                let before = self.xb.clone();
                self.recompute_xb();
                let scale = self
                    .xb
                    .iter()
                    .fold(1.0f64, |acc, &v| acc.max(v.abs()));
                let drift = before
                    .iter()
                    .zip(&self.xb)
                    .fold(0.0f64, |acc, (&a, &b)| acc.max((a - b).abs()));
                if drift > DRIFT_TOL * scale {
                    self.refactorize()?;
                }
            }
            if phase1 && self.total_infeasibility() <= FEAS_TOL {
                phase1 = false;
                degen_streak = 0;
                bland = false;
            }

            // Dual prices for the active cost vector.
            self.btran_costs(phase1, &mut scratch_y);
            let entering = self.price(phase1, bland, &scratch_y);
            let (q, dir) = match entering {
                Some(e) => e,
                None => {
                    if phase1 {
                        self.recompute_xb();
                        if self.total_infeasibility() <= FEAS_TOL {
                            phase1 = false;
                            continue;
                        }
                        if self.saved_bounds.is_some() {
                            // Prove infeasibility against the real bounds.
                            self.remove_perturbation();
                            degen_streak = 0;
                            continue;
                        }
                        return Ok(LpResult {
                            status: LpStatus::Infeasible,
                            objective: f64::NAN,
                            iterations: self.iterations,
                        });
                    }
                    // Prices are optimal; land back on the true bounds
                    // before claiming anything.
                    if self.saved_bounds.is_some() {
                        self.remove_perturbation();
                        degen_streak = 0;
                        if self.total_infeasibility() > FEAS_TOL {
                            phase1 = true;
                        }
                        continue;
                    }
                    // Numerical drift can reintroduce infeasibility after
                    // phase 1 ended; repair instead of reporting a bad point.
                    self.recompute_xb();
                    if self.total_infeasibility() > FEAS_TOL {
                        repairs += 1;
                        if repairs > 5 {
                            return Err(NumericalFailure {
                                detail: "feasibility lost repeatedly".to_string(),
                            });
                        }
                        self.refactorize()?;
                        phase1 = true;
                        degen_streak = 0;
                        bland = false;
                        continue;
                    }
                    return Ok(LpResult {
                        status: LpStatus::Optimal,
                        objective: self.objective_value(),
                        iterations: self.iterations,
                    });
                }
            };

            self.ftran(q, &mut scratch_w);
            let ratio = self.ratio_test(q, dir, &scratch_w, phase1, bland);
            match ratio {
                RatioOutcome::Unbounded => {
                    if phase1 {
                        return Err(NumericalFailure {
                            detail: "unbounded phase-1 direction".to_string(),
                        });
                    }
                    if self.saved_bounds.is_some() {
                        // A perturbed box is wider; re-prove on the real one.
                        self.remove_perturbation();
                        degen_streak = 0;
                        if self.total_infeasibility() > FEAS_TOL {
                            phase1 = true;
                        }
                        continue;
                    }
                    return Ok(LpResult {
                        status: LpStatus::Unbounded,
                        objective: f64::NEG_INFINITY,
                        iterations: self.iterations,
                    });
                }
                RatioOutcome::Flip(t) => {
                    self.apply_step(q, dir, t, &scratch_w);
                    let d = self.var_data_mut(q);
                    d.status = match d.status {
                        VarStatus::AtLower => VarStatus::AtUpper,
                        VarStatus::AtUpper => VarStatus::AtLower,
                        s => s,
                    };
                }
                RatioOutcome::Pivot { slot, t, to_upper } => {
                    if t.abs() <= DEGEN_STEP {
                        degen_streak += 1;
                        if degen_streak == PERTURB_TRIGGER && perturb_rounds < MAX_PERTURB_ROUNDS
                        {
                            perturb_rounds += 1;
                            self.apply_perturbation();
                        }
                        if degen_streak >= BLAND_TRIGGER {
                            bland = true;
                        }
                    } else {
                        degen_streak = 0;
                        bland = false;
                    }
                    self.apply_step(q, dir, t, &scratch_w);
                    self.pivot(q, dir, slot, t, to_upper, &scratch_w);
                    if self.pivots_since_refactor >= REFACTOR_EVERY {
                        self.refactorize()?;
                    }
                }
            }
        }
    }

    // ---- internals ----

    fn var_data(&self, v: VarKey) -> &VarData {
        match v {
            VarKey::Col(j) => &self.col_data[j as usize],
            VarKey::Slack(h) => &self.slack_data[h as usize],
        }
    }

    fn var_data_mut(&mut self, v: VarKey) -> &mut VarData {
        match v {
            VarKey::Col(j) => &mut self.col_data[j as usize],
            VarKey::Slack(h) => &mut self.slack_data[h as usize],
        }
    }

    /// Re-pins nonbasic variables whose status no longer matches their
    /// (possibly updated) bounds.
    fn repin_nonbasic(&mut self) {
        let fix = |d: &mut VarData| {
            if matches!(d.status, VarStatus::Basic(_)) {
                return;
            }
            d.status = match d.status {
                VarStatus::AtLower if d.lb.is_finite() => VarStatus::AtLower,
                VarStatus::AtUpper if d.ub.is_finite() => VarStatus::AtUpper,
                _ => initial_status(d.lb, d.ub),
            };
        };
        for d in self.col_data.iter_mut() {
            fix(d);
        }
        for (h, d) in self.slack_data.iter_mut().enumerate() {
            if self.handle_pos[h] != NONE {
                fix(d);
            }
        }
    }

    fn recompute_xb(&mut self) {
        let m = self.num_rows();
        // Row-space activity of all nonbasic variables (rhs is zero).
        let mut act = vec![0.0; m];
        for j in 0..self.cols.len() {
            let d = &self.col_data[j];
            if matches!(d.status, VarStatus::Basic(_)) {
                continue;
            }
            let v = nonbasic_value(d);
            if v != 0.0 {
                for &(h, a) in &self.cols[j] {
                    act[self.handle_pos[h as usize] as usize] += a * v;
                }
            }
        }
        for (h, d) in self.slack_data.iter().enumerate() {
            let pos = self.handle_pos[h];
            if pos == NONE || matches!(d.status, VarStatus::Basic(_)) {
                continue;
            }
            let v = nonbasic_value(d);
            if v != 0.0 {
                act[pos as usize] -= v;
            }
        }
        // x_B = -B^{ -1} * act
        for s in 0..m {
            let row = &self.binv[s * m..(s + 1) * m];
            let mut acc = 0.0;
            for i in 0..m {
                acc += row[i] * act[i];
            }
            self.xb[s] = -acc;
        }
    }

    fn total_infeasibility(&self) -> f64 {
        let mut total = 0.0;
        for (s, &v) in self.basic.iter().enumerate() {
            let d = self.var_data(v);
            let x = self.xb[s];
            if x < d.lb {
                total += d.lb - x;
            } else if x > d.ub {
                total += x - d.ub;
            }
        }
        total
    }

    /// y = c_B^T · B^{-1} for the active phase's costs.
    fn btran_costs(&self, phase1: bool, y: &mut [f64]) {
        let m = self.num_rows();
        y.fill(0.0);
        for (s, &v) in self.basic.iter().enumerate() {
            let c = if phase1 {
                let d = self.var_data(v);
                let x = self.xb[s];
                if x < d.lb - FEAS_TOL {
                    -1.0
                } else if x > d.ub + FEAS_TOL {
                    1.0
                } else {
                    0.0
                }
            } else {
                match v {
                    VarKey::Col(j) => self.obj[j as usize],
                    VarKey::Slack(_) => 0.0,
                }
            };
            if c != 0.0 {
                let row = &self.binv[s * m..(s + 1) * m];
                for i in 0..m {
                    y[i] += c * row[i];
                }
            }
        }
    }

    fn reduced_cost(&self, v: VarKey, phase1: bool, y: &[f64]) -> f64 {
        let c = if phase1 {
            0.0
        } else {
            match v {
                VarKey::Col(j) => self.obj[j as usize],
                VarKey::Slack(_) => 0.0,
            }
        };
        match v {
            VarKey::Col(j) => {
                let mut acc = c;
                for &(h, a) in &self.cols[j as usize] {
                    acc -= y[self.handle_pos[h as usize] as usize] * a;
                }
                acc
            }
            VarKey::Slack(h) => c + y[self.handle_pos[h as usize] as usize],
        }
    }

    /// Picks an entering variable and its direction (+1 = increase).
    fn price(&self, phase1: bool, bland: bool, y: &[f64]) -> Option<(VarKey, f64)> {
        let mut best: Option<(VarKey, f64, f64)> = None; // (var, dir, |d|)
        let consider = |this: &Self, v: VarKey| {
            let d = this.var_data(v);
            if matches!(d.status, VarStatus::Basic(_)) {
                return None;
            }
            if d.ub - d.lb <= 1e-12 {
                return None; // fixed, cannot move
            }
            let rc = this.reduced_cost(v, phase1, y);
            let dir = match d.status {
                VarStatus::AtLower if rc < -DUAL_TOL => 1.0,
                VarStatus::AtUpper if rc > DUAL_TOL => -1.0,
                VarStatus::FreeZero if rc < -DUAL_TOL => 1.0,
                VarStatus::FreeZero if rc > DUAL_TOL => -1.0,
                _ => return None,
            };
            Some((dir, rc.abs()))
        };
        for j in 0..self.cols.len() {
            let v = VarKey::Col(j as u32);
            if let Some((dir, mag)) = consider(self, v) {
                if bland {
                    return Some((v, dir));
                }
                if best.map_or(true, |(_, _, m)| mag > m) {
                    best = Some((v, dir, mag));
                }
            }
        }
        for &h in &self.pos_handle {
            let v = VarKey::Slack(h);
            if let Some((dir, mag)) = consider(self, v) {
                if bland {
                    return Some((v, dir));
                }
                if best.map_or(true, |(_, _, m)| mag > m) {
                    best = Some((v, dir, mag));
                }
            }
        }
        // Bland mode scans in a fixed order and returns the first candidate;
        // in that mode a slack can only be reached if no column qualifies,
        // which matches the ordering of `VarKey::ord_index`.
        best.map(|(v, dir, _)| (v, dir))
    }

    /// w = B^{-1} · (column of q)
    fn ftran(&self, q: VarKey, w: &mut [f64]) {
        let m = self.num_rows();
        w.fill(0.0);
        match q {
            VarKey::Col(j) => {
                for &(h, a) in &self.cols[j as usize] {
                    let i = self.handle_pos[h as usize] as usize;
                    let mut p = 0;
                    while p < m {
                        w[p] += a * self.binv[p * m + i];
                        p += 1;
                    }
                }
            }
            VarKey::Slack(h) => {
                let i = self.handle_pos[h as usize] as usize;
                for p in 0..m {
                    w[p] -= self.binv[p * m + i];
                }
            }
        }
    }

    /// The breakpoint of basic slot `s` along the entering direction, as
    /// (step limit, leaves-at-upper), or None if it never blocks.
    fn breakpoint(&self, s: usize, v: VarKey, delta: f64, phase1: bool) -> Option<(f64, bool)> {
        let d = self.var_data(v);
        let x = self.xb[s];
        let (limit, to_upper) = if delta > 0.0 {
            // moving up: an infeasible-below basic stops at its lower
            // bound (the phase-1 slope changes there); one that is already
            // above its upper bound has no breakpoint in this direction
            if phase1 && x < d.lb - FEAS_TOL {
                ((d.lb - x) / delta, false)
            } else if phase1 && x > d.ub + FEAS_TOL {
                return None;
            } else if d.ub.is_finite() {
                (((d.ub - x) / delta).max(0.0), true)
            } else {
                return None;
            }
        } else {
            if phase1 && x > d.ub + FEAS_TOL {
                ((d.ub - x) / delta, true)
            } else if phase1 && x < d.lb - FEAS_TOL {
                return None;
            } else if d.lb.is_finite() {
                (((d.lb - x) / delta).max(0.0), false)
            } else {
                return None;
            }
        };
        Some((limit.max(0.0), to_upper))
    }

    /// Two-pass (Harris) ratio test. The first pass finds the smallest
    /// blocking step with a little feasibility slack; the second picks,
    /// among blockers inside that slack, the one with the largest pivot
    /// element, refusing dangerously small pivots while any alternative
    /// exists. Bland mode instead takes the smallest exact ratio with ties
    /// by variable order, which guarantees termination.
    fn ratio_test(
        &self,
        q: VarKey,
        dir: f64,
        w: &[f64],
        phase1: bool,
        bland: bool,
    ) -> RatioOutcome {
        let dq = self.var_data(q);
        // Entering variable's own range.
        let own_gap = dq.ub - dq.lb;
        let t_own = if own_gap.is_finite() { own_gap } else { INF };

        if bland {
            let mut t_best = t_own;
            let mut blocker: Option<(usize, bool)> = None;
            for (s, &v) in self.basic.iter().enumerate() {
                let delta = -dir * w[s];
                if delta.abs() <= PIVOT_TOL {
                    continue;
                }
                let Some((limit, to_upper)) = self.breakpoint(s, v, delta, phase1) else {
                    continue;
                };
                let better = limit < t_best - 1e-12
                    || (limit <= t_best + 1e-12
                        && blocker.map_or(true, |(bs, _)| {
                            self.basic[bs].ord_index() > v.ord_index()
                        }));
                if better {
                    t_best = t_best.min(limit);
                    blocker = Some((s, to_upper));
                }
            }
            return match blocker {
                None if t_best.is_finite() => RatioOutcome::Flip(t_best),
                None => RatioOutcome::Unbounded,
                Some((slot, to_upper)) => RatioOutcome::Pivot {
                    slot,
                    t: t_best,
                    to_upper,
                },
            };
        }

        // Pass 1: relaxed step limit, letting each blocker overshoot its
        // bound by a small slack.
        let mut t_relaxed = t_own;
        let mut any_blocker = false;
        for (s, &v) in self.basic.iter().enumerate() {
            let delta = -dir * w[s];
            if delta.abs() <= PIVOT_TOL {
                continue;
            }
            if let Some((limit, _)) = self.breakpoint(s, v, delta, phase1) {
                any_blocker = true;
                let slack = HARRIS_SLACK * (1.0 + self.xb[s].abs()) / delta.abs();
                t_relaxed = t_relaxed.min(limit + slack);
            }
        }
        if !any_blocker {
            return if t_own.is_finite() {
                RatioOutcome::Flip(t_own)
            } else {
                RatioOutcome::Unbounded
            };
        }

        // Pass 2: among blockers within the relaxed limit, the largest
        // pivot wins; tiny pivots only if there is nothing else.
        let mut chosen: Option<(usize, bool, f64, f64)> = None; // slot, to_upper, limit, |pivot|
        for (s, &v) in self.basic.iter().enumerate() {
            let delta = -dir * w[s];
            if delta.abs() <= PIVOT_TOL {
                continue;
            }
            let Some((limit, to_upper)) = self.breakpoint(s, v, delta, phase1) else {
                continue;
            };
            if limit > t_relaxed {
                continue;
            }
            let mag = w[s].abs();
            let better = match chosen {
                None => true,
                Some((_, _, _, best_mag)) => {
                    let ok = mag >= PIVOT_ACCEPT;
                    let best_ok = best_mag >= PIVOT_ACCEPT;
                    (ok && !best_ok) || (ok == best_ok && mag > best_mag)
                }
            };
            if better {
                chosen = Some((s, to_upper, limit, mag));
            }
        }
        match chosen {
            None => {
                // Every blocker sits beyond the entering variable's own
                // range: the entering variable flips across its box.
                if t_own.is_finite() {
                    RatioOutcome::Flip(t_own)
                } else {
                    RatioOutcome::Unbounded
                }
            }
            Some((slot, to_upper, limit, _)) => RatioOutcome::Pivot {
                slot,
                t: limit,
                to_upper,
            },
        }
    }

    /// Moves the entering variable by `t` along `dir`, updating basic values.
    fn apply_step(&mut self, q: VarKey, dir: f64, t: f64, w: &[f64]) {
        if t == 0.0 {
            return;
        }
        for s in 0..self.basic.len() {
            self.xb[s] += -dir * w[s] * t;
        }
        // The entering variable's stored value is implicit in its status;
        // pivot() records it explicitly when it becomes basic.
        let _ = q;
    }

    fn pivot(&mut self, q: VarKey, dir: f64, slot: usize, t: f64, to_upper: bool, w: &[f64]) {
        let m = self.num_rows();
        self.pivots_since_refactor += 1;
        let leaving = self.basic[slot];
        // Entering variable's new value.
        let dq = self.var_data(q);
        let from = nonbasic_value(dq);
        let new_val = from + dir * t;

        // Update the inverse: row `slot` scaled by 1/w[slot], others swept.
        let pivot_val = w[slot];
        debug_assert!(pivot_val.abs() > PIVOT_TOL * 0.5);
        {
            let row = &mut self.binv[slot * m..(slot + 1) * m];
            let inv = 1.0 / pivot_val;
            for x in row.iter_mut() {
                *x *= inv;
            }
        }
        for p in 0..m {
            if p == slot || w[p] == 0.0 {
                continue;
            }
            let factor = w[p];
            let (dst, src) = split_rows(&mut self.binv, p, slot, m);
            for (d, s) in dst.iter_mut().zip(src) {
                *d -= factor * *s;
            }
        }

        let leave_data = self.var_data_mut(leaving);
        leave_data.status = if to_upper {
            VarStatus::AtUpper
        } else {
            VarStatus::AtLower
        };
        let enter_data = self.var_data_mut(q);
        enter_data.status = VarStatus::Basic(slot as u32);
        self.basic[slot] = q;
        self.xb[slot] = new_val;
    }
}

impl Default for Simplex {
    fn default() -> Self {
        Self::new()
    }
}

enum RatioOutcome {
    /// Entering variable reaches its opposite bound first.
    Flip(f64),
    Pivot {
        slot: usize,
        t: f64,
        to_upper: bool,
    },
    Unbounded,
}

fn initial_status(lb: f64, ub: f64) -> VarStatus {
    if lb.is_finite() {
        VarStatus::AtLower
    } else if ub.is_finite() {
        VarStatus::AtUpper
    } else {
        VarStatus::FreeZero
    }
}

/// Deterministic pseudo-random factor in [0.5, 1.5) for perturbation
/// magnitudes; a plain hash keeps reruns bit-identical.
fn jitter(i: u64) -> f64 {
    let mut x = i
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .rotate_left(31)
        ^ 0xD1B5_4A32_D192_ED03;
    x ^= x >> 29;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 32;
    0.5 + (x >> 11) as f64 / (1u64 << 53) as f64
}

fn nonbasic_value(d: &VarData) -> f64 {
    match d.status {
        VarStatus::AtLower => d.lb,
        VarStatus::AtUpper => d.ub,
        VarStatus::FreeZero => 0.0,
        VarStatus::Basic(_) => unreachable!("nonbasic_value on basic variable"),
    }
}

/// Two disjoint row slices of the row-major matrix `buf`.
fn split_rows(buf: &mut [f64], dst: usize, src: usize, m: usize) -> (&mut [f64], &[f64]) {
    assert_ne!(dst, src);
    if dst < src {
        let (a, b) = buf.split_at_mut(src * m);
        (&mut a[dst * m..(dst + 1) * m], &b[..m])
    } else {
        let (a, b) = buf.split_at_mut(dst * m);
        (&mut b[..m], &a[src * m..(src + 1) * m])
    }
}
