//! Optimality cuts over level-indicator variables, and the adaptive
//! window searches that certify where a measure's value is decided.
//!
//! Every cut bounds one measure estimator from below:
//!
//! `theta_k >= constant + sum coeff * z[object][level]`
//!
//! where `z[object][level]` is the master's binary indicator that the
//! object runs at exactly that level. Four families exist, ordered from
//! weakest to strongest at a given incumbent `ybar` with value `fbar`:
//!
//! - **no-good**: the bound collapses to zero as soon as any object moves
//!   off `ybar` in either direction;
//! - **monotonic**: only *raising* some level deactivates the bound, which
//!   is valid whenever the measure never benefits from removed resources;
//! - **local**: like monotonic but only levels inside a certified window
//!   deactivate it — levels outside the window were proven irrelevant by
//!   evaluating the relaxation that maxes them out;
//! - **strengthened**: inside the window, raising the anchor object to
//!   level `xi` only drops the bound to `I(xi)` (the measure's value with
//!   everything else maxed out), and raising any other window object drops
//!   it to the anchor-only baseline rather than to zero.
//!
//! Initial cuts are built before the search from a two-dimensional table
//! `W(xi1, xi2)` of measure values over an (anchor, partner) pair with all
//! other objects maxed out. Each table yields one cut per anchor level and
//! one per partner level; the max-level member of each family degenerates
//! to the one-dimensional cut in the other object.

use crate::instance::{LevelDomain, MeasureId};

/// Which optimality-cut family the solver separates at incumbents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CutKind {
    NoGood,
    Monotonic,
    Local,
    Strengthened,
}

impl CutKind {
    /// Command-line spelling of the cut family.
    pub fn label(&self) -> &'static str {
        match self {
            CutKind::NoGood => "nogood",
            CutKind::Monotonic => "mono",
            CutKind::Local => "local",
            CutKind::Strengthened => "strong",
        }
    }

    /// Compact tag used in method labels and cut dumps.
    pub fn short_label(&self) -> &'static str {
        match self {
            CutKind::NoGood => "NG",
            CutKind::Monotonic => "M",
            CutKind::Local => "L",
            CutKind::Strengthened => "S",
        }
    }
}

impl std::str::FromStr for CutKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nogood" => Ok(CutKind::NoGood),
            "mono" => Ok(CutKind::Monotonic),
            "local" => Ok(CutKind::Local),
            "strong" => Ok(CutKind::Strengthened),
            other => Err(format!(
                "unknown cut kind '{other}' (expected nogood|mono|local|strong)"
            )),
        }
    }
}

/// Where a cut came from, for accounting and dumps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CutOrigin {
    Initial,
    Benders(CutKind),
}

impl CutOrigin {
    pub fn label(&self) -> &'static str {
        match self {
            CutOrigin::Initial => "initial",
            CutOrigin::Benders(kind) => kind.label(),
        }
    }
}

/// One sparse term `coeff * z[object][level]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZTerm {
    pub object: u32,
    pub level: u32,
    pub coeff: f64,
}

/// A lower bound on one measure estimator, linear in the level indicators.
#[derive(Clone, Debug)]
pub struct LinearCut {
    pub measure: MeasureId,
    pub constant: f64,
    pub z_terms: Vec<ZTerm>,
    pub origin: CutOrigin,
}

impl LinearCut {
    /// The bound's value at an integer allocation.
    pub fn rhs_at(&self, y: &[u32]) -> f64 {
        let mut rhs = self.constant;
        for t in &self.z_terms {
            if y[t.object as usize] == t.level {
                rhs += t.coeff;
            }
        }
        rhs
    }

    /// The bound's value at a (possibly fractional) indicator assignment.
    pub fn rhs_at_fractional<F: Fn(u32, u32) -> f64>(&self, z_value: F) -> f64 {
        let mut rhs = self.constant;
        for t in &self.z_terms {
            rhs += t.coeff * z_value(t.object, t.level);
        }
        rhs
    }

    /// Structural fingerprint used to drop duplicate cuts from the pool.
    pub fn dedup_key(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        let mut eat = |v: u64| {
            h ^= v;
            h = h.wrapping_mul(0x1000_0000_01b3);
        };
        eat(u64::from(self.measure.scenario));
        eat(u64::from(self.measure.key));
        eat(self.constant.to_bits());
        for t in &self.z_terms {
            eat(u64::from(t.object));
            eat(u64::from(t.level));
            eat(t.coeff.to_bits());
        }
        h
    }
}

/// No-good cut: worth `fbar` at `ybar` exactly, nothing anywhere else.
pub fn no_good_cut(measure: MeasureId, ybar: &[u32], domain: LevelDomain, fbar: f64) -> LinearCut {
    let mut z_terms = Vec::new();
    for (j, &yj) in ybar.iter().enumerate() {
        for level in domain.levels() {
            if level != yj {
                z_terms.push(ZTerm {
                    object: j as u32,
                    level,
                    coeff: -fbar,
                });
            }
        }
    }
    LinearCut {
        measure,
        constant: fbar,
        z_terms,
        origin: CutOrigin::Benders(CutKind::NoGood),
    }
}

/// Monotonic cut: deactivated only by raising some level above `ybar`.
pub fn monotonic_cut(
    measure: MeasureId,
    ybar: &[u32],
    domain: LevelDomain,
    fbar: f64,
) -> LinearCut {
    let mut z_terms = Vec::new();
    for (j, &yj) in ybar.iter().enumerate() {
        for level in (yj + 1)..=domain.max_level {
            z_terms.push(ZTerm {
                object: j as u32,
                level,
                coeff: -fbar,
            });
        }
    }
    LinearCut {
        measure,
        constant: fbar,
        z_terms,
        origin: CutOrigin::Benders(CutKind::Monotonic),
    }
}

/// Local cut: only raises inside the certified `window` deactivate the
/// bound. The caller must have certified that maxing out every object
/// outside the window leaves the measure at `fbar`.
pub fn local_cut(
    measure: MeasureId,
    ybar: &[u32],
    window: &[usize],
    domain: LevelDomain,
    fbar: f64,
) -> LinearCut {
    let mut z_terms = Vec::new();
    for &j in window {
        for level in (ybar[j] + 1)..=domain.max_level {
            z_terms.push(ZTerm {
                object: j as u32,
                level,
                coeff: -fbar,
            });
        }
    }
    LinearCut {
        measure,
        constant: fbar,
        z_terms,
        origin: CutOrigin::Benders(CutKind::Local),
    }
}

/// Strengthened cut. `anchor_values[i]` is the measure's value with the
/// anchor raised to level `ybar[anchor] + 1 + i` and everything else maxed
/// out; `base` is the same with the anchor left at `ybar[anchor]`. Raising
/// the anchor to `xi` costs the bound `fbar - anchor_values[xi]` instead of
/// the full `fbar`; raising any other window object costs `fbar - base`.
///
/// With `clamp` set, penalty coefficients are floored at zero so that
/// measures with (tolerated) monotonicity violations cannot produce a
/// bound above `fbar`.
#[allow(clippy::too_many_arguments)]
pub fn strengthened_cut(
    measure: MeasureId,
    ybar: &[u32],
    window: &[usize],
    anchor: usize,
    domain: LevelDomain,
    fbar: f64,
    anchor_values: &[f64],
    base: f64,
    clamp: bool,
) -> LinearCut {
    debug_assert!(window.contains(&anchor));
    debug_assert_eq!(
        anchor_values.len(),
        (domain.max_level - ybar[anchor]) as usize
    );
    let floor = |penalty: f64| if clamp { penalty.max(0.0) } else { penalty };
    let mut z_terms = Vec::new();
    for (i, &value) in anchor_values.iter().enumerate() {
        let level = ybar[anchor] + 1 + i as u32;
        z_terms.push(ZTerm {
            object: anchor as u32,
            level,
            coeff: -floor(fbar - value),
        });
    }
    let off_anchor_penalty = floor(fbar - base);
    for &j in window {
        if j == anchor {
            continue;
        }
        for level in (ybar[j] + 1)..=domain.max_level {
            z_terms.push(ZTerm {
                object: j as u32,
                level,
                coeff: -off_anchor_penalty,
            });
        }
    }
    LinearCut {
        measure,
        constant: fbar,
        z_terms,
        origin: CutOrigin::Benders(CutKind::Strengthened),
    }
}

/// One-dimensional initial cut: `theta >= values[i] * z[anchor][m + i]`
/// summed over the anchor's levels, where `values[i]` is the measure with
/// the anchor at level `m + i` and everything else maxed out.
pub fn initial_1d(
    measure: MeasureId,
    anchor: usize,
    domain: LevelDomain,
    values: &[f64],
) -> LinearCut {
    debug_assert_eq!(values.len(), domain.size());
    let z_terms = domain
        .levels()
        .zip(values)
        .map(|(level, &v)| ZTerm {
            object: anchor as u32,
            level,
            coeff: v,
        })
        .collect();
    LinearCut {
        measure,
        constant: 0.0,
        z_terms,
        origin: CutOrigin::Initial,
    }
}

/// Two-dimensional initial cuts from a table `w[i1][i2]` of measure values
/// with the anchor at level `m + i1`, the partner at `m + i2`, and all
/// other objects maxed out.
///
/// For each fixed anchor level the cut reads the partner's column exactly
/// and compensates higher anchor levels by the worst-case overestimate
/// (one scalar per higher level); symmetrically for each fixed partner
/// level. The max-level member of each family carries no compensation and
/// is precisely the one-dimensional cut in the other object.
pub fn initial_2d_pair(
    measure: MeasureId,
    anchor: usize,
    partner: usize,
    domain: LevelDomain,
    w: &[Vec<f64>],
    clamp: bool,
) -> Vec<LinearCut> {
    let size = domain.size();
    debug_assert_eq!(w.len(), size);
    debug_assert!(w.iter().all(|row| row.len() == size));
    let floor = |c: f64| if clamp { c.max(0.0) } else { c };
    let mut cuts = Vec::with_capacity(2 * size);

    // One cut per anchor level: exact in the partner, compensated upward
    // in the anchor.
    for (i1, _level1) in domain.levels().enumerate() {
        let mut z_terms: Vec<ZTerm> = domain
            .levels()
            .enumerate()
            .map(|(i2, level2)| ZTerm {
                object: partner as u32,
                level: level2,
                coeff: w[i1][i2],
            })
            .collect();
        for (ip, levelp) in domain.levels().enumerate().skip(i1 + 1) {
            let overestimate = (0..size)
                .map(|i2| w[i1][i2] - w[ip][i2])
                .fold(f64::NEG_INFINITY, f64::max);
            z_terms.push(ZTerm {
                object: anchor as u32,
                level: levelp,
                coeff: -floor(overestimate),
            });
        }
        cuts.push(LinearCut {
            measure,
            constant: 0.0,
            z_terms,
            origin: CutOrigin::Initial,
        });
    }

    // One cut per partner level: exact in the anchor, compensated upward
    // in the partner.
    for (i2, _level2) in domain.levels().enumerate() {
        let mut z_terms: Vec<ZTerm> = domain
            .levels()
            .enumerate()
            .map(|(i1, level1)| ZTerm {
                object: anchor as u32,
                level: level1,
                coeff: w[i1][i2],
            })
            .collect();
        for (ip, levelp) in domain.levels().enumerate().skip(i2 + 1) {
            let overestimate = (0..size)
                .map(|i1| w[i1][i2] - w[i1][ip])
                .fold(f64::NEG_INFINITY, f64::max);
            z_terms.push(ZTerm {
                object: partner as u32,
                level: levelp,
                coeff: -floor(overestimate),
            });
        }
        cuts.push(LinearCut {
            measure,
            constant: 0.0,
            z_terms,
            origin: CutOrigin::Initial,
        });
    }
    cuts
}

/// Result of a window search: the certified window plus a flag marking
/// that certification failed and the search fell back to the full object
/// set (possible only for measures with tolerated monotonicity
/// violations).
pub struct WindowResult {
    pub window: Vec<usize>,
    pub fell_back: bool,
}

/// Finds a contiguous window of objects around `anchor` outside of which
/// the measure provably does not depend on the allocation.
///
/// `eval(window)` must return the exact measure value of the relaxation
/// that keeps `ybar` on the window and maxes out everything else. The
/// window grows one object on each side until the relaxation matches
/// `fbar`, then each end is shrunk back while the match holds. The anchor
/// itself is never removed.
pub fn find_window_interval(
    anchor: usize,
    objects: usize,
    fbar: i64,
    eval: &mut dyn FnMut(&[usize]) -> i64,
) -> WindowResult {
    debug_assert!(anchor < objects);
    let mut lo = anchor;
    let mut hi = anchor;
    let window = |lo: usize, hi: usize| (lo..=hi).collect::<Vec<_>>();
    while eval(&window(lo, hi)) < fbar && (lo > 0 || hi + 1 < objects) {
        lo = lo.saturating_sub(1);
        hi = (hi + 1).min(objects - 1);
    }
    if eval(&window(lo, hi)) != fbar {
        // A violation of monotonicity pushed the relaxation above fbar;
        // the identity window is always certified.
        return WindowResult {
            window: window(0, objects - 1),
            fell_back: true,
        };
    }
    while lo < anchor && eval(&window(lo + 1, hi)) == fbar {
        lo += 1;
    }
    while hi > anchor && eval(&window(lo, hi - 1)) == fbar {
        hi -= 1;
    }
    WindowResult {
        window: window(lo, hi),
        fell_back: false,
    }
}

/// Finds a window by following preference lists instead of adjacency.
///
/// `expansions[i]` holds the objects to add in round `i` (for dispatch
/// measures: the `(i + 2)`-nd preference stations of the demand points
/// anchored at this measure's station). If the rounds run out before the
/// relaxation matches `fbar`, the window jumps to the full object set.
/// Removal then retries members in reverse insertion order, keeping the
/// anchor.
pub fn find_window_preferences(
    anchor: usize,
    objects: usize,
    expansions: &[Vec<usize>],
    fbar: i64,
    eval: &mut dyn FnMut(&[usize]) -> i64,
) -> WindowResult {
    let mut members: Vec<usize> = vec![anchor];
    let mut round = 0usize;
    let sorted = |members: &[usize]| {
        let mut v = members.to_vec();
        v.sort_unstable();
        v
    };
    while eval(&sorted(&members)) < fbar {
        if round < expansions.len() {
            for &cand in &expansions[round] {
                if !members.contains(&cand) {
                    members.push(cand);
                }
            }
            round += 1;
        } else if members.len() < objects {
            for cand in 0..objects {
                if !members.contains(&cand) {
                    members.push(cand);
                }
            }
        } else {
            break;
        }
    }
    if eval(&sorted(&members)) != fbar {
        return WindowResult {
            window: (0..objects).collect(),
            fell_back: true,
        };
    }
    // Retry members newest-first; the anchor sits at index 0 and is kept.
    let mut idx = members.len();
    while idx > 1 {
        idx -= 1;
        let removed = members.remove(idx);
        if eval(&sorted(&members)) != fbar {
            members.insert(idx, removed);
        }
    }
    WindowResult {
        window: sorted(&members),
        fell_back: false,
    }
}

/// Exhaustive census of a cut over the full allocation box: at how many
/// allocations is the bound strictly positive (`nontrivial`), and at how
/// many does it reach the incumbent value `fbar` exactly (`tight`).
pub fn cut_census(cut: &LinearCut, domain: LevelDomain, objects: usize, fbar: f64) -> CutCensus {
    let mut census = CutCensus {
        allocations: 0,
        nontrivial: 0,
        tight: 0,
    };
    let tol = 1e-9 * fbar.abs().max(1.0);
    let mut y = vec![domain.min_level; objects];
    loop {
        census.allocations += 1;
        let rhs = cut.rhs_at(&y);
        if rhs > tol {
            census.nontrivial += 1;
        }
        if (rhs - fbar).abs() <= tol {
            census.tight += 1;
        }
        // Odometer step through the box.
        let mut j = 0;
        loop {
            if j == objects {
                return census;
            }
            if y[j] < domain.max_level {
                y[j] += 1;
                break;
            }
            y[j] = domain.min_level;
            j += 1;
        }
    }
}

#[derive(Debug, PartialEq, Eq)]
pub struct CutCensus {
    pub allocations: u64,
    pub nontrivial: u64,
    pub tight: u64,
}
