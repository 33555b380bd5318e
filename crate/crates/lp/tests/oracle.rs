//! Randomized cross-check of the simplex against brute-force vertex
//! enumeration.
//!
//! Every instance here has finite bounds on all variables, so the feasible
//! set is a polytope: if it is nonempty, an optimal point lies at a vertex,
//! and a vertex is the intersection of `n` active hyperplanes drawn from the
//! row bounds and the variable bounds. Enumerating all such intersections is
//! exponential but trivial at n <= 3, which is all the oracle needs.

use branchsim_lp::{Col, LpStatus, Simplex, INF};

/// splitmix64; deterministic test-case generator.
struct Rng(u64);

impl Rng {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// uniform integer in [lo, hi]
    fn int(&mut self, lo: i64, hi: i64) -> i64 {
        lo + (self.next() % (hi - lo + 1) as u64) as i64
    }
}

#[derive(Clone)]
struct DenseLp {
    c: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    rows: Vec<(Vec<f64>, f64, f64)>, // (coeffs, lo, hi)
}

impl DenseLp {
    fn n(&self) -> usize {
        self.c.len()
    }

    fn feasible(&self, x: &[f64]) -> bool {
        const TOL: f64 = 1e-6;
        for j in 0..self.n() {
            if x[j] < self.lb[j] - TOL || x[j] > self.ub[j] + TOL {
                return false;
            }
        }
        for (a, lo, hi) in &self.rows {
            let v: f64 = a.iter().zip(x).map(|(ai, xi)| ai * xi).sum();
            if v < lo - TOL || v > hi + TOL {
                return false;
            }
        }
        true
    }

    fn objective(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(ci, xi)| ci * xi).sum()
    }
}

/// Gaussian elimination with partial pivoting; None if (near-)singular.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))?;
        if a[piv][k].abs() < 1e-9 {
            return None;
        }
        a.swap(k, piv);
        b.swap(k, piv);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            if f != 0.0 {
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let mut acc = b[k];
        for j in k + 1..n {
            acc -= a[k][j] * x[j];
        }
        x[k] = acc / a[k][k];
    }
    Some(x)
}

/// Brute-force optimum: enumerate all choices of n active hyperplanes.
/// Returns None when no feasible vertex exists (⇔ infeasible here).
fn brute_force(lp: &DenseLp) -> Option<f64> {
    let n = lp.n();
    // Hyperplanes as (normal, offset): row at lo / hi, variable at lb / ub.
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for (a, lo, hi) in &lp.rows {
        for v in [lo, hi] {
            if v.is_finite() {
                planes.push((a.clone(), *v));
            }
        }
    }
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e.clone(), lp.lb[j]));
        planes.push((e, lp.ub[j]));
    }

    let mut best: Option<f64> = None;
    let mut idx = vec![0usize; n];
    // Lexicographic combinations of n distinct plane indices.
    fn combos(
        planes: &[(Vec<f64>, f64)],
        lp: &DenseLp,
        idx: &mut Vec<usize>,
        depth: usize,
        start: usize,
        best: &mut Option<f64>,
    ) {
        let n = lp.n();
        if depth == n {
            let a: Vec<Vec<f64>> = idx.iter().map(|&i| planes[i].0.clone()).collect();
            let b: Vec<f64> = idx.iter().map(|&i| planes[i].1).collect();
            if let Some(x) = solve_square(a, b) {
                if lp.feasible(&x) {
                    let obj = lp.objective(&x);
                    if best.map_or(true, |v| obj < v) {
                        *best = Some(obj);
                    }
                }
            }
            return;
        }
        for i in start..planes.len() {
            idx[depth] = i;
            combos(planes, lp, idx, depth + 1, i + 1, best);
        }
    }
    combos(&planes, lp, &mut idx, 0, 0, &mut best);
    best
}

fn random_lp(rng: &mut Rng, n: usize, m: usize) -> DenseLp {
    let c: Vec<f64> = (0..n).map(|_| rng.int(-4, 4) as f64).collect();
    let lb: Vec<f64> = (0..n).map(|_| rng.int(-3, 1) as f64).collect();
    let ub: Vec<f64> = lb.iter().map(|&l| l + rng.int(0, 5) as f64).collect();
    let mut rows = Vec::new();
    for _ in 0..m {
        let a: Vec<f64> = (0..n).map(|_| rng.int(-3, 3) as f64).collect();
        if a.iter().all(|&v| v == 0.0) {
            continue;
        }
        let (lo, hi) = match rng.int(0, 3) {
            0 => (-INF, rng.int(-4, 8) as f64),
            1 => (rng.int(-8, 4) as f64, INF),
            2 => {
                let v = rng.int(-4, 4) as f64;
                (v, v)
            }
            _ => {
                let lo = rng.int(-6, 2) as f64;
                (lo, lo + rng.int(0, 6) as f64)
            }
        };
        rows.push((a, lo, hi));
    }
    DenseLp { c, lb, ub, rows }
}

fn build(lp: &DenseLp) -> (Simplex, Vec<Col>) {
    let mut s = Simplex::new();
    let cols: Vec<Col> = (0..lp.n())
        .map(|j| s.add_col(lp.c[j], lp.lb[j], lp.ub[j]))
        .collect();
    for (a, lo, hi) in &lp.rows {
        let terms: Vec<(Col, f64)> = cols
            .iter()
            .zip(a)
            .filter(|(_, &ai)| ai != 0.0)
            .map(|(&c, &ai)| (c, ai))
            .collect();
        if !terms.is_empty() {
            s.add_row(&terms, *lo, *hi);
        }
    }
    (s, cols)
}

fn check_against_oracle(lp: &DenseLp, s: &mut Simplex, label: &str) {
    let expect = brute_force(lp);
    let got = s.solve().unwrap_or_else(|e| panic!("{label}: {e}"));
    match expect {
        None => assert_eq!(
            got.status,
            LpStatus::Infeasible,
            "{label}: oracle says infeasible"
        ),
        Some(opt) => {
            assert_eq!(
                got.status,
                LpStatus::Optimal,
                "{label}: oracle optimum {opt}"
            );
            assert!(
                (got.objective - opt).abs() <= 1e-5 * (1.0 + opt.abs()),
                "{label}: oracle {opt}, simplex {}",
                got.objective
            );
        }
    }
}

#[test]
fn random_lps_match_vertex_enumeration() {
    let mut rng = Rng(0x5eed_0001);
    let mut optimal = 0;
    let mut infeasible = 0;
    for case in 0..300 {
        let n = rng.int(2, 3) as usize;
        let m = rng.int(1, 3) as usize;
        let lp = random_lp(&mut rng, n, m);
        let (mut s, _) = build(&lp);
        let expect = brute_force(&lp);
        match expect {
            Some(_) => optimal += 1,
            None => infeasible += 1,
        }
        check_against_oracle(&lp, &mut s, &format!("case {case}"));
    }
    // Guard against a degenerate generator that only ever produces one kind.
    assert!(optimal >= 100, "only {optimal} optimal cases generated");
    assert!(infeasible >= 20, "only {infeasible} infeasible cases");
}

#[test]
fn warm_restart_after_bound_changes_matches_oracle() {
    let mut rng = Rng(0x5eed_0002);
    for case in 0..150 {
        let n = 3;
        let m = rng.int(1, 3) as usize;
        let mut lp = random_lp(&mut rng, n, m);
        let (mut s, cols) = build(&lp);
        check_against_oracle(&lp, &mut s, &format!("case {case} initial"));
        // Three rounds of bound tightening / relaxing on the same instance,
        // re-solving warm each time.
        for round in 0..3 {
            let j = rng.int(0, n as i64 - 1) as usize;
            let lb = rng.int(-3, 1) as f64;
            let ub = lb + rng.int(0, 5) as f64;
            lp.lb[j] = lb;
            lp.ub[j] = ub;
            s.set_col_bounds(cols[j], lb, ub);
            check_against_oracle(&lp, &mut s, &format!("case {case} round {round}"));
        }
    }
}

#[test]
fn row_addition_and_removal_match_oracle() {
    let mut rng = Rng(0x5eed_0003);
    for case in 0..150 {
        let n = rng.int(2, 3) as usize;
        let mut lp = random_lp(&mut rng, n, 2);
        let (mut s, cols) = build(&lp);
        check_against_oracle(&lp, &mut s, &format!("case {case} base"));

        // Append a random inequality, re-solve warm.
        let a: Vec<f64> = (0..n).map(|_| rng.int(-3, 3) as f64).collect();
        if a.iter().all(|&v| v == 0.0) {
            continue;
        }
        let hi = rng.int(-2, 8) as f64;
        let terms: Vec<(Col, f64)> = cols
            .iter()
            .zip(&a)
            .filter(|(_, &ai)| ai != 0.0)
            .map(|(&c, &ai)| (c, ai))
            .collect();
        let row = s.add_row(&terms, -INF, hi);
        lp.rows.push((a, -INF, hi));
        check_against_oracle(&lp, &mut s, &format!("case {case} added"));

        // Drop it again when the engine's invariant allows (slack basic);
        // the optimum must then return to the base value.
        if s.row_is_loose(row) {
            let removed = s.remove_slack_rows(&[row]);
            assert_eq!(removed, vec![row]);
            lp.rows.pop();
            check_against_oracle(&lp, &mut s, &format!("case {case} removed"));
        }
    }
}
