//! The master problem: a linear program over resource levels `y`,
//! level indicators `z`, and per-measure estimators `theta`.
//!
//! For each object `j` the indicators satisfy `sum_xi z[j][xi] = 1` and
//! `sum_xi xi * z[j][xi] = y[j]`, so at integer points exactly one
//! indicator per object is lit and optimality cuts can price deviations
//! from an incumbent level by level. Applications append their own rows
//! (service-level covers, budgets, shift coverage, fleet size) through
//! [`MasterModel::add_row`] and may add auxiliary columns.
//!
//! In risk mode the objective mixes the scenario mean with the
//! conditional value-at-risk of the per-scenario cost, modeled by one
//! threshold variable, one excess variable per scenario, and one tail
//! equality row.

use branchsim_lp::{Col, LpResult, NumericalFailure, Row, Simplex, INF};

use crate::cuts::LinearCut;
use crate::instance::{LevelDomain, MeasureId, ObjectiveMode, ObjectiveSpec};

/// Columns added by risk mode.
pub struct CvarVars {
    /// The tail functional's value (enters the objective).
    pub tail_value: Col,
    /// The variational threshold.
    pub threshold: Col,
    /// Per-scenario excess above the threshold.
    pub excess: Vec<Col>,
}

/// The master LP plus the variable maps the search needs.
pub struct MasterModel {
    pub lp: Simplex,
    pub domain: LevelDomain,
    pub objects: usize,
    pub scenarios: usize,
    pub measures_per_scenario: usize,
    y_cols: Vec<Col>,
    z_cols: Vec<Vec<Col>>,
    theta_cols: Vec<Col>,
    pub cvar: Option<CvarVars>,
}

impl MasterModel {
    /// Lays out variables, objective, and linking rows. Application rows
    /// come afterwards via [`MasterModel::add_row`].
    pub fn build(
        objects: usize,
        domain: LevelDomain,
        scenarios: usize,
        measures_per_scenario: usize,
        objective: &ObjectiveSpec,
    ) -> Self {
        assert_eq!(objective.level_costs.len(), objects);
        assert_eq!(objective.scenarios, scenarios);
        let mut lp = Simplex::new();
        let s = scenarios as f64;

        let y_cols: Vec<Col> = (0..objects)
            .map(|j| {
                lp.add_col(
                    objective.level_costs[j],
                    f64::from(domain.min_level),
                    f64::from(domain.max_level),
                )
            })
            .collect();
        let z_cols: Vec<Vec<Col>> = (0..objects)
            .map(|_| domain.levels().map(|_| lp.add_col(0.0, 0.0, 1.0)).collect())
            .collect();

        // Weight carried by each estimator in the objective's mean part.
        let mean_part = match objective.mode {
            ObjectiveMode::Mean => objective.measure_weight / s,
            ObjectiveMode::Cvar { mean_weight, .. } => {
                mean_weight * objective.measure_weight / s
            }
        };
        let theta_cols: Vec<Col> = (0..scenarios * measures_per_scenario)
            .map(|_| lp.add_col(mean_part, 0.0, INF))
            .collect();

        for j in 0..objects {
            let ones: Vec<(Col, f64)> = z_cols[j].iter().map(|&c| (c, 1.0)).collect();
            lp.add_row(&ones, 1.0, 1.0);
            let mut weighted: Vec<(Col, f64)> = domain
                .levels()
                .zip(&z_cols[j])
                .map(|(level, &c)| (c, f64::from(level)))
                .collect();
            weighted.push((y_cols[j], -1.0));
            lp.add_row(&weighted, 0.0, 0.0);
        }

        let cvar = if let ObjectiveMode::Cvar {
            tail_weight, beta, ..
        } = objective.mode
        {
            let tail_value = lp.add_col(tail_weight, -INF, INF);
            let threshold = lp.add_col(0.0, -INF, INF);
            let excess: Vec<Col> = (0..scenarios).map(|_| lp.add_col(0.0, 0.0, INF)).collect();
            // excess_s + threshold - scenario cost >= 0
            for (sc, &u) in excess.iter().enumerate() {
                let mut terms: Vec<(Col, f64)> = vec![(u, 1.0), (threshold, 1.0)];
                for k in 0..measures_per_scenario {
                    terms.push((
                        theta_cols[sc * measures_per_scenario + k],
                        -objective.measure_weight,
                    ));
                }
                lp.add_row(&terms, 0.0, INF);
            }
            // tail_value = threshold + sum excess / (S (1 - beta))
            let mut terms: Vec<(Col, f64)> = vec![(tail_value, 1.0), (threshold, -1.0)];
            let coeff = -1.0 / (s * (1.0 - beta));
            for &u in &excess {
                terms.push((u, coeff));
            }
            lp.add_row(&terms, 0.0, 0.0);
            Some(CvarVars {
                tail_value,
                threshold,
                excess,
            })
        } else {
            None
        };

        MasterModel {
            lp,
            domain,
            objects,
            scenarios,
            measures_per_scenario,
            y_cols,
            z_cols,
            theta_cols,
            cvar,
        }
    }

    pub fn y_col(&self, j: usize) -> Col {
        self.y_cols[j]
    }

    pub fn z_col(&self, object: usize, level: u32) -> Col {
        self.z_cols[object][(level - self.domain.min_level) as usize]
    }

    pub fn theta_col(&self, index: usize) -> Col {
        self.theta_cols[index]
    }

    pub fn measure_index(&self, m: MeasureId) -> usize {
        m.scenario as usize * self.measures_per_scenario + m.key as usize
    }

    /// Appends an application row.
    pub fn add_row(&mut self, terms: &[(Col, f64)], lo: f64, hi: f64) -> Row {
        self.lp.add_row(terms, lo, hi)
    }

    /// Appends an auxiliary column (e.g. shift counts).
    pub fn add_aux_col(&mut self, obj: f64, lb: f64, ub: f64) -> Col {
        self.lp.add_col(obj, lb, ub)
    }

    /// Restricts object `j` to levels in `[lo, hi]`: tightens the level
    /// variable's bounds and shuts the indicators outside the range.
    pub fn apply_object_bounds(&mut self, j: usize, lo: u32, hi: u32) {
        self.lp
            .set_col_bounds(self.y_cols[j], f64::from(lo), f64::from(hi));
        for (offset, level) in self.domain.levels().enumerate() {
            let ub = if (lo..=hi).contains(&level) { 1.0 } else { 0.0 };
            self.lp.set_col_bounds(self.z_cols[j][offset], 0.0, ub);
        }
    }

    /// Installs a cut as the LP row
    /// `theta_k - sum coeff * z >= constant`.
    pub fn add_cut_row(&mut self, cut: &LinearCut) -> Row {
        let theta = self.theta_cols[self.measure_index(cut.measure)];
        let mut terms: Vec<(Col, f64)> = Vec::with_capacity(cut.z_terms.len() + 1);
        terms.push((theta, 1.0));
        for t in &cut.z_terms {
            terms.push((self.z_col(t.object as usize, t.level), -t.coeff));
        }
        self.lp.add_row(&terms, cut.constant, INF)
    }

    pub fn solve(&mut self) -> Result<LpResult, NumericalFailure> {
        self.lp.solve()
    }

    pub fn y_value(&self, j: usize) -> f64 {
        self.lp.col_value(self.y_cols[j])
    }

    pub fn y_values(&self) -> Vec<f64> {
        (0..self.objects).map(|j| self.y_value(j)).collect()
    }

    pub fn z_value(&self, object: usize, level: u32) -> f64 {
        self.lp.col_value(self.z_col(object, level))
    }

    pub fn theta_values(&self) -> Vec<f64> {
        self.theta_cols
            .iter()
            .map(|&c| self.lp.col_value(c))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cuts::monotonic_cut;
    use crate::instance::ObjectiveSpec;
    use branchsim_lp::LpStatus;

    fn mean_spec(objects: usize, scenarios: usize) -> ObjectiveSpec {
        ObjectiveSpec {
            level_costs: vec![2.0; objects],
            measure_weight: 1.0,
            scenarios,
            mode: ObjectiveMode::Mean,
        }
    }

    #[test]
    fn layout_matches_the_expected_counts() {
        // Three objects over levels {0, 1, 2}, one scenario with two
        // measures: 3 y + 9 z + 2 theta columns and 6 linking rows.
        let domain = LevelDomain::new(0, 2).unwrap();
        let m = MasterModel::build(3, domain, 1, 2, &mean_spec(3, 1));
        assert_eq!(m.lp.num_cols(), 3 + 9 + 2);
        assert_eq!(m.lp.num_rows(), 6);
    }

    #[test]
    fn risk_mode_adds_tail_variables_and_rows() {
        let domain = LevelDomain::new(0, 2).unwrap();
        let spec = ObjectiveSpec {
            mode: ObjectiveMode::Cvar {
                mean_weight: 0.5,
                tail_weight: 0.5,
                beta: 0.8,
            },
            ..mean_spec(2, 3)
        };
        let mean = MasterModel::build(2, domain, 3, 2, &mean_spec(2, 3));
        let risk = MasterModel::build(2, domain, 3, 2, &spec);
        // One tail value, one threshold, |S| excess columns; |S| excess
        // rows plus the tail equality.
        assert_eq!(risk.lp.num_cols() - mean.lp.num_cols(), 2 + 3);
        assert_eq!(risk.lp.num_rows() - mean.lp.num_rows(), 3 + 1);
        assert!(risk.cvar.is_some());
    }

    #[test]
    fn relaxation_sits_at_minimum_levels_without_cuts() {
        let domain = LevelDomain::new(1, 3).unwrap();
        let mut m = MasterModel::build(2, domain, 1, 1, &mean_spec(2, 1));
        let res = m.solve().unwrap();
        assert_eq!(res.status, LpStatus::Optimal);
        assert_eq!(m.y_values(), vec![1.0, 1.0]);
        // Costs 2 per unit level.
        assert!((res.objective - 4.0).abs() < 1e-9);
        // The level-1 indicators carry the mass.
        assert!((m.z_value(0, 1) - 1.0).abs() < 1e-9);
        assert!((m.z_value(1, 3) - 0.0).abs() < 1e-9);
    }

    #[test]
    fn bounds_tighten_levels_and_indicators() {
        let domain = LevelDomain::new(0, 3).unwrap();
        let mut m = MasterModel::build(1, domain, 1, 1, &mean_spec(1, 1));
        m.apply_object_bounds(0, 2, 3);
        let res = m.solve().unwrap();
        assert_eq!(res.status, LpStatus::Optimal);
        assert_eq!(m.y_value(0), 2.0);
        assert!((m.z_value(0, 2) - 1.0).abs() < 1e-9);
        // Indicators outside the range are shut.
        assert_eq!(m.z_value(0, 0), 0.0);
        m.apply_object_bounds(0, 0, 3);
        let res = m.solve().unwrap();
        assert_eq!(res.status, LpStatus::Optimal);
        assert_eq!(m.y_value(0), 0.0);
    }

    #[test]
    fn cut_rows_lift_the_estimator() {
        // One object on {0, 1, 2}; a monotonic cut worth 6 at level 1
        // forces theta = 6 when the object is held at or below 1, and
        // the solver escapes it by raising the level when that is cheaper.
        let domain = LevelDomain::new(0, 2).unwrap();
        let mut m = MasterModel::build(1, domain, 1, 1, &mean_spec(1, 1));
        let cut = monotonic_cut(MeasureId { scenario: 0, key: 0 }, &[1], domain, 6.0);
        m.add_cut_row(&cut);
        let res = m.solve().unwrap();
        assert_eq!(res.status, LpStatus::Optimal);
        // Raising y to 2 costs 4 and zeroes the bound; staying at 0 costs
        // theta = 6. The relaxation picks the cheaper escape.
        assert!((res.objective - 4.0).abs() < 1e-9, "got {}", res.objective);
        assert!((m.y_value(0) - 2.0).abs() < 1e-9);
    }
}
