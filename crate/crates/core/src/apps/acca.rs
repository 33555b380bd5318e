//! Airport check-in counter allocation.
//!
//! Periods are check-in slots of `period_minutes` each; the level of a
//! period is its number of open counters. Passengers of each flight
//! arrive over a fixed window of periods before departure and queue at a
//! common FCFS desk pool; the per-period measures are total passenger
//! delays. Passengers not served by the end of the horizon pay a fixed
//! penalty attributed to their arrival period.
//!
//! Two families of service-level rows keep the master honest: forward
//! capacity (enough open counter time after `t` to absorb everyone who
//! arrives at or after `t`) and deadline capacity (enough open counter
//! time before `t` to clear every flight whose window closed by `t`).

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::engine::{SimProblem, ValidityMode, WindowPlan};
use crate::instance::{LevelDomain, ObjectiveMode, ObjectiveSpec};
use crate::master::MasterModel;
use crate::queue::{Boundary, Job, QueueScenario};
use crate::rng::Stream;
use crate::MICROS_PER_MINUTE;

use branchsim_lp::{LpStatus, Simplex, INF};

/// One flight: how many passengers it brings and when its arrival window
/// opens and closes (period indices, 0-based; the deadline period is the
/// last period of the window).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlightSpec {
    pub passengers: u32,
    pub start_period: u32,
    pub deadline_period: u32,
}

/// Generation parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccaParams {
    pub periods: usize,
    pub period_minutes: i64,
    pub max_counters: u32,
    /// Cost of one open counter for one period.
    pub counter_cost: f64,
    /// Queueing cost of one period of passenger delay.
    pub queue_cost: f64,
    /// Fraction of a flight's passengers arriving in each window period
    /// (must sum to one; its length sets the window width).
    pub arrival_profile: Vec<f64>,
    pub service_mean_minutes: f64,
    /// Service times are rounded to multiples of this many micro-units.
    pub service_quantum: i64,
    pub flights: Vec<FlightSpec>,
    pub scenarios: usize,
    pub seed: u64,
}

impl AccaParams {
    /// The benchmark configuration: 21 slots of 30 minutes, up to 20
    /// counters, ten flights totalling 2160 passengers.
    pub fn standard(seed: u64, scenarios: usize, queue_cost: f64) -> Self {
        let passengers = [150u32, 210, 240, 180, 270, 150, 210, 300, 180, 270];
        let starts = [0u32, 2, 4, 4, 6, 8, 10, 12, 12, 14];
        let window = 7u32;
        let flights = passengers
            .iter()
            .zip(starts)
            .map(|(&passengers, start_period)| FlightSpec {
                passengers,
                start_period,
                deadline_period: start_period + window - 1,
            })
            .collect();
        AccaParams {
            periods: 21,
            period_minutes: 30,
            max_counters: 20,
            counter_cost: 40.0,
            queue_cost,
            arrival_profile: vec![0.05, 0.10, 0.20, 0.30, 0.20, 0.15, 0.0],
            service_mean_minutes: 2.0,
            service_quantum: 1,
            flights,
            scenarios,
            seed,
        }
    }

    /// A small configuration for enumerable tests: two flights, a short
    /// two-period arrival window, coarse 0.1-minute service times.
    pub fn toy(seed: u64, scenarios: usize, periods: usize, max_counters: u32) -> Self {
        assert!(periods >= 3);
        let flights = vec![
            FlightSpec {
                passengers: 5,
                start_period: 0,
                deadline_period: 1,
            },
            FlightSpec {
                passengers: 6,
                start_period: periods as u32 - 2,
                deadline_period: periods as u32 - 1,
            },
        ];
        AccaParams {
            periods,
            period_minutes: 10,
            max_counters,
            counter_cost: 4.0,
            queue_cost: 8.0,
            arrival_profile: vec![0.6, 0.4],
            service_mean_minutes: 2.0,
            service_quantum: 100,
            flights,
            scenarios,
            seed,
        }
    }

    fn period_micro(&self) -> i64 {
        self.period_minutes * MICROS_PER_MINUTE
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        if self.periods == 0 || self.period_minutes <= 0 || self.service_quantum <= 0 {
            return Err("horizon layout must be positive".into());
        }
        let profile_sum: f64 = self.arrival_profile.iter().sum();
        if self.arrival_profile.is_empty() || (profile_sum - 1.0).abs() > 1e-9 {
            return Err("arrival profile must sum to one".into());
        }
        if self.arrival_profile.iter().any(|&p| p < 0.0) {
            return Err("arrival profile fractions must be non-negative".into());
        }
        let window = self.arrival_profile.len() as u32;
        for flight in &self.flights {
            if flight.deadline_period != flight.start_period + window - 1 {
                return Err("flight deadline must close its arrival window".into());
            }
            if flight.deadline_period as usize >= self.periods {
                return Err("flight window extends past the horizon".into());
            }
        }
        Ok(())
    }
}

/// A generated instance: the scenarios plus the aggregate service-mass
/// data (per-flight totals and both service-level bound vectors, all in
/// micro-units).
#[derive(Clone, Debug, PartialEq)]
pub struct AccaInstance {
    pub params: AccaParams,
    pub scenarios: Vec<QueueScenario>,
    /// `flight_service[s][f]` = total service time flight `f`'s
    /// passengers need in scenario `s`.
    pub flight_service: Vec<Vec<i64>>,
    /// Forward bound: service mass arriving at or after each period
    /// (worst scenario).
    pub service_forward: Vec<i64>,
    /// Deadline bound: service mass of flights whose window closed at or
    /// before each period (worst scenario).
    pub service_deadline: Vec<i64>,
}

/// Builds one scenario's jobs; returns them with per-flight service
/// totals.
fn sample_scenario(params: &AccaParams, scenario: usize) -> (Vec<Job>, Vec<i64>) {
    let stream = Stream::new(params.seed, "acca-scenario", scenario as u64);
    let period = params.period_micro();
    let mut jobs = Vec::new();
    let mut per_flight = Vec::with_capacity(params.flights.len());
    let mut passenger: u64 = 0;
    for flight in &params.flights {
        let mut total = 0i64;
        for _ in 0..flight.passengers {
            let counter = passenger * 4;
            passenger += 1;
            let window = stream.weighted_at(counter, &params.arrival_profile) as i64;
            // Arrival minute within the slot: [0, L), so the release
            // stays strictly inside its period under the simulator's
            // boundary rule (a boundary belongs to the later period).
            let offset = stream.int_at(counter + 1, 0, params.period_minutes - 1);
            let release =
                period * (i64::from(flight.start_period) + window) + offset * MICROS_PER_MINUTE;
            let raw = stream.exp_at(counter + 2, params.service_mean_minutes)
                * MICROS_PER_MINUTE as f64;
            let quantum = params.service_quantum;
            let processing =
                ((raw / quantum as f64).round() as i64 * quantum).clamp(0, 1_000_000);
            jobs.push(Job {
                release,
                processing,
            });
            total += processing;
        }
        per_flight.push(total);
    }
    jobs.sort_by_key(|job| job.release);
    (jobs, per_flight)
}

/// Generates an instance, computes its service-level bounds, and verifies
/// that some allocation can satisfy them.
pub fn generate(params: AccaParams) -> Result<AccaInstance, String> {
    params.validate()?;
    let period = params.period_micro();
    let mut scenarios = Vec::with_capacity(params.scenarios);
    let mut flight_service = Vec::with_capacity(params.scenarios);
    let mut service_forward = vec![0i64; params.periods];
    let mut service_deadline = vec![0i64; params.periods];
    for s in 0..params.scenarios {
        let (jobs, per_flight) = sample_scenario(&params, s);
        // Forward mass: suffix sums of service by release period (same
        // convention as the simulator: floor division by the length).
        let mut by_period = vec![0i64; params.periods];
        for job in &jobs {
            by_period[(job.release / period) as usize] += job.processing;
        }
        let mut suffix = 0i64;
        for t in (0..params.periods).rev() {
            suffix += by_period[t];
            service_forward[t] = service_forward[t].max(suffix);
        }
        // Deadline mass: flights whose window closed by each period.
        for t in 0..params.periods {
            let closed: i64 = params
                .flights
                .iter()
                .zip(&per_flight)
                .filter(|(flight, _)| (flight.deadline_period as usize) <= t)
                .map(|(_, &mass)| mass)
                .sum();
            service_deadline[t] = service_deadline[t].max(closed);
        }
        scenarios.push(QueueScenario {
            jobs,
            periods: params.periods,
            period_len: period,
            boundary: Boundary::Penalty {
                per_unserved: params.periods as i64 * period,
            },
        });
        flight_service.push(per_flight);
    }
    let instance = AccaInstance {
        params,
        scenarios,
        flight_service,
        service_forward,
        service_deadline,
    };
    for scenario in &instance.scenarios {
        scenario.validate().map_err(|e| e.to_string())?;
    }
    if instance.minimal_capacity_allocation().is_none() {
        return Err(format!(
            "instance infeasible: forward service mass {} exceeds total capacity {}",
            instance.service_forward[0],
            instance.params.periods as i64 * instance.params.max_counters as i64 * period
        ));
    }
    Ok(instance)
}

impl AccaInstance {
    pub fn level_domain(&self) -> LevelDomain {
        LevelDomain::new(0, self.params.max_counters).expect("non-empty domain")
    }

    /// The objective: counter costs plus per-minute queueing costs spread
    /// over scenarios.
    pub fn objective(&self, mode: ObjectiveMode) -> ObjectiveSpec {
        ObjectiveSpec {
            level_costs: vec![self.params.counter_cost; self.params.periods],
            measure_weight: self.params.queue_cost / self.params.period_minutes as f64,
            scenarios: self.params.scenarios,
            mode,
        }
    }

    /// Adds both service-level row families to `rows`: forward capacity
    /// `sum_{tau >= t} L*y_tau >= A_t` and deadline capacity
    /// `sum_{tau <= t} L*y_tau >= B_t` (minutes).
    fn service_rows(&self) -> Vec<(Vec<usize>, f64)> {
        let t_count = self.params.periods;
        let mut rows = Vec::with_capacity(2 * t_count);
        for t in 0..t_count {
            rows.push((
                (t..t_count).collect(),
                self.service_forward[t] as f64 / MICROS_PER_MINUTE as f64,
            ));
        }
        for t in 0..t_count {
            rows.push((
                (0..=t).collect(),
                self.service_deadline[t] as f64 / MICROS_PER_MINUTE as f64,
            ));
        }
        rows
    }

    /// Least-total-counters allocation satisfying the service rows with
    /// levels relaxed to be continuous, or None if even that fails.
    /// Rounding a continuous solution up is feasible, so Some means the
    /// integer model is feasible too.
    pub fn minimal_capacity_allocation(&self) -> Option<Vec<f64>> {
        let mut lp = Simplex::new();
        let cols: Vec<_> = (0..self.params.periods)
            .map(|_| lp.add_col(1.0, 0.0, f64::from(self.params.max_counters)))
            .collect();
        let minutes = self.params.period_minutes as f64;
        for (members, rhs) in self.service_rows() {
            let terms: Vec<_> = members.iter().map(|&t| (cols[t], minutes)).collect();
            lp.add_row(&terms, rhs, INF);
        }
        match lp.solve() {
            Ok(result) if result.status == LpStatus::Optimal => {
                Some(cols.iter().map(|&c| lp.col_value(c)).collect())
            }
            _ => None,
        }
    }

    /// Whether `levels` meets both service-capacity row families, in
    /// exact integer arithmetic.
    pub fn satisfies_service_rows(&self, levels: &[u32]) -> bool {
        let period = self.params.period_micro();
        let mut suffix = 0i64;
        let mut forward_ok = true;
        for t in (0..self.params.periods).rev() {
            suffix += period * i64::from(levels[t]);
            forward_ok &= suffix >= self.service_forward[t];
        }
        let mut prefix = 0i64;
        let mut deadline_ok = true;
        for t in 0..self.params.periods {
            prefix += period * i64::from(levels[t]);
            deadline_ok &= prefix >= self.service_deadline[t];
        }
        forward_ok && deadline_ok
    }

    /// Verifies `witness` against the service rows and returns the
    /// product `prod_t (M + 1 - y_t)`, a count of allocations dominating
    /// the witness.
    pub fn count_feasible_lower_bound(&self, witness: &[u32]) -> Result<BigUint, String> {
        if witness.len() != self.params.periods {
            return Err("witness length differs from the horizon".into());
        }
        if witness.iter().any(|&v| v > self.params.max_counters) {
            return Err("witness exceeds the counter cap".into());
        }
        if !self.satisfies_service_rows(witness) {
            return Err("witness starves a service-capacity row".into());
        }
        Ok(allocation_count(self.params.max_counters, witness))
    }
}

/// Number of allocations componentwise at or above `witness`:
/// `prod_t (max_level + 1 - witness_t)`.
pub fn allocation_count(max_level: u32, witness: &[u32]) -> BigUint {
    witness
        .iter()
        .map(|&v| BigUint::from(max_level + 1 - v))
        .product()
}

impl SimProblem for AccaInstance {
    fn objects(&self) -> usize {
        self.params.periods
    }
    fn domain(&self) -> LevelDomain {
        self.level_domain()
    }
    fn scenarios(&self) -> usize {
        self.params.scenarios
    }
    fn measures_per_scenario(&self) -> usize {
        self.params.periods
    }
    fn anchor_object(&self, key: usize) -> usize {
        key
    }
    fn initial_partners(&self, key: usize) -> Vec<usize> {
        if key > 0 {
            vec![key - 1]
        } else {
            vec![]
        }
    }
    fn window_plan(&self, _key: usize) -> WindowPlan {
        WindowPlan::Interval
    }
    fn simulate(&self, scenario: usize, levels: &[u32]) -> Vec<i64> {
        self.scenarios[scenario].simulate(levels).delay_by_period
    }
    fn measure_scale(&self) -> f64 {
        1.0 / MICROS_PER_MINUTE as f64
    }
    fn validity(&self) -> ValidityMode {
        ValidityMode::Exact
    }
    fn extend_master(&self, master: &mut MasterModel) {
        let minutes = self.params.period_minutes as f64;
        for (members, rhs) in self.service_rows() {
            let terms: Vec<_> = members
                .iter()
                .map(|&t| (master.y_col(t), minutes))
                .collect();
            master.add_row(&terms, rhs, INF);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::master::MasterModel;

    #[test]
    fn standard_instance_matches_the_published_shape() {
        let instance = generate(AccaParams::standard(7, 2, 40.0)).unwrap();
        assert_eq!(instance.params.periods, 21);
        assert_eq!(instance.params.flights.len(), 10);
        for scenario in &instance.scenarios {
            assert_eq!(scenario.jobs.len(), 2160);
        }
        // Forward mass is nonincreasing, deadline mass nondecreasing.
        for t in 1..21 {
            assert!(instance.service_forward[t] <= instance.service_forward[t - 1]);
            assert!(instance.service_deadline[t] >= instance.service_deadline[t - 1]);
        }
        // Every passenger arrives at or after the first period.
        let total: i64 = instance.flight_service[0].iter().sum();
        assert_eq!(instance.service_forward[0], {
            let totals: Vec<i64> = instance
                .flight_service
                .iter()
                .map(|per| per.iter().sum())
                .collect();
            totals.into_iter().max().unwrap()
        });
        assert!(total > 0);
    }

    #[test]
    fn arrival_periods_follow_the_profile() {
        // Pool ~1e5 passengers: each absolute period's arrival share must
        // match the superposition of the flights' profile windows.
        let params = AccaParams::standard(11, 47, 40.0);
        let instance = generate(params).unwrap();
        let params = &instance.params;
        let period = params.period_micro();
        let passengers: u32 = params.flights.iter().map(|f| f.passengers).sum();
        let mut expected = vec![0.0f64; params.periods];
        for flight in &params.flights {
            for (w, &share) in params.arrival_profile.iter().enumerate() {
                expected[flight.start_period as usize + w] +=
                    share * f64::from(flight.passengers) / f64::from(passengers);
            }
        }
        let mut counts = vec![0usize; params.periods];
        let mut total = 0usize;
        for scenario in &instance.scenarios {
            for job in &scenario.jobs {
                counts[(job.release / period) as usize] += 1;
                total += 1;
            }
        }
        assert!(total > 100_000);
        for (t, &share) in expected.iter().enumerate() {
            let observed = counts[t] as f64 / total as f64;
            assert!(
                (observed - share).abs() < 0.01,
                "period {t}: observed {observed}, expected {share}"
            );
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(AccaParams::standard(3, 2, 25.0)).unwrap();
        let b = generate(AccaParams::standard(3, 2, 25.0)).unwrap();
        assert_eq!(a, b);
        let c = generate(AccaParams::standard(4, 2, 25.0)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn empty_flight_list_zeroes_the_bounds() {
        let mut params = AccaParams::toy(5, 1, 4, 3);
        params.flights.clear();
        let instance = generate(params).unwrap();
        assert!(instance.service_forward.iter().all(|&v| v == 0));
        assert!(instance.service_deadline.iter().all(|&v| v == 0));
        assert!(instance.scenarios[0].jobs.is_empty());
    }

    #[test]
    fn single_flight_deadline_mass_equals_its_total() {
        let mut params = AccaParams::toy(9, 3, 6, 3);
        params.flights = vec![FlightSpec {
            passengers: 8,
            start_period: 1,
            deadline_period: 2,
        }];
        let instance = generate(params).unwrap();
        let worst: i64 = instance
            .flight_service
            .iter()
            .map(|per| per[0])
            .max()
            .unwrap();
        for t in 0..6 {
            let expected = if t >= 2 { worst } else { 0 };
            assert_eq!(instance.service_deadline[t], expected, "period {t}");
        }
        assert_eq!(instance.service_forward[0], worst);
    }

    #[test]
    fn master_gets_exactly_the_two_service_row_families() {
        let instance = generate(AccaParams::toy(2, 2, 4, 3)).unwrap();
        let spec = instance.objective(ObjectiveMode::Mean);
        let mut master = MasterModel::build(4, instance.level_domain(), 2, 4, &spec);
        let before = master.lp.num_rows();
        instance.extend_master(&mut master);
        // One forward and one deadline row per period, nothing else: the
        // deadline rule lives entirely in these capacity rows.
        assert_eq!(master.lp.num_rows() - before, 2 * 4);
    }

    #[test]
    fn witness_count_is_the_dominance_product() {
        let instance = generate(AccaParams::toy(13, 1, 4, 3)).unwrap();
        // The all-max witness dominates only itself.
        let max = vec![3u32; 4];
        assert_eq!(
            instance.count_feasible_lower_bound(&max).unwrap(),
            BigUint::from(1u32)
        );
        assert_eq!(
            allocation_count(20, &vec![0u32; 21]),
            BigUint::from(21u32).pow(21)
        );
        // An infeasible witness is rejected.
        let starved = vec![0u32; 4];
        assert!(instance.count_feasible_lower_bound(&starved).is_err());
    }

    #[test]
    fn relaxed_capacity_check_matches_row_feasibility() {
        let instance = generate(AccaParams::toy(21, 2, 6, 4)).unwrap();
        let relaxed = instance.minimal_capacity_allocation().unwrap();
        // Rounding the relaxed allocation up must satisfy every row.
        let rounded: Vec<u32> = relaxed.iter().map(|v| v.ceil() as u32).collect();
        assert!(instance.count_feasible_lower_bound(&rounded).is_ok());
    }
}
