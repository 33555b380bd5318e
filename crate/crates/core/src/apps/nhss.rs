//! Nursing-staff shift scheduling.
//!
//! Periods are hour-long slots of a day shift; the level of a period is
//! its number of on-duty nurses, produced by whole shifts from a catalog
//! of admissible start/length combinations. Care requests are a mix of
//! scheduled visits (fixed across scenarios) and unscheduled arrivals
//! (Poisson per scenario); service times follow a short/long exponential
//! mixture. Requests still open at the end of the day are finished by the
//! night staff, so the horizon boundary is an overtime crew rather than a
//! penalty.
//!
//! The master model carries shift-count columns linked to the levels by
//! coverage equalities plus a weekly-hours budget row. A two-stage
//! workload-balancing heuristic provides a warm-start allocation.

use serde::{Deserialize, Serialize};

use crate::bnb::{branch_and_bound, BnbOptions, CallbackOutput, CutPool, IncumbentEvaluator};
use crate::engine::{SimProblem, ValidityMode};
use crate::instance::{LevelDomain, ObjectiveMode, ObjectiveSpec};
use crate::master::MasterModel;
use crate::queue::{Boundary, Job, QueueScenario};
use crate::rng::Stream;
use crate::MICROS_PER_MINUTE;

use branchsim_lp::{LpStatus, Simplex, INF};

/// One admissible shift: the periods `[start, start + len)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shift {
    pub start: usize,
    pub len: usize,
}

impl Shift {
    pub fn covers(&self, period: usize) -> bool {
        (self.start..self.start + self.len).contains(&period)
    }
}

/// All start/length combinations that fit inside the horizon.
pub fn shift_catalog(
    periods: usize,
    period_minutes: i64,
    shift_hours: &[u32],
) -> Result<Vec<Shift>, String> {
    let mut shifts = Vec::new();
    for &hours in shift_hours {
        let minutes = i64::from(hours) * 60;
        if hours == 0 || minutes % period_minutes != 0 {
            return Err(format!(
                "shift length {hours}h is not a whole number of periods"
            ));
        }
        let len = (minutes / period_minutes) as usize;
        if len > periods {
            return Err(format!("shift length {hours}h exceeds the horizon"));
        }
        for start in 0..=periods - len {
            shifts.push(Shift { start, len });
        }
    }
    Ok(shifts)
}

/// Generation parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NhssParams {
    pub periods: usize,
    pub period_minutes: i64,
    pub min_level: u32,
    pub max_level: u32,
    /// Admissible shift lengths, in hours.
    pub shift_hours: Vec<u32>,
    /// Budget: total staffed hours may not exceed this many hours.
    pub hours_cap: u32,
    /// Night crew finishing the day's leftovers.
    pub night_staff: u32,
    pub night_hours: u32,
    /// Scheduled visits, shared by every scenario.
    pub scheduled_count: usize,
    /// Periods drawing extra scheduled visits (morning/evening peaks).
    pub peak_periods: Vec<usize>,
    pub peak_weight: f64,
    /// Unscheduled arrivals per hour.
    pub arrival_rate: f64,
    /// Probability that a service time is a short visit.
    pub short_prob: f64,
    pub short_mean_minutes: f64,
    pub long_mean_minutes: f64,
    /// Service times are rounded to multiples of this many micro-units.
    pub service_quantum: i64,
    pub scenarios: usize,
    pub seed: u64,
}

impl NhssParams {
    /// The benchmark configuration: a 16-hour day, 4h and 8h shifts,
    /// 224 scheduled visits with morning and evening peaks.
    pub fn standard(seed: u64, scenarios: usize, arrival_rate: f64, short_prob: f64) -> Self {
        NhssParams {
            periods: 16,
            period_minutes: 60,
            min_level: 2,
            max_level: 20,
            shift_hours: vec![4, 8],
            hours_cap: 40,
            night_staff: 2,
            night_hours: 8,
            scheduled_count: 224,
            peak_periods: vec![1, 2, 10, 11],
            peak_weight: 4.0,
            arrival_rate,
            short_prob,
            short_mean_minutes: 1.89,
            long_mean_minutes: 9.28,
            service_quantum: 1,
            scenarios,
            seed,
        }
    }

    /// A small configuration for enumerable tests: six periods, 2h and 3h
    /// shifts, coarse 0.1-minute service times.
    pub fn toy(seed: u64, scenarios: usize) -> Self {
        NhssParams {
            periods: 6,
            period_minutes: 60,
            min_level: 1,
            max_level: 4,
            shift_hours: vec![2, 3],
            hours_cap: 14,
            night_staff: 1,
            night_hours: 2,
            scheduled_count: 10,
            peak_periods: vec![1, 4],
            peak_weight: 3.0,
            arrival_rate: 2.0,
            short_prob: 0.5,
            short_mean_minutes: 1.89,
            long_mean_minutes: 9.28,
            service_quantum: 100,
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
        if self.min_level > self.max_level {
            return Err("level bounds are inverted".into());
        }
        if self.night_staff == 0 {
            return Err("the night crew must have at least one member".into());
        }
        if i64::from(self.night_hours) * 60 % self.period_minutes != 0 {
            return Err("night length is not a whole number of periods".into());
        }
        if !(0.0..=1.0).contains(&self.short_prob) {
            return Err("short-visit probability must lie in [0, 1]".into());
        }
        if self.arrival_rate < 0.0
            || self.short_mean_minutes <= 0.0
            || self.long_mean_minutes <= 0.0
        {
            return Err("arrival and service parameters must be positive".into());
        }
        if self.peak_periods.iter().any(|&t| t >= self.periods) {
            return Err("peak period outside the horizon".into());
        }
        if self.peak_weight < 1.0 {
            return Err("peak weight must be at least one".into());
        }
        Ok(())
    }
}

/// A generated instance: the shift catalog, the shared scheduled visits,
/// and one job list per scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct NhssInstance {
    pub params: NhssParams,
    pub shifts: Vec<Shift>,
    pub scheduled: Vec<Job>,
    pub scenarios: Vec<QueueScenario>,
}

/// Short/long exponential mixture, quantized; two counter slots.
fn sample_duration(params: &NhssParams, stream: &Stream, counter: u64) -> i64 {
    let mean = if stream.f64_at(counter) < params.short_prob {
        params.short_mean_minutes
    } else {
        params.long_mean_minutes
    };
    let raw = stream.exp_at(counter + 1, mean) * MICROS_PER_MINUTE as f64;
    let quantum = params.service_quantum;
    ((raw / quantum as f64).round() as i64 * quantum).clamp(0, 1_000_000)
}

/// Generates an instance: the scheduled visits once, then each scenario's
/// unscheduled arrivals.
pub fn generate(params: NhssParams) -> Result<NhssInstance, String> {
    params.validate()?;
    let mut weights = vec![1.0f64; params.periods];
    for &t in &params.peak_periods {
        weights[t] = params.peak_weight;
    }
    let stream = Stream::new(params.seed, "nhss-scheduled", 0);
    let mut scheduled = Vec::with_capacity(params.scheduled_count);
    for i in 0..params.scheduled_count {
        let base = i as u64 * 4;
        let period = stream.weighted_at(base, &weights) as i64;
        let offset = stream.int_at(base + 1, 0, params.period_minutes - 1);
        scheduled.push(Job {
            release: (period * params.period_minutes + offset) * MICROS_PER_MINUTE,
            processing: sample_duration(&params, &stream, base + 2),
        });
    }
    scheduled.sort_by_key(|job| job.release);
    assemble(params, scheduled)
}

/// Builds an instance around externally supplied scheduled visits (for
/// example a roster loaded from a file) instead of sampling them.
pub fn generate_with_scheduled(
    mut params: NhssParams,
    mut scheduled: Vec<Job>,
) -> Result<NhssInstance, String> {
    params.scheduled_count = scheduled.len();
    params.validate()?;
    scheduled.sort_by_key(|job| job.release);
    assemble(params, scheduled)
}

/// Shared tail of generation: the shift catalog plus one scenario per
/// stream, each merging the scheduled visits with fresh arrivals.
fn assemble(params: NhssParams, scheduled: Vec<Job>) -> Result<NhssInstance, String> {
    let shifts = shift_catalog(params.periods, params.period_minutes, &params.shift_hours)?;
    let horizon = params.periods as i64 * params.period_micro();
    let boundary = Boundary::Overtime {
        extra_agents: params.night_staff,
        extra_periods: (i64::from(params.night_hours) * 60 / params.period_minutes) as u32,
    };
    let horizon_minutes = (params.periods as i64 * params.period_minutes) as f64;
    let mut scenarios = Vec::with_capacity(params.scenarios);
    for s in 0..params.scenarios {
        let stream = Stream::new(params.seed, "nhss-arrival", s as u64);
        let mut jobs = scheduled.clone();
        if params.arrival_rate > 0.0 {
            let mean_gap = 60.0 / params.arrival_rate;
            let mut counter = 0u64;
            let mut minute = 0.0f64;
            loop {
                minute += stream.exp_at(counter, mean_gap);
                counter += 1;
                if minute >= horizon_minutes {
                    break;
                }
                let release = (minute * MICROS_PER_MINUTE as f64).floor() as i64;
                jobs.push(Job {
                    release: release.min(horizon - 1),
                    processing: sample_duration(&params, &stream, counter),
                });
                counter += 2;
            }
        }
        jobs.sort_by_key(|job| job.release);
        let scenario = QueueScenario {
            jobs,
            periods: params.periods,
            period_len: params.period_micro(),
            boundary,
        };
        scenario.validate().map_err(|e| e.to_string())?;
        scenarios.push(scenario);
    }
    Ok(NhssInstance {
        params,
        shifts,
        scheduled,
        scenarios,
    })
}

impl NhssInstance {
    pub fn level_domain(&self) -> LevelDomain {
        LevelDomain::new(self.params.min_level, self.params.max_level).expect("non-empty domain")
    }

    /// The objective: staffing is paid through the budget row, so levels
    /// cost nothing and only delay minutes count.
    pub fn objective(&self, mode: ObjectiveMode) -> ObjectiveSpec {
        ObjectiveSpec {
            level_costs: vec![0.0; self.params.periods],
            measure_weight: 1.0,
            scenarios: self.params.scenarios,
            mode,
        }
    }

    /// Adds shift-count columns, the coverage equalities linking them to
    /// the levels, and the staffed-hours budget row. Returns the shift
    /// columns. Counts are left continuous: the coverage matrix has
    /// consecutive ones per column, so any integral level profile in its
    /// image is also reachable with integral counts.
    fn install_coverage(&self, master: &mut MasterModel) -> Vec<branchsim_lp::Col> {
        let x: Vec<_> = self
            .shifts
            .iter()
            .map(|_| master.add_aux_col(0.0, 0.0, INF))
            .collect();
        for t in 0..self.params.periods {
            let mut terms: Vec<_> = self
                .shifts
                .iter()
                .enumerate()
                .filter(|(_, shift)| shift.covers(t))
                .map(|(g, _)| (x[g], 1.0))
                .collect();
            terms.push((master.y_col(t), -1.0));
            master.add_row(&terms, 0.0, 0.0);
        }
        let budget: Vec<_> = (0..self.params.periods)
            .map(|t| (master.y_col(t), self.params.period_minutes as f64))
            .collect();
        master.add_row(&budget, -INF, f64::from(self.params.hours_cap) * 60.0);
        x
    }

    /// Total service minutes released in each period, pooled over all
    /// scenarios (the workload profile the heuristic balances against).
    pub fn workload_minutes(&self) -> Vec<f64> {
        let period = self.params.period_micro();
        let mut load = vec![0.0f64; self.params.periods];
        for scenario in &self.scenarios {
            for job in &scenario.jobs {
                load[(job.release / period) as usize] +=
                    job.processing as f64 / MICROS_PER_MINUTE as f64;
            }
        }
        load
    }

    /// Workload-balancing warm start. Stage one finds the least total
    /// deviation between staffed minutes (scaled by the scenario count)
    /// and released service minutes; stage two takes the smallest staff
    /// total among allocations achieving it. Both stages respect the
    /// coverage and budget rows.
    pub fn heuristic_allocation(&self) -> Result<Vec<u32>, String> {
        let t_count = self.params.periods;
        let capacity = self.scenarios.len() as f64 * self.params.period_minutes as f64;
        let rho = self.workload_minutes();
        let balance = {
            let rho = rho.clone();
            move |y: &[u32]| -> f64 {
                y.iter()
                    .zip(&rho)
                    .map(|(&v, &r)| (capacity * f64::from(v) - r).abs())
                    .sum()
            }
        };

        let deviation_stage = |level_costs: Vec<f64>,
                               deviation_cost: f64,
                               deviation_cap: Option<f64>,
                               objective: &dyn Fn(&[u32]) -> f64|
         -> Result<(Vec<u32>, f64), String> {
            let spec = ObjectiveSpec {
                level_costs,
                measure_weight: 1.0,
                scenarios: 1,
                mode: ObjectiveMode::Mean,
            };
            let mut model = MasterModel::build(t_count, self.level_domain(), 1, 0, &spec);
            self.install_coverage(&mut model);
            let mut deviations = Vec::with_capacity(2 * t_count);
            for t in 0..t_count {
                let dp = model.add_aux_col(deviation_cost, 0.0, INF);
                let dm = model.add_aux_col(deviation_cost, 0.0, INF);
                model.add_row(
                    &[(model.y_col(t), capacity), (dp, -1.0), (dm, 1.0)],
                    rho[t],
                    rho[t],
                );
                deviations.push(dp);
                deviations.push(dm);
            }
            if let Some(cap) = deviation_cap {
                let terms: Vec<_> = deviations.iter().map(|&c| (c, 1.0)).collect();
                model.add_row(&terms, -INF, cap);
            }
            struct Fixed<'f>(&'f dyn Fn(&[u32]) -> f64);
            impl IncumbentEvaluator for Fixed<'_> {
                fn evaluate(&mut self, y: &[u32], _theta: &[f64]) -> CallbackOutput {
                    CallbackOutput {
                        true_objective: (self.0)(y),
                        cuts: Vec::new(),
                    }
                }
            }
            let mut pool = CutPool::new(0);
            let outcome = branch_and_bound(
                &mut model,
                &mut pool,
                &mut Fixed(objective),
                None,
                &BnbOptions::default(),
            )
            .map_err(|e| format!("warm-start stage failed: {e}"))?;
            match (outcome.best_y, outcome.objective) {
                (Some(y), Some(obj)) => Ok((y, obj)),
                _ => Err("staffing constraints admit no allocation".into()),
            }
        };

        let (_, best_deviation) =
            deviation_stage(vec![0.0; t_count], 1.0, None, &balance)?;
        // Deviations are multiples of one micro-unit (0.001 minutes), so
        // half a step keeps exactly the stage-one optima.
        let (y, _) = deviation_stage(
            vec![1.0; t_count],
            0.0,
            Some(best_deviation + 0.0005),
            &|y: &[u32]| y.iter().map(|&v| f64::from(v)).sum(),
        )?;
        Ok(y)
    }

    /// Integral shift counts reproducing the level profile `y`: the
    /// least-total-count vertex of the coverage system, which is integral
    /// because each shift covers a consecutive period range. Rounds and
    /// re-verifies exactly.
    pub fn recover_shift_counts(&self, y: &[u32]) -> Result<Vec<u32>, String> {
        let mut lp = Simplex::new();
        let x: Vec<_> = self
            .shifts
            .iter()
            .map(|_| lp.add_col(1.0, 0.0, INF))
            .collect();
        for t in 0..self.params.periods {
            let terms: Vec<_> = self
                .shifts
                .iter()
                .enumerate()
                .filter(|(_, shift)| shift.covers(t))
                .map(|(g, _)| (x[g], 1.0))
                .collect();
            lp.add_row(&terms, f64::from(y[t]), f64::from(y[t]));
        }
        let result = lp.solve().map_err(|e| e.to_string())?;
        if result.status != LpStatus::Optimal {
            return Err("no shift combination reproduces the level profile".into());
        }
        let mut counts = vec![0u32; self.shifts.len()];
        for (g, &col) in x.iter().enumerate() {
            let value = lp.col_value(col);
            let rounded = value.round();
            if (value - rounded).abs() > 1e-6 || rounded < 0.0 {
                return Err(format!("shift count {g} is not integral ({value})"));
            }
            counts[g] = rounded as u32;
        }
        for (t, &level) in y.iter().enumerate() {
            let covered: u32 = self
                .shifts
                .iter()
                .zip(&counts)
                .filter(|(shift, _)| shift.covers(t))
                .map(|(_, &c)| c)
                .sum();
            if covered != level {
                return Err(format!("recovered counts miss period {t}"));
            }
        }
        Ok(counts)
    }
}

impl SimProblem for NhssInstance {
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
        self.install_coverage(master);
    }
    fn warm_start(&self) -> Option<Vec<u32>> {
        self.heuristic_allocation().ok()
    }
}
