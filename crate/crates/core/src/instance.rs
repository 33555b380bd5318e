//! Shared vocabulary for the decomposition: level domains, allocation
//! vectors, measure identifiers, the memoized performance cache, and the
//! objective specification.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use dashmap::DashMap;
use serde::{Deserialize, Serialize};

/// Inclusive range `[min_level, max_level]` every resource level lives in.
/// Serialized with the short field names `m` and `M`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelDomain {
    #[serde(rename = "m")]
    pub min_level: u32,
    #[serde(rename = "M")]
    pub max_level: u32,
}

impl LevelDomain {
    pub fn new(min_level: u32, max_level: u32) -> Result<Self, InstanceError> {
        if min_level > max_level {
            return Err(InstanceError::EmptyDomain {
                min_level,
                max_level,
            });
        }
        Ok(LevelDomain {
            min_level,
            max_level,
        })
    }

    /// Number of admissible levels.
    pub fn size(&self) -> usize {
        (self.max_level - self.min_level + 1) as usize
    }

    /// Iterates the admissible levels in increasing order.
    pub fn levels(&self) -> impl Iterator<Item = u32> {
        self.min_level..=self.max_level
    }

    pub fn contains(&self, level: u32) -> bool {
        (self.min_level..=self.max_level).contains(&level)
    }
}

/// Identifies one performance measure: scenario index plus the measure's
/// key within a scenario (a time period or a site, depending on the
/// application).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MeasureId {
    pub scenario: u32,
    pub key: u32,
}

impl fmt::Display for MeasureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}k{}", self.scenario, self.key)
    }
}

/// Errors raised by instance-level operations.
#[derive(Debug, PartialEq, Eq)]
pub enum InstanceError {
    EmptyDomain { min_level: u32, max_level: u32 },
    ObjectIndex { index: usize, len: usize },
    LevelOutOfDomain { level: u32 },
}

impl fmt::Display for InstanceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InstanceError::EmptyDomain {
                min_level,
                max_level,
            } => write!(f, "empty level domain [{min_level}, {max_level}]"),
            InstanceError::ObjectIndex { index, len } => {
                write!(f, "object index {index} out of range for {len} objects")
            }
            InstanceError::LevelOutOfDomain { level } => {
                write!(f, "level {level} outside the domain")
            }
        }
    }
}

impl std::error::Error for InstanceError {}

/// The relaxation operator: keeps `y` on the objects listed in `window`
/// and raises every other object to the maximum level. Objects outside
/// the window can then never be the binding resource, which is what makes
/// windowed evaluation meaningful for monotone measures.
pub fn delta(window: &[usize], y: &[u32], max_level: u32) -> Result<Vec<u32>, InstanceError> {
    for &j in window {
        if j >= y.len() {
            return Err(InstanceError::ObjectIndex {
                index: j,
                len: y.len(),
            });
        }
    }
    let mut out = vec![max_level; y.len()];
    for &j in window {
        out[j] = y[j];
    }
    Ok(out)
}

/// Key of one memoized simulation: scenario index plus the full level
/// vector it was run against.
type CacheKey = (u32, Box<[u32]>);

/// Concurrent memo table mapping `(scenario, levels)` to the vector of all
/// measure values that simulation produced (integer performance units).
///
/// Values are pure functions of their key, so a racing duplicate insert is
/// harmless: both writers computed the same vector and one copy wins.
pub struct PerformanceCache {
    map: DashMap<CacheKey, Arc<[i64]>>,
    /// Total wall-clock nanoseconds spent inside simulation calls.
    sim_nanos: AtomicU64,
}

impl PerformanceCache {
    pub fn new() -> Self {
        PerformanceCache {
            map: DashMap::new(),
            sim_nanos: AtomicU64::new(0),
        }
    }

    /// Returns the cached measure vector for `(scenario, levels)`, running
    /// `sim` to fill the entry on first use. `sim` must be pure.
    pub fn evaluate_all<F>(&self, scenario: u32, levels: &[u32], sim: F) -> Arc<[i64]>
    where
        F: FnOnce(&[u32]) -> Vec<i64>,
    {
        let probe = (scenario, levels.to_vec().into_boxed_slice());
        if let Some(hit) = self.map.get(&probe) {
            return Arc::clone(&hit);
        }
        let started = std::time::Instant::now();
        let values: Arc<[i64]> = sim(levels).into();
        self.sim_nanos
            .fetch_add(started.elapsed().as_nanos() as u64, Ordering::Relaxed);
        self.map
            .entry(probe)
            .or_insert_with(|| Arc::clone(&values));
        // Re-read so every caller observes the copy that won the race.
        let key = (scenario, levels.to_vec().into_boxed_slice());
        Arc::clone(&self.map.get(&key).expect("entry just inserted"))
    }

    /// Number of distinct simulations run so far.
    pub fn sim_count(&self) -> usize {
        self.map.len()
    }

    /// Seconds spent inside simulation calls (sum over threads).
    pub fn sim_seconds(&self) -> f64 {
        self.sim_nanos.load(Ordering::Relaxed) as f64 * 1e-9
    }
}

impl Default for PerformanceCache {
    fn default() -> Self {
        Self::new()
    }
}

/// How scenario costs are aggregated in the objective. Serialized in
/// lowercase (`"mean"`, or a `"cvar"` object carrying the weights).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveMode {
    /// Plain expectation over scenarios.
    Mean,
    /// Convex mix of the expectation (weight `mean_weight`) and the
    /// conditional value-at-risk at level `beta` (weight `tail_weight`).
    Cvar {
        mean_weight: f64,
        tail_weight: f64,
        beta: f64,
    },
}

/// Objective configuration shared by the solver, the oracle, and reports.
/// The serialized field names follow the instance-file schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    /// Linear cost of each resource-level variable.
    #[serde(rename = "resource_cost")]
    pub level_costs: Vec<f64>,
    /// Uniform weight applied to every measure before aggregation
    /// (e.g. queue-cost per minute of delay); the per-scenario divisor is
    /// applied separately.
    #[serde(rename = "measure_weights")]
    pub measure_weight: f64,
    /// Number of scenarios the measure sum is averaged over.
    #[serde(rename = "scenario_divisor")]
    pub scenarios: usize,
    pub mode: ObjectiveMode,
}

impl ObjectiveSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.scenarios == 0 {
            return Err("objective needs at least one scenario".into());
        }
        if let ObjectiveMode::Cvar {
            mean_weight,
            tail_weight,
            beta,
        } = self.mode
        {
            if mean_weight <= 0.0 || tail_weight <= 0.0 {
                return Err("risk mix weights must be positive".into());
            }
            if (mean_weight + tail_weight - 1.0).abs() > 1e-9 {
                return Err("risk mix weights must sum to one".into());
            }
            if !(0.0..1.0).contains(&beta) || beta == 0.0 {
                return Err("tail level must satisfy 0 < beta < 1".into());
            }
        }
        Ok(())
    }

    /// Resource-cost part of the objective.
    pub fn level_cost(&self, y: &[u32]) -> f64 {
        y.iter()
            .zip(&self.level_costs)
            .map(|(&v, &c)| c * f64::from(v))
            .sum()
    }

    /// Aggregates per-scenario weighted measure sums into the final
    /// objective (without the resource-cost part). `scenario_costs[s]`
    /// must already include the measure weight but not the divisor.
    pub fn aggregate(&self, scenario_costs: &[f64]) -> f64 {
        let s = self.scenarios as f64;
        let mean: f64 = scenario_costs.iter().sum::<f64>() / s;
        match self.mode {
            ObjectiveMode::Mean => mean,
            ObjectiveMode::Cvar {
                mean_weight,
                tail_weight,
                beta,
            } => mean_weight * mean + tail_weight * cvar(scenario_costs, beta),
        }
    }
}

/// Conditional value-at-risk of an equally weighted empirical distribution,
/// evaluated through its variational form: the minimum over the threshold
/// `alpha` of `alpha + E[(X - alpha)+] / (1 - beta)`. The minimum is
/// attained at one of the sample points, so scanning them is exact.
pub fn cvar(samples: &[f64], beta: f64) -> f64 {
    assert!(!samples.is_empty());
    let s = samples.len() as f64;
    let mut best = f64::INFINITY;
    for &alpha in samples {
        let excess: f64 = samples.iter().map(|&x| (x - alpha).max(0.0)).sum();
        let value = alpha + excess / (s * (1.0 - beta));
        if value < best {
            best = value;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domain_size_and_membership() {
        let d = LevelDomain::new(2, 5).unwrap();
        assert_eq!(d.size(), 4);
        assert!(d.contains(2) && d.contains(5) && !d.contains(6));
        assert!(LevelDomain::new(3, 1).is_err());
        assert_eq!(d.levels().collect::<Vec<_>>(), vec![2, 3, 4, 5]);
    }

    #[test]
    fn delta_keeps_window_and_raises_the_rest() {
        // Window {3, 4} in one-based labels = indices {2, 3}.
        let y = vec![4, 3, 3, 2, 4];
        let out = delta(&[2, 3], &y, 5).unwrap();
        assert_eq!(out, vec![5, 5, 3, 2, 5]);
        let all = delta(&[0, 1, 2, 3, 4], &y, 5).unwrap();
        assert_eq!(all, y);
        let none = delta(&[], &y, 5).unwrap();
        assert_eq!(none, vec![5; 5]);
        assert!(delta(&[9], &y, 5).is_err());
    }

    #[test]
    fn cache_runs_each_key_once() {
        use std::sync::atomic::AtomicUsize;
        let cache = PerformanceCache::new();
        let calls = AtomicUsize::new(0);
        let sim = |levels: &[u32]| {
            calls.fetch_add(1, Ordering::SeqCst);
            vec![i64::from(levels[0]) * 10, i64::from(levels[1])]
        };
        let a = cache.evaluate_all(0, &[3, 4], sim);
        let b = cache.evaluate_all(0, &[3, 4], sim);
        assert_eq!(a.as_ref(), &[30, 4]);
        assert_eq!(b.as_ref(), &[30, 4]);
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        assert_eq!(cache.sim_count(), 1);
        // A different scenario with the same levels is a separate entry.
        cache.evaluate_all(1, &[3, 4], sim);
        assert_eq!(cache.sim_count(), 2);
    }

    #[test]
    fn mean_and_risk_aggregation() {
        let spec = ObjectiveSpec {
            level_costs: vec![2.0, 2.0],
            measure_weight: 1.0,
            scenarios: 4,
            mode: ObjectiveMode::Mean,
        };
        assert!(spec.validate().is_ok());
        assert_eq!(spec.level_cost(&[1, 3]), 8.0);
        assert!((spec.aggregate(&[1.0, 2.0, 3.0, 6.0]) - 3.0).abs() < 1e-12);

        // At beta = 0.5 with four samples, the tail functional averages the
        // worst half: (3 + 6) / 2 = 4.5.
        let risk = ObjectiveSpec {
            mode: ObjectiveMode::Cvar {
                mean_weight: 0.5,
                tail_weight: 0.5,
                beta: 0.5,
            },
            ..spec
        };
        assert!(risk.validate().is_ok());
        let value = risk.aggregate(&[1.0, 2.0, 3.0, 6.0]);
        assert!((value - (0.5 * 3.0 + 0.5 * 4.5)).abs() < 1e-12, "{value}");
    }

    #[test]
    fn cvar_degenerate_cases() {
        // Single sample: the tail is that sample at any level.
        assert!((cvar(&[7.0], 0.75) - 7.0).abs() < 1e-12);
        // All equal samples.
        assert!((cvar(&[2.0, 2.0, 2.0], 0.3) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn risk_validation_rejects_bad_mixes() {
        let base = ObjectiveSpec {
            level_costs: vec![],
            measure_weight: 1.0,
            scenarios: 1,
            mode: ObjectiveMode::Cvar {
                mean_weight: 0.7,
                tail_weight: 0.2,
                beta: 0.9,
            },
        };
        assert!(base.validate().is_err());
        let bad_beta = ObjectiveSpec {
            mode: ObjectiveMode::Cvar {
                mean_weight: 0.5,
                tail_weight: 0.5,
                beta: 1.0,
            },
            ..base
        };
        assert!(bad_beta.validate().is_err());
    }
}
