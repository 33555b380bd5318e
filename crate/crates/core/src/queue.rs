//! Multi-server FCFS queue with a time-varying number of agents.
//!
//! Time is measured in integer micro-units (thousandths of a minute) so
//! that every comparison between runs is exact. The horizon is divided
//! into `periods` slots of `period_len` micro-units each; period `p`
//! (zero-based) owns the half-open interval `[p * L, (p + 1) * L)`, so an
//! instant sitting exactly on a boundary belongs to the later period.
//!
//! Jobs are served first-come-first-served. A job may start at time `t`
//! when the number of jobs still in service is strictly below the agent
//! level of the period containing `t`; a job completing at `t` therefore
//! frees its agent for a start at that same instant. Agents always finish
//! the job they started even if the level drops mid-service — a drop only
//! blocks new starts until enough jobs drain.
//!
//! What happens to jobs still waiting at the end of the horizon depends on
//! the boundary rule: `Penalty` charges a fixed amount per unserved job
//! (and, being FCFS, once one job goes unserved every later one does too),
//! while `Overtime` keeps a reduced crew on duty after hours until the
//! queue drains.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;

/// One job: when it becomes available and how long it takes to serve.
/// Both fields are micro-units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Job {
    pub release: i64,
    pub processing: i64,
}

/// End-of-horizon semantics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    /// Each job that cannot start before the horizon ends is charged
    /// `per_unserved` micro-units of delay, attributed to its release
    /// period.
    Penalty { per_unserved: i64 },
    /// After the horizon, `extra_agents` stay on duty (nominally for
    /// `extra_periods` more slots, and in any case until the queue
    /// drains), so every job eventually starts.
    Overtime {
        extra_agents: u32,
        extra_periods: u32,
    },
}

/// One scenario: a release-ordered job list plus the horizon layout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueueScenario {
    pub jobs: Vec<Job>,
    pub periods: usize,
    /// Period length in micro-units.
    pub period_len: i64,
    pub boundary: Boundary,
}

/// Everything one simulation run produces.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimOutcome {
    /// Service start time per job; jobs that never start under the
    /// penalty rule carry the horizon end as a sentinel.
    pub starts: Vec<i64>,
    /// Whether each job actually started before the cutoff.
    pub served: Vec<bool>,
    /// Total delay (waiting time, or penalty) attributed to each period
    /// by job release time.
    pub delay_by_period: Vec<i64>,
}

#[derive(Debug, PartialEq, Eq)]
pub enum QueueError {
    UnsortedJobs { index: usize },
    ReleaseOutOfHorizon { index: usize },
    NegativeTime { index: usize },
    BadLayout,
    IdleOvertime,
}

impl fmt::Display for QueueError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueueError::UnsortedJobs { index } => {
                write!(f, "job {index} released before its predecessor")
            }
            QueueError::ReleaseOutOfHorizon { index } => {
                write!(f, "job {index} released at or after the horizon end")
            }
            QueueError::NegativeTime { index } => {
                write!(f, "job {index} has a negative release or duration")
            }
            QueueError::BadLayout => write!(f, "periods and period length must be positive"),
            QueueError::IdleOvertime => {
                write!(f, "overtime boundary needs at least one agent to drain the queue")
            }
        }
    }
}

impl std::error::Error for QueueError {}

impl QueueScenario {
    /// Checks the structural invariants the simulator relies on.
    pub fn validate(&self) -> Result<(), QueueError> {
        if self.periods == 0 || self.period_len <= 0 {
            return Err(QueueError::BadLayout);
        }
        if let Boundary::Overtime { extra_agents, .. } = self.boundary {
            if extra_agents == 0 {
                return Err(QueueError::IdleOvertime);
            }
        }
        let horizon = self.horizon();
        let mut prev = 0i64;
        for (index, job) in self.jobs.iter().enumerate() {
            if job.release < 0 || job.processing < 0 {
                return Err(QueueError::NegativeTime { index });
            }
            if job.release < prev {
                return Err(QueueError::UnsortedJobs { index });
            }
            if job.release >= horizon {
                return Err(QueueError::ReleaseOutOfHorizon { index });
            }
            prev = job.release;
        }
        Ok(())
    }

    /// Horizon end in micro-units.
    pub fn horizon(&self) -> i64 {
        self.periods as i64 * self.period_len
    }

    /// Agent level at instant `t` under the given staffing plan.
    fn level_at(&self, levels: &[u32], t: i64) -> u32 {
        let idx = (t / self.period_len) as usize;
        if idx < self.periods {
            levels[idx]
        } else {
            match self.boundary {
                Boundary::Penalty { .. } => 0,
                Boundary::Overtime { extra_agents, .. } => extra_agents,
            }
        }
    }

    /// Runs the queue under `levels` (one entry per period) and returns
    /// start times plus per-period delays.
    pub fn simulate(&self, levels: &[u32]) -> SimOutcome {
        debug_assert_eq!(levels.len(), self.periods);
        let horizon = self.horizon();
        let n = self.jobs.len();
        let mut starts = vec![0i64; n];
        let mut served = vec![true; n];
        let mut delay_by_period = vec![0i64; self.periods];
        // Completion times of jobs currently in service.
        let mut busy: BinaryHeap<Reverse<i64>> = BinaryHeap::new();
        let mut prev_start = 0i64;

        for (j, job) in self.jobs.iter().enumerate() {
            let mut t = prev_start.max(job.release);
            let release_period = (job.release / self.period_len) as usize;
            loop {
                if let Boundary::Penalty { per_unserved } = self.boundary {
                    if t >= horizon {
                        served[j] = false;
                        starts[j] = horizon;
                        delay_by_period[release_period] += per_unserved;
                        prev_start = horizon;
                        break;
                    }
                }
                // A completion at exactly `t` frees its agent for a start
                // at `t`, hence the non-strict pop.
                while busy.peek().is_some_and(|c| c.0 <= t) {
                    busy.pop();
                }
                let cap = self.level_at(levels, t);
                if (busy.len() as u64) < u64::from(cap) {
                    starts[j] = t;
                    busy.push(Reverse(t + job.processing));
                    delay_by_period[release_period] += t - job.release;
                    prev_start = t;
                    break;
                }
                // Blocked: jump to the next instant anything can change —
                // the earliest completion or the next period boundary
                // (where the level may rise).
                let next_boundary = (t / self.period_len + 1) * self.period_len;
                t = match busy.peek() {
                    Some(&Reverse(c)) => c.min(next_boundary),
                    None => next_boundary,
                };
            }
        }
        SimOutcome {
            starts,
            served,
            delay_by_period,
        }
    }
}

/// Renders a per-job trace as CSV (`job,release,start,processing,delay`),
/// with times in micro-units. Unserved jobs report the boundary penalty in
/// the delay column.
pub fn trace_csv(scenario: &QueueScenario, outcome: &SimOutcome) -> String {
    let mut out = String::from("job,release,start,processing,delay\n");
    for (j, job) in scenario.jobs.iter().enumerate() {
        let delay = if outcome.served[j] {
            outcome.starts[j] - job.release
        } else {
            match scenario.boundary {
                Boundary::Penalty { per_unserved } => per_unserved,
                Boundary::Overtime { .. } => unreachable!("overtime serves every job"),
            }
        };
        out.push_str(&format!(
            "{j},{},{},{},{delay}\n",
            job.release, outcome.starts[j], job.processing
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    const MIN: i64 = 1000; // micro-units per minute

    fn scenario(jobs: Vec<(i64, i64)>, periods: usize, period_len: i64) -> QueueScenario {
        let s = QueueScenario {
            jobs: jobs
                .into_iter()
                .map(|(release, processing)| Job {
                    release,
                    processing,
                })
                .collect(),
            periods,
            period_len,
            boundary: Boundary::Penalty {
                per_unserved: periods as i64 * period_len,
            },
        };
        s.validate().unwrap();
        s
    }

    #[test]
    fn empty_scenario_yields_zero_delays() {
        let s = scenario(vec![], 3, 10 * MIN);
        let out = s.simulate(&[1, 1, 1]);
        assert_eq!(out.delay_by_period, vec![0, 0, 0]);
        assert!(out.starts.is_empty());
    }

    #[test]
    fn uncontended_jobs_start_at_release() {
        let s = scenario(vec![(0, 7 * MIN), (2 * MIN, MIN), (15 * MIN, MIN)], 2, 10 * MIN);
        let out = s.simulate(&[3, 3]);
        assert_eq!(out.starts, vec![0, 2 * MIN, 15 * MIN]);
        assert_eq!(out.delay_by_period, vec![0, 0]);
    }

    #[test]
    fn single_agent_serializes_jobs() {
        // Two simultaneous releases on one agent: the second waits out the
        // first job's full ten minutes, all charged to period one.
        let s = scenario(vec![(0, 10 * MIN), (0, 10 * MIN)], 3, 10 * MIN);
        let out = s.simulate(&[1, 1, 1]);
        assert_eq!(out.starts, vec![0, 10 * MIN]);
        assert_eq!(out.delay_by_period, vec![10 * MIN, 0, 0]);
        assert_eq!(out.served, vec![true, true]);
    }

    #[test]
    fn completion_frees_agent_for_same_instant_start() {
        let s = scenario(
            vec![(0, 10 * MIN), (0, 5 * MIN), (5 * MIN, MIN)],
            2,
            10 * MIN,
        );
        let out = s.simulate(&[2, 2]);
        // Job 1 completes exactly at minute five, so job 2 starts there
        // with no delay.
        assert_eq!(out.starts, vec![0, 0, 5 * MIN]);
        assert_eq!(out.delay_by_period, vec![0, 0]);
    }

    #[test]
    fn release_on_boundary_belongs_to_later_period() {
        // One job released exactly at the period-one/two boundary.
        let jobs = vec![(10 * MIN, MIN)];
        let open_later = scenario(jobs.clone(), 2, 10 * MIN);
        let out = open_later.simulate(&[0, 1]);
        assert_eq!(out.starts, vec![10 * MIN]);
        assert_eq!(out.delay_by_period, vec![0, 0]);

        // With the staffing flipped, the boundary instant offers no agent;
        // the job can never start and draws the penalty, attributed to its
        // release period (period two).
        let out = open_later.simulate(&[1, 0]);
        assert_eq!(out.served, vec![false]);
        assert_eq!(out.delay_by_period, vec![0, 20 * MIN]);
    }

    #[test]
    fn unstaffed_period_defers_to_next_opening() {
        let s = scenario(vec![(0, MIN)], 3, 10 * MIN);
        let out = s.simulate(&[0, 1, 1]);
        assert_eq!(out.starts, vec![10 * MIN]);
        assert_eq!(out.delay_by_period, vec![10 * MIN, 0, 0]);
    }

    #[test]
    fn level_drop_lets_running_jobs_finish() {
        // Two agents in period one, one in period two. Both long jobs keep
        // running past the drop; the third job must wait for the queue to
        // fall below the *new* level.
        let s = scenario(
            vec![(0, 15 * MIN), (0, 15 * MIN), (10 * MIN, MIN)],
            2,
            10 * MIN,
        );
        let out = s.simulate(&[2, 1]);
        assert_eq!(out.starts, vec![0, 0, 15 * MIN]);
        assert_eq!(out.delay_by_period, vec![0, 5 * MIN]);
    }

    #[test]
    fn started_jobs_run_past_the_horizon_without_penalty() {
        let s = scenario(vec![(0, 25 * MIN)], 2, 10 * MIN);
        let out = s.simulate(&[1, 1]);
        assert_eq!(out.served, vec![true]);
        assert_eq!(out.delay_by_period, vec![0, 0]);
    }

    #[test]
    fn penalty_cascades_over_later_jobs() {
        // Job 0 monopolizes the lone agent beyond the horizon; jobs 1 and 2
        // can never start and both draw the twenty-minute penalty.
        let s = scenario(
            vec![(0, 25 * MIN), (MIN, MIN), (12 * MIN, MIN)],
            2,
            10 * MIN,
        );
        let out = s.simulate(&[1, 1]);
        assert_eq!(out.served, vec![true, false, false]);
        assert_eq!(out.starts[1], 20 * MIN);
        assert_eq!(out.starts[2], 20 * MIN);
        assert_eq!(out.delay_by_period, vec![20 * MIN, 20 * MIN]);
    }

    #[test]
    fn overtime_crew_drains_the_queue() {
        let s = QueueScenario {
            jobs: vec![
                Job {
                    release: 0,
                    processing: 25 * MIN,
                },
                Job {
                    release: 5 * MIN,
                    processing: 5 * MIN,
                },
                Job {
                    release: 15 * MIN,
                    processing: MIN,
                },
            ],
            periods: 2,
            period_len: 10 * MIN,
            boundary: Boundary::Overtime {
                extra_agents: 1,
                extra_periods: 1,
            },
        };
        s.validate().unwrap();
        let out = s.simulate(&[1, 0]);
        // Job 1 waits for job 0's completion at minute 25 (inside
        // overtime); job 2 then waits for job 1, starting at minute 30 —
        // past the nominal one-period overtime window, which stays open
        // until the queue drains.
        assert_eq!(out.starts, vec![0, 25 * MIN, 30 * MIN]);
        assert_eq!(out.served, vec![true, true, true]);
        assert_eq!(out.delay_by_period, vec![20 * MIN, 15 * MIN]);
    }

    #[test]
    fn validation_rejects_malformed_scenarios() {
        let unsorted = QueueScenario {
            jobs: vec![
                Job {
                    release: 5,
                    processing: 1,
                },
                Job {
                    release: 3,
                    processing: 1,
                },
            ],
            periods: 1,
            period_len: 10,
            boundary: Boundary::Penalty { per_unserved: 10 },
        };
        assert_eq!(
            unsorted.validate(),
            Err(QueueError::UnsortedJobs { index: 1 })
        );

        let late = QueueScenario {
            jobs: vec![Job {
                release: 10,
                processing: 1,
            }],
            periods: 1,
            period_len: 10,
            boundary: Boundary::Penalty { per_unserved: 10 },
        };
        assert_eq!(
            late.validate(),
            Err(QueueError::ReleaseOutOfHorizon { index: 0 })
        );

        let idle = QueueScenario {
            jobs: vec![],
            periods: 1,
            period_len: 10,
            boundary: Boundary::Overtime {
                extra_agents: 0,
                extra_periods: 1,
            },
        };
        assert_eq!(idle.validate(), Err(QueueError::IdleOvertime));
    }

    #[test]
    fn trace_lists_every_job_with_its_delay() {
        let s = scenario(vec![(0, 10 * MIN), (0, 10 * MIN)], 3, 10 * MIN);
        let out = s.simulate(&[1, 1, 1]);
        let csv = trace_csv(&s, &out);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "job,release,start,processing,delay");
        assert_eq!(lines[1], "0,0,0,10000,0");
        assert_eq!(lines[2], "1,0,10000,10000,10000");
    }

    /// Random probe scenario for the monotonicity checks below.
    fn random_scenario(stream: &Stream, base: u64, boundary: Boundary) -> (QueueScenario, Vec<u32>) {
        let periods = 2 + (stream.u64_at(base) % 3) as usize;
        let period_len = 10 * MIN;
        let horizon = periods as i64 * period_len;
        let n_jobs = 3 + (stream.u64_at(base + 1) % 6) as usize;
        let mut jobs: Vec<Job> = (0..n_jobs)
            .map(|j| {
                let c = base + 10 + 3 * j as u64;
                Job {
                    release: stream.int_at(c, 0, horizon / MIN - 1) * MIN,
                    processing: stream.int_at(c + 1, 0, 18) * MIN / 2,
                }
            })
            .collect();
        jobs.sort_by_key(|j| j.release);
        let levels: Vec<u32> = (0..periods)
            .map(|p| (stream.u64_at(base + 100 + p as u64) % 4) as u32)
            .collect();
        let s = QueueScenario {
            jobs,
            periods,
            period_len,
            boundary,
        };
        s.validate().unwrap();
        (s, levels)
    }

    #[test]
    fn extra_agent_never_increases_any_period_delay() {
        let stream = Stream::new(0xdecade, "probe", 0);
        for probe in 0..200u64 {
            let boundary = if probe % 2 == 0 {
                Boundary::Penalty {
                    per_unserved: 50 * MIN,
                }
            } else {
                Boundary::Overtime {
                    extra_agents: 1,
                    extra_periods: 2,
                }
            };
            let (s, levels) = random_scenario(&stream, probe * 1000, boundary);
            let bump = (stream.u64_at(probe * 1000 + 999) % s.periods as u64) as usize;
            let mut raised = levels.clone();
            raised[bump] += 1;
            let base = s.simulate(&levels);
            let more = s.simulate(&raised);
            for p in 0..s.periods {
                assert!(
                    more.delay_by_period[p] <= base.delay_by_period[p],
                    "probe {probe}: period {p} delay rose from {} to {} when adding an agent",
                    base.delay_by_period[p],
                    more.delay_by_period[p],
                );
            }
        }
    }
}
