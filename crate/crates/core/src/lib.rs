//! Exact optimization of integer resource levels scored by discrete-event
//! simulation.
//!
//! The solver decomposes the problem into a mixed-integer master over the
//! per-period (or per-site) resource levels and a family of simulation
//! subproblems, one per (scenario, measure) pair. Whenever branch and bound
//! reaches an integer candidate, the simulator evaluates the true measure
//! values and the callback answers with optimality cuts expressed over the
//! master's level-indicator variables. Monotone measures admit progressively
//! stronger cut families (no-good, monotonic, windowed, strengthened) plus
//! two-dimensional initial cuts seeded before the search starts.
//!
//! Crate layout:
//! - [`rng`]: counter-based random streams so generation is reproducible
//!   and order-independent.
//! - [`instance`]: level domains, measure identifiers, the shared
//!   performance cache, and objective configuration.
//! - [`queue`]: the multi-server FCFS queue simulator with time-varying
//!   capacity used by the counter and staffing applications.
//! - [`cuts`]: cut construction and the adaptive window searches.
//! - [`master`], [`bnb`]: the LP-based branch-and-bound engine with lazy
//!   cut separation.
//! - [`engine`]: glue that runs the full decomposition for any application.
//! - [`apps`]: the three bundled applications (airport check-in counters,
//!   nurse staffing, ambulance location).
//! - [`oracle`]: budgeted exhaustive-enumeration baselines.
//! - [`report`], [`io`]: run reports, profiles, and instance (de)serialization.

pub mod apps;
pub mod bnb;
pub mod cuts;
pub mod engine;
pub mod instance;
pub mod io;
pub mod master;
pub mod oracle;
pub mod queue;
pub mod report;
pub mod rng;

/// Micro-units per minute: all queue times are integers counted in
/// thousandths of a minute so simulation comparisons are exact.
pub const MICROS_PER_MINUTE: i64 = 1000;
