//! End-to-end check on tiny ambulance instances: the decomposition runs
//! in approximate-validity mode, so it must never beat the exhaustive
//! optimum and should normally land on it.

use branchsim_core::apps::alp::{generate, AlpParams};
use branchsim_core::bnb::SolveStatus;
use branchsim_core::cuts::CutKind;
use branchsim_core::engine::{Engine, EngineConfig};
use branchsim_core::instance::ObjectiveMode;
use branchsim_core::oracle;

#[test]
fn tiny_dispatch_instances_stay_close_to_enumeration() {
    let mut exact = 0usize;
    let seeds = [0u64, 1, 2, 3, 4];
    for &seed in &seeds {
        let instance = generate(AlpParams::tiny(seed)).unwrap();
        let reference = oracle::alp_optimum(&instance, ObjectiveMode::Mean, 1_000, 1).unwrap();
        let cfg = EngineConfig::new(
            CutKind::Strengthened,
            true,
            instance.objective(ObjectiveMode::Mean),
        );
        let out = Engine::new(&instance, cfg).solve().unwrap();
        assert_eq!(out.status, SolveStatus::Optimal, "seed {seed}");
        let objective = out.objective.expect("an incumbent");
        assert!(
            objective >= reference.objective - 1e-9,
            "seed {seed}: an exhaustive search can never lose"
        );
        if (objective - reference.objective).abs() <= 1e-9 {
            exact += 1;
        }
    }
    // Approximate cuts may occasionally cost the optimum, but on these
    // tiny fleets they should usually hit it.
    assert!(exact >= 3, "only {exact}/5 tiny instances solved exactly");
}
