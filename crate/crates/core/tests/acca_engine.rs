//! End-to-end check on small check-in instances: the decomposition must
//! land exactly on the exhaustively enumerated optimum.

use branchsim_core::apps::acca::{generate, AccaParams};
use branchsim_core::cuts::CutKind;
use branchsim_core::engine::{Engine, EngineConfig};
use branchsim_core::instance::ObjectiveMode;
use branchsim_core::oracle;

#[test]
fn toy_checkin_reaches_the_enumerated_optimum() {
    let instance = generate(AccaParams::toy(42, 2, 4, 3)).unwrap();
    let reference = oracle::acca_optimum(&instance, ObjectiveMode::Mean, 1_000_000).unwrap();
    let cfg = EngineConfig::new(
        CutKind::Strengthened,
        true,
        instance.objective(ObjectiveMode::Mean),
    );
    let engine = Engine::new(&instance, cfg);
    let out = engine.solve().unwrap();
    let objective = out.objective.expect("an incumbent");
    assert!(
        (objective - reference.objective).abs() <= 1e-7,
        "engine {objective} vs oracle {}",
        reference.objective
    );
    assert!(out.benders_cuts > 0 || out.initial_cuts > 0);
}

#[test]
fn every_cut_family_agrees_on_a_toy_instance() {
    let instance = generate(AccaParams::toy(7, 3, 6, 3)).unwrap();
    let reference = oracle::acca_optimum(&instance, ObjectiveMode::Mean, 1_000_000).unwrap();
    for kind in [
        CutKind::NoGood,
        CutKind::Monotonic,
        CutKind::Local,
        CutKind::Strengthened,
    ] {
        for initial in [false, true] {
            let cfg =
                EngineConfig::new(kind, initial, instance.objective(ObjectiveMode::Mean));
            let label = cfg.method_label();
            let out = Engine::new(&instance, cfg).solve().unwrap();
            let objective = out.objective.expect("an incumbent");
            assert!(
                (objective - reference.objective).abs() <= 1e-7,
                "{label}: engine {objective} vs oracle {}",
                reference.objective
            );
        }
    }
}
