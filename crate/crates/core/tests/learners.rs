use std::sync::Arc;

use sural_core::learners::{run_algorithm1_with, run_erm_passive, Diagnostics};
use sural_core::synth::{make_monotone, make_two_point, EtaSpec};
use sural_core::{
    FiniteClass, FunctionClass, LossKind, MonotoneGrid, SurrogateLoss, ThresholdParams,
    ThresholdVariant,
};

#[test]
fn two_point_pair_retains_f_star() {
    let problem = make_two_point(0.25, 0.1, 0.75).unwrap();
    let class = Arc::new(FunctionClass::Finite(
        FiniteClass::new(2, vec![vec![0.5, 0.5], vec![0.5, -0.5]]).unwrap(),
    ));
    let loss = SurrogateLoss::new(LossKind::Quadratic, 0.5).unwrap();
    let params = ThresholdParams::new(ThresholdVariant::Rademacher, &loss, 1, 0.1)
        .unwrap()
        .with_scale(0.02)
        .unwrap();
    let diag = Diagnostics { dis_mass_samples: 200 };
    let mut kept = 0;
    for seed in 0..100 {
        let (_, rec) = run_algorithm1_with(&problem, &class, &loss, 1 << 12, 256, &params, seed, diag).unwrap();
        assert!(rec.labels_used <= 256);
        if rec.f_star_retained == Some(true) {
            kept += 1;
        }
    }
    assert!(kept >= 95, "retained in {kept}/100");
}

#[test]
fn passive_monotone_reaches_small_excess() {
    let problem = make_monotone(EtaSpec::Linear).unwrap();
    let class = FunctionClass::MonotoneGrid(MonotoneGrid::new(64).unwrap());
    let loss = SurrogateLoss::new(LossKind::Quadratic, 1.0).unwrap();
    let good = (0..100)
        .filter(|&seed| {
            let (_, rec) = run_erm_passive(&problem, &class, &loss, 4096, seed).unwrap();
            rec.final_excess_error <= 0.15
        })
        .count();
    assert!(good >= 90, "{good}/100");
}

#[test]
fn active_monotone_is_seed_deterministic() {
    let problem = make_monotone(EtaSpec::Linear).unwrap();
    let class = Arc::new(FunctionClass::MonotoneGrid(MonotoneGrid::new(32).unwrap()));
    let loss = SurrogateLoss::new(LossKind::Quadratic, 1.0).unwrap();
    let params = ThresholdParams::new(ThresholdVariant::StrongConvexity, &loss, 2, 0.1)
        .unwrap()
        .with_scale(0.05)
        .unwrap();
    let diag = Diagnostics { dis_mass_samples: 500 };
    let run = || run_algorithm1_with(&problem, &class, &loss, 1 << 10, 200, &params, 9, diag).unwrap();
    let (h1, r1) = run();
    let (h2, r2) = run();
    assert_eq!(h1, h2);
    assert!(r1.labels_used <= 200);
    assert_eq!(r1.without_timing(), r2.without_timing());
}
