use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sural_core::complexity::u_hat;
use sural_core::oracle::{DiscreteScenario, GammaValue};
use sural_core::synth::make_two_point;
use sural_core::{
    rademacher_bit, FiniteClass, FunctionClass, Labeled, LabeledBatch, LossKind, Problem,
    SurrogateLoss,
};

fn quadratic(f_bar: f64) -> SurrogateLoss {
    SurrogateLoss::new(LossKind::Quadratic, f_bar).unwrap()
}

fn two_point_pair() -> DiscreteScenario {
    let class = FiniteClass::new(2, vec![vec![0.5, 0.5], vec![0.5, -0.5]]).unwrap();
    DiscreteScenario::new(class, make_two_point(0.25, 0.1, 0.75).unwrap(), quadratic(0.5)).unwrap()
}

#[test]
fn gamma_on_two_point_pair() {
    let s = two_point_pair();
    match s.exact_gamma_transform(0.05) {
        GammaValue::Finite(v) => assert!((v - 0.2).abs() <= 1e-12, "{v}"),
        GammaValue::Unbounded => panic!("expected a finite value"),
    }
    assert_eq!(s.exact_gamma_transform(0.1), GammaValue::Unbounded);
    assert_eq!(s.exact_gamma_transform(0.5), GammaValue::Unbounded);
}

fn three_atom_problem() -> Problem {
    Problem::discrete("three", vec![0.5, 0.3, 0.2], vec![0.8, 0.4, 0.65]).unwrap()
}

fn nested_classes() -> (FiniteClass, FiniteClass) {
    let big = FiniteClass::product(&[vec![-0.5, 0.5], vec![-1.0, 1.0], vec![0.0, 0.5]]).unwrap();
    let small = FiniteClass::new(3, big.members()[..3].iter().map(|f| f.params().to_vec()).collect()).unwrap();
    (big, small)
}

#[test]
fn exact_phi_shrinks_with_the_class() {
    let (big, small) = nested_classes();
    for m in 1..=4 {
        let pb = DiscreteScenario::new(big.clone(), three_atom_problem(), quadratic(1.0)).unwrap();
        let ps = DiscreteScenario::new(small.clone(), three_atom_problem(), quadratic(1.0)).unwrap();
        let (vb, vs) = (pb.exact_phi(m).unwrap(), ps.exact_phi(m).unwrap());
        assert!(vs >= 0.0 && vs <= vb + 1e-12, "m={m}: {vs} > {vb}");
    }
}

#[test]
fn gamma_transform_implication_holds() {
    let (big, _) = nested_classes();
    for kind in [LossKind::Quadratic, LossKind::Hinge, LossKind::Exponential] {
        let s = DiscreteScenario::new(big.clone(), three_atom_problem(), SurrogateLoss::new(kind, 1.0).unwrap()).unwrap();
        let excess = s.member_excess();
        for eps in [0.0, 0.01, 0.05, 0.1, 0.2] {
            let GammaValue::Finite(gamma) = s.exact_gamma_transform(eps) else {
                assert!(excess.iter().all(|&(_, e)| e <= eps + 1e-12));
                continue;
            };
            for &(sur, err) in &excess {
                if sur < gamma {
                    assert!(err <= eps + 1e-12, "{kind} eps={eps}: sur {sur} < {gamma} but err {err}");
                }
            }
        }
    }
}

#[test]
fn u_hat_concentration_on_discrete_scenario() {
    let (big, _) = nested_classes();
    let loss = quadratic(1.0);
    let scenario = DiscreteScenario::new(big.clone(), three_atom_problem(), loss.clone()).unwrap();
    let risks = scenario.member_risks();
    let star = (0..risks.len()).min_by(|&a, &b| risks[a].total_cmp(&risks[b])).unwrap();
    let class = FunctionClass::Finite(big.clone());
    let problem = three_atom_problem();
    let (draws, q, s) = (400u64, 24usize, 4.0);
    let mut held = 0;
    for draw in 0..draws {
        let mut rng = ChaCha8Rng::seed_from_u64(draw);
        let mut batch = LabeledBatch::new();
        for i in 0..q {
            let (x, y) = problem.sample(&mut rng);
            batch.push_with_bit(i as u64 + 1, Labeled::new(x, y), rademacher_bit(draw, i as u64)).unwrap();
        }
        let bound = u_hat(&class, big.members(), &batch, &loss, s, 1.0).unwrap();
        let emp = |k: usize| class.empirical_risk(&loss, &big.members()[k], batch.examples());
        if (0..risks.len()).all(|h| risks[h] - risks[star] <= emp(h) - emp(star) + bound) {
            held += 1;
        }
    }
    let floor = 1.0 - 6.0 * (-s).exp() - 0.02;
    assert!(held as f64 / draws as f64 >= floor, "{held}/{draws}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn exact_phi_is_nonnegative(
        masses in prop::collection::vec(0.05f64..1.0, 2..=3),
        etas in prop::collection::vec(0.0f64..=1.0, 3),
        m in 1usize..=4,
    ) {
        let total: f64 = masses.iter().sum();
        let masses: Vec<f64> = masses.iter().map(|p| p / total).collect();
        let atoms = masses.len();
        let problem = Problem::discrete("random", masses, etas[..atoms].to_vec()).unwrap();
        let class = FiniteClass::thresholds(atoms);
        let s = DiscreteScenario::new(class, problem, quadratic(1.0)).unwrap();
        prop_assert!(s.exact_phi(m).unwrap() >= 0.0);
    }
}
