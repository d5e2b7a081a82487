use proptest::prelude::*;
use sural_core::complexity::{
    d_hat, phi_hat, s_hat_default, t_hat_recursive_vc, t_hat_strong_convexity, u_hat,
};
use sural_core::{
    FiniteClass, FunctionClass, Label, Labeled, LabeledBatch, LossKind, Point, RecursionState,
    SurrogateLoss, ThresholdParams, ThresholdVariant,
};

fn batch(raw: &[(usize, bool, bool)]) -> LabeledBatch {
    let lab = |b: bool| if b { Label::Positive } else { Label::Negative };
    let examples = raw.iter().map(|&(a, y, _)| Labeled::new(Point::Atom(a), lab(y))).collect();
    let bits: Vec<Label> = raw.iter().map(|&(_, _, xi)| lab(xi)).collect();
    LabeledBatch::from_examples(examples, &bits)
}

fn class() -> FunctionClass {
    FunctionClass::Finite(
        FiniteClass::product(&[vec![-1.0, 0.5], vec![-0.5, 1.0], vec![0.0, 1.0]]).unwrap(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn estimators_ignore_member_order(
        raw in prop::collection::vec((0usize..3, any::<bool>(), any::<bool>()), 1..20),
        k in 0usize..4,
        rot in 0usize..8,
    ) {
        let loss = SurrogateLoss::new(LossKind::ALL[k], 1.0).unwrap();
        let class = class();
        let FunctionClass::Finite(finite) = &class else { unreachable!() };
        let members = finite.members().to_vec();
        let mut rotated = members.clone();
        rotated.rotate_left(rot);
        rotated.reverse();
        let b = batch(&raw);
        let (p1, p2) = (phi_hat(&class, &members, &b, &loss), phi_hat(&class, &rotated, &b, &loss));
        let (d1, d2) = (d_hat(&class, &members, &b, &loss), d_hat(&class, &rotated, &b, &loss));
        prop_assert!(p1 >= 0.0 && d1 >= 0.0);
        prop_assert!((p1 - p2).abs() < 1e-12);
        prop_assert!((d1 - d2).abs() < 1e-12);
        // Flipping every Rademacher bit negates the pair difference, and the
        // sup over ordered pairs is symmetric in the sign.
        let flipped: Vec<_> = raw.iter().map(|&(a, y, xi)| (a, y, !xi)).collect();
        prop_assert!((phi_hat(&class, &members, &batch(&flipped), &loss) - p1).abs() < 1e-12);
    }

    #[test]
    fn u_hat_singleton_decreases_in_q(q in 1usize..200, extra in 1usize..50, s in 1.0f64..10.0) {
        let loss = SurrogateLoss::new(LossKind::Quadratic, 1.0).unwrap();
        let class = class();
        let FunctionClass::Finite(finite) = &class else { unreachable!() };
        let one = vec![finite.members()[0].clone()];
        let small = batch(&vec![(0, true, true); q]);
        let large = batch(&vec![(0, true, true); q + extra]);
        let a = u_hat(&class, &one, &small, &loss, s, 1.0).unwrap();
        let b = u_hat(&class, &one, &large, &loss, s, 1.0).unwrap();
        prop_assert!(b <= a);
        let empty = u_hat(&class, &one, &LabeledBatch::new(), &loss, s, 1.0).unwrap();
        prop_assert!((empty - 752.0 * loss.loss_bound() * s).abs() < 1e-9);
    }

    #[test]
    fn strong_convexity_threshold_nonincreasing_in_q(
        k in 0usize..4,
        q in 0usize..100_000,
        step in 1usize..10_000,
        m_exp in 1u32..30,
        vc in 1u32..10,
    ) {
        let loss = SurrogateLoss::new(LossKind::ALL[k], 1.0).unwrap();
        let params = ThresholdParams::new(ThresholdVariant::StrongConvexity, &loss, vc, 0.1).unwrap();
        let m = 1u64 << m_exp;
        let a = t_hat_strong_convexity(q, m, &loss, &params).unwrap();
        let b = t_hat_strong_convexity(q + step, m, &loss, &params).unwrap();
        prop_assert!(b <= a + 1e-12, "q={} -> {}, q+{} -> {}", q, a, step, b);
        prop_assert!(a <= loss.loss_bound());
    }

    #[test]
    fn recursive_gamma_never_exceeds_four_l_bar(
        k in 0usize..4,
        fractions in prop::collection::vec(0.0f64..=1.0, 1..24),
        scale in 0.0f64..2.0,
    ) {
        let loss = SurrogateLoss::new(LossKind::ALL[k], 1.0).unwrap();
        let params = ThresholdParams::new(ThresholdVariant::RecursiveVc, &loss, 2, 0.1)
            .unwrap()
            .with_scale(scale)
            .unwrap();
        let l_bar = loss.loss_bound();
        let mut state = RecursionState::new();
        let mut m = 2u64;
        for frac in fractions {
            let gamma = state.gamma(m, l_bar).unwrap();
            prop_assert!(gamma <= 4.0 * l_bar + 1e-12, "gamma {} at m={}", gamma, m);
            // At most m/2 labels arrive in the epoch (m/2, m].
            let q = ((m / 2) as f64 * frac).round() as usize;
            let (t, next) = t_hat_recursive_vc(&state, q, m, &loss, &params).unwrap();
            prop_assert!(t >= 0.0);
            state = next;
            m *= 2;
        }
    }
}

#[test]
fn recursion_rejects_skipped_updates() {
    let loss = SurrogateLoss::new(LossKind::Quadratic, 1.0).unwrap();
    let params = ThresholdParams::new(ThresholdVariant::RecursiveVc, &loss, 2, 0.1).unwrap();
    let (_, state) = t_hat_recursive_vc(&RecursionState::new(), 1, 2, &loss, &params).unwrap();
    assert!(t_hat_recursive_vc(&state, 1, 8, &loss, &params).is_err());
    assert!(t_hat_recursive_vc(&RecursionState::new(), 1, 4, &loss, &params).is_err());
}

#[test]
fn s_hat_matches_hand_value() {
    let want = (12.0 * 11.0f64.powi(2) / 0.1).ln();
    assert!((s_hat_default(1024, 0.1) - want).abs() < 1e-12);
}
