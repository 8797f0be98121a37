//! Property tests for structural invariants: conditional variances,
//! kernel routes, reflection, divergence monotonicity and stationary
//! transforms.

use fraclt::cov_kernels::{ProcessKind, TwoTimeStats};
use fraclt::frac_calc::{MultiIndex, Sign};
use fraclt::moment_engine::{hat_moment, reflection_check, second_moment, JRoute, JVariant, KernelPlan};
use fraclt::slnd::{cond_var, stationary_transform_r};
use proptest::prelude::*;

fn any_kind() -> impl Strategy<Value = ProcessKind> {
    prop_oneof![
        (0.15..0.85f64).prop_map(|h| ProcessKind::fbm(h).unwrap()),
        (0.15..0.85f64).prop_map(|h| ProcessKind::subfbm(h).unwrap()),
        (0.15..0.85f64, 0.3..1.0f64).prop_map(|(h, k)| ProcessKind::bifbm(h, k).unwrap()),
    ]
}

/// distinct times in (0, 1] with pairwise gaps ≥ 0.05
fn separated_times(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::btree_set(1u32..=20, 1..=max).prop_map(|s| s.into_iter().map(|k| k as f64 * 0.05).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conditioning_on_more_times_never_increases_variance(
        kind in any_kind(),
        t in 0.1..1.5f64,
        times in separated_times(6),
        extra in 0.01..1.4f64,
    ) {
        prop_assume!(times.iter().chain([&extra]).all(|s| (s - t).abs() > 1e-3));
        prop_assume!(times.iter().all(|s| (s - extra).abs() > 1e-3));
        let base = cond_var(&kind, t, &times).unwrap().value;
        let mut more = times.clone();
        more.push(extra);
        let refined = cond_var(&kind, t, &more).unwrap().value;
        prop_assert!(refined <= base * (1.0 + 1e-9) + 1e-14, "{refined} > {base}");
    }

    #[test]
    fn fbm_conditional_variance_scales_with_time(
        h in 0.15..0.85f64,
        t in 0.1..1.0f64,
        times in separated_times(5),
        c in 0.2..5.0f64,
    ) {
        prop_assume!(times.iter().all(|s| (s - t).abs() > 1e-3));
        let kind = ProcessKind::fbm(h).unwrap();
        let v = cond_var(&kind, t, &times).unwrap().value;
        let scaled: Vec<f64> = times.iter().map(|s| c * s).collect();
        let w = cond_var(&kind, c * t, &scaled).unwrap().value;
        let want = c.powf(2.0 * h) * v;
        prop_assert!((w - want).abs() <= 1e-8 * want, "{w} vs {want}");
    }

    #[test]
    fn schur_complement_matches_determinant_ratio(
        kind in any_kind(),
        t in 0.02..1.0f64,
        times in separated_times(5),
    ) {
        prop_assume!(times.iter().all(|s| (s - t).abs() >= 0.02));
        let r = cond_var(&kind, t, &times).unwrap();
        prop_assert!(r.determinant_residual <= 1e-10, "residual {}", r.determinant_residual);
    }

    #[test]
    fn closed_form_route_matches_generic_quadrature(
        kind in any_kind(),
        k in 0u32..=3,
        s in 0.05..1.0f64,
        u in 0.01..1.0f64,
        eps in 1e-3..0.5f64,
        sign in prop_oneof![Just(Sign::Plus), Just(Sign::Minus)],
    ) {
        let st = TwoTimeStats::from_gap(&kind, s, u, eps).unwrap();
        let a = k as f64;
        let closed = KernelPlan::new(JVariant::Full, a, 0.0, sign, JRoute::ClosedForm).unwrap().eval(&st).0;
        let generic = KernelPlan::new(JVariant::Full, a, 0.0, sign, JRoute::Generic).unwrap().eval(&st).0;
        prop_assert!((closed - generic).abs() <= 1e-6 * closed.abs().max(1e-300), "{closed} vs {generic}");
    }

    #[test]
    fn stable_increment_variance_agrees_with_covariance_form(
        kind in any_kind(),
        s in 0.0..2.0f64,
        u in 1e-6..2.0f64,
        eps in 0.0..0.5f64,
    ) {
        // D is computed from the increment variance; A − 2B + C cancels, so
        // compare on the scale of A + C
        let st = TwoTimeStats::from_gap(&kind, s, u, eps).unwrap();
        let naive = st.a - 2.0 * st.b + st.c;
        prop_assert!((st.d - naive).abs() <= 1e-12 * (st.a + st.c), "{} vs {naive}", st.d);
    }

    #[test]
    fn stationary_transform_is_even(kind in any_kind(), t in 0.0..20.0f64) {
        let a = stationary_transform_r(&kind, t);
        let b = stationary_transform_r(&kind, -t);
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn moments_grow_as_eps_shrinks_in_divergent_regime(
        h in 0.4..0.7f64,
        k in 1u32..=2,
        eps in 1e-3..5e-2f64,
    ) {
        let kind = ProcessKind::fbm(h).unwrap();
        let alpha = MultiIndex::new(vec![k as f64]).unwrap();
        prop_assume!(alpha.existence_margin(h) < 0.0);
        let coarse = second_moment(&alpha, &[0.0], 1.0, eps, &kind, Sign::Plus).unwrap();
        let fine = second_moment(&alpha, &[0.0], 1.0, eps / 4.0, &kind, Sign::Plus).unwrap();
        prop_assert!(fine > coarse, "{fine} ≤ {coarse}");
    }

    #[test]
    fn reflection_leaves_second_moment_unchanged(
        kind in any_kind(),
        a in 0.0..1.5f64,
        x in -1.0..1.0f64,
        eps in 0.05..0.5f64,
    ) {
        prop_assume!(kind.hurst() >= 0.3);
        let alpha = MultiIndex::new(vec![a]).unwrap();
        let r = reflection_check(&alpha, &[x], 1.0, eps, &kind, 1e-8).unwrap();
        prop_assert!(r.pass, "relative gap {}", r.residual);
    }

    #[test]
    fn leading_term_gap_shrinks_toward_zero_eps(h in 0.4..0.6f64, eps in 5e-3..5e-2f64) {
        let kind = ProcessKind::fbm(h).unwrap();
        let alpha = MultiIndex::new(vec![1.0]).unwrap();
        let gap = |e: f64| {
            let full = second_moment(&alpha, &[0.0], 1.0, e, &kind, Sign::Plus).unwrap();
            let hat = hat_moment(&alpha, 1.0, e, &kind).unwrap();
            (full - hat).abs() / hat
        };
        let (g0, g1) = (gap(eps), gap(eps / 10.0));
        prop_assert!(g1 < g0, "gap {g1} at ε/10 ≥ {g0} at ε");
    }
}
