use capacitylab::bodies::QuadCylinder;
use capacitylab::orbits::*;
use capacitylab::PhaseVector;
use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use std::f64::consts::{PI, TAU};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        rng_seed: RngSeed::Fixed(0x5eed_0004),
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config(200))]

    #[test]
    fn corner_runs_keep_their_invariants(
        t in 0.05..0.95f64,
        frac in 0.0..1.0f64,
        ang in 0.0..TAU,
        into_s2 in any::<bool>(),
    ) {
        let frame = OrbitFrame::new(t).unwrap();
        let rho = corner_rho2_max(t).sqrt() * frac;
        let entry = if into_s2 { Entry::S2 } else { Entry::S1 };
        let Some(p) = corner_start(&frame, rho * ang.cos(), rho * ang.sin(), entry) else {
            return Ok(());
        };
        prop_assert_eq!(classify_boundary_point(&p, &frame, 1e-8).unwrap(), Region::Corner);
        let orbit = integrate_orbit(&p, &frame, 8, 1e-3).unwrap();
        prop_assert!(orbit.continuity_gap() < 1e-9);
        let floor = (1.0 - t) / (2.0 * PI);
        let cyl = QuadCylinder::orbit_cylinder(t).unwrap();
        for a in &orbit.arcs {
            prop_assert!((a.action - a.line_action).abs() < 1e-7, "{:?}: {} vs {}", a.kind, a.action, a.line_action);
            for q in [&a.start, &a.end] {
                prop_assert!((q.norm().powi(2) - 1.0 / PI).abs() < 1e-9);
            }
            if a.kind == ArcKind::S2 {
                for k in 0..2 {
                    let d = a.start.z_norm_sq(k) - a.end.z_norm_sq(k);
                    prop_assert!(d.abs() < 1e-9);
                }
                // The S2 circle never comes closer to the z₁-plane than the
                // projected radius allows.
                prop_assert!(a.start.z_norm_sq(1) >= floor - 1e-12);
                // Interior points stay on the cylinder, not on a |z_k| level.
                for q in a.sample(&frame, 16) {
                    prop_assert!((cyl.value(q.as_slice()) - cyl.level()).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn transit_norms_match_the_corner(t in 0.05..0.95f64, frac in 0.0..1.0f64, ang in 0.0..TAU) {
        let frame = OrbitFrame::new(t).unwrap();
        let rho = corner_rho2_max(t).sqrt() * frac;
        let (a3, a4) = (rho * ang.cos(), rho * ang.sin());
        let (z1, z2) = s2_transit_norms(a3, a4, t).unwrap();
        prop_assert!((z1 + z2 - 1.0 / PI).abs() < 1e-12);
        if let Some(p) = corner_start(&frame, a3, a4, Entry::S2) {
            prop_assert!((p.z_norm_sq(0) - z1).abs() < 1e-9);
            prop_assert!((p.z_norm_sq(1) - z2).abs() < 1e-9);
        }
    }

    #[test]
    fn hopf_area_closed_form(t in 0.05..0.95f64, v in prop::collection::vec(-1.0..1.0f64, 4)) {
        let p = PhaseVector::new(v).unwrap();
        prop_assume!(p.norm() > 1e-3);
        let frame = OrbitFrame::new(t).unwrap();
        let exact = hopf_projection_area(&p, &frame).unwrap();
        let sampled = hopf_projection_area_sampled(&p, &frame, 400).unwrap();
        prop_assert!((exact - sampled).abs() < 1e-9 * (1.0 + exact));
    }
}

#[test]
fn glide_closed_forms() {
    for &t in &[0.1, 0.25, 0.4, 0.49] {
        let plus = glide_orbit(t, GlideBranch::Plus).unwrap();
        let minus = glide_orbit(t, GlideBranch::Minus).unwrap();
        assert!((plus.line_action - t).abs() < 1e-12);
        assert!((minus.line_action - t * (3.0 - 4.0 * t * t)).abs() < 1e-12);
        assert_eq!(plus.kind(), OrbitKind::GlidePlus);
        assert_eq!(minus.kind(), OrbitKind::GlideMinus);
        assert!(minus.line_action > plus.line_action);
        for branch in [GlideBranch::Plus, GlideBranch::Minus] {
            let c = glide_check(t, branch, 1e-3).unwrap();
            assert!(c.cone_residual < 1e-12, "{c:?}");
            assert!(c.alpha >= -1e-12 && c.beta >= -1e-12, "{c:?}");
            assert!(c.max_corner_drift < 1e-8, "{c:?}");
        }
    }
    for &t in &[0.5, 0.7] {
        assert!(glide_action(t, GlideBranch::Minus).is_err());
        assert!((glide_action(t, GlideBranch::Plus).unwrap() - t).abs() < 1e-15);
    }
    assert!(glide_action(0.0, GlideBranch::Plus).is_err());
}

#[test]
fn scan_finds_the_plus_glide_minimum() {
    for &t in &[0.3, 0.6] {
        let s = min_action_scan(t, 60, 3).unwrap();
        assert!((s.min_action - t).abs() < 1e-3, "t={t}: {}", s.min_action);
        assert!(s.closed.iter().all(|o| o.action >= t - 1e-9));
        for o in s.mixed() {
            assert!(o.action > t, "mixed orbit with action {}", o.action);
        }
        assert_eq!(s.summary_json(), min_action_scan(t, 60, 3).unwrap().summary_json());
    }
}

#[test]
fn rational_alternating_orbits_exceed_the_glide() {
    let t = 0.3;
    let frame = OrbitFrame::new(t).unwrap();
    let orbits = rational_mixed_orbits(&frame, 5, 60, 1e-3);
    assert!(!orbits.is_empty());
    for o in &orbits {
        assert!(o.closed && o.is_mixed());
        assert!(o.action > t);
        assert!((o.action - o.line_action).abs() < 1e-6);
    }
}

#[test]
fn bad_parameters() {
    assert!(OrbitFrame::new(1.0).is_err());
    assert!(s2_transit_norms(5.0, 0.0, 0.5).is_err());
    let frame = OrbitFrame::new(0.5).unwrap();
    let p = PhaseVector::new(vec![1.0 / PI.sqrt(), 0.0, 0.0, 0.0]).unwrap();
    assert!(integrate_orbit(&p, &frame, 4, 0.5).is_err());
}
