use capacitylab::symcore::*;
use capacitylab::PhaseVector;
use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        rng_seed: RngSeed::Fixed(0x5eed_0001),
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn vector(n: usize) -> impl Strategy<Value = PhaseVector> {
    prop::collection::vec(-3.0..3.0f64, 2 * n).prop_map(|v| PhaseVector::new(v).unwrap())
}

fn printed(t: f64, d1: f64, d2: f64, n: usize) -> Vec<SymplecticMatrix> {
    vec![
        matrix_mt(t, n).unwrap(),
        matrix_a_gw(t, n).unwrap(),
        matrix_a_orbit_2n(t, n).unwrap().a,
        matrix_a_orbit_2n(t, n).unwrap().a_inv,
        matrix_s(d1, d2, n).unwrap(),
    ]
}

proptest! {
    #![proptest_config(config(1000))]

    #[test]
    fn printed_matrices_are_symplectic(
        t in 0.01..0.99f64,
        d1 in 0.1..10.0f64,
        extra in 0.0..5.0f64,
        n in 2usize..5,
    ) {
        for m in printed(t, d1, 1.0 / d1 + extra, n) {
            prop_assert!(is_symplectic(m.matrix(), 1e-9).unwrap());
        }
    }

    #[test]
    fn printed_matrices_preserve_omega(
        t in 0.01..0.99f64,
        d1 in 0.2..5.0f64,
        extra in 0.0..3.0f64,
        u in vector(2),
        v in vector(2),
    ) {
        let w = symplectic_form(&u, &v).unwrap();
        for m in printed(t, d1, 1.0 / d1 + extra, 2) {
            let mw = symplectic_form(&m.apply(&u), &m.apply(&v)).unwrap();
            prop_assert!((mw - w).abs() < 1e-9 * (1.0 + w.abs()), "{} vs {}", mw, w);
        }
    }

    #[test]
    fn form_is_antisymmetric(u in vector(3), v in vector(3)) {
        let a = symplectic_form(&u, &v).unwrap();
        let b = symplectic_form(&v, &u).unwrap();
        prop_assert!((a + b).abs() < 1e-12);
        prop_assert!(symplectic_form(&u, &u).unwrap().abs() < 1e-12);
        let jj = u.j().j();
        prop_assert!((&jj + &u).norm() < 1e-14);
    }

    #[test]
    fn kahler_angle_is_unitary_invariant(seed in any::<u64>(), a in 0.0..6.3f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // An orthonormal pair with a prescribed twist.
        let n1 = PhaseVector::new(vec![a.cos(), 0.0, a.sin(), 0.0]).unwrap();
        let n2 = PhaseVector::new(vec![0.0, a.cos(), 0.0, -a.sin()]).unwrap();
        let before = kahler_angle(&n1, &n2).unwrap();
        let u = random_unitary(2, &mut rng);
        let after = kahler_angle(&u.apply(&n1), &u.apply(&n2)).unwrap();
        prop_assert!((before - after).abs() < 1e-9);
        prop_assert!(is_symplectic(u.matrix(), 1e-9).unwrap());
        let o = u.matrix().transpose() * u.matrix();
        prop_assert!((o - DMatrix::identity(4, 4)).amax() < 1e-12);
    }

    #[test]
    fn inverse_is_two_sided(seed in any::<u64>(), factors in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_symplectic(2, factors, 0.7, &mut rng);
        prop_assert!(is_symplectic(m.matrix(), 1e-8).unwrap());
        let id = m.compose(&m.inverse());
        prop_assert!((id.matrix() - DMatrix::identity(4, 4)).amax() < 1e-8);
    }
}

proptest! {
    #![proptest_config(config(200))]

    #[test]
    fn williamson_spectrum_is_congruence_invariant(seed in any::<u64>(), r1 in 0.2..3.0f64, r2 in 0.2..3.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![r1, r1, r2, r2]));
        let s = random_symplectic(2, 3, 0.5, &mut rng);
        let q = s.matrix().transpose() * &p * s.matrix();
        let a = symplectic_spectrum(&p).unwrap();
        let b = symplectic_spectrum(&q).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-8 * (1.0 + x));
        }
    }
}

#[test]
fn al_is_not_symplectic() {
    let m = matrix_al(3.0, 2).unwrap();
    assert_eq!(m, DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1.0, 3.0, 3.0])));
    assert!(!is_symplectic(&matrix_al(2.0, 2).unwrap(), 1e-9).unwrap());
    assert!(is_symplectic(&matrix_al(1.0, 2).unwrap(), 1e-9).unwrap());
}

#[test]
fn parameters_outside_the_open_interval_are_rejected() {
    for t in [0.0, 1.0, -0.2, 1.5] {
        assert!(matrix_mt(t, 2).is_err());
        assert!(matrix_a_gw(t, 2).is_err());
        assert!(matrix_a_orbit(t).is_err());
    }
    assert!(matrix_s(0.5, 1.0, 2).is_err());
    assert!(matrix_mt(0.5, 1).is_err());
}

#[test]
fn identity_at_unit_stretch() {
    let s = matrix_s(1.0, 1.0, 3).unwrap();
    assert_eq!(s.matrix(), &DMatrix::identity(6, 6));
}

#[test]
fn ellipsoid_capacity_from_the_williamson_form() {
    // E(1, 0.25): form π diag(1, 1, 4, 4) has symplectic eigenvalues π, 4π.
    let p = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1.0, 4.0, 4.0])) * std::f64::consts::PI;
    assert!((ellipsoid_capacity_from_form(&p).unwrap() - 0.25).abs() < 1e-12);
}
