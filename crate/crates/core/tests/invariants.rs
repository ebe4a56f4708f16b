//! Property suites: dual-group algebra, Fourier periodicity, projector
//! identities, oracle mass accounting, and simulator agreement.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use proptest::prelude::*;

use mrw_core::chain::InitialLaw;
use mrw_core::exactdist::{Evolver, WindowPolicy};
use mrw_core::lattice::LatticeSpec;
use mrw_core::spectral::{fourier_matrix, spectral_summary};
use mrw_core::{fixtures, FiniteMRW};

fn h3_basis() -> impl Strategy<Value = Matrix2<f64>> {
    (
        -3.0f64..3.0,
        -3.0f64..3.0,
        -3.0f64..3.0,
        -3.0f64..3.0,
    )
        .prop_map(|(a, b, c, d)| Matrix2::new(a, b, c, d))
        .prop_filter("invertible", |m| m.determinant().abs() > 0.5)
}

fn finite_fixture() -> impl Strategy<Value = FiniteMRW> {
    prop_oneof![
        Just(fixtures::lazy2d()),
        Just(fixtures::srw2d()),
        Just(fixtures::ts1()),
        Just(fixtures::diag2d()),
        Just(fixtures::seesaw2()),
    ]
}

proptest! {
    #[test]
    fn bidual_pairing_lands_in_two_pi_z(basis in h3_basis()) {
        let spec = LatticeSpec::h3(basis).unwrap();
        let tau = 2.0 * std::f64::consts::PI;
        for col in 0..2 {
            let g: Vector2<f64> = basis.column(col).into();
            for gstar in spec.dual_generators() {
                let pairing = g.dot(gstar) / tau;
                prop_assert!((pairing - pairing.round()).abs() < 1e-12,
                    "pairing {} not in 2 pi Z", g.dot(gstar));
            }
        }
    }

    #[test]
    fn reduce_mod_dual_is_idempotent(basis in h3_basis(),
                                     tx in -50.0f64..50.0, ty in -50.0f64..50.0) {
        let spec = LatticeSpec::h3(basis).unwrap();
        let t = Vector2::new(tx, ty);
        let r = spec.reduce_mod_dual(&t);
        let rr = spec.reduce_mod_dual(&r);
        prop_assert!((r - rr).norm() < 1e-10);
        // The difference is an integer combination of dual generators.
        let a = spec.dual_basis().unwrap();
        let coeffs = a.try_inverse().unwrap() * (t - r);
        prop_assert!((coeffs.x - coeffs.x.round()).abs() < 1e-10);
        prop_assert!((coeffs.y - coeffs.y.round()).abs() < 1e-10);
    }

    #[test]
    fn haar_ball_translation_invariant(basis in h3_basis(),
                                       kx in -20i64..20, ky in -20i64..20) {
        let spec = LatticeSpec::h3(basis).unwrap();
        let eps = 0.5 * spec.epsilon_s();
        let origin = spec.haar_ball(&Vector2::zeros(), eps).unwrap();
        let shifted = spec.haar_ball(&spec.point([kx, ky]).unwrap(), eps).unwrap();
        prop_assert_eq!(origin, shifted);
    }

    #[test]
    fn fourier_periodic_mod_dual(model in finite_fixture(),
                                 tx in -10.0f64..10.0, ty in -10.0f64..10.0,
                                 k1 in -3i64..=3, k2 in -3i64..=3) {
        let t = Vector2::new(tx, ty);
        let gens = model.lattice().dual_generators();
        let g = gens[0] * k1 as f64 + gens[1] * k2 as f64;
        let q_t = fourier_matrix(&model, &t);
        let q_tg = fourier_matrix(&model, &(t + g));
        let diff = (&q_t.entries - &q_tg.entries)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        prop_assert!(diff < 1e-12, "periodicity violated by {diff}");
    }

    #[test]
    fn spectral_radius_at_most_one(model in finite_fixture(),
                                   tx in -10.0f64..10.0, ty in -10.0f64..10.0) {
        let s = spectral_summary(&model, &Vector2::new(tx, ty)).unwrap();
        prop_assert!(s.radius <= 1.0 + 1e-12, "radius {}", s.radius);
    }

    #[test]
    fn projector_identities_near_zero(model in finite_fixture(),
                                      tx in -0.3f64..0.3, ty in -0.3f64..0.3) {
        let t = Vector2::new(tx, ty);
        let s = spectral_summary(&model, &t).unwrap();
        prop_assume!(s.lambda.is_some());
        let lambda = s.lambda.unwrap();
        let p = s.projector.unwrap();
        let pp = &p * &p;
        let idem = (&pp - &p).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(idem < 1e-10, "projector not idempotent: {idem}");
        let q = fourier_matrix(&model, &t).entries;
        let qp = &q * &p;
        let lp = p.map(|z| z * lambda);
        let comm = (&qp - &lp).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(comm < 1e-10, "Q P != lambda P: {comm}");
    }

    #[test]
    fn entrywise_modulus_bounded_by_kernel(model in finite_fixture(),
                                           tx in -10.0f64..10.0, ty in -10.0f64..10.0) {
        let q = fourier_matrix(&model, &Vector2::new(tx, ty));
        for x in 0..model.n_states() {
            for y in 0..model.n_states() {
                prop_assert!(q.entries[(x, y)].norm() <= model.kernel()[(x, y)] + 1e-14);
            }
        }
    }

    #[test]
    fn mass_conservation_short_runs(model in finite_fixture(), steps in 1usize..60) {
        let mut e = Evolver::new(&model, &InitialLaw::Dirac(0),
                                 WindowPolicy::new([80, 80], 1e-12)).unwrap();
        e.run_to(steps).unwrap();
        prop_assert!((e.dist().total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_fixture_mass_is_even(steps in 1usize..40) {
        let lazy = fixtures::lazy2d();
        let mut e = Evolver::new(&lazy, &InitialLaw::Dirac(0),
                                 WindowPolicy::new([50, 50], 1e-12)).unwrap();
        e.run_to(steps).unwrap();
        for kx in -5i64..=5 {
            for ky in -5i64..=5 {
                let a = e.dist().mass_at(0, [kx, ky]);
                let b = e.dist().mass_at(0, [-kx, -ky]);
                prop_assert!((a - b).abs() < 1e-15);
            }
        }
    }
}

/// The projector at the origin has stationary rows, and small-t projectors
/// approach it.
#[test]
fn projector_limit_at_zero() {
    for model in [fixtures::lazy2d(), fixtures::ts1(), fixtures::seesaw2()] {
        let pi = model.stationary().unwrap();
        let s0 = spectral_summary(&model, &Vector2::zeros()).unwrap();
        let p0 = s0.projector.unwrap();
        for x in 0..model.n_states() {
            for y in 0..model.n_states() {
                assert!((p0[(x, y)] - Complex64::new(pi.pi[y], 0.0)).norm() < 1e-10);
            }
        }
        let dir = Vector2::new(0.6, -0.8);
        let st = spectral_summary(&model, &(dir * 1e-3)).unwrap();
        let pt = st.projector.unwrap();
        let drift = (&pt - &p0).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(drift < 1e-2, "projector far from limit: {drift}");
    }
}

/// Monte Carlo batches agree with the exact distribution at a checkpoint:
/// every lattice point carrying at least 1e-3 of mass matches within four
/// binomial standard errors.
#[test]
fn simulation_matches_oracle_histogram() {
    use mrw_core::montecarlo::{simulate, SimConfig, SimModel, SimStart};
    let model = fixtures::ts1();
    let n = 100usize;
    let n_traj = 20_000usize;

    let mut evolver = Evolver::new(
        &model,
        &InitialLaw::Dirac(0),
        WindowPolicy::for_horizon(&model, n).unwrap(),
    )
    .unwrap();
    evolver.run_to(n).unwrap();

    let batch = simulate(
        &SimModel::Finite(model.clone()),
        SimStart::State(0),
        &SimConfig {
            n_steps: n,
            n_traj,
            seed: 2024,
            checkpoints: vec![n],
            targets: vec![],
        },
    )
    .unwrap();
    let hist = batch.checkpoint_histogram(0);

    let (lo, hi) = evolver.dist().window();
    let mut checked = 0;
    for kx in lo[0]..=hi[0] {
        for ky in lo[1]..=hi[1] {
            let p: f64 = evolver.dist().state_masses([kx, ky]).iter().sum();
            if p < 1e-3 {
                continue;
            }
            let observed = *hist.get(&(kx, ky)).unwrap_or(&0) as f64 / n_traj as f64;
            let se = (p * (1.0 - p) / n_traj as f64).sqrt();
            assert!(
                (observed - p).abs() < 4.0 * se,
                "({kx},{ky}): observed {observed:.5} vs exact {p:.5}"
            );
            checked += 1;
        }
    }
    assert!(checked > 50, "histogram comparison covered only {checked} points");
}
