mod support;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rogue_core::linalg::{max_abs_diff, CMatrix, HermitianSpectrum};
use rogue_core::mpg::NodeId;
use rogue_core::quantum::{apply_unitary, collapse, evolve, fidelity, subspace_weight, Hamiltonian};

use support::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn propagator_matches_taylor_oracle(seed in any::<u64>(), n in 1usize..=8, dt in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_hermitian(&mut rng, n, 2.0);
        let u = HermitianSpectrum::new(&h).propagator(dt);
        prop_assert!(max_abs_diff(&u, &taylor_propagator(&h, dt)) < 1e-9);
    }

    #[test]
    fn evolve_agrees_with_explicit_unitary(seed in any::<u64>(), n in 1usize..=10, dt in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_hermitian(&mut rng, n, 1.0);
        let psi = random_state(&mut rng, basis(n));
        let ham = Hamiltonian::from_matrix(basis(n), h.clone()).unwrap();
        let a = evolve(&psi, &ham, dt).unwrap();
        let b = apply_unitary(&psi, &taylor_propagator(&h, dt)).unwrap();
        prop_assert!((a.amplitudes() - b.amplitudes()).iter().all(|z| z.norm() < 1e-9));
        prop_assert!((a.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn evolution_composes(seed in any::<u64>(), n in 1usize..=12, s in -1.0f64..1.0, t in -1.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ham = Hamiltonian::from_matrix(basis(n), random_hermitian(&mut rng, n, 1.0)).unwrap();
        let psi = random_state(&mut rng, basis(n));
        let stepwise = evolve(&evolve(&psi, &ham, s).unwrap(), &ham, t).unwrap();
        let direct = evolve(&psi, &ham, s + t).unwrap();
        prop_assert!(fidelity(&stepwise, &direct).unwrap() > 1.0 - 1e-10);
    }

    #[test]
    fn collapse_is_idempotent(seed in any::<u64>(), n in 2usize..=10, mask in 1u32..1024) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let psi = random_state(&mut rng, basis(n));
        let keep: BTreeSet<NodeId> = basis(n).into_iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, b)| b).collect();
        prop_assume!(!keep.is_empty());
        let once = collapse(&psi, &keep).unwrap();
        let twice = collapse(&once, &keep).unwrap();
        prop_assert!((subspace_weight(&once, &keep) - 1.0).abs() < 1e-12);
        prop_assert!(fidelity(&once, &twice).unwrap() > 1.0 - 1e-12);
    }
}

#[test]
fn zero_hamiltonian_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let psi = random_state(&mut rng, basis(4));
    let out = evolve(&psi, &Hamiltonian::zero(basis(4)), 5.0).unwrap();
    assert_eq!(out, psi);
    let u = HermitianSpectrum::new(&CMatrix::zeros(4, 4)).propagator(5.0);
    assert!(max_abs_diff(&u, &CMatrix::identity(4, 4)) < 1e-15);
}
