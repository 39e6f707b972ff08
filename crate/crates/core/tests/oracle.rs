//! Product-state results against the dense statevector, which applies one 2×2
//! gate at a time and never uses the product structure.

use plateau::circuitsim::{
    fidelity_kernel_probability, loss_exact, prepare_rx_layer, Angles, DenseState, Observable, PauliZTerm,
    RotationConvention, ZMask,
};
use plateau::measurement::{cvar_eigenvalue_povm, parity_eigen_distribution};
use plateau::rng::RngStream;
use proptest::prelude::*;
use rand::Rng;
use std::f64::consts::TAU;

const CONVENTIONS: [RotationConvention; 2] = [RotationConvention::HalfAngle, RotationConvention::FullAngle];

fn random_angles<R: Rng>(rng: &mut R, n: usize) -> Angles {
    Angles::new((0..n).map(|_| rng.random_range(-TAU..TAU)).collect()).unwrap()
}

/// Probability of every eigenvalue of `obs`, read off the dense amplitudes.
fn dense_spectrum(dense: &DenseState, obs: &Observable) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for b in 0..1usize << dense.num_qubits() {
        let e = obs.eigenvalue(b as u64);
        match out.iter_mut().find(|(l, _)| (l - e).abs() < 1e-12) {
            Some(slot) => slot.1 += dense.probability(b),
            None => out.push((e, dense.probability(b))),
        }
    }
    out
}

#[test]
fn expectations_match_dense() {
    let mut rng = RngStream::new(11, 0).rng();
    for case in 0..100 {
        let n = 1 + case % 10;
        let conv = CONVENTIONS[case % 2];
        let theta = random_angles(&mut rng, n);
        let state = prepare_rx_layer(&theta, conv);
        let dense = DenseState::rx_layer(&theta, conv).unwrap();
        let mask = ZMask(rng.random_range(1..1u64 << n));
        assert!((state.z_parity_expectation(mask).unwrap() - dense.z_parity_expectation(mask)).abs() < 1e-10);
        for q in 0..n {
            assert!((state.x_expectation(q).unwrap() - dense.x_expectation(q)).abs() < 1e-10);
        }
        let obs = Observable::global_z(n).unwrap();
        assert!((loss_exact(&theta, &obs, conv).unwrap() - dense.observable_expectation(&obs)).abs() < 1e-10);
    }
}

#[test]
fn kernel_matches_dense_overlap() {
    let mut rng = RngStream::new(12, 0).rng();
    for case in 0..100 {
        let n = 1 + case % 10;
        let conv = CONVENTIONS[case % 2];
        let (x, y) = (random_angles(&mut rng, n), random_angles(&mut rng, n));
        let (a, b) = (DenseState::rx_layer(&x, conv).unwrap(), DenseState::rx_layer(&y, conv).unwrap());
        let overlap = a.inner(&b).norm_sqr();
        assert!((fidelity_kernel_probability(&x, &y, conv).unwrap() - overlap).abs() < 1e-10);
    }
}

#[test]
fn cvar_distribution_matches_dense() {
    let mut rng = RngStream::new(13, 0).rng();
    for case in 0..100 {
        let n = 4 + case % 7;
        let conv = CONVENTIONS[case % 2];
        let c = [1.0, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let theta = random_angles(&mut rng, n);
        let obs = Observable::cvar_hamiltonian(n, c).unwrap();
        let dense = DenseState::rx_layer(&theta, conv).unwrap();
        let got = cvar_eigenvalue_povm(c, &theta, conv).unwrap().distribution;
        for (label, p) in dense_spectrum(&dense, &obs) {
            assert!((got.probability_of(label) - p).abs() < 1e-10, "label {label}");
        }
    }
}

#[test]
fn parity_eigen_matches_dense() {
    let mut rng = RngStream::new(14, 0).rng();
    for case in 0..50 {
        let n = 2 + case % 7;
        let terms = (0..1 + case % 4)
            .map(|_| PauliZTerm { coefficient: rng.random_range(-2.0..2.0), mask: ZMask(rng.random_range(1..1u64 << n)) })
            .collect();
        let obs = Observable::new(terms).unwrap();
        let theta = random_angles(&mut rng, n);
        let conv = CONVENTIONS[case % 2];
        let got = parity_eigen_distribution(&obs, &prepare_rx_layer(&theta, conv)).unwrap();
        let dense = DenseState::rx_layer(&theta, conv).unwrap();
        for (label, p) in dense_spectrum(&dense, &obs) {
            if p > 1e-9 {
                assert!((got.probability_of(label) - p).abs() < 1e-10, "label {label}");
            }
        }
    }
}

proptest! {
    #[test]
    fn states_stay_normalised(theta in prop::collection::vec(-100.0f64..100.0, 1..30)) {
        let t = Angles::new(theta).unwrap();
        for conv in CONVENTIONS {
            prop_assert!(prepare_rx_layer(&t, conv).max_norm_deviation() < 1e-12);
        }
    }

    #[test]
    fn loss_is_bounded(theta in prop::collection::vec(-10.0f64..10.0, 4..16)) {
        let n = theta.len();
        let t = Angles::new(theta).unwrap();
        let obs = Observable::cvar_hamiltonian(n, [1.0, 0.5, 0.25, 0.125]).unwrap();
        let l = loss_exact(&t, &obs, RotationConvention::HalfAngle).unwrap();
        prop_assert!(l.abs() <= obs.sum_abs_coefficients() + 1e-12);
    }

    #[test]
    fn kernel_is_symmetric_probability(x in prop::collection::vec(-5.0f64..5.0, 3), y in prop::collection::vec(-5.0f64..5.0, 3)) {
        let (a, b) = (Angles::new(x).unwrap(), Angles::new(y).unwrap());
        let k = fidelity_kernel_probability(&a, &b, RotationConvention::HalfAngle).unwrap();
        prop_assert!((0.0..=1.0 + 1e-15).contains(&k));
        prop_assert_eq!(k, fidelity_kernel_probability(&b, &a, RotationConvention::HalfAngle).unwrap());
    }
}
