mod common;

use std::f64::consts::{PI, TAU};

use num_complex::Complex64 as C;
use proptest::prelude::*;

use loopqoc::dynamics::{
    free_evolution, jump_trajectory, lindblad_propagate, lindblad_propagate_with, segment_superoperator, unitary_pulse,
    AtomSample, DensityMatrix, PulseParams, EXCITED_LIFETIME,
};
use loopqoc::rng::derive_seed;
use loopqoc::sequence::{alternating_tuple, build_sequence, reference_tuple, PhaseTuple, TimingSpec};

const OMEGA: f64 = PI / 80e-9;

fn gamma() -> f64 {
    1.0 / EXCITED_LIFETIME
}

fn pulse() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (0.0..3.0 * OMEGA, -OMEGA..OMEGA, 0.0..TAU, 0.0..400e-9)
}

fn state() -> impl Strategy<Value = [C; 2]> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("non-zero", |(a, b, c, d)| a * a + b * b + c * c + d * d > 1e-3)
        .prop_map(|(a, b, c, d)| {
            let n = (a * a + b * b + c * c + d * d).sqrt();
            [C::new(a / n, b / n), C::new(c / n, d / n)]
        })
}

fn mat_diff(a: [[C; 2]; 2], b: [[C; 2]; 2]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            worst = worst.max((a[i][j] - b[i][j]).norm());
        }
    }
    worst
}

proptest! {
    #[test]
    fn pulse_matches_independent_exponential((rabi, det, phase, dur) in pulse()) {
        let u = unitary_pulse(&PulseParams::coherent(rabi, det, phase, dur).unwrap()).unwrap();
        let oracle = common::expm_herm(common::hamiltonian(rabi, det, phase), dur);
        prop_assert!(mat_diff(u.0, oracle) < 1e-12);
        prop_assert!(u.unitarity_error() < 1e-12);
    }

    #[test]
    fn rotation_then_counter_rotation((area, phase) in (0.0..PI / 2.0, 0.0..TAU)) {
        let dur = area / OMEGA;
        let a = unitary_pulse(&PulseParams::coherent(OMEGA, 0.0, phase, dur).unwrap()).unwrap();
        let b = unitary_pulse(&PulseParams::coherent(OMEGA, 0.0, phase + PI, dur).unwrap()).unwrap();
        let id = b.then(&a);
        prop_assert!(mat_diff(id.0, [[C::new(1.0, 0.0), C::new(0.0, 0.0)], [C::new(0.0, 0.0), C::new(1.0, 0.0)]]) < 1e-12);
    }

    #[test]
    fn segment_map_is_trace_preserving_and_positive(
        (rabi, det, phase, dur) in pulse(),
        psi in state(),
        decay in 0.0..50.0f64,
    ) {
        let rho = DensityMatrix::from_pure(&psi);
        let out = segment_superoperator(rabi, det, phase, dur, decay * gamma()).apply(&rho);
        prop_assert!((out.trace() - C::new(1.0, 0.0)).norm() < 1e-9);
        prop_assert!(out.min_eigenvalue() > -1e-10);
        prop_assert!(out.hermiticity_error() < 1e-12);
    }

    #[test]
    fn free_map_matches_generator(psi in state(), t in 0.0..1e-6f64, det in -OMEGA..OMEGA, decay in 0.0..50.0f64) {
        let rho = DensityMatrix::from_pure(&psi);
        let closed = free_evolution(&rho, t, decay * gamma(), det).unwrap();
        let generated = segment_superoperator(0.0, det, 0.0, t, decay * gamma()).apply(&rho);
        prop_assert!(closed.max_abs_diff(&generated) < 1e-9);
    }
}

fn random_sequence(phases: Vec<f64>, det: f64, scale: f64) -> (loopqoc::sequence::SequenceSpec<f64>, AtomSample<f64>) {
    let n = phases.len();
    let seq = build_sequence(PhaseTuple::new(phases).unwrap(), 2 * n, TimingSpec::default(), 0.7)
        .unwrap()
        .with_decay_rate(0.0);
    let sample = AtomSample {
        detuning: det,
        rabi_scale: scale,
        weight: 1.0,
    };
    (seq, sample)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coherent_lindblad_equals_state_vector(
        phases in prop::collection::vec(0.0..TAU, 1..6),
        det in -0.3 * OMEGA..0.3 * OMEGA,
        scale in 0.3..1.2f64,
    ) {
        let (seq, sample) = random_sequence(phases, det, scale);
        let rho = lindblad_propagate(&DensityMatrix::ground(), &seq, &sample).unwrap();
        let psi = common::propagate_pure(&seq, &sample);
        prop_assert!(rho.max_abs_diff(&DensityMatrix::from_pure(&psi)) < 1e-9);
    }

    #[test]
    fn lindblad_stays_physical_at_every_segment(
        phases in prop::collection::vec(0.0..TAU, 1..6),
        det in -0.3 * OMEGA..0.3 * OMEGA,
        decay in 1.0..200.0f64,
    ) {
        let (seq, sample) = random_sequence(phases, det, 1.0);
        let seq = seq.with_decay_rate(decay * gamma());
        let mut worst_trace: f64 = 0.0;
        let mut worst_eig: f64 = 0.0;
        lindblad_propagate_with(&DensityMatrix::ground(), &seq, &sample, |_, rho| {
            worst_trace = worst_trace.max((rho.trace() - C::new(1.0, 0.0)).norm());
            worst_eig = worst_eig.min(rho.min_eigenvalue());
        })
        .unwrap();
        prop_assert!(worst_trace < 1e-9);
        prop_assert!(worst_eig > -1e-10);
    }
}

#[test]
fn jump_ensemble_matches_lindblad_at_l128() {
    let timing = TimingSpec::default();
    let sample = AtomSample {
        detuning: 0.05 * OMEGA,
        rabi_scale: 0.93,
        weight: 1.0,
    };
    for base in [alternating_tuple(8).unwrap(), reference_tuple()] {
        let seq = build_sequence(base, 128, timing, 1.1).unwrap();
        let exact = lindblad_propagate(&DensityMatrix::ground(), &seq, &sample)
            .unwrap()
            .excited_population();
        let n = 10_000;
        let pops: Vec<f64> = (0..n)
            .map(|k| {
                let (psi, _) = jump_trajectory(&seq, &sample, derive_seed(41, k)).unwrap();
                psi[1].norm_sqr()
            })
            .collect();
        let mean = pops.iter().sum::<f64>() / n as f64;
        let var = pops.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sigma = (var / n as f64).sqrt();
        assert!((mean - exact).abs() < 3.0 * sigma, "jump {mean} ± {sigma}, lindblad {exact}");
    }
}

#[test]
fn jump_decays_only_with_decay_rate() {
    let seq = build_sequence(reference_tuple(), 64, TimingSpec::default(), 0.0)
        .unwrap()
        .with_decay_rate(0.0);
    for k in 0..200 {
        let (_, rec) = jump_trajectory(&seq, &AtomSample::ideal(), k).unwrap();
        assert!(!rec.decayed);
    }
}
