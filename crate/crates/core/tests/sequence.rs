use std::f64::consts::{PI, TAU};

use proptest::prelude::*;

use loopqoc::sequence::{
    build_sequence, constrained_expand, dds_lsb, inject_signal, quantize_phase_dds, reference_tuple, ur_n_phases,
    PhaseTuple, TimingSpec,
};

fn same_angle(a: f64, b: f64) -> bool {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d) < 1e-12
}

proptest! {
    #[test]
    fn expanded_phases_are_periodic(
        base in prop::collection::vec(0.0..TAU, 1..9),
        reps in 1usize..8,
    ) {
        let n = base.len();
        let seq = build_sequence(PhaseTuple::new(base).unwrap(), n * reps, TimingSpec::default(), 0.0).unwrap();
        let phases = seq.mirror_phases();
        prop_assert_eq!(phases.len(), n * reps);
        for i in n..phases.len() {
            prop_assert_eq!(phases[i], phases[i - n]);
        }
    }

    /// The pattern reads the same backwards, with π steps between the
    /// first and last pairs of each half.
    #[test]
    fn constrained_pattern_identities(a in -10.0..10.0f64, b in -10.0..10.0f64) {
        let t = constrained_expand(a, b);
        let p = t.as_slice();
        for k in 0..8 {
            prop_assert!(same_angle(p[k], p[7 - k]));
        }
        prop_assert!(same_angle(p[2], p[1] + PI));
        prop_assert!(same_angle(p[3], p[0] + PI));
        prop_assert!(same_angle(p[4], p[3]));
        prop_assert!(same_angle(p[5], p[2]));
        prop_assert!(same_angle(p[6], p[1]));
        prop_assert!(same_angle(p[7], p[0]));
        prop_assert!(same_angle(p[0], a));
        prop_assert!(same_angle(p[1], b));
    }

    #[test]
    fn quantization_idempotent_within_half_lsb(phi in -TAU..TAU, bits in 1u32..=32) {
        let q = quantize_phase_dds(phi, bits).unwrap();
        prop_assert_eq!(quantize_phase_dds(q, bits).unwrap(), q);
        prop_assert!((q - phi).abs() <= 0.5 * dds_lsb::<f64>(bits) * (1.0 + 1e-12));
    }

    #[test]
    fn signal_subtraction_recovers_phases(
        base in prop::collection::vec(0.0..TAU, 1..5),
        amp in -0.5..0.5f64,
        freq in 1e5..1e7f64,
        theta0 in 0.0..TAU,
    ) {
        let n = base.len();
        let seq = build_sequence(PhaseTuple::new(base.clone()).unwrap(), 4 * n, TimingSpec::default(), 0.0).unwrap();
        let omega = TAU * freq;
        let signalled = inject_signal(&seq, amp, omega, theta0).unwrap();
        let t1 = seq.mirror_center_time(1);
        for (i, p) in signalled.mirror_phases().into_iter().enumerate() {
            let t = seq.mirror_center_time(i + 1);
            let injected = amp * (omega * (t - t1) + theta0).sin();
            prop_assert!((signalled.signal_phase(i + 1) - injected).abs() < 1e-15);
            // The wrapped phase carries at most a few ulps of 2π.
            let d = (p - injected - base[i % n]).rem_euclid(TAU);
            prop_assert!(d.min(TAU - d) < 4.0 * f64::EPSILON * TAU);
        }
    }
}

#[test]
fn ur8_is_constrained_reference() {
    let ur = ur_n_phases(8, PI / 2.0, 3.0 * PI / 8.0).unwrap();
    assert_eq!(ur, constrained_expand(3.0 * PI / 8.0, 7.0 * PI / 8.0));
    assert_eq!(ur, reference_tuple());
}

#[test]
fn quantization_ties_round_toward_zero() {
    let lsb = dds_lsb::<f64>(4);
    assert_eq!(quantize_phase_dds(2.5 * lsb, 4).unwrap(), 2.0 * lsb);
    assert_eq!(quantize_phase_dds(-2.5 * lsb, 4).unwrap(), -2.0 * lsb);
}

#[test]
fn resonance_is_half_the_pulse_rate() {
    let t = TimingSpec::<f64>::default();
    assert!((t.period() - 160e-9).abs() < 1e-20);
    assert!((t.resonance_hz() - 3.125e6).abs() < 1e-6);
}
