//! Spontaneous-emission diagnostics: the decayed subensemble and the spurious
//! interference it produces.

use rayon::prelude::*;

use crate::dynamics::{DensityMatrix, JumpPropagator, Trajectory};
use crate::ensemble::{measure_fringe, Ensemble, ScanSetup};
use crate::error::{Error, Result};
use crate::response::resonant_theta0;
use crate::rng::derive_seed;
use crate::sequence::{build_sequence, inject_signal, PhaseTuple, SegmentKind, SequenceSpec};
use crate::Real;

const CHUNK: usize = 64;

/// Decayed-subensemble state after one mirror pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochPoint<T> {
    /// 1-based mirror pulse index.
    pub pulse: usize,
    pub u: T,
    pub v: T,
    pub w: T,
    pub decayed_fraction: T,
}

impl<T: Real> BlochPoint<T> {
    /// Transverse length of the normalized decayed-subensemble Bloch vector.
    pub fn transverse(&self) -> T {
        self.u.hypot(self.v)
    }

    /// Transverse length of the decayed part of the full density matrix.
    pub fn weighted_transverse(&self) -> T {
        self.decayed_fraction * self.transverse()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlochTrace<T> {
    pub points: Vec<BlochPoint<T>>,
    /// Normalized density matrices of the decayed subensemble, one per mirror pulse.
    pub decayed: Vec<DensityMatrix<T>>,
    /// Normalized density matrices of the never-decayed subensemble.
    pub intact: Vec<DensityMatrix<T>>,
}

impl<T: Real> BlochTrace<T> {
    /// `f·ρ_decayed + (1 − f)·ρ_intact` after pulse `i` (0-based).
    pub fn combined(&self, i: usize) -> DensityMatrix<T> {
        let f = self.points[i].decayed_fraction;
        let mut rho = DensityMatrix::zero();
        rho.add_scaled(&self.decayed[i], f);
        rho.add_scaled(&self.intact[i], T::one() - f);
        rho
    }
}

struct Accum<T> {
    weight: T,
    decayed_weight: Vec<T>,
    decayed: Vec<DensityMatrix<T>>,
    intact: Vec<DensityMatrix<T>>,
}

impl<T: Real> Accum<T> {
    fn new(n: usize) -> Self {
        Self {
            weight: T::zero(),
            decayed_weight: vec![T::zero(); n],
            decayed: vec![DensityMatrix::zero(); n],
            intact: vec![DensityMatrix::zero(); n],
        }
    }

    fn merge(&mut self, other: Self) {
        self.weight += other.weight;
        for i in 0..self.decayed.len() {
            self.decayed_weight[i] += other.decayed_weight[i];
            self.decayed[i].add_scaled(&other.decayed[i], T::one());
            self.intact[i].add_scaled(&other.intact[i], T::one());
        }
    }
}

/// Bloch vectors of the atoms that have emitted at least one photon, after every mirror pulse.
///
/// Trajectory `k` runs atom `k mod n` of the ensemble with seed `derive_seed(seed, k)`.
/// Pulses where no trajectory has decayed report a zero vector and zero fraction.
pub fn decayed_bloch_trace<T: Real>(
    seq: &SequenceSpec<T>,
    ensemble: &Ensemble<T>,
    n_trajectories: usize,
    seed: u64,
) -> Result<BlochTrace<T>> {
    if n_trajectories < 1000 {
        return Err(Error::invalid("n_trajectories", "at least 1000 trajectories required"));
    }
    if ensemble.is_empty() {
        return Err(Error::invalid("ensemble", "no atoms"));
    }
    let seq = ensemble.drive(seq);
    let segments = seq.segments();
    let n_pulses = seq.loops;
    let indices: Vec<usize> = (0..n_trajectories).collect();
    let partials: Vec<Accum<T>> = indices
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = Accum::new(n_pulses);
            for &k in chunk {
                let atom = &ensemble.samples[k % ensemble.len()];
                let prop = JumpPropagator::new(&seq, atom);
                let mut traj = Trajectory::ground(derive_seed(seed, k as u64));
                acc.weight += atom.weight;
                let mut pulse = 0;
                for seg in &segments {
                    prop.apply_segment(&mut traj, seg);
                    if let SegmentKind::Mirror(_) = seg.kind {
                        let rho = DensityMatrix::from_pure(&traj.state());
                        if traj.record.decayed {
                            acc.decayed_weight[pulse] += atom.weight;
                            acc.decayed[pulse].add_scaled(&rho, atom.weight);
                        } else {
                            acc.intact[pulse].add_scaled(&rho, atom.weight);
                        }
                        pulse += 1;
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = Accum::new(n_pulses);
    for p in partials {
        total.merge(p);
    }

    let mut points = Vec::with_capacity(n_pulses);
    let mut decayed = Vec::with_capacity(n_pulses);
    let mut intact = Vec::with_capacity(n_pulses);
    for i in 0..n_pulses {
        let dw = total.decayed_weight[i];
        let iw = total.weight - dw;
        let mut d = DensityMatrix::zero();
        if dw > T::zero() {
            d.add_scaled(&total.decayed[i], T::one() / dw);
        }
        let mut n = DensityMatrix::zero();
        if iw > T::zero() {
            n.add_scaled(&total.intact[i], T::one() / iw);
        }
        let [u, v, w] = if dw > T::zero() { d.bloch() } else { [T::zero(); 3] };
        points.push(BlochPoint {
            pulse: i + 1,
            u,
            v,
            w,
            decayed_fraction: dw / total.weight,
        });
        decayed.push(d);
        intact.push(n);
    }
    Ok(BlochTrace {
        points,
        decayed,
        intact,
    })
}

/// Whether an 8-phase tuple has the form `φ₁, φ₂, φ₂+π, φ₁+π, φ₁+π, φ₂+π, φ₂, φ₁`.
///
/// Returns the verdict and the largest pattern violation in radians, using the
/// least-squares `(φ₁, φ₂)` on the circle.
pub fn cumulative_phase_check<T: Real>(base: &PhaseTuple<T>) -> Result<(bool, T)> {
    let p = base.as_slice();
    if p.len() != 8 {
        return Err(Error::invalid("base", format!("constraint check needs 8 phases, got {}", p.len())));
    }
    let pi = T::PI();
    // Each slot maps back to φ₁ or φ₂ after removing its π offset.
    let slots: [(usize, T); 8] = [
        (0, T::zero()),
        (1, T::zero()),
        (1, pi),
        (0, pi),
        (0, pi),
        (1, pi),
        (1, T::zero()),
        (0, T::zero()),
    ];
    let mut centre = [T::zero(); 2];
    for (which, c) in centre.iter_mut().enumerate() {
        let (mut s, mut co) = (T::zero(), T::zero());
        for (k, &(w, off)) in slots.iter().enumerate() {
            if w == which {
                let a = p[k] - off;
                s += a.sin();
                co += a.cos();
            }
        }
        *c = s.atan2(co);
    }
    let residual = slots
        .iter()
        .enumerate()
        .map(|(k, &(w, off))| (p[k] - off - centre[w]).wrap_signed().abs())
        .fold(T::zero(), T::max);
    Ok((residual <= T::lit(1e-9), residual))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignaturePoint<T> {
    pub delta_phi: T,
    pub visibility: T,
    pub visibility_err: T,
    /// Fringe phase relative to `δφ = 0`, wrapped to `(−π, π]`.
    pub dphase: T,
    pub dphase_err: T,
}

/// Visibility and phase response to a resonant signal of each amplitude in `delta_phis`.
///
/// The sequence repeats `base` for `loops` mirror pulses with timing and drive
/// from `template`. Every amplitude reuses the engine seed in `setup`, so the
/// reference scan at `δφ = 0` shares its random stream with the signal runs.
pub fn spurious_signature<T: Real>(
    base: &PhaseTuple<T>,
    loops: usize,
    template: &SequenceSpec<T>,
    delta_phis: &[T],
    setup: &ScanSetup<T>,
) -> Result<Vec<SignaturePoint<T>>> {
    let seq = build_sequence(base.clone(), loops, template.timing, T::zero())?
        .with_drive(template.drive)
        .with_quantization(template.quantize_bits);
    let omega = seq.timing.resonance_omega();
    let reference = measure_fringe(&seq, setup)?;
    delta_phis
        .iter()
        .map(|&dp| {
            let fit = if dp == T::zero() {
                reference
            } else {
                measure_fringe(&inject_signal(&seq, dp, omega, resonant_theta0())?, setup)?
            };
            Ok(SignaturePoint {
                delta_phi: dp,
                visibility: fit.visibility,
                visibility_err: fit.visibility_err,
                dphase: (fit.phase - reference.phase).wrap_signed(),
                dphase_err: fit.phase_err.hypot(reference.phase_err),
            })
        })
        .collect()
}
