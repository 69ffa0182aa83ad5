use num_complex::Complex;
use num_traits::{One, Zero};

use super::matrix::{apply4, expm4, Mat2, Mat4, C};
use super::pulse::hamiltonian;
use super::AtomSample;
use crate::error::{Error, Result};
use crate::sequence::{Segment, SegmentKind, SequenceSpec};
use crate::Real;

/// 2×2 density matrix in the (ground, excited) basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix<T>(pub Mat2<T>);

impl<T: Real> DensityMatrix<T> {
    pub fn ground() -> Self {
        let (o, z) = (C::one(), C::zero());
        Self([[o, z], [z, z]])
    }

    pub fn excited() -> Self {
        let (o, z) = (C::one(), C::zero());
        Self([[z, z], [z, o]])
    }

    /// `|ψ⟩⟨ψ|/⟨ψ|ψ⟩`.
    pub fn from_pure(psi: &[C<T>; 2]) -> Self {
        let n = psi[0].norm_sqr() + psi[1].norm_sqr();
        let mut m = [[C::zero(); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] = psi[i] * psi[j].conj() / n;
            }
        }
        Self(m)
    }

    pub fn excited_population(&self) -> T {
        self.0[1][1].re
    }

    pub fn trace(&self) -> C<T> {
        self.0[0][0] + self.0[1][1]
    }

    /// Bloch components `(u, v, w) = (2Re ρ_ge, 2Im ρ_ge, ρ_ee − ρ_gg)`.
    pub fn bloch(&self) -> [T; 3] {
        let two = T::lit(2.0);
        let ge = self.0[0][1];
        [two * ge.re, two * ge.im, self.0[1][1].re - self.0[0][0].re]
    }

    pub fn hermiticity_error(&self) -> T {
        let off = (self.0[0][1] - self.0[1][0].conj()).norm();
        off.max(self.0[0][0].im.abs()).max(self.0[1][1].im.abs())
    }

    /// Smaller eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> T {
        let a = self.0[0][0].re;
        let d = self.0[1][1].re;
        let b = (self.0[0][1] + self.0[1][0].conj()) * T::lit(0.5);
        let half = T::lit(0.5);
        (a + d) * half - (((a - d) * half).powi(2) + b.norm_sqr()).sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        let mut err = T::zero();
        for i in 0..2 {
            for j in 0..2 {
                err = err.max((self.0[i][j] - other.0[i][j]).norm());
            }
        }
        err
    }

    /// Sum with weight, for ensemble accumulation.
    pub fn add_scaled(&mut self, other: &Self, weight: T) {
        for i in 0..2 {
            for j in 0..2 {
                self.0[i][j] += other.0[i][j] * weight;
            }
        }
    }

    pub fn zero() -> Self {
        Self([[C::zero(); 2]; 2])
    }

    fn to_vec(self) -> [C<T>; 4] {
        [self.0[0][0], self.0[0][1], self.0[1][0], self.0[1][1]]
    }

    fn from_vec(v: [C<T>; 4]) -> Self {
        Self([[v[0], v[1]], [v[2], v[3]]])
    }

    fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

/// Linear map on row-major vectorized density matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Superoperator<T>(pub Mat4<T>);

impl<T: Real> Superoperator<T> {
    pub fn apply(&self, rho: &DensityMatrix<T>) -> DensityMatrix<T> {
        DensityMatrix::from_vec(apply4(&self.0, &rho.to_vec()))
    }

    /// Applies the map for laser phase `phase`, given `self` built at phase 0.
    ///
    /// The drive satisfies `H(φ) = V H(0) V†` with `V = diag(1, e^{iφ})`, and the
    /// decay channel is covariant under `V`, so `S_φ(ρ) = V S_0(V†ρV) V†`.
    pub fn apply_with_phase(&self, rho: &DensityMatrix<T>, phase: T) -> DensityMatrix<T> {
        if phase == T::zero() {
            return self.apply(rho);
        }
        let e = Complex::from_polar(T::one(), phase);
        let mut v = rho.to_vec();
        v[1] *= e;
        v[2] *= e.conj();
        let mut out = apply4(&self.0, &v);
        out[1] *= e.conj();
        out[2] *= e;
        DensityMatrix::from_vec(out)
    }
}

/// Generator `L` of `dρ/dt = −i[H, ρ] + Γ(σ⁻ρσ⁺ − ½{σ⁺σ⁻, ρ})` acting on `vec(ρ)`.
pub fn liouvillian<T: Real>(h: &Mat2<T>, decay_rate: T) -> Mat4<T> {
    let i = C::<T>::i();
    let mut l = [[C::zero(); 4]; 4];
    // vec(AρB) = (A ⊗ Bᵀ) vec(ρ) for row-major vec.
    for r in 0..2 {
        for c in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    let mut v = C::zero();
                    if c == b {
                        v -= i * h[r][a];
                    }
                    if r == a {
                        v += i * h[b][c];
                    }
                    l[2 * r + c][2 * a + b] = v;
                }
            }
        }
    }
    let g = C::from(decay_rate);
    let half = T::lit(0.5);
    // σ⁻ρσ⁺ feeds ρ_ee into ρ_gg.
    l[0][3] += g;
    // −½{P_e, ρ}: ρ_ee decays at Γ, coherences at Γ/2.
    l[3][3] -= g;
    l[1][1] -= g * half;
    l[2][2] -= g * half;
    l
}

/// Exact map for a constant-Hamiltonian segment.
pub fn segment_superoperator<T: Real>(
    rabi: T,
    detuning: T,
    phase: T,
    duration: T,
    decay_rate: T,
) -> Superoperator<T> {
    let mut gen = liouvillian(&hamiltonian(rabi, detuning, phase), decay_rate);
    for row in gen.iter_mut() {
        for v in row.iter_mut() {
            *v = *v * duration;
        }
    }
    Superoperator(expm4(&gen))
}

/// Closed-form undriven evolution: populations relax at Γ, the coherence
/// `ρ_ge` picks up `e^{+iδt}` and decays at Γ/2.
pub fn free_evolution<T: Real>(
    rho: &DensityMatrix<T>,
    t: T,
    decay_rate: T,
    detuning: T,
) -> Result<DensityMatrix<T>> {
    if !(t >= T::zero()) {
        return Err(Error::invalid("t", "free evolution time must be non-negative"));
    }
    Ok(free_map(t, decay_rate, detuning).apply(rho))
}

pub(crate) fn free_map<T: Real>(t: T, decay_rate: T, detuning: T) -> Superoperator<T> {
    let pop = (-decay_rate * t).exp();
    let coh = Complex::from_polar((-decay_rate * t * T::lit(0.5)).exp(), detuning * t);
    let mut m = [[C::zero(); 4]; 4];
    m[0][0] = C::one();
    m[0][3] = C::from(T::one() - pop);
    m[1][1] = coh;
    m[2][2] = coh.conj();
    m[3][3] = C::from(pop);
    Superoperator(m)
}

/// Per-atom cache of the phase-0 segment maps of a sequence.
#[derive(Debug, Clone)]
pub struct AtomPropagator<T> {
    beamsplitter: Superoperator<T>,
    mirror: Superoperator<T>,
    free: Superoperator<T>,
}

impl<T: Real> AtomPropagator<T> {
    pub fn new(seq: &SequenceSpec<T>, sample: &AtomSample<T>) -> Self {
        let rabi = seq.drive.rabi * sample.rabi_scale;
        let gamma = seq.drive.decay_rate;
        let t = &seq.timing;
        Self {
            beamsplitter: segment_superoperator(
                rabi,
                sample.detuning,
                T::zero(),
                t.beamsplitter_duration,
                gamma,
            ),
            mirror: segment_superoperator(rabi, sample.detuning, T::zero(), t.pi_duration, gamma),
            free: free_map(t.deadtime, gamma, sample.detuning),
        }
    }

    pub fn apply_segment(&self, rho: &DensityMatrix<T>, seg: &Segment<T>) -> DensityMatrix<T> {
        match seg.kind {
            SegmentKind::Beamsplitter(_) => self.beamsplitter.apply_with_phase(rho, seg.phase),
            SegmentKind::Mirror(_) => self.mirror.apply_with_phase(rho, seg.phase),
            SegmentKind::Free => self.free.apply(rho),
        }
    }

    /// State just before the closing beamsplitter.
    pub fn before_readout(&self, rho: &DensityMatrix<T>, seq: &SequenceSpec<T>) -> DensityMatrix<T> {
        let mut rho = self.beamsplitter.apply(rho);
        rho = self.free.apply(&rho);
        for phase in seq.mirror_phases() {
            rho = self.mirror.apply_with_phase(&rho, phase);
            rho = self.free.apply(&rho);
        }
        rho
    }

    /// Closing beamsplitter at phase `phi_b`.
    pub fn readout(&self, rho: &DensityMatrix<T>, phi_b: T) -> DensityMatrix<T> {
        self.beamsplitter.apply_with_phase(rho, phi_b)
    }
}

/// Density matrix after the full sequence, including decay.
pub fn lindblad_propagate<T: Real>(
    rho: &DensityMatrix<T>,
    seq: &SequenceSpec<T>,
    sample: &AtomSample<T>,
) -> Result<DensityMatrix<T>> {
    lindblad_propagate_with(rho, seq, sample, |_, _| {})
}

/// As [`lindblad_propagate`], calling `observe` after every segment.
pub fn lindblad_propagate_with<T: Real>(
    rho: &DensityMatrix<T>,
    seq: &SequenceSpec<T>,
    sample: &AtomSample<T>,
    mut observe: impl FnMut(&Segment<T>, &DensityMatrix<T>),
) -> Result<DensityMatrix<T>> {
    let prop = AtomPropagator::new(seq, sample);
    let mut state = *rho;
    for seg in seq.segments() {
        state = prop.apply_segment(&state, &seg);
        if !state.is_finite() {
            return Err(Error::Propagation {
                time: (seg.start + seg.duration).to_f64_lossy(),
                reason: "non-finite density matrix".into(),
            });
        }
        observe(&seg, &state);
    }
    Ok(state)
}
