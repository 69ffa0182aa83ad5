use num_complex::Complex;

use super::matrix::{adjoint2, apply2, identity2, mul2, Mat2, C};
use crate::error::{Error, Result};
use crate::Real;

/// Lifetime of the excited clock state used throughout the defaults, in seconds.
pub const EXCITED_LIFETIME: f64 = 21.6e-6;

/// One square laser pulse in the frame rotating at the laser frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseParams<T> {
    /// Rabi frequency Ω in rad/s.
    pub rabi: T,
    /// Detuning δ in rad/s.
    pub detuning: T,
    /// Laser phase in `[0, 2π)`.
    pub phase: T,
    /// Pulse length in seconds.
    pub duration: T,
    /// Spontaneous decay rate Γ in 1/s.
    pub decay_rate: T,
}

impl<T: Real> PulseParams<T> {
    pub fn new(rabi: T, detuning: T, phase: T, duration: T, decay_rate: T) -> Result<Self> {
        if !(duration >= T::zero()) {
            return Err(Error::invalid("duration", "must be non-negative"));
        }
        if !(rabi >= T::zero()) {
            return Err(Error::invalid("rabi", "must be non-negative"));
        }
        if !(decay_rate >= T::zero()) {
            return Err(Error::invalid("decay_rate", "must be non-negative"));
        }
        if !detuning.is_finite() || !phase.is_finite() {
            return Err(Error::invalid("phase", "phase and detuning must be finite"));
        }
        Ok(Self {
            rabi,
            detuning,
            phase: phase.wrap_phase(),
            duration,
            decay_rate,
        })
    }

    /// Coherent pulse without decay.
    pub fn coherent(rabi: T, detuning: T, phase: T, duration: T) -> Result<Self> {
        Self::new(rabi, detuning, phase, duration, T::zero())
    }

    /// Generalized Rabi frequency √(Ω² + δ²).
    pub fn generalized_rabi(&self) -> T {
        self.rabi.hypot(self.detuning)
    }

    /// `H/ħ = ½[−δσz + Ω(cos φ σx + sin φ σy)]` in the (ground, excited) basis.
    pub fn hamiltonian(&self) -> Mat2<T> {
        hamiltonian(self.rabi, self.detuning, self.phase)
    }
}

pub(crate) fn hamiltonian<T: Real>(rabi: T, detuning: T, phase: T) -> Mat2<T> {
    let half = T::lit(0.5);
    let coupling = Complex::from_polar(rabi * half, phase);
    [
        [C::new(-detuning * half, T::zero()), coupling.conj()],
        [coupling, C::new(detuning * half, T::zero())],
    ]
}

/// 2×2 unitary in the (ground, excited) basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelUnitary<T>(pub Mat2<T>);

impl<T: Real> TwoLevelUnitary<T> {
    pub fn identity() -> Self {
        Self(identity2())
    }

    /// Matrix element ⟨row|U|col⟩ with 0 = ground, 1 = excited.
    pub fn entry(&self, row: usize, col: usize) -> C<T> {
        self.0[row][col]
    }

    /// `self` applied after `first`.
    pub fn then(&self, first: &Self) -> Self {
        Self(mul2(&self.0, &first.0))
    }

    pub fn adjoint(&self) -> Self {
        Self(adjoint2(&self.0))
    }

    pub fn apply(&self, psi: &[C<T>; 2]) -> [C<T>; 2] {
        apply2(&self.0, psi)
    }

    /// Population moved ground → excited.
    pub fn transfer_probability(&self) -> T {
        self.0[1][0].norm_sqr()
    }

    /// `max |U†U − I|` over entries.
    pub fn unitarity_error(&self) -> T {
        let p = mul2(&adjoint2(&self.0), &self.0);
        let id = identity2::<T>();
        let mut err = T::zero();
        for i in 0..2 {
            for j in 0..2 {
                err = err.max((p[i][j] - id[i][j]).norm());
            }
        }
        err
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
}

/// Coherent propagator `exp(−iHτ)` of a square pulse. Decay is ignored.
///
/// With `Ω̃ = √(Ω² + δ²)`:
/// `U_gg = cos(Ω̃τ/2) + i(δ/Ω̃)sin`, `U_ee = cos − i(δ/Ω̃)sin`,
/// `U_eg = −i(Ω/Ω̃)sin·e^{iφ}`, `U_ge = −i(Ω/Ω̃)sin·e^{−iφ}`.
pub fn unitary_pulse<T: Real>(p: &PulseParams<T>) -> Result<TwoLevelUnitary<T>> {
    if !(p.duration >= T::zero()) {
        return Err(Error::invalid("duration", "must be non-negative"));
    }
    Ok(rotation(p.rabi, p.detuning, p.phase, p.duration))
}

pub(crate) fn rotation<T: Real>(rabi: T, detuning: T, phase: T, duration: T) -> TwoLevelUnitary<T> {
    let half = T::lit(0.5);
    let w = rabi.hypot(detuning);
    let angle = w * duration * half;
    let c = angle.cos();
    // sin(Ω̃τ/2)/Ω̃, finite as Ω̃ → 0.
    let sinc = if w * duration > T::lit(1e-8) {
        angle.sin() / w
    } else {
        duration * half * (T::one() - angle * angle / T::lit(6.0))
    };
    let i = C::<T>::i();
    let diag = C::new(T::zero(), detuning * sinc);
    let off = -i * C::from(rabi * sinc);
    let e_phase = Complex::from_polar(T::one(), phase);
    TwoLevelUnitary([
        [C::from(c) + diag, off * e_phase.conj()],
        [off * e_phase, C::from(c) - diag],
    ])
}
