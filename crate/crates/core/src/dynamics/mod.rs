//! Single-atom two-level dynamics: coherent pulses, Lindblad evolution, quantum jumps.

mod jump;
mod lindblad;
pub mod matrix;
mod pulse;

pub use jump::{jump_trajectory, jump_trajectory_with, JumpPropagator, JumpRecord, Trajectory};
pub use lindblad::{
    free_evolution, lindblad_propagate, lindblad_propagate_with, liouvillian,
    segment_superoperator, AtomPropagator, DensityMatrix, Superoperator,
};
pub use pulse::{unitary_pulse, PulseParams, TwoLevelUnitary, EXCITED_LIFETIME};

use crate::Real;

/// One member of an atomic ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomSample<T> {
    /// Laser detuning seen by the atom, rad/s.
    pub detuning: T,
    /// Local Rabi frequency as a fraction of the peak value.
    pub rabi_scale: T,
    /// Statistical weight; weights of an ensemble sum to one.
    pub weight: T,
}

impl<T: Real> AtomSample<T> {
    /// Resonant atom at the beam centre.
    pub fn ideal() -> Self {
        Self {
            detuning: T::zero(),
            rabi_scale: T::one(),
            weight: T::one(),
        }
    }
}
