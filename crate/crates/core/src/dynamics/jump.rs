use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::matrix::{apply2, expm2, Mat2, C};
use super::pulse::hamiltonian;
use super::AtomSample;
use crate::error::{Error, Result};
use crate::sequence::{Segment, SegmentKind, SequenceSpec};
use crate::Real;

/// Decay events of one trajectory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JumpRecord<T> {
    pub decayed: bool,
    pub decay_times: Vec<T>,
}

/// Waiting-time state of a quantum-jump trajectory.
///
/// The unnormalized state evolves under `H_eff = H − (iΓ/2)|e⟩⟨e|`; a jump to the
/// ground state fires when `‖ψ‖²` drops to a uniform threshold.
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    psi: [C<T>; 2],
    threshold: T,
    rng: ChaCha8Rng,
    pub record: JumpRecord<T>,
}

impl<T: Real> Trajectory<T> {
    pub fn new(psi: [C<T>; 2], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let threshold = draw_threshold(&mut rng);
        Self {
            psi,
            threshold,
            rng,
            record: JumpRecord::default(),
        }
    }

    pub fn ground(seed: u64) -> Self {
        Self::new([C::one(), C::zero()], seed)
    }

    /// Normalized state.
    pub fn state(&self) -> [C<T>; 2] {
        let n = self.norm_sqr().sqrt();
        [self.psi[0] / n, self.psi[1] / n]
    }

    pub fn excited_population(&self) -> T {
        self.psi[1].norm_sqr() / self.norm_sqr()
    }

    fn norm_sqr(&self) -> T {
        self.psi[0].norm_sqr() + self.psi[1].norm_sqr()
    }
}

fn draw_threshold<T: Real>(rng: &mut ChaCha8Rng) -> T {
    // (0, 1]
    T::lit(1.0 - rng.random::<f64>())
}

fn effective_generator<T: Real>(rabi: T, detuning: T, decay_rate: T) -> Mat2<T> {
    let mut h = hamiltonian(rabi, detuning, T::zero());
    h[1][1] -= C::new(T::zero(), decay_rate * T::lit(0.5));
    let mi = -C::<T>::i();
    [[mi * h[0][0], mi * h[0][1]], [mi * h[1][0], mi * h[1][1]]]
}

fn scale<T: Real>(g: &Mat2<T>, t: T) -> Mat2<T> {
    [[g[0][0] * t, g[0][1] * t], [g[1][0] * t, g[1][1] * t]]
}

#[derive(Debug, Clone)]
struct Block<T> {
    generator: Mat2<T>,
    full: Mat2<T>,
    duration: T,
}

impl<T: Real> Block<T> {
    fn new(generator: Mat2<T>, duration: T) -> Self {
        Self {
            full: expm2(&scale(&generator, duration)),
            generator,
            duration,
        }
    }

    fn partial(&self, t: T) -> Mat2<T> {
        expm2(&scale(&self.generator, t))
    }
}

/// Per-atom cache of the phase-0 non-Hermitian propagators of a sequence.
#[derive(Debug, Clone)]
pub struct JumpPropagator<T> {
    beamsplitter: Block<T>,
    mirror: Block<T>,
    free: Block<T>,
}

impl<T: Real> JumpPropagator<T> {
    pub fn new(seq: &SequenceSpec<T>, sample: &AtomSample<T>) -> Self {
        let rabi = seq.drive.rabi * sample.rabi_scale;
        let gamma = seq.drive.decay_rate;
        let t = &seq.timing;
        let driven = effective_generator(rabi, sample.detuning, gamma);
        let free = effective_generator(T::zero(), sample.detuning, gamma);
        Self {
            beamsplitter: Block::new(driven, t.beamsplitter_duration),
            mirror: Block::new(driven, t.pi_duration),
            free: Block::new(free, t.deadtime),
        }
    }

    pub fn apply_segment(&self, traj: &mut Trajectory<T>, seg: &Segment<T>) {
        let block = match seg.kind {
            SegmentKind::Beamsplitter(_) => &self.beamsplitter,
            SegmentKind::Mirror(_) => &self.mirror,
            SegmentKind::Free => &self.free,
        };
        let phase = if seg.is_driven() { seg.phase } else { T::zero() };
        self.run_block(traj, block, phase, seg.start);
    }

    /// Runs the sequence up to, but not including, the closing beamsplitter.
    pub fn before_readout(&self, traj: &mut Trajectory<T>, seq: &SequenceSpec<T>) {
        let t = &seq.timing;
        let mut clock = T::zero();
        self.run_block(traj, &self.beamsplitter, T::zero(), clock);
        clock += t.beamsplitter_duration;
        self.run_block(traj, &self.free, T::zero(), clock);
        clock += t.deadtime;
        for phase in seq.mirror_phases() {
            self.run_block(traj, &self.mirror, phase, clock);
            clock += t.pi_duration;
            self.run_block(traj, &self.free, T::zero(), clock);
            clock += t.deadtime;
        }
    }

    /// Closing beamsplitter at `phi_b`, starting at time `start`.
    pub fn readout(&self, traj: &mut Trajectory<T>, phi_b: T, start: T) {
        self.run_block(traj, &self.beamsplitter, phi_b, start);
    }

    fn run_block(&self, traj: &mut Trajectory<T>, block: &Block<T>, phase: T, start: T) {
        // Work in the phase-0 frame: ψ → V†ψ, evolve, ψ → Vψ.
        let rot = C::from_polar(T::one(), phase);
        let mut psi = [traj.psi[0], traj.psi[1] * rot.conj()];
        let mut elapsed = T::zero();
        let mut matrix = block.full;
        loop {
            let end = apply2(&matrix, &psi);
            if end[0].norm_sqr() + end[1].norm_sqr() >= traj.threshold {
                psi = end;
                break;
            }
            // The norm is non-increasing; bisect for the crossing.
            let remaining = block.duration - elapsed;
            let (mut lo, mut hi) = (T::zero(), remaining);
            for _ in 0..60 {
                let mid = (lo + hi) * T::lit(0.5);
                let s = apply2(&block.partial(mid), &psi);
                if s[0].norm_sqr() + s[1].norm_sqr() >= traj.threshold {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let t_jump = (lo + hi) * T::lit(0.5);
            elapsed += t_jump;
            traj.record.decayed = true;
            traj.record.decay_times.push(start + elapsed);
            psi = [C::one(), C::zero()];
            traj.threshold = draw_threshold(&mut traj.rng);
            matrix = block.partial(block.duration - elapsed);
        }
        traj.psi = [psi[0], psi[1] * rot];
    }
}

/// Runs one trajectory of the full sequence from the ground state.
///
/// Returns the normalized final state and its decay record.
pub fn jump_trajectory<T: Real>(
    seq: &SequenceSpec<T>,
    sample: &AtomSample<T>,
    seed: u64,
) -> Result<([C<T>; 2], JumpRecord<T>)> {
    jump_trajectory_with(seq, sample, seed, |_, _| {})
}

/// As [`jump_trajectory`], calling `observe` after every segment.
pub fn jump_trajectory_with<T: Real>(
    seq: &SequenceSpec<T>,
    sample: &AtomSample<T>,
    seed: u64,
    mut observe: impl FnMut(&Segment<T>, &Trajectory<T>),
) -> Result<([C<T>; 2], JumpRecord<T>)> {
    let prop = JumpPropagator::new(seq, sample);
    let mut traj = Trajectory::ground(seed);
    for seg in seq.segments() {
        prop.apply_segment(&mut traj, &seg);
        let n = traj.norm_sqr();
        if !n.is_finite() || n <= T::zero() {
            return Err(Error::Propagation {
                time: (seg.start + seg.duration).to_f64_lossy(),
                reason: "trajectory norm vanished".into(),
            });
        }
        observe(&seg, &traj);
    }
    let state = traj.state();
    Ok((state, traj.record))
}
