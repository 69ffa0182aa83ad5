//! Semi-classical multipath model of a mirror-pulse train.
//!
//! Paths live on a relative position lattice: an excited path moves one site
//! per inter-pulse interval with respect to a ground path. Each mirror pulse
//! of area `π(1+ε)` splits every path into a stay and a transfer branch, and
//! branches landing on the same `(internal, site)` merge coherently.

use std::io::Write;

use num_complex::Complex;
use num_traits::Zero;

use crate::dynamics::matrix::C;
use crate::error::{Error, Result};
use crate::sequence::SequenceSpec;
use crate::Real;

/// `ħk²/m` for the 689 nm strontium intercombination line, rad/s.
pub const RECOIL_PHASE_RATE: f64 = 6.0e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Internal {
    Ground,
    Excited,
}

impl Internal {
    pub fn label(self) -> &'static str {
        match self {
            Internal::Ground => "g",
            Internal::Excited => "e",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathState<T> {
    pub internal: Internal,
    pub pos_index: usize,
    pub amplitude: C<T>,
}

/// Merged paths after `pulse_index` mirror pulses, sorted by `(internal, pos_index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet<T> {
    pub paths: Vec<PathState<T>>,
    pub pulse_index: usize,
}

impl<T: Real> PathSet<T> {
    pub fn total_population(&self) -> T {
        self.paths.iter().map(|p| p.amplitude.norm_sqr()).sum()
    }

    pub fn amplitude(&self, internal: Internal, pos_index: usize) -> C<T> {
        self.paths
            .iter()
            .find(|p| p.internal == internal && p.pos_index == pos_index)
            .map_or(C::zero(), |p| p.amplitude)
    }

    fn from_dense(g: &[C<T>], e: &[C<T>], pulse_index: usize) -> Self {
        let mut paths = Vec::new();
        for (internal, arr) in [(Internal::Ground, g), (Internal::Excited, e)] {
            for (m, &a) in arr.iter().enumerate() {
                if !a.is_zero() {
                    paths.push(PathState {
                        internal,
                        pos_index: m,
                        amplitude: a,
                    });
                }
            }
        }
        Self { paths, pulse_index }
    }
}

/// How far a path sits from the central arms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArmDistance {
    /// Lattice distance to the nearer arm, regardless of internal state.
    Nearest,
    /// Lattice distance to the arm in the same internal state. Internal state
    /// fixes momentum, so this is a phase-space distance: a path at an arm's
    /// position but in the other state still drifts away from it.
    StateMatched,
}

/// Spread-cost definition.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec<T> {
    /// Exponent α of the distance weight `(d/d₀)^α`; α = 0 counts stray population.
    pub weight_exponent: T,
    pub prune_threshold: T,
    /// `(ε, δ/Ω)` pairs averaged over.
    pub error_samples: Vec<(T, T)>,
    /// Cost is accumulated after every `snapshot_stride`-th mirror pulse.
    pub snapshot_stride: usize,
    pub distance: ArmDistance,
    /// `ħk²/m` in rad/s; the laser phase per lattice site is this times the pulse period.
    pub recoil_phase_rate: T,
}

impl<T: Real> Default for CostSpec<T> {
    fn default() -> Self {
        let eps = [0.15, 0.2048, 0.25];
        let det = [-0.1, 0.0, 0.1];
        Self {
            weight_exponent: T::zero(),
            prune_threshold: T::lit(1e-12),
            error_samples: eps
                .iter()
                .flat_map(|&e| det.iter().map(move |&d| (T::lit(e), T::lit(d))))
                .collect(),
            snapshot_stride: 8,
            distance: ArmDistance::StateMatched,
            recoil_phase_rate: T::lit(RECOIL_PHASE_RATE),
        }
    }
}

impl<T: Real> CostSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight_exponent >= T::zero()) {
            return Err(Error::invalid("weight_exponent", "must be non-negative"));
        }
        if !(self.prune_threshold >= T::zero() && self.prune_threshold <= T::lit(1e-6)) {
            return Err(Error::invalid("prune_threshold", "must lie in [0, 1e-6]"));
        }
        if self.error_samples.is_empty() {
            return Err(Error::invalid("error_samples", "at least one sample required"));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::invalid("snapshot_stride", "must be at least 1"));
        }
        Ok(())
    }

    /// Perfect pulses only.
    pub fn is_degenerate(&self) -> bool {
        self.error_samples
            .iter()
            .all(|&(e, d)| e == T::zero() && d == T::zero())
    }
}

/// Lattice positions of the two perfect-pulse trajectories after each mirror pulse.
///
/// Arm A starts in the ground state, arm B in the excited state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CentralArms {
    pub arm_a: Vec<usize>,
    pub arm_b: Vec<usize>,
}

impl CentralArms {
    /// Internal state of arm A after pulse `i` (1-based).
    pub fn arm_a_state(i: usize) -> Internal {
        if i % 2 == 1 {
            Internal::Excited
        } else {
            Internal::Ground
        }
    }

    /// Position of the arm in state `internal` after pulse `i`.
    pub fn position_of(&self, internal: Internal, i: usize) -> usize {
        if Self::arm_a_state(i) == internal {
            self.arm_a[i - 1]
        } else {
            self.arm_b[i - 1]
        }
    }
}

pub fn central_arms<T: Real>(seq: &SequenceSpec<T>) -> CentralArms {
    arms_for(seq.loops)
}

fn arms_for(loops: usize) -> CentralArms {
    let (mut sa, mut sb) = (false, true);
    let (mut ma, mut mb) = (0usize, 0usize);
    let mut arm_a = Vec::with_capacity(loops);
    let mut arm_b = Vec::with_capacity(loops);
    for _ in 0..loops {
        ma += usize::from(sa);
        mb += usize::from(sb);
        sa = !sa;
        sb = !sb;
        arm_a.push(ma);
        arm_b.push(mb);
    }
    CentralArms { arm_a, arm_b }
}

/// Dense amplitude arrays indexed by lattice site.
struct Lattice<T> {
    g: Vec<C<T>>,
    e: Vec<C<T>>,
}

/// Runs the multipath model, handing the dense ground/excited arrays to
/// `visit` after each mirror pulse (1-based index).
fn run_lattice<T: Real>(
    phases: &[T],
    area_error: T,
    detuning_ratio: T,
    deadtime_ratio: T,
    site_phase: T,
    prune_threshold: T,
    mut visit: impl FnMut(usize, &Lattice<T>),
) {
    let n_sites = phases.len() + 2;
    let s = T::FRAC_1_SQRT_2();
    let mut lat = Lattice {
        g: vec![C::zero(); n_sites],
        e: vec![C::zero(); n_sites],
    };
    lat.g[0] = C::new(s, T::zero());
    lat.e[0] = C::new(T::zero(), -s);

    let half = T::lit(0.5);
    let area = T::PI() * (T::one() + area_error);
    // Pulse parameters in units of the pulse length: Ωτ = area, δτ = (δ/Ω)·area.
    let det = detuning_ratio * area;
    let w = area.hypot(det);
    let (cw, sw) = ((w * half).cos(), (w * half).sin());
    let stay_g = C::new(cw, det / w * sw);
    let stay_e = C::new(cw, -det / w * sw);
    let flip = C::new(T::zero(), -area / w * sw);
    let free_g = Complex::from_polar(T::one(), det * deadtime_ratio * half);
    let free_e = free_g.conj();
    let site: Vec<C<T>> = (0..n_sites)
        .map(|m| Complex::from_polar(T::one(), -site_phase * T::from_usize_lossy(m)))
        .collect();

    let mut next_g = vec![C::zero(); n_sites];
    let mut next_e = vec![C::zero(); n_sites];
    for (i, &phi) in phases.iter().enumerate() {
        let reach = (i + 1).min(n_sites - 1);
        // Free evolution: excited paths advance one site.
        for m in (1..=reach).rev() {
            lat.e[m] = lat.e[m - 1] * free_e;
        }
        lat.e[0] = C::zero();
        for a in lat.g[..=reach].iter_mut() {
            *a *= free_g;
        }
        // Mirror pulse: −i·e^{±i(φ − kx)} on transfers.
        let ep = Complex::from_polar(T::one(), phi);
        let up = flip * ep;
        let down = flip * ep.conj();
        for m in 0..=reach {
            let (g, e) = (lat.g[m], lat.e[m]);
            next_g[m] = stay_g * g + down * site[m].conj() * e;
            next_e[m] = up * site[m] * g + stay_e * e;
        }
        for m in 0..=reach {
            lat.g[m] = if next_g[m].norm_sqr() < prune_threshold {
                C::zero()
            } else {
                next_g[m]
            };
            lat.e[m] = if next_e[m].norm_sqr() < prune_threshold {
                C::zero()
            } else {
                next_e[m]
            };
        }
        visit(i + 1, &lat);
    }
}

fn site_phase<T: Real>(seq: &SequenceSpec<T>, rate: T) -> T {
    rate * seq.timing.period()
}

fn deadtime_ratio<T: Real>(seq: &SequenceSpec<T>) -> T {
    seq.timing.deadtime / seq.timing.pi_duration
}

/// Snapshots after each mirror pulse, with the default laser phase per site and
/// the default pruning threshold.
pub fn propagate_paths<T: Real>(seq: &SequenceSpec<T>, area_error: T, detuning_ratio: T) -> Vec<PathSet<T>> {
    let cost = CostSpec::default();
    propagate_paths_with(seq, area_error, detuning_ratio, &cost)
}

/// As [`propagate_paths`] with the lattice phase and pruning taken from `cost`.
pub fn propagate_paths_with<T: Real>(
    seq: &SequenceSpec<T>,
    area_error: T,
    detuning_ratio: T,
    cost: &CostSpec<T>,
) -> Vec<PathSet<T>> {
    let mut out = Vec::with_capacity(seq.loops);
    run_lattice(
        &seq.mirror_phases(),
        area_error,
        detuning_ratio,
        deadtime_ratio(seq),
        site_phase(seq, cost.recoil_phase_rate),
        cost.prune_threshold,
        |i, lat| out.push(PathSet::from_dense(&lat.g, &lat.e, i)),
    );
    out
}

fn distance_weight<T: Real>(d: usize, alpha: T) -> T {
    if d == 0 {
        T::zero()
    } else if alpha == T::zero() {
        T::one()
    } else {
        T::from_usize_lossy(d).powf(alpha)
    }
}

fn path_distance(arms: &CentralArms, mode: ArmDistance, internal: Internal, m: usize, i: usize) -> usize {
    match mode {
        ArmDistance::Nearest => m.abs_diff(arms.arm_a[i - 1]).min(m.abs_diff(arms.arm_b[i - 1])),
        ArmDistance::StateMatched => m.abs_diff(arms.position_of(internal, i)),
    }
}

/// `Σ_snapshots Σ_paths |a|²·(d/d₀)^α` for one run of [`propagate_paths`].
pub fn spread_cost<T: Real>(snapshots: &[PathSet<T>], cost: &CostSpec<T>) -> T {
    let loops = snapshots.iter().map(|s| s.pulse_index).max().unwrap_or(0);
    let arms = arms_for(loops);
    let mut total = T::zero();
    for snap in snapshots {
        let i = snap.pulse_index;
        if i % cost.snapshot_stride != 0 {
            continue;
        }
        for p in &snap.paths {
            let d = path_distance(&arms, cost.distance, p.internal, p.pos_index, i);
            total += p.amplitude.norm_sqr() * distance_weight(d, cost.weight_exponent);
        }
    }
    total
}

/// Spread cost of `seq` averaged over `cost.error_samples`.
pub fn sequence_cost<T: Real>(seq: &SequenceSpec<T>, cost: &CostSpec<T>) -> T {
    phases_cost(&seq.mirror_phases(), seq, cost)
}

/// Spread cost for an explicit mirror-phase list, timing taken from `seq`.
pub(crate) fn phases_cost<T: Real>(phases: &[T], seq: &SequenceSpec<T>, cost: &CostSpec<T>) -> T {
    let arms = arms_for(phases.len());
    let kd = site_phase(seq, cost.recoil_phase_rate);
    let ratio = deadtime_ratio(seq);
    let mut total = T::zero();
    for &(eps, dr) in &cost.error_samples {
        run_lattice(phases, eps, dr, ratio, kd, cost.prune_threshold, |i, lat| {
            if i % cost.snapshot_stride != 0 {
                return;
            }
            for (internal, arr) in [(Internal::Ground, &lat.g), (Internal::Excited, &lat.e)] {
                for (m, a) in arr.iter().enumerate() {
                    let d = path_distance(&arms, cost.distance, internal, m, i);
                    if d > 0 {
                        total += a.norm_sqr() * distance_weight(d, cost.weight_exponent);
                    }
                }
            }
        });
    }
    total / T::from_usize_lossy(cost.error_samples.len())
}

/// Writes snapshots as CSV `pulse_index,internal,pos_index,re_amp,im_amp`.
pub fn write_snapshots_csv<T: Real, W: Write>(snapshots: &[PathSet<T>], mut out: W) -> std::io::Result<()> {
    writeln!(out, "pulse_index,internal,pos_index,re_amp,im_amp")?;
    for snap in snapshots {
        for p in &snap.paths {
            writeln!(
                out,
                "{},{},{},{:.17e},{:.17e}",
                snap.pulse_index,
                p.internal.label(),
                p.pos_index,
                p.amplitude.re,
                p.amplitude.im
            )?;
        }
    }
    Ok(())
}
