//! Thermal-cloud ensembles, fringe scans and visibility studies.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

pub use crate::dynamics::AtomSample;
use crate::dynamics::{AtomPropagator, DensityMatrix, JumpPropagator, Trajectory};
use crate::error::{Error, Result};
use crate::fit::{fit_fringe, phase_grid, FringeResult};
use crate::rng::derive_seed;
use crate::sequence::{build_sequence, Drive, PhaseTuple, SequenceSpec, TimingSpec};
use crate::Real;

/// Work items per deterministic reduction chunk.
const CHUNK: usize = 64;

/// Sampling recipe for a cloud of atoms in a Gaussian beam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleSpec<T> {
    pub n_samples: usize,
    /// Standard deviation of the Doppler detuning over the nominal Rabi frequency.
    pub doppler_sigma_over_rabi: T,
    /// Beam waist over cloud radius; the cloud radius is the per-axis standard deviation.
    /// `T::infinity()` gives a uniform beam.
    pub waist_over_cloud: T,
    /// Nominal peak Rabi frequency Ω₀ in rad/s, before calibration.
    pub rabi_nominal: T,
    pub seed: u64,
    /// Mean π-pulse transfer to calibrate Ω₀ to; `None` keeps Ω₀ nominal.
    pub target_transfer: Option<T>,
}

impl<T: Real> EnsembleSpec<T> {
    /// Defaults for a given timing: 0.1 Doppler ratio, waist three cloud radii,
    /// Ω₀ = π/τ_π, calibrated to 90% transfer.
    pub fn for_timing(timing: &TimingSpec<T>, n_samples: usize, seed: u64) -> Self {
        Self {
            n_samples,
            doppler_sigma_over_rabi: T::lit(0.1),
            waist_over_cloud: T::lit(3.0),
            rabi_nominal: T::PI() / timing.pi_duration,
            seed,
            target_transfer: Some(T::lit(0.9)),
        }
    }
}

/// Weighted atoms sharing one drive with peak Rabi frequency `rabi_peak`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble<T> {
    pub samples: Vec<AtomSample<T>>,
    pub rabi_peak: T,
    /// Nominal π-pulse Rabi frequency, the unit of detuning and Rabi offsets.
    pub rabi_nominal: T,
}

impl<T: Real> Ensemble<T> {
    /// A single resonant atom driven with perfect pulses.
    pub fn ideal(timing: &TimingSpec<T>) -> Self {
        let rabi = T::PI() / timing.pi_duration;
        Self {
            samples: vec![AtomSample::ideal()],
            rabi_peak: rabi,
            rabi_nominal: rabi,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Weighted mean transfer of a square pulse of length `duration` from the ground state.
    pub fn mean_transfer(&self, duration: T) -> T {
        mean_transfer(&self.samples, self.rabi_peak, duration)
    }

    pub fn mean_rabi_scale(&self) -> T {
        self.samples.iter().map(|s| s.weight * s.rabi_scale).sum()
    }

    /// Common detuning shift `x·Ω₀` and Rabi scaling `1 + y`, with Ω₀ the calibrated peak.
    pub fn perturbed(&self, detuning_offset: T, rabi_offset: T) -> Self {
        let shift = detuning_offset * self.rabi_peak;
        Self {
            samples: self
                .samples
                .iter()
                .map(|s| AtomSample {
                    detuning: s.detuning + shift,
                    ..*s
                })
                .collect(),
            rabi_peak: self.rabi_peak * (T::one() + rabi_offset),
            rabi_nominal: self.rabi_nominal,
        }
    }

    /// `seq` with its drive amplitude replaced by this ensemble's peak Rabi frequency.
    pub fn drive(&self, seq: &SequenceSpec<T>) -> SequenceSpec<T> {
        seq.with_drive(Drive {
            rabi: self.rabi_peak,
            decay_rate: seq.drive.decay_rate,
        })
    }
}

fn mean_transfer<T: Real>(samples: &[AtomSample<T>], rabi_peak: T, duration: T) -> T {
    let half = T::lit(0.5);
    samples
        .iter()
        .map(|s| {
            let om = rabi_peak * s.rabi_scale;
            let w = om.hypot(s.detuning);
            if w == T::zero() {
                return T::zero();
            }
            s.weight * (om / w).powi(2) * (w * duration * half).sin().powi(2)
        })
        .sum()
}

/// Draws a cloud and calibrates Ω₀.
///
/// Detunings are normal with σ = ratio·Ω₀. Transverse positions are 2D
/// normal with per-axis σ = w/ratio, and the local field amplitude is
/// `exp(−r²/w²)`. Calibration picks the smallest Ω₀ whose mean π-pulse
/// transfer (pulse length π/Ω_nominal) reaches the target.
pub fn sample_ensemble<T: Real>(spec: &EnsembleSpec<T>) -> Result<Ensemble<T>> {
    if spec.n_samples == 0 {
        return Err(Error::invalid("n_samples", "must be at least 1"));
    }
    if !(spec.doppler_sigma_over_rabi >= T::zero()) || !spec.doppler_sigma_over_rabi.is_finite() {
        return Err(Error::invalid("doppler_sigma_over_rabi", "must be finite and non-negative"));
    }
    if !(spec.waist_over_cloud > T::zero()) {
        return Err(Error::invalid("waist_over_cloud", "must be positive"));
    }
    if !(spec.rabi_nominal > T::zero()) || !spec.rabi_nominal.is_finite() {
        return Err(Error::invalid("rabi_nominal", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let doppler_sigma = (spec.doppler_sigma_over_rabi * spec.rabi_nominal).to_f64_lossy();
    let radius_sigma = (T::one() / spec.waist_over_cloud).to_f64_lossy();
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let weight = T::one() / T::from_usize_lossy(spec.n_samples);
    let samples: Vec<AtomSample<T>> = (0..spec.n_samples)
        .map(|_| {
            let detuning = doppler_sigma * std.sample(&mut rng);
            let x = radius_sigma * std.sample(&mut rng);
            let y = radius_sigma * std.sample(&mut rng);
            AtomSample {
                detuning: T::lit(detuning),
                rabi_scale: T::lit((-(x * x + y * y)).exp()),
                weight,
            }
        })
        .collect();
    let rabi_peak = match spec.target_transfer {
        None => spec.rabi_nominal,
        Some(target) => calibrate_rabi(&samples, spec.rabi_nominal, target)?,
    };
    Ok(Ensemble {
        samples,
        rabi_peak,
        rabi_nominal: spec.rabi_nominal,
    })
}

/// Smallest Ω₀ whose mean transfer over a pulse of length π/Ω_nominal equals `target`.
pub fn calibrate_rabi<T: Real>(samples: &[AtomSample<T>], rabi_nominal: T, target: T) -> Result<T> {
    if !(target > T::zero() && target < T::one()) {
        return Err(Error::invalid("target_transfer", "must lie in (0, 1)"));
    }
    let tau = T::PI() / rabi_nominal;
    let f = |c: T| mean_transfer(samples, c * rabi_nominal, tau) - target;
    let step = T::lit(0.01);
    let mut lo = T::zero();
    let mut hi = None;
    let mut c = step;
    while c <= T::lit(3.0) {
        if f(c) >= T::zero() {
            hi = Some(c);
            break;
        }
        lo = c;
        c += step;
    }
    let mut hi = hi.ok_or_else(|| {
        Error::invalid("target_transfer", "unreachable for this ensemble; lower the target")
    })?;
    for _ in 0..100 {
        let mid = (lo + hi) * T::lit(0.5);
        if f(mid) >= T::zero() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi * rabi_nominal)
}

/// Simulation back end for fringe scans.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    /// Deterministic density-matrix evolution per atom.
    Lindblad,
    /// Quantum-jump trajectories; atoms are assigned round-robin.
    Jump { trajectories: usize, seed: u64 },
}

/// What a fringe scan runs on.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanSetup<T> {
    pub ensemble: Ensemble<T>,
    pub engine: Engine,
    pub n_points: usize,
}

impl<T: Real> ScanSetup<T> {
    pub fn new(ensemble: Ensemble<T>, engine: Engine) -> Self {
        Self {
            ensemble,
            engine,
            n_points: 24,
        }
    }

    /// Perfect pulses on a single atom, Lindblad engine.
    pub fn ideal(timing: &TimingSpec<T>) -> Self {
        Self::new(Ensemble::ideal(timing), Engine::Lindblad)
    }

    pub fn with_ensemble(&self, ensemble: Ensemble<T>) -> Self {
        Self {
            ensemble,
            ..self.clone()
        }
    }

    pub fn with_engine(&self, engine: Engine) -> Self {
        Self {
            engine,
            ..self.clone()
        }
    }
}

/// Fringe scan with per-point standard errors (zero for the Lindblad engine).
#[derive(Debug, Clone, PartialEq)]
pub struct FringeScan<T> {
    pub points: Vec<(T, T)>,
    pub std_errors: Vec<T>,
}

/// `P_e(φ_b)` on `n_points` uniformly spaced closing phases.
pub fn fringe_scan<T: Real>(seq: &SequenceSpec<T>, setup: &ScanSetup<T>) -> Result<Vec<(T, T)>> {
    Ok(fringe_scan_detailed(seq, setup)?.points)
}

pub fn fringe_scan_detailed<T: Real>(seq: &SequenceSpec<T>, setup: &ScanSetup<T>) -> Result<FringeScan<T>> {
    if setup.n_points < 5 {
        return Err(Error::invalid("n_points", "a fringe scan needs at least 5 points"));
    }
    if setup.ensemble.is_empty() {
        return Err(Error::invalid("ensemble", "no atoms"));
    }
    let seq = setup.ensemble.drive(seq);
    let grid = phase_grid::<T>(setup.n_points);
    match setup.engine {
        Engine::Lindblad => Ok(lindblad_scan(&seq, &setup.ensemble, &grid)),
        Engine::Jump { trajectories, seed } => {
            if trajectories == 0 {
                return Err(Error::invalid("trajectories", "jump engine needs a positive trajectory count"));
            }
            Ok(jump_scan(&seq, &setup.ensemble, &grid, trajectories, seed))
        }
    }
}

fn lindblad_scan<T: Real>(seq: &SequenceSpec<T>, ens: &Ensemble<T>, grid: &[T]) -> FringeScan<T> {
    let partials: Vec<Vec<T>> = ens
        .samples
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![T::zero(); grid.len()];
            for atom in chunk {
                let prop = AtomPropagator::new(seq, atom);
                let pre = prop.before_readout(&DensityMatrix::ground(), seq);
                for (a, &phi) in acc.iter_mut().zip(grid) {
                    *a += atom.weight * prop.readout(&pre, phi).excited_population();
                }
            }
            acc
        })
        .collect();
    let mut total = vec![T::zero(); grid.len()];
    for part in partials {
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
    }
    FringeScan {
        points: grid.iter().copied().zip(total).collect(),
        std_errors: vec![T::zero(); grid.len()],
    }
}

fn jump_scan<T: Real>(
    seq: &SequenceSpec<T>,
    ens: &Ensemble<T>,
    grid: &[T],
    trajectories: usize,
    seed: u64,
) -> FringeScan<T> {
    let readout_start = seq.total_duration() - seq.timing.beamsplitter_duration;
    let n_atoms = ens.len();
    let indices: Vec<usize> = (0..trajectories).collect();
    // Per chunk: Σw, Σw², Σw·x, Σw·x² for every grid point.
    let partials: Vec<(T, T, Vec<T>, Vec<T>)> = indices
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut sw = T::zero();
            let mut sw2 = T::zero();
            let mut sx = vec![T::zero(); grid.len()];
            let mut sxx = vec![T::zero(); grid.len()];
            for &k in chunk {
                let atom = &ens.samples[k % n_atoms];
                let prop = JumpPropagator::new(seq, atom);
                let mut traj = Trajectory::ground(derive_seed(seed, k as u64));
                prop.before_readout(&mut traj, seq);
                sw += atom.weight;
                sw2 += atom.weight * atom.weight;
                for (i, &phi) in grid.iter().enumerate() {
                    let mut t = traj.clone();
                    prop.readout(&mut t, phi, readout_start);
                    let x = t.excited_population();
                    sx[i] += atom.weight * x;
                    sxx[i] += atom.weight * x * x;
                }
            }
            (sw, sw2, sx, sxx)
        })
        .collect();
    let mut sw = T::zero();
    let mut sw2 = T::zero();
    let mut sx = vec![T::zero(); grid.len()];
    let mut sxx = vec![T::zero(); grid.len()];
    for (a, b, x, xx) in partials {
        sw += a;
        sw2 += b;
        for i in 0..grid.len() {
            sx[i] += x[i];
            sxx[i] += xx[i];
        }
    }
    let n_eff = sw * sw / sw2;
    let mut points = Vec::with_capacity(grid.len());
    let mut std_errors = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let mean = sx[i] / sw;
        let var = (sxx[i] / sw - mean * mean).max(T::zero());
        points.push((grid[i], mean));
        let denom = (n_eff - T::one()).max(T::one());
        std_errors.push((var / denom).sqrt());
    }
    FringeScan { points, std_errors }
}

/// Fringe scan followed by a fit.
pub fn measure_fringe<T: Real>(seq: &SequenceSpec<T>, setup: &ScanSetup<T>) -> Result<FringeResult<T>> {
    fit_fringe(&fringe_scan(seq, setup)?)
}

/// Fitted fringe for each loop count, sequences built like `template` with `base` phases.
pub fn visibility_vs_loops<T: Real>(
    base: &PhaseTuple<T>,
    loop_list: &[usize],
    template: &SequenceSpec<T>,
    setup: &ScanSetup<T>,
) -> Result<Vec<(usize, FringeResult<T>)>> {
    loop_list
        .iter()
        .map(|&loops| {
            let seq = build_sequence(base.clone(), loops, template.timing, T::zero())?
                .with_drive(template.drive)
                .with_quantization(template.quantize_bits);
            Ok((loops, measure_fringe(&seq, setup)?))
        })
        .collect()
}

/// Visibility of an ideal atom after `loops` perfect mirror pulses with decay.
///
/// The mirror pulses are applied about the axis of the Bloch vector prepared
/// by the opening beamsplitter, so they leave the coherence untouched and the
/// only loss is spontaneous emission.
pub fn se_visibility_limit<T: Real>(loops: usize, timing: &TimingSpec<T>, decay_rate: T) -> Result<T> {
    let seq = build_sequence(PhaseTuple::constant(1, T::FRAC_PI_2())?, loops, *timing, T::zero())?
        .with_decay_rate(decay_rate);
    Ok(measure_fringe(&seq, &ScanSetup::ideal(timing))?.visibility)
}

/// `exp(−Γ·L·T/2)`.
pub fn se_visibility_closed_form<T: Real>(loops: usize, timing: &TimingSpec<T>, decay_rate: T) -> T {
    (-decay_rate * T::from_usize_lossy(loops) * timing.period() * T::lit(0.5)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RobustnessAxis {
    /// δ += x·Ω₀ for every atom.
    Detuning,
    /// Ω₀ → (1 + x)·Ω₀.
    Rabi,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustnessPoint<T> {
    pub offset: T,
    pub fit: FringeResult<T>,
    /// Visibility over the largest visibility of the scan.
    pub visibility_norm: T,
}

/// Re-runs the fringe with a common offset applied along `axis`.
pub fn robustness_scan<T: Real>(
    seq: &SequenceSpec<T>,
    setup: &ScanSetup<T>,
    axis: RobustnessAxis,
    offsets: &[T],
) -> Result<Vec<RobustnessPoint<T>>> {
    let limit = T::lit(0.2);
    if offsets.iter().any(|x| !(x.abs() <= limit)) {
        return Err(Error::invalid("offsets", "must lie within ±0.2"));
    }
    let fits = offsets
        .iter()
        .map(|&x| {
            let ens = match axis {
                RobustnessAxis::Detuning => setup.ensemble.perturbed(x, T::zero()),
                RobustnessAxis::Rabi => setup.ensemble.perturbed(T::zero(), x),
            };
            measure_fringe(seq, &setup.with_ensemble(ens))
        })
        .collect::<Result<Vec<_>>>()?;
    let vmax = fits.iter().fold(T::zero(), |m, f| m.max(f.visibility));
    Ok(offsets
        .iter()
        .zip(fits)
        .map(|(&offset, fit)| RobustnessPoint {
            offset,
            visibility_norm: if vmax > T::zero() { fit.visibility / vmax } else { T::zero() },
            fit,
        })
        .collect())
}
