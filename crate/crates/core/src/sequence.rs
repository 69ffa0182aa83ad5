//! Interferometer pulse programs.
//!
//! A sequence is a π/2 beamsplitter at phase 0, `L` mirror π pulses whose
//! phases cycle through an `N`-tuple, and a closing π/2 beamsplitter at phase
//! `φ_b`. Every pair of neighbouring pulses is separated by the same deadtime.
//!
//! Phase constructors that produce rational multiples of π do their
//! arithmetic in half-turns (units of π) so that dyadic results are exact.

use crate::dynamics::EXCITED_LIFETIME;
use crate::error::{Error, Result};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingSpec<T> {
    pub pi_duration: T,
    pub deadtime: T,
    pub beamsplitter_duration: T,
}

impl<T: Real> TimingSpec<T> {
    pub fn new(pi_duration: T, deadtime: T, beamsplitter_duration: T) -> Result<Self> {
        for (name, v) in [
            ("pi_duration", pi_duration),
            ("deadtime", deadtime),
            ("beamsplitter_duration", beamsplitter_duration),
        ] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::invalid(name, "must be a positive duration"));
            }
        }
        Ok(Self {
            pi_duration,
            deadtime,
            beamsplitter_duration,
        })
    }

    /// Pulse period `T = pi_duration + deadtime`.
    pub fn period(&self) -> T {
        self.pi_duration + self.deadtime
    }

    /// Resonance frequency `f_R = 1/(2T)` in Hz.
    pub fn resonance_hz(&self) -> T {
        T::one() / (T::lit(2.0) * self.period())
    }

    /// Angular resonance frequency `π/T`.
    pub fn resonance_omega(&self) -> T {
        T::PI() / self.period()
    }
}

impl<T: Real> Default for TimingSpec<T> {
    /// 80 ns π pulses, 80 ns deadtime, 40 ns beamsplitters.
    fn default() -> Self {
        Self {
            pi_duration: T::lit(80e-9),
            deadtime: T::lit(80e-9),
            beamsplitter_duration: T::lit(40e-9),
        }
    }
}

/// Ordered mirror phases, each in `[0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTuple<T> {
    phases: Vec<T>,
}

impl<T: Real> PhaseTuple<T> {
    pub fn new(phases: Vec<T>) -> Result<Self> {
        if phases.is_empty() {
            return Err(Error::invalid("base_phases", "at least one phase required"));
        }
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("base_phases", "phases must be finite"));
        }
        Ok(Self {
            phases: phases.into_iter().map(Real::wrap_phase).collect(),
        })
    }

    /// Phases given as multiples of π.
    pub fn from_half_turns(half_turns: &[T]) -> Result<Self> {
        Self::new(half_turns.iter().map(|&h| from_half_turns(h)).collect())
    }

    /// `n` copies of the same phase.
    pub fn constant(n: usize, phase: T) -> Result<Self> {
        Self::new(vec![phase; n])
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.phases
    }

    /// Adds `offset` to every phase.
    pub fn shifted(&self, offset: T) -> Self {
        Self {
            phases: self.phases.iter().map(|&p| (p + offset).wrap_phase()).collect(),
        }
    }

    /// Largest circular distance between corresponding entries.
    pub fn max_circular_distance(&self, other: &Self) -> T {
        self.phases
            .iter()
            .zip(&other.phases)
            .map(|(&a, &b)| (a - b).wrap_signed().abs())
            .fold(T::zero(), T::max)
    }
}

/// `x·π` wrapped into `[0, 2π)`, exact for dyadic `x`.
fn from_half_turns<T: Real>(x: T) -> T {
    let two = T::lit(2.0);
    let mut r = x % two;
    if r < T::zero() {
        r += two;
    }
    if r >= two {
        r -= two;
    }
    (r * T::PI()).wrap_phase()
}

fn to_half_turns<T: Real>(phase: T) -> T {
    phase / T::PI()
}

/// Optimized eight-pulse tuple (3, 7, 15, 11, 11, 15, 7, 3)·π/8, a shifted UR-8.
pub fn reference_tuple<T: Real>() -> PhaseTuple<T> {
    let eighths = [3.0, 7.0, 15.0, 11.0, 11.0, 15.0, 7.0, 3.0];
    PhaseTuple::from_half_turns(&eighths.map(|k| T::lit(k / 8.0))).expect("non-empty")
}

/// Mirror phases alternating `+π/2, −π/2, …` over `n` pulses.
pub fn alternating_tuple<T: Real>(n: usize) -> Result<PhaseTuple<T>> {
    let half = T::lit(0.5);
    PhaseTuple::from_half_turns(
        &(0..n)
            .map(|k| if k % 2 == 0 { half } else { -half })
            .collect::<Vec<_>>(),
    )
}

/// Universally robust UR-`n` phases
/// `φ_k = (k−1)(k−2)/2·Φ + (k−1)·φ₂ + offset` with
/// `Φ(4m) = π/m` and `Φ(4m+2) = 2mπ/(2m+1)`.
pub fn ur_n_phases<T: Real>(n: usize, phi2: T, global_offset: T) -> Result<PhaseTuple<T>> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::invalid("n", format!("UR-n needs an even n ≥ 2, got {n}")));
    }
    let m = n / 4;
    let big_phi = if n % 4 == 0 {
        T::one() / T::from_usize_lossy(m)
    } else {
        T::from_usize_lossy(2 * m) / T::from_usize_lossy(2 * m + 1)
    };
    let phi2 = to_half_turns(phi2);
    let offset = to_half_turns(global_offset);
    let two = T::lit(2.0);
    let phases = (1..=n)
        .map(|k| {
            let quad = T::from_usize_lossy((k - 1) * k.saturating_sub(2) / 2);
            let lin = T::from_usize_lossy(k - 1);
            // Reduce each term separately so large integer multiples stay exact.
            let x = (quad * big_phi) % two + (lin * phi2) % two + offset;
            from_half_turns(x)
        })
        .collect();
    PhaseTuple::new(phases)
}

/// Eight-pulse pattern `φ₁, φ₂, φ₂+π, φ₁+π, φ₁+π, φ₂+π, φ₂, φ₁`.
pub fn constrained_expand<T: Real>(phi1: T, phi2: T) -> PhaseTuple<T> {
    let a = to_half_turns(phi1);
    let b = to_half_turns(phi2);
    let one = T::one();
    let pattern = [a, b, b + one, a + one, a + one, b + one, b, a];
    PhaseTuple::new(pattern.iter().map(|&x| from_half_turns(x)).collect()).expect("eight phases")
}

/// Least significant bit of a `bits`-bit phase word.
pub fn dds_lsb<T: Real>(bits: u32) -> T {
    T::TAU() / T::lit(2f64.powi(bits as i32))
}

/// Rounds `phi` to the nearest multiple of `2π/2^bits`; exact ties go toward zero.
pub fn quantize_phase_dds<T: Real>(phi: T, bits: u32) -> Result<T> {
    if !(1..=32).contains(&bits) {
        return Err(Error::invalid("quantize_bits", format!("must be in [1, 32], got {bits}")));
    }
    let lsb = dds_lsb::<T>(bits);
    let q = phi / lsb;
    let trunc = q.trunc();
    let n = if (q - trunc).abs() == T::lit(0.5) {
        trunc
    } else {
        q.round()
    };
    Ok(n * lsb)
}

/// Oscillating phase signal `δφ·sin(ω(t_i − t_1) + θ₀)` added to mirror pulse `i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Signal<T> {
    pub amplitude: T,
    pub omega: T,
    pub theta0: T,
}

/// Laser drive shared by all pulses before per-atom scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drive<T> {
    /// Peak Rabi frequency Ω₀ in rad/s.
    pub rabi: T,
    /// Excited-state decay rate Γ in 1/s.
    pub decay_rate: T,
}

impl<T: Real> Drive<T> {
    /// Ω₀ = π/τ_π and Γ = 1/21.6 μs.
    pub fn nominal(timing: &TimingSpec<T>) -> Self {
        Self {
            rabi: T::PI() / timing.pi_duration,
            decay_rate: T::one() / T::lit(EXCITED_LIFETIME),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    /// Opening (0) or closing (1) beamsplitter.
    Beamsplitter(u8),
    /// Mirror pulse, 1-based index.
    Mirror(usize),
    Free,
}

/// One constant-Hamiltonian piece of a sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment<T> {
    pub kind: SegmentKind,
    pub start: T,
    pub duration: T,
    /// Laser phase; zero for free evolution.
    pub phase: T,
}

impl<T> Segment<T> {
    pub fn is_driven(&self) -> bool {
        !matches!(self.kind, SegmentKind::Free)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSpec<T> {
    pub base_phases: PhaseTuple<T>,
    pub loops: usize,
    pub timing: TimingSpec<T>,
    pub final_bs_phase: T,
    pub signal: Option<Signal<T>>,
    pub quantize_bits: Option<u32>,
    pub drive: Drive<T>,
}

/// π/2 · L mirror pulses cycling through `base` · π/2(φ_b).
pub fn build_sequence<T: Real>(
    base: PhaseTuple<T>,
    loops: usize,
    timing: TimingSpec<T>,
    final_bs_phase: T,
) -> Result<SequenceSpec<T>> {
    let n = base.len();
    if loops == 0 {
        return Err(Error::invalid("loops", "must be at least 1"));
    }
    if loops % n != 0 {
        return Err(Error::LoopsNotMultiple { n, loops });
    }
    Ok(SequenceSpec {
        drive: Drive::nominal(&timing),
        base_phases: base,
        loops,
        timing,
        final_bs_phase: final_bs_phase.wrap_phase(),
        signal: None,
        quantize_bits: None,
    })
}

/// Adds a resonant-style phase signal to every mirror pulse.
pub fn inject_signal<T: Real>(
    seq: &SequenceSpec<T>,
    amplitude: T,
    omega: T,
    theta0: T,
) -> Result<SequenceSpec<T>> {
    if seq.signal.is_some() {
        return Err(Error::SignalAlreadyInjected);
    }
    let mut out = seq.clone();
    out.signal = Some(Signal {
        amplitude,
        omega,
        theta0,
    });
    Ok(out)
}

impl<T: Real> SequenceSpec<T> {
    pub fn with_final_phase(&self, phi_b: T) -> Self {
        let mut s = self.clone();
        s.final_bs_phase = phi_b.wrap_phase();
        s
    }

    pub fn with_drive(&self, drive: Drive<T>) -> Self {
        let mut s = self.clone();
        s.drive = drive;
        s
    }

    pub fn with_decay_rate(&self, decay_rate: T) -> Self {
        let mut s = self.clone();
        s.drive.decay_rate = decay_rate;
        s
    }

    pub fn with_quantization(&self, bits: Option<u32>) -> Self {
        let mut s = self.clone();
        s.quantize_bits = bits;
        s
    }

    /// Center time of mirror pulse `i` (1-based), measured from the start of
    /// the opening beamsplitter.
    pub fn mirror_center_time(&self, i: usize) -> T {
        let t = &self.timing;
        t.beamsplitter_duration
            + t.deadtime
            + T::from_usize_lossy(i - 1) * t.period()
            + t.pi_duration * T::lit(0.5)
    }

    /// Mirror phase increment contributed by the signal at pulse `i`.
    pub fn signal_phase(&self, i: usize) -> T {
        match &self.signal {
            None => T::zero(),
            Some(s) => {
                let dt = self.mirror_center_time(i) - self.mirror_center_time(1);
                s.amplitude * (s.omega * dt + s.theta0).sin()
            }
        }
    }

    /// Phase of every mirror pulse after cycling, signal injection and quantization.
    pub fn mirror_phases(&self) -> Vec<T> {
        let base = self.base_phases.as_slice();
        (1..=self.loops)
            .map(|i| {
                let raw = base[(i - 1) % base.len()] + self.signal_phase(i);
                let p = match self.quantize_bits {
                    Some(bits) => quantize_phase_dds(raw.wrap_phase(), bits).unwrap_or(raw),
                    None => raw,
                };
                p.wrap_phase()
            })
            .collect()
    }

    /// Start-to-end duration of the whole program.
    pub fn total_duration(&self) -> T {
        let t = &self.timing;
        T::lit(2.0) * t.beamsplitter_duration
            + T::from_usize_lossy(self.loops) * t.period()
            + t.deadtime
    }

    /// Piecewise-constant timeline: BS, free, (mirror, free)×L, BS.
    pub fn segments(&self) -> Vec<Segment<T>> {
        let t = &self.timing;
        let mut out = Vec::with_capacity(2 * self.loops + 3);
        let mut clock = T::zero();
        let mut push = |kind, duration, phase| {
            out.push(Segment {
                kind,
                start: clock,
                duration,
                phase,
            });
            clock += duration;
        };
        push(SegmentKind::Beamsplitter(0), t.beamsplitter_duration, T::zero());
        push(SegmentKind::Free, t.deadtime, T::zero());
        for (i, phase) in self.mirror_phases().into_iter().enumerate() {
            push(SegmentKind::Mirror(i + 1), t.pi_duration, phase);
            push(SegmentKind::Free, t.deadtime, T::zero());
        }
        push(SegmentKind::Beamsplitter(1), t.beamsplitter_duration, self.final_bs_phase);
        out
    }
}
