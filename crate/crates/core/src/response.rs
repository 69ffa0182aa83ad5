//! Phase amplification and frequency response of resonant sequences.

use crate::ensemble::{measure_fringe, ScanSetup};
use crate::error::{Error, Result};
use crate::fit::FringeResult;
use crate::sequence::{inject_signal, quantize_phase_dds, SequenceSpec, TimingSpec};
use crate::Real;

/// Signal reference phase that puts consecutive mirror pulses at opposite extrema.
pub fn resonant_theta0<T: Real>() -> T {
    T::FRAC_PI_2()
}

fn with_signal<T: Real>(template: &SequenceSpec<T>, amplitude: T, omega: T) -> Result<SequenceSpec<T>> {
    inject_signal(template, amplitude, omega, resonant_theta0())
}

fn require_unsignaled<T: Real>(template: &SequenceSpec<T>) -> Result<()> {
    if template.signal.is_some() {
        return Err(Error::SignalAlreadyInjected);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplificationPoint<T> {
    pub delta_phi: T,
    /// Fringe phase relative to the unsignaled sequence, unwrapped.
    pub phase: T,
    pub phase_err: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Amplification<T> {
    pub slope: T,
    pub slope_err: T,
    pub points: Vec<AmplificationPoint<T>>,
    /// Fit of the unsignaled sequence.
    pub baseline: FringeResult<T>,
}

/// Unwraps `raw` phases at sorted `xs` by nearest-branch continuation outward from `x = 0`.
///
/// `step_bound` gives the largest phase change expected between neighbours;
/// exceeding π makes the branch choice ambiguous.
fn unwrap_from_origin<T: Real>(xs: &[T], raw: &[T], step_bound: impl Fn(T, T) -> T) -> Result<Vec<T>> {
    let n = xs.len();
    let mut out = vec![T::zero(); n];
    // Index of the point nearest zero anchors the continuation.
    let start = (0..n)
        .min_by(|&a, &b| xs[a].abs().partial_cmp(&xs[b].abs()).expect("finite"))
        .unwrap_or(0);
    if n == 0 {
        return Ok(out);
    }
    out[start] = raw[start].wrap_signed();
    let mut walk = |range: Box<dyn Iterator<Item = (usize, usize)>>| -> Result<()> {
        for (prev, k) in range {
            if step_bound(xs[prev], xs[k]) > T::PI() {
                return Err(Error::UnwrapAmbiguity {
                    from: xs[prev].to_f64_lossy(),
                    to: xs[k].to_f64_lossy(),
                    jump: step_bound(xs[prev], xs[k]).to_f64_lossy(),
                });
            }
            out[k] = out[prev] + (raw[k] - out[prev]).wrap_signed();
        }
        Ok(())
    };
    walk(Box::new((start + 1..n).map(|k| (k - 1, k))))?;
    walk(Box::new((0..start).rev().map(|k| (k + 1, k))))?;
    Ok(out)
}

fn sorted_indices<T: Real>(xs: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("finite"));
    idx
}

/// Resonant phase response `Δφ(δφ) − Δφ(0)` and its slope through the origin.
pub fn measure_amplification<T: Real>(
    template: &SequenceSpec<T>,
    delta_phis: &[T],
    setup: &ScanSetup<T>,
) -> Result<Amplification<T>> {
    require_unsignaled(template)?;
    if delta_phis.is_empty() || delta_phis.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("delta_phis", "need at least one finite amplitude"));
    }
    let baseline = measure_fringe(template, setup)?;
    let omega = template.timing.resonance_omega();
    let idx = sorted_indices(delta_phis);
    let xs: Vec<T> = idx.iter().map(|&i| delta_phis[i]).collect();
    let fits = xs
        .iter()
        .map(|&x| measure_fringe(&with_signal(template, x, omega)?, setup))
        .collect::<Result<Vec<_>>>()?;
    let raw: Vec<T> = fits.iter().map(|f| f.phase - baseline.phase).collect();
    let gain = T::lit(2.0) * T::from_usize_lossy(template.loops);
    let ys = unwrap_from_origin(&xs, &raw, |a, b| gain * (b - a).abs())?;
    // Anchor the branch so that δφ = 0 maps to zero.
    let points: Vec<AmplificationPoint<T>> = xs
        .iter()
        .zip(&ys)
        .zip(&fits)
        .map(|((&delta_phi, &phase), f)| AmplificationPoint {
            delta_phi,
            phase,
            phase_err: f.phase_err.hypot(baseline.phase_err),
        })
        .collect();
    let sxx: T = xs.iter().map(|&x| x * x).sum();
    if sxx == T::zero() {
        return Err(Error::invalid("delta_phis", "all amplitudes are zero"));
    }
    let sxy: T = points.iter().map(|p| p.delta_phi * p.phase).sum();
    let slope = sxy / sxx;
    let propagated = points
        .iter()
        .map(|p| (p.delta_phi * p.phase_err).powi(2))
        .sum::<T>()
        .sqrt()
        / sxx;
    let scatter = if points.len() > 1 {
        let rss: T = points.iter().map(|p| (p.phase - slope * p.delta_phi).powi(2)).sum();
        (rss / T::from_usize_lossy(points.len() - 1) / sxx).sqrt()
    } else {
        T::zero()
    };
    Ok(Amplification {
        slope,
        slope_err: propagated.max(scatter),
        points,
        baseline,
    })
}

/// Self-normalized response of a perfect, instantaneous-pulse train:
/// `H(ω) = (1/L)·Σ_i (−1)^{i−1}·sin(ω(t_i − t_1) + π/2)`.
pub fn analytic_response<T: Real>(loops: usize, timing: &TimingSpec<T>, omega: T) -> T {
    let period = timing.period();
    let theta0 = resonant_theta0::<T>();
    let mut sum = T::zero();
    for k in 0..loops {
        let sign = if k % 2 == 0 { T::one() } else { -T::one() };
        sum += sign * (omega * T::from_usize_lossy(k) * period + theta0).sin();
    }
    sum / T::from_usize_lossy(loops)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponsePoint<T> {
    pub offset_hz: T,
    pub signed: T,
    pub magnitude: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseCurve<T> {
    pub points: Vec<ResponsePoint<T>>,
    pub resonance_hz: T,
    pub loops: usize,
}

impl<T: Real> ResponseCurve<T> {
    /// Full width at half maximum of `|response|` around δf = 0, by linear
    /// interpolation; `None` if the curve does not fall below ½ on both sides.
    pub fn fwhm(&self) -> Option<T> {
        let mut pts: Vec<(T, T)> = self.points.iter().map(|p| (p.offset_hz, p.magnitude)).collect();
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
        let centre = pts.iter().position(|p| p.0 == T::zero())?;
        let half = T::lit(0.5);
        let cross = |a: (T, T), b: (T, T)| a.0 + (b.0 - a.0) * (a.1 - half) / (a.1 - b.1);
        let right = (centre..pts.len() - 1)
            .find(|&k| pts[k + 1].1 < half)
            .map(|k| cross(pts[k], pts[k + 1]))?;
        let left = (1..=centre)
            .rev()
            .find(|&k| pts[k - 1].1 < half)
            .map(|k| cross(pts[k], pts[k - 1]))?;
        Some(right - left)
    }
}

/// Response at `f_R + δf` over the response at `f_R`, for signal amplitude `delta_phi`.
pub fn response_vs_offset<T: Real>(
    template: &SequenceSpec<T>,
    delta_phi: T,
    offsets_hz: &[T],
    setup: &ScanSetup<T>,
) -> Result<ResponseCurve<T>> {
    require_unsignaled(template)?;
    if !offsets_hz.iter().any(|f| *f <= T::zero()) || !offsets_hz.iter().any(|f| *f >= T::zero()) {
        return Err(Error::invalid("offsets_hz", "must bracket zero"));
    }
    let baseline = measure_fringe(template, setup)?.phase;
    let f_r = template.timing.resonance_hz();
    let shift = |f: T| -> Result<T> {
        let seq = with_signal(template, delta_phi, T::TAU() * (f_r + f))?;
        Ok((measure_fringe(&seq, setup)?.phase - baseline).wrap_signed())
    };
    let reference = shift(T::zero())?;
    if reference == T::zero() {
        return Err(Error::invalid("delta_phi", "no phase response at resonance"));
    }
    let points = offsets_hz
        .iter()
        .map(|&f| {
            let r = if f == T::zero() { T::one() } else { shift(f)? / reference };
            Ok(ResponsePoint {
                offset_hz: f,
                signed: r,
                magnitude: r.abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ResponseCurve {
        points,
        resonance_hz: f_r,
        loops: template.loops,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaircasePoint<T> {
    pub commanded: T,
    /// Amplitude actually applied after phase-word rounding.
    pub quantized: T,
    pub measured: T,
    /// `2L` times the applied amplitude.
    pub expected_plateau: T,
}

/// Resonant response to commanded amplitudes rounded to `bits`-bit phase words.
/// `None` applies the amplitudes unrounded.
pub fn dds_staircase<T: Real>(
    template: &SequenceSpec<T>,
    commanded: &[T],
    bits: Option<u32>,
    setup: &ScanSetup<T>,
) -> Result<Vec<StaircasePoint<T>>> {
    require_unsignaled(template)?;
    let baseline = measure_fringe(template, setup)?.phase;
    let omega = template.timing.resonance_omega();
    let gain = T::lit(2.0) * T::from_usize_lossy(template.loops);
    let idx = sorted_indices(commanded);
    let xs: Vec<T> = idx.iter().map(|&i| commanded[i]).collect();
    let quantized = xs
        .iter()
        .map(|&c| match bits {
            Some(b) => quantize_phase_dds(c, b),
            None => Ok(c),
        })
        .collect::<Result<Vec<_>>>()?;
    let raw = quantized
        .iter()
        .map(|&q| {
            if q == T::zero() {
                return Ok(T::zero());
            }
            Ok(measure_fringe(&with_signal(template, q, omega)?, setup)?.phase - baseline)
        })
        .collect::<Result<Vec<_>>>()?;
    let measured = unwrap_from_origin(&quantized, &raw, |a, b| gain * (b - a).abs())?;
    let mut out: Vec<StaircasePoint<T>> = xs
        .iter()
        .zip(&quantized)
        .zip(&measured)
        .map(|((&c, &q), &m)| StaircasePoint {
            commanded: c,
            quantized: q,
            measured: m,
            expected_plateau: gain * q,
        })
        .collect();
    // Restore caller order.
    let mut ordered = vec![out[0]; out.len()];
    for (pos, &i) in idx.iter().enumerate() {
        ordered[i] = out[pos];
    }
    out = ordered;
    Ok(out)
}
