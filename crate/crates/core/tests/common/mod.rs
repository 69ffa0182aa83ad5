#![allow(dead_code)]

use std::collections::BTreeMap;

use num_complex::Complex64 as C;

use loopqoc::multipath::{Internal, PathSet};

/// `exp(−iHτ)` for a 2×2 Hermitian `H` by scaling and squaring a Taylor series.
pub fn expm_herm(h: [[C; 2]; 2], tau: f64) -> [[C; 2]; 2] {
    let mut a = [[C::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            a[i][j] = h[i][j] * C::new(0.0, -tau);
        }
    }
    let norm = a.iter().flatten().map(|z| z.norm()).sum::<f64>();
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    for row in a.iter_mut() {
        for z in row.iter_mut() {
            *z *= scale;
        }
    }
    let mul = |x: &[[C; 2]; 2], y: &[[C; 2]; 2]| {
        let mut out = [[C::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = x[i][0] * y[0][j] + x[i][1] * y[1][j];
            }
        }
        out
    };
    let mut result = [[C::new(1.0, 0.0), C::new(0.0, 0.0)], [C::new(0.0, 0.0), C::new(1.0, 0.0)]];
    let mut term = result;
    for k in 1..30 {
        term = mul(&term, &a);
        for row in term.iter_mut() {
            for z in row.iter_mut() {
                *z /= k as f64;
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        result = mul(&result, &result);
    }
    result
}

/// `½[−δσz + Ω(cos φ σx + sin φ σy)]`.
pub fn hamiltonian(rabi: f64, detuning: f64, phase: f64) -> [[C; 2]; 2] {
    let c = C::from_polar(0.5 * rabi, phase);
    [[C::new(-0.5 * detuning, 0.0), c.conj()], [c, C::new(0.5 * detuning, 0.0)]]
}

pub type PathMap = BTreeMap<(Internal, usize), C>;

/// Enumerates every branch of the multipath model explicitly (2·2^L paths)
/// and sums amplitudes per (state, site) after each mirror pulse.
///
/// Units are pulse lengths: the pulse has area `π(1+ε)` and detuning
/// `δτ = ratio·π(1+ε)`; a deadtime of `dead_ratio` pulse lengths precedes
/// each mirror; site `m` shifts the laser phase by `−site_phase·m`.
pub fn brute_force_paths(phases: &[f64], eps: f64, ratio: f64, dead_ratio: f64, site_phase: f64) -> Vec<PathMap> {
    let area = std::f64::consts::PI * (1.0 + eps);
    let det = ratio * area;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    // (internal index, site, amplitude)
    let mut paths: Vec<(usize, usize, C)> = vec![(0, 0, C::new(s, 0.0)), (1, 0, C::new(0.0, -s))];
    let mut out = Vec::new();
    for &phi in phases {
        let mut next = Vec::with_capacity(paths.len() * 2);
        for &(st, site, amp) in &paths {
            let (site, amp) = if st == 1 {
                (site + 1, amp * C::from_polar(1.0, -det * dead_ratio / 2.0))
            } else {
                (site, amp * C::from_polar(1.0, det * dead_ratio / 2.0))
            };
            let u = expm_herm(hamiltonian(area, det, phi - site_phase * site as f64), 1.0);
            for to in 0..2 {
                next.push((to, site, u[to][st] * amp));
            }
        }
        paths = next;
        let mut merged = PathMap::new();
        for &(st, site, amp) in &paths {
            let key = (if st == 0 { Internal::Ground } else { Internal::Excited }, site);
            *merged.entry(key).or_insert(C::new(0.0, 0.0)) += amp;
        }
        out.push(merged);
    }
    out
}

/// Largest amplitude difference between a merged snapshot and the enumeration.
pub fn max_path_diff(set: &PathSet<f64>, oracle: &PathMap) -> f64 {
    let mut worst: f64 = 0.0;
    for (&(internal, site), &amp) in oracle {
        worst = worst.max((set.amplitude(internal, site) - amp).norm());
    }
    for p in &set.paths {
        if !oracle.contains_key(&(p.internal, p.pos_index)) {
            worst = worst.max(p.amplitude.norm());
        }
    }
    worst
}

/// Pure-state propagation of a whole sequence with no decay, segment by
/// segment with [`expm_herm`]. Starts in the ground state.
pub fn propagate_pure(seq: &loopqoc::sequence::SequenceSpec<f64>, sample: &loopqoc::dynamics::AtomSample<f64>) -> [C; 2] {
    let mut psi = [C::new(1.0, 0.0), C::new(0.0, 0.0)];
    for seg in seq.segments() {
        let rabi = if seg.is_driven() {
            seq.drive.rabi * sample.rabi_scale
        } else {
            0.0
        };
        let u = expm_herm(hamiltonian(rabi, sample.detuning, seg.phase), seg.duration);
        psi = [u[0][0] * psi[0] + u[0][1] * psi[1], u[1][0] * psi[0] + u[1][1] * psi[1]];
    }
    psi
}
