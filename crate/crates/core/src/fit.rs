//! Sinusoidal fringe fitting.

use crate::error::{Error, Result};
use crate::Real;

/// Fit of `P_e(φ_b) ≈ offset + (v/2)·cos(Δφ + φ_b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeResult<T> {
    pub visibility: T,
    /// Δφ in `(−π, π]`.
    pub phase: T,
    pub offset: T,
    pub visibility_err: T,
    /// Infinite when the phase is undefined.
    pub phase_err: T,
    pub offset_err: T,
    pub residual_rms: T,
    /// False when the fitted amplitude vanishes and Δφ carries no information.
    pub phase_defined: bool,
}

impl<T: Real> FringeResult<T> {
    /// Model value at `phi_b`.
    pub fn model(&self, phi_b: T) -> T {
        self.offset + self.visibility * T::lit(0.5) * (self.phase + phi_b).cos()
    }

    /// Visibility exceeds `k` standard errors.
    pub fn resolved(&self, k: T) -> bool {
        self.visibility > k * self.visibility_err
    }
}

/// Linear least squares on the basis `{1, cos φ_b, sin φ_b}`.
pub fn fit_fringe<T: Real>(scan: &[(T, T)]) -> Result<FringeResult<T>> {
    let n = scan.len();
    if n < 5 {
        return Err(Error::DegenerateFit(format!("need at least 5 points, got {n}")));
    }
    let mut ata = [[T::zero(); 3]; 3];
    let mut aty = [T::zero(); 3];
    for &(phi, y) in scan {
        let row = [T::one(), phi.cos(), phi.sin()];
        for i in 0..3 {
            aty[i] += row[i] * y;
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let inv = invert3(&ata).ok_or_else(|| {
        Error::DegenerateFit("design matrix is singular (scan phases do not span a period)".into())
    })?;
    let mut coef = [T::zero(); 3];
    for i in 0..3 {
        for j in 0..3 {
            coef[i] += inv[i][j] * aty[j];
        }
    }
    let [a, b, c] = coef;
    let mut rss = T::zero();
    for &(phi, y) in scan {
        let r = y - (a + b * phi.cos() + c * phi.sin());
        rss += r * r;
    }
    let dof = T::from_usize_lossy(n - 3);
    let s2 = if n > 3 { rss / dof } else { T::zero() };
    let var = |i: usize| (s2 * inv[i][i]).max(T::zero());
    let cov_bc = s2 * inv[1][2];

    let r = b.hypot(c);
    let two = T::lit(2.0);
    let visibility = two * r;
    let phase_defined = r > T::lit(1e-12);
    let (phase, phase_err, visibility_err) = if phase_defined {
        // Delta method on v = 2r and Δφ = atan2(−c, b).
        let (db, dc) = (b / r, c / r);
        let v_var = two * two * (db * db * var(1) + dc * dc * var(2) + two * db * dc * cov_bc);
        let (pb, pc) = (c / (r * r), -b / (r * r));
        let p_var = pb * pb * var(1) + pc * pc * var(2) + two * pb * pc * cov_bc;
        (
            (-c).atan2(b).wrap_signed(),
            p_var.max(T::zero()).sqrt(),
            v_var.max(T::zero()).sqrt(),
        )
    } else {
        (T::zero(), T::infinity(), two * var(1).max(var(2)).sqrt())
    };
    Ok(FringeResult {
        visibility,
        phase,
        offset: a,
        visibility_err,
        phase_err,
        offset_err: var(0).sqrt(),
        residual_rms: (rss / T::from_usize_lossy(n)).sqrt(),
        phase_defined,
    })
}

fn invert3<T: Real>(m: &[[T; 3]; 3]) -> Option<[[T; 3]; 3]> {
    let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let c00 = cof(1, 2, 1, 2);
    let c01 = -cof(1, 2, 0, 2);
    let c02 = cof(1, 2, 0, 1);
    let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
    let scale = m.iter().flatten().fold(T::zero(), |acc, v| acc.max(v.abs()));
    if !(det.abs() > T::lit(1e-10) * scale * scale * scale) {
        return None;
    }
    let adj = [
        [c00, -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
        [c01, cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
        [c02, -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
    ];
    let mut out = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = adj[i][j] / det;
        }
    }
    Some(out)
}

/// `n` phases evenly spaced over `[0, 2π)`.
pub fn phase_grid<T: Real>(n: usize) -> Vec<T> {
    let step = T::TAU() / T::from_usize_lossy(n);
    (0..n).map(|k| T::from_usize_lossy(k) * step).collect()
}
