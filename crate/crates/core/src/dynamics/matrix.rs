//! Small fixed-size complex matrix kernels.

use num_complex::Complex;
use num_traits::{One, Zero};

use crate::Real;

pub type C<T> = Complex<T>;
pub type Mat2<T> = [[C<T>; 2]; 2];
pub type Mat4<T> = [[C<T>; 4]; 4];

pub fn identity2<T: Real>() -> Mat2<T> {
    let (o, z) = (C::one(), C::zero());
    [[o, z], [z, o]]
}

pub fn mul2<T: Real>(a: &Mat2<T>, b: &Mat2<T>) -> Mat2<T> {
    let mut out = [[C::zero(); 2]; 2];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn adjoint2<T: Real>(a: &Mat2<T>) -> Mat2<T> {
    [[a[0][0].conj(), a[1][0].conj()], [a[0][1].conj(), a[1][1].conj()]]
}

pub fn apply2<T: Real>(a: &Mat2<T>, v: &[C<T>; 2]) -> [C<T>; 2] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

/// Closed-form exponential of a 2×2 complex matrix.
///
/// Writes `M = τI + B` with `B` traceless, so `B² = s²I` and
/// `exp(M) = e^τ (cosh s · I + sinh(s)/s · B)`.
pub fn expm2<T: Real>(m: &Mat2<T>) -> Mat2<T> {
    let half = T::lit(0.5);
    let tau = (m[0][0] + m[1][1]) * half;
    let b = [[m[0][0] - tau, m[0][1]], [m[1][0], m[1][1] - tau]];
    let s2 = b[0][0] * b[0][0] + b[0][1] * b[1][0];
    let s = s2.sqrt();
    let (cosh, sinhc) = if s.norm() < T::lit(1e-4) {
        // Even series; both are analytic in s².
        let c = C::<T>::one() + s2 * half + s2 * s2 / T::lit(24.0);
        let sc = C::<T>::one() + s2 / T::lit(6.0) + s2 * s2 / T::lit(120.0);
        (c, sc)
    } else {
        (s.cosh(), s.sinh() / s)
    };
    let e = tau.exp();
    [
        [e * (cosh + sinhc * b[0][0]), e * sinhc * b[0][1]],
        [e * sinhc * b[1][0], e * (cosh + sinhc * b[1][1])],
    ]
}

pub fn identity4<T: Real>() -> Mat4<T> {
    let mut m = [[C::zero(); 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = C::one();
    }
    m
}

pub fn mul4<T: Real>(a: &Mat4<T>, b: &Mat4<T>) -> Mat4<T> {
    let mut out = [[C::zero(); 4]; 4];
    for i in 0..4 {
        for k in 0..4 {
            let aik = a[i][k];
            if aik.is_zero() {
                continue;
            }
            for j in 0..4 {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

pub fn apply4<T: Real>(a: &Mat4<T>, v: &[C<T>; 4]) -> [C<T>; 4] {
    let mut out = [C::zero(); 4];
    for (o, row) in out.iter_mut().zip(a.iter()) {
        *o = row[0] * v[0] + row[1] * v[1] + row[2] * v[2] + row[3] * v[3];
    }
    out
}

fn norm1_4<T: Real>(a: &Mat4<T>) -> T {
    (0..4)
        .map(|j| (0..4).map(|i| a[i][j].norm()).sum::<T>())
        .fold(T::zero(), T::max)
}

/// Matrix exponential of a 4×4 complex matrix by scaling and squaring with a
/// truncated Taylor series. The scaled norm is kept below 1/2, where 20 terms
/// reach f64 round-off.
pub fn expm4<T: Real>(a: &Mat4<T>) -> Mat4<T> {
    let norm = norm1_4(a);
    let mut squarings = 0u32;
    let mut scale = T::one();
    let half = T::lit(0.5);
    while norm * scale > half {
        scale *= half;
        squarings += 1;
    }
    let mut scaled = *a;
    for row in scaled.iter_mut() {
        for v in row.iter_mut() {
            *v = *v * scale;
        }
    }
    let mut result = identity4::<T>();
    let mut term = identity4::<T>();
    for k in 1..=20u32 {
        term = mul4(&term, &scaled);
        let inv = T::one() / T::lit(f64::from(k));
        for row in term.iter_mut() {
            for v in row.iter_mut() {
                *v = *v * inv;
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        result = mul4(&result, &result);
    }
    result
}
