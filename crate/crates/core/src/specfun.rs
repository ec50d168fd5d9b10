//! Special functions used by the layer-potential kernels and the multipole
//! oracle.
//!
//! Spherical harmonics are the orthonormal complex family with the
//! Condon–Shortley phase,
//!
//! ```text
//! Y_l^m(θ, φ) = P̄_l^m(cos θ) e^{imφ},   ∫_{S²} |Y_l^m|² dΩ = 1,
//! Y_l^{-m}    = (-1)^m conj(Y_l^m),
//! ```
//!
//! where θ is the polar angle (colatitude). Spherical Bessel functions use
//! Miller's downward recurrence for `j_l` when `l` may exceed `x`, and upward
//! recurrence for `y_l`. All functions are pure and safe to call from
//! parallel loops.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{NfsError, Result};

/// Largest degree accepted by the public special-function entry points.
pub const MAX_DEGREE: usize = 40;

/// A (degree, order) pair with `|order| <= degree`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "(usize, i64)", into = "(usize, i64)")]
pub struct HarmonicIndex {
    degree: usize,
    order: i64,
}

impl HarmonicIndex {
    pub fn new(degree: usize, order: i64) -> Result<Self> {
        if order.unsigned_abs() as usize > degree {
            return Err(NfsError::Domain(format!(
                "harmonic order {order} exceeds degree {degree}"
            )));
        }
        Ok(Self { degree, order })
    }

    pub fn degree(self) -> usize {
        self.degree
    }

    pub fn order(self) -> i64 {
        self.order
    }

    /// Position in the flat ordering `l² + l + m`.
    pub fn flat(self) -> usize {
        let l = self.degree as i64;
        (l * l + l + self.order) as usize
    }

    pub fn from_flat(index: usize) -> Self {
        let mut l = (index as f64).sqrt() as usize;
        // guard the float square root at perfect squares
        while l * l > index {
            l -= 1;
        }
        while (l + 1) * (l + 1) <= index {
            l += 1;
        }
        let m = index as i64 - (l * l + l) as i64;
        Self {
            degree: l,
            order: m,
        }
    }

    /// Number of harmonics with degree at most `max_degree`.
    pub fn count(max_degree: usize) -> usize {
        (max_degree + 1) * (max_degree + 1)
    }

    /// All indices up to `max_degree` in flat order.
    pub fn all(max_degree: usize) -> impl Iterator<Item = HarmonicIndex> {
        (0..Self::count(max_degree)).map(Self::from_flat)
    }
}

impl TryFrom<(usize, i64)> for HarmonicIndex {
    type Error = NfsError;

    fn try_from((l, m): (usize, i64)) -> Result<Self> {
        Self::new(l, m)
    }
}

impl From<HarmonicIndex> for (usize, i64) {
    fn from(idx: HarmonicIndex) -> Self {
        (idx.degree, idx.order)
    }
}

fn check_degree(l: usize) -> Result<()> {
    if l > MAX_DEGREE {
        return Err(NfsError::Domain(format!(
            "degree {l} exceeds the supported maximum {MAX_DEGREE}"
        )));
    }
    Ok(())
}

fn check_polar(theta: f64) -> Result<()> {
    if !(0.0..=PI).contains(&theta) {
        return Err(NfsError::Domain(format!(
            "polar angle {theta} outside [0, π]"
        )));
    }
    Ok(())
}

/// Offset of `(l, m)`, `m >= 0`, in a table from [`legendre_table`].
#[inline]
pub fn legendre_offset(l: usize, m: usize) -> usize {
    l * (l + 1) / 2 + m
}

/// Orthonormal associated Legendre values `P̄_l^m(cos θ)` for
/// `0 <= m <= l <= max_degree`, stored at [`legendre_offset`]. The
/// Condon–Shortley phase is included. `cos_theta` and `sin_theta` are passed
/// separately so the caller keeps full precision near the poles.
///
/// No degree cap is applied; quadrature code uses this for tables larger than
/// [`MAX_DEGREE`].
pub fn legendre_table(max_degree: usize, cos_theta: f64, sin_theta: f64) -> Vec<f64> {
    let n = legendre_offset(max_degree, max_degree) + 1;
    let mut p = vec![0.0; n];
    p[0] = 0.5 / PI.sqrt();
    for m in 1..=max_degree {
        let mf = m as f64;
        p[legendre_offset(m, m)] =
            -((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * sin_theta * p[legendre_offset(m - 1, m - 1)];
    }
    for m in 0..max_degree {
        p[legendre_offset(m + 1, m)] =
            (2.0 * m as f64 + 3.0).sqrt() * cos_theta * p[legendre_offset(m, m)];
    }
    for m in 0..=max_degree {
        let mf = m as f64;
        for l in (m + 2)..=max_degree {
            let lf = l as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0))
                .sqrt();
            p[legendre_offset(l, m)] =
                a * (cos_theta * p[legendre_offset(l - 1, m)] - b * p[legendre_offset(l - 2, m)]);
        }
    }
    p
}

/// `Y_l^m` from a Legendre table; negative orders use the conjugation identity.
#[inline]
fn harmonic_from_table(table: &[f64], l: usize, m: i64, phi: f64) -> Complex64 {
    let ma = m.unsigned_abs() as usize;
    let base = Complex64::from_polar(table[legendre_offset(l, ma)], m as f64 * phi);
    if m < 0 && ma % 2 == 1 {
        -base
    } else {
        base
    }
}

/// Orthonormal complex spherical harmonic `Y_l^m(θ, φ)`.
pub fn sph_harm(idx: HarmonicIndex, theta: f64, phi: f64) -> Result<Complex64> {
    check_degree(idx.degree)?;
    check_polar(theta)?;
    let table = legendre_table(idx.degree, theta.cos(), theta.sin());
    Ok(harmonic_from_table(&table, idx.degree, idx.order, phi))
}

/// All harmonics up to `max_degree` at one direction, in flat order.
pub fn sph_harm_all(max_degree: usize, theta: f64, phi: f64) -> Result<Vec<Complex64>> {
    check_degree(max_degree)?;
    check_polar(theta)?;
    let table = legendre_table(max_degree, theta.cos(), theta.sin());
    Ok(HarmonicIndex::all(max_degree)
        .map(|idx| harmonic_from_table(&table, idx.degree, idx.order, phi))
        .collect())
}

/// Angular derivatives `(∂Y/∂θ, ∂Y/∂φ)`.
///
/// Uses the ladder form
/// `∂_θ Y_l^m = ½[√((l-m)(l+m+1)) e^{-iφ} Y_l^{m+1} - √((l+m)(l-m+1)) e^{iφ} Y_l^{m-1}]`,
/// which has no `cot θ` term and so returns the finite limits at the poles.
pub fn sph_harm_derivatives(
    idx: HarmonicIndex,
    theta: f64,
    phi: f64,
) -> Result<(Complex64, Complex64)> {
    check_degree(idx.degree)?;
    check_polar(theta)?;
    let l = idx.degree;
    let m = idx.order;
    let table = legendre_table(l, theta.cos(), theta.sin());
    let lf = l as f64;
    let mf = m as f64;
    let up = if m < l as i64 {
        ((lf - mf) * (lf + mf + 1.0)).sqrt()
            * Complex64::from_polar(1.0, -phi)
            * harmonic_from_table(&table, l, m + 1, phi)
    } else {
        Complex64::new(0.0, 0.0)
    };
    let down = if m > -(l as i64) {
        ((lf + mf) * (lf - mf + 1.0)).sqrt()
            * Complex64::from_polar(1.0, phi)
            * harmonic_from_table(&table, l, m - 1, phi)
    } else {
        Complex64::new(0.0, 0.0)
    };
    let d_theta = 0.5 * (up - down);
    let d_phi = Complex64::new(0.0, mf) * harmonic_from_table(&table, l, m, phi);
    Ok((d_theta, d_phi))
}

fn check_argument(x: f64) -> Result<()> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(NfsError::Domain(format!(
            "spherical Bessel argument must be positive and finite, got {x}"
        )));
    }
    Ok(())
}

/// `j_0..=j_lmax` without the degree cap; `x > 0` assumed.
fn bessel_j_values(lmax: usize, x: f64) -> Vec<f64> {
    let (s, c) = x.sin_cos();
    let j0 = s / x;
    let mut out = vec![0.0; lmax + 1];
    out[0] = j0;
    if lmax == 0 {
        return out;
    }
    if x >= 2.0 && x > lmax as f64 + 1.0 {
        // l < x everywhere: the upward recurrence is stable
        out[1] = s / (x * x) - c / x;
        for l in 1..lmax {
            out[l + 1] = (2.0 * l as f64 + 1.0) / x * out[l] - out[l - 1];
        }
        return out;
    }

    // Miller: recur downward from well above max(lmax, x), then normalize.
    let start = lmax + x.ceil() as usize + 32;
    let mut f_next = 0.0;
    let mut f = 1e-30;
    for l in (1..=start).rev() {
        let f_prev = (2.0 * l as f64 + 1.0) / x * f - f_next;
        f_next = f;
        f = f_prev;
        if l - 1 <= lmax {
            out[l - 1] = f;
        }
        if f.abs() > 1e250 {
            f *= 1e-250;
            f_next *= 1e-250;
            for v in out.iter_mut().skip(l - 1) {
                *v *= 1e-250;
            }
        }
    }
    // Normalize against whichever of j_0, j_1 is larger in magnitude so
    // zeros of j_0 do not destroy the scale.
    let j1 = if x < 1e-3 {
        x / 3.0 * (1.0 - x * x / 10.0)
    } else {
        s / (x * x) - c / x
    };
    let scale = if j0.abs() >= j1.abs() {
        j0 / out[0]
    } else {
        j1 / out[1]
    };
    for v in &mut out {
        *v *= scale;
    }
    out
}

/// `y_0..=y_lmax` by upward recurrence, failing on overflow.
fn bessel_y_values(lmax: usize, x: f64) -> Result<Vec<f64>> {
    let (s, c) = x.sin_cos();
    let mut out = vec![0.0; lmax + 1];
    out[0] = -c / x;
    if lmax >= 1 {
        out[1] = -c / (x * x) - s / x;
    }
    for l in 1..lmax {
        out[l + 1] = (2.0 * l as f64 + 1.0) / x * out[l] - out[l - 1];
    }
    if let Some(l) = out.iter().position(|v| !v.is_finite()) {
        return Err(NfsError::Overflow {
            function: "spherical Bessel y",
            degree: l,
            x,
        });
    }
    Ok(out)
}

/// Spherical Bessel function of the first kind `j_l(x)`.
pub fn sph_bessel_j(l: usize, x: f64) -> Result<f64> {
    check_degree(l)?;
    check_argument(x)?;
    Ok(bessel_j_values(l, x)[l])
}

/// Spherical Bessel function of the second kind `y_l(x)`.
pub fn sph_bessel_y(l: usize, x: f64) -> Result<f64> {
    check_degree(l)?;
    check_argument(x)?;
    Ok(bessel_y_values(l, x)?[l])
}

/// Spherical Hankel function of the first kind `h_l^{(1)}(x) = j_l(x) + i y_l(x)`.
pub fn sph_hankel1(l: usize, x: f64) -> Result<Complex64> {
    Ok(Complex64::new(sph_bessel_j(l, x)?, sph_bessel_y(l, x)?))
}

/// Values and first derivatives of `j_l`, `y_l` for `l = 0..=max_degree`.
#[derive(Clone, Debug)]
pub struct SphericalBessel {
    pub x: f64,
    pub j: Vec<f64>,
    pub dj: Vec<f64>,
    pub y: Vec<f64>,
    pub dy: Vec<f64>,
}

impl SphericalBessel {
    pub fn new(max_degree: usize, x: f64) -> Result<Self> {
        check_degree(max_degree)?;
        check_argument(x)?;
        let lmax = max_degree.max(1);
        let mut j = bessel_j_values(lmax, x);
        let mut y = bessel_y_values(lmax, x)?;
        // f_l' = f_{l-1} - (l+1)/x f_l, with f_0' = -f_1
        let deriv = |f: &[f64]| -> Vec<f64> {
            (0..=max_degree)
                .map(|l| {
                    if l == 0 {
                        -f[1]
                    } else {
                        f[l - 1] - (l as f64 + 1.0) / x * f[l]
                    }
                })
                .collect()
        };
        let dj = deriv(&j);
        let dy = deriv(&y);
        j.truncate(max_degree + 1);
        y.truncate(max_degree + 1);
        Ok(Self { x, j, dj, y, dy })
    }

    pub fn hankel1(&self, l: usize) -> Complex64 {
        Complex64::new(self.j[l], self.y[l])
    }

    pub fn hankel1_deriv(&self, l: usize) -> Complex64 {
        Complex64::new(self.dj[l], self.dy[l])
    }
}

/// `j_l'(x)`.
pub fn sph_bessel_j_deriv(l: usize, x: f64) -> Result<f64> {
    Ok(SphericalBessel::new(l, x)?.dj[l])
}

/// `y_l'(x)`.
pub fn sph_bessel_y_deriv(l: usize, x: f64) -> Result<f64> {
    Ok(SphericalBessel::new(l, x)?.dy[l])
}

/// `h_l^{(1)'}(x)`.
pub fn sph_hankel1_deriv(l: usize, x: f64) -> Result<Complex64> {
    Ok(SphericalBessel::new(l, x)?.hankel1_deriv(l))
}
