//! Closed-form fields of single-harmonic densities.
//!
//! For a density `Y_l^m` on a sphere of radius `a` centred at the origin and
//! a target with `|x| > a`, the addition theorem gives
//!
//! ```text
//! u(x) = [η₁ ik² a² j_l'(ka) + iη₂ ik a² j_l(ka)] h_l(k|x|) Y_l^m(x̂).
//! ```

use num_complex::Complex64;

use super::{DensityCoefficients, WaveContext};
use crate::error::{NfsError, Result};
use crate::geometry::{norm, Point3};
use crate::specfun::{sph_harm, sph_harm_all, sph_harm_derivatives, HarmonicIndex, SphericalBessel};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Degree-dependent factor in front of `h_l(k|x|) Y_l^m(x̂)`.
pub fn layer_factor(degree: usize, source_radius: f64, ctx: &WaveContext) -> Result<Complex64> {
    let b = SphericalBessel::new(degree, ctx.k * source_radius)?;
    Ok(factor_from(&b, degree, source_radius, ctx))
}

fn factor_from(b: &SphericalBessel, l: usize, a: f64, ctx: &WaveContext) -> Complex64 {
    let k = ctx.k;
    ctx.eta1 * I * k * k * a * a * b.dj[l] + I * ctx.eta2 * I * k * a * a * b.j[l]
}

fn spherical(x: Point3) -> Result<(f64, f64, f64)> {
    let r = norm(x);
    if !(r > 0.0) {
        return Err(NfsError::Geometry("multipole evaluated at the origin".into()));
    }
    let theta = (x[2] / r).clamp(-1.0, 1.0).acos();
    let phi = x[1].atan2(x[0]);
    Ok((r, theta, phi))
}

fn check_outside(r: f64, a: f64) -> Result<()> {
    if !(r > a) {
        return Err(NfsError::Geometry(format!(
            "target radius {r:e} is not outside the source radius {a:e}"
        )));
    }
    Ok(())
}

/// Field of the unit density `Y_l^m` at `x`.
pub fn column_value(idx: HarmonicIndex, x: Point3, source_radius: f64, ctx: &WaveContext) -> Result<Complex64> {
    let (r, theta, phi) = spherical(x)?;
    check_outside(r, source_radius)?;
    let l = idx.degree();
    let f = layer_factor(l, source_radius, ctx)?;
    let h = SphericalBessel::new(l, ctx.k * r)?.hankel1(l);
    Ok(f * h * sph_harm(idx, theta, phi)?)
}

/// Field of an arbitrary density at `x`.
pub fn field(w: &DensityCoefficients, x: Point3, source_radius: f64, ctx: &WaveContext) -> Result<Complex64> {
    let (r, theta, phi) = spherical(x)?;
    check_outside(r, source_radius)?;
    let l_max = w.max_degree();
    let inner = SphericalBessel::new(l_max, ctx.k * source_radius)?;
    let outer = SphericalBessel::new(l_max, ctx.k * r)?;
    let y = sph_harm_all(l_max, theta, phi)?;
    let mut u = Complex64::new(0.0, 0.0);
    for idx in HarmonicIndex::all(l_max) {
        let l = idx.degree();
        u += w.get(idx) * factor_from(&inner, l, source_radius, ctx) * outer.hankel1(l) * y[idx.flat()];
    }
    Ok(u)
}

/// Cartesian gradient of the field of an arbitrary density at `x`.
///
/// Undefined on the polar axis, where the spherical frame degenerates.
pub fn field_gradient(
    w: &DensityCoefficients,
    x: Point3,
    source_radius: f64,
    ctx: &WaveContext,
) -> Result<[Complex64; 3]> {
    let (r, theta, phi) = spherical(x)?;
    check_outside(r, source_radius)?;
    let (st, ct) = theta.sin_cos();
    if st < 1e-12 {
        return Err(NfsError::Geometry("multipole gradient requested on the polar axis".into()));
    }
    let (sp, cp) = phi.sin_cos();
    let l_max = w.max_degree();
    let k = ctx.k;
    let inner = SphericalBessel::new(l_max, k * source_radius)?;
    let outer = SphericalBessel::new(l_max, k * r)?;
    let mut d_r = Complex64::new(0.0, 0.0);
    let mut d_t = Complex64::new(0.0, 0.0);
    let mut d_p = Complex64::new(0.0, 0.0);
    for idx in HarmonicIndex::all(l_max) {
        let c = w.get(idx);
        if c == Complex64::new(0.0, 0.0) {
            continue;
        }
        let l = idx.degree();
        let f = c * factor_from(&inner, l, source_radius, ctx);
        let y = sph_harm(idx, theta, phi)?;
        let (y_t, y_p) = sph_harm_derivatives(idx, theta, phi)?;
        let h = outer.hankel1(l);
        d_r += f * k * outer.hankel1_deriv(l) * y;
        d_t += f * h * y_t / r;
        d_p += f * h * y_p / (r * st);
    }
    Ok([
        d_r * st * cp + d_t * ct * cp - d_p * sp,
        d_r * st * sp + d_t * ct * sp + d_p * cp,
        d_r * ct - d_t * st,
    ])
}
