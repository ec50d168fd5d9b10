//! Free-space Helmholtz kernel `Φ(x, y) = e^{ik|x-y|} / (4π|x-y|)` and the
//! combined layer kernel `η₁ ∂Φ/∂n_y + iη₂ Φ`.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::WaveContext;
use crate::error::{NfsError, Result};
use crate::geometry::{dot, norm, sub, Point3};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn separation(x: Point3, y: Point3) -> Result<(Point3, f64)> {
    let d = sub(x, y);
    let r = norm(d);
    if !(r > 0.0) {
        return Err(NfsError::Domain(
            "kernel evaluated at coincident points".into(),
        ));
    }
    Ok((d, r))
}

#[inline]
fn phi_radial(k: f64, r: f64) -> Complex64 {
    Complex64::from_polar(1.0 / (4.0 * PI * r), k * r)
}

/// `Φ(x, y)`.
pub fn green_free(x: Point3, y: Point3, ctx: &WaveContext) -> Result<Complex64> {
    let (_, r) = separation(x, y)?;
    Ok(phi_radial(ctx.k, r))
}

/// `∇_y Φ(x, y) = (ik - 1/r) Φ (y - x) / r`.
pub fn green_free_grad_y(x: Point3, y: Point3, ctx: &WaveContext) -> Result<[Complex64; 3]> {
    let (d, r) = separation(x, y)?;
    let g = (I * ctx.k - 1.0 / r) * phi_radial(ctx.k, r) / r;
    // y - x = -d
    Ok([-g * d[0], -g * d[1], -g * d[2]])
}

/// Combined layer kernel `η₁ ∂Φ/∂n_y + iη₂ Φ` at a source node with unit
/// normal `n_y`. Callers guarantee `x != y`.
#[inline]
pub(crate) fn combined(x: Point3, y: Point3, n_y: Point3, ctx: &WaveContext) -> Complex64 {
    let d = sub(x, y);
    let r = norm(d);
    let phi = phi_radial(ctx.k, r);
    let dphi = (I * ctx.k - 1.0 / r) * phi;
    // ∂Φ/∂n_y = Φ'(r) (y - x)·n_y / r
    let dn = -dphi * (dot(d, n_y) / r);
    ctx.eta1 * dn + I * ctx.eta2 * phi
}

/// `n_x · ∇_x` of the combined layer kernel.
#[inline]
pub(crate) fn combined_normal_derivative(
    x: Point3,
    n_x: Point3,
    y: Point3,
    n_y: Point3,
    ctx: &WaveContext,
) -> Complex64 {
    let d = sub(x, y);
    let r = norm(d);
    let inv_r = 1.0 / r;
    let phi = phi_radial(ctx.k, r);
    let a = I * ctx.k - inv_r;
    let d1 = a * phi; // Φ'
    let d2 = (a * a + inv_r * inv_r) * phi; // Φ''
    let f = d1 * inv_r; // Φ'/r
    let df = d2 * inv_r - d1 * inv_r * inv_r; // (Φ'/r)'
    let d_ny = dot(d, n_y);
    let d_nx = dot(d, n_x);
    let ny_nx = dot(n_y, n_x);
    // ∇_x[-(Φ'/r)(d·n_y)] = -(Φ'/r)' (d/r)(d·n_y) - (Φ'/r) n_y
    let double = -df * (d_nx * inv_r * d_ny) - f * ny_nx;
    // ∇_x Φ = Φ' d / r
    let single = d1 * (d_nx * inv_r);
    ctx.eta1 * double + I * ctx.eta2 * single
}
