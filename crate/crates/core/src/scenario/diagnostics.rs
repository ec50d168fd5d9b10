//! Field diagnostics: errors against the target, sup norms, far-field decay,
//! radiated power and residuals of the Helmholtz equation and radiation
//! condition.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{NfsError, Result};
use crate::geometry::{norm, scale, sphere_rule, Point3, QuadratureRule};
use crate::potentials::{DensityCoefficients, FieldEvaluator};

/// Summary of `|u - u₁| / |u₁|` over a point set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub median: f64,
    pub max: f64,
    pub points: usize,
    /// Points skipped because the target vanishes there.
    pub excluded: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelativeError {
    /// Per point; `NaN` where the target vanishes.
    pub values: Vec<f64>,
    pub summary: ErrorSummary,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn pointwise_relative_error(u: &[Complex64], u1: &[Complex64]) -> Result<RelativeError> {
    if u.len() != u1.len() {
        return Err(NfsError::Data(format!(
            "field has {} samples but target has {}",
            u.len(),
            u1.len()
        )));
    }
    let values: Vec<f64> = u
        .iter()
        .zip(u1)
        .map(|(a, b)| if b.norm() > 0.0 { (a - b).norm() / b.norm() } else { f64::NAN })
        .collect();
    let mut kept: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    kept.sort_by(f64::total_cmp);
    let summary = ErrorSummary {
        median: median(&kept),
        max: kept.last().copied().unwrap_or(f64::NAN),
        points: kept.len(),
        excluded: values.len() - kept.len(),
    };
    Ok(RelativeError { values, summary })
}

/// Largest modulus, `0` for an empty slice.
pub fn sup_abs(u: &[Complex64]) -> f64 {
    u.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FarFieldSample {
    pub radius: f64,
    /// `r · sup_{|x| = r} |u|`.
    pub r_sup: f64,
}

/// `r · sup|u|` on spheres of the given radii, the sup taken over
/// `directions`.
pub fn far_field_decay(
    evaluator: &FieldEvaluator,
    w: &DensityCoefficients,
    radii: &[f64],
    directions: &[Point3],
) -> Result<Vec<FarFieldSample>> {
    radii
        .iter()
        .map(|&r| {
            if !(r > evaluator.source_radius) {
                return Err(NfsError::Geometry(format!("far-field radius {r} is inside the source")));
            }
            let pts: Vec<Point3> = directions.iter().map(|d| scale(*d, r)).collect();
            let u = evaluator.field(w, &pts)?;
            Ok(FarFieldSample {
                radius: r,
                r_sup: r * sup_abs(&u),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    pub radius: f64,
    pub power: f64,
    /// The measurement sphere is within twice the source radius, where the
    /// quadrature is less reliable.
    pub near_source: bool,
}

/// `P = Re Σ w conj(u) v_n` with `v_n = -i/(ρck) ∂u/∂n` over a closed
/// surface rule with outward normals.
pub fn radiated_power(evaluator: &FieldEvaluator, w: &DensityCoefficients, surface: &QuadratureRule) -> Result<f64> {
    let normals = surface
        .normals
        .as_ref()
        .ok_or_else(|| NfsError::Config("power surface needs normals".into()))?;
    let u = evaluator.field(w, &surface.points)?;
    let dudn = evaluator.normal_derivative(w, &surface.points, normals)?;
    let vf = evaluator.ctx.velocity_factor();
    Ok(surface
        .weights
        .iter()
        .zip(u.iter().zip(&dudn))
        .map(|(wt, (p, d))| wt * (p.conj() * vf * d).re)
        .sum())
}

pub fn radiated_power_on_spheres(
    evaluator: &FieldEvaluator,
    w: &DensityCoefficients,
    radii: &[f64],
    rule: [usize; 2],
) -> Result<Vec<PowerSample>> {
    radii
        .iter()
        .map(|&r| {
            let sphere = sphere_rule(r, evaluator.center, rule[0], rule[1])?;
            Ok(PowerSample {
                radius: r,
                power: radiated_power(evaluator, w, &sphere.rule)?,
                near_source: r < 2.0 * evaluator.source_radius,
            })
        })
        .collect()
}

/// Relative spread `(max - min) / max|P|` of the power over spheres.
pub fn power_spread(samples: &[PowerSample]) -> f64 {
    let max = samples.iter().map(|s| s.power).fold(f64::NEG_INFINITY, f64::max);
    let min = samples.iter().map(|s| s.power).fold(f64::INFINITY, f64::min);
    let scale = samples.iter().map(|s| s.power.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        0.0
    } else {
        (max - min) / scale
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiationCheck {
    pub radius: f64,
    /// `sup|∂_r u - iku| / (k sup|u|)`.
    pub normalized: f64,
    /// `sup|∂_r u - iku| / sup|u|`, which tends to `1/r` for any outgoing
    /// field.
    pub unnormalized: f64,
}

/// Sommerfeld residual on the sphere of radius `r`.
pub fn radiation_residual(
    evaluator: &FieldEvaluator,
    w: &DensityCoefficients,
    radius: f64,
    directions: &[Point3],
) -> Result<RadiationCheck> {
    let pts: Vec<Point3> = directions.iter().map(|d| scale(*d, radius)).collect();
    let normals: Vec<Point3> = directions.iter().map(|d| scale(*d, 1.0 / norm(*d))).collect();
    let u = evaluator.field(w, &pts)?;
    let dr = evaluator.normal_derivative(w, &pts, &normals)?;
    let ik = Complex64::new(0.0, evaluator.ctx.k);
    let res = dr.iter().zip(&u).map(|(d, v)| (d - ik * v).norm()).fold(0.0, f64::max);
    let sup = sup_abs(&u);
    let ratio = |den: f64| if den > 0.0 { res / den } else { 0.0 };
    Ok(RadiationCheck {
        radius,
        normalized: ratio(evaluator.ctx.k * sup),
        unnormalized: ratio(sup),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HelmholtzCheck {
    pub radius: f64,
    pub step: f64,
    /// `max|Δ_h u + k²u| / (k² max|u|)` over the stencil centres.
    pub relative: f64,
}

/// Stencil centres on the sphere of radius `r`: the six axis directions
/// turned off the coordinate planes.
fn helmholtz_centres(r: f64) -> Vec<Point3> {
    let dirs = [
        [1.0, 0.3, 0.2],
        [-1.0, 0.2, -0.3],
        [0.2, 1.0, 0.3],
        [-0.3, -1.0, 0.2],
        [0.3, -0.2, 1.0],
        [0.2, 0.3, -1.0],
    ];
    dirs.iter().map(|d| scale(*d, r / norm(*d))).collect()
}

/// Seven-point finite-difference Helmholtz residual at points on the sphere
/// of radius `r`.
pub fn helmholtz_residual(evaluator: &FieldEvaluator, w: &DensityCoefficients, radius: f64, step: f64) -> Result<HelmholtzCheck> {
    let centres = helmholtz_centres(radius);
    let mut pts = Vec::with_capacity(centres.len() * 7);
    for c in &centres {
        pts.push(*c);
        for axis in 0..3 {
            for s in [-1.0, 1.0] {
                let mut p = *c;
                p[axis] += s * step;
                pts.push(p);
            }
        }
    }
    let u = evaluator.field(w, &pts)?;
    let k2 = evaluator.ctx.k * evaluator.ctx.k;
    let mut res: f64 = 0.0;
    let mut sup: f64 = 0.0;
    for block in u.chunks(7) {
        let lap = (block[1..].iter().sum::<Complex64>() - block[0] * 6.0) / (step * step);
        res = res.max((lap + block[0] * k2).norm());
        sup = sup.max(block[0].norm());
    }
    Ok(HelmholtzCheck {
        radius,
        step,
        relative: if sup > 0.0 { res / (k2 * sup) } else { 0.0 },
    })
}

/// `Re(u e^{-i·kct})` for each phase.
pub fn time_snapshots(u: &[Complex64], kct: &[f64]) -> Vec<Vec<f64>> {
    kct.iter()
        .map(|p| {
            let rot = Complex64::from_polar(1.0, -p);
            u.iter().map(|v| (v * rot).re).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::WaveContext;
    use crate::specfun::HarmonicIndex;
    use std::f64::consts::PI;

    #[test]
    fn identical_fields_have_zero_error() {
        let u = vec![Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.1)];
        let e = pointwise_relative_error(&u, &u).unwrap();
        assert_eq!(e.summary.max, 0.0);
        let scaled: Vec<_> = u.iter().map(|v| v * 1.001).collect();
        let e = pointwise_relative_error(&scaled, &u).unwrap();
        assert!(e.values.iter().all(|v| (v - 1e-3).abs() < 1e-15));
    }

    #[test]
    fn zero_targets_are_excluded() {
        let u = vec![Complex64::new(1.0, 0.0); 3];
        let t = vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(2.0, 0.0)];
        let e = pointwise_relative_error(&u, &t).unwrap();
        assert_eq!(e.summary.excluded, 1);
        assert_eq!(e.summary.points, 2);
        assert_eq!(e.summary.median, 0.25);
        assert!(pointwise_relative_error(&u, &t[..2]).is_err());
    }

    #[test]
    fn snapshot_phases() {
        let u = vec![Complex64::new(0.3, -0.7)];
        let s = time_snapshots(&u, &[0.0, PI]);
        assert_eq!(s[0][0], 0.3);
        assert!((s[1][0] + 0.3).abs() < 1e-15);
    }

    #[test]
    fn zero_density_has_no_field() {
        let ev = FieldEvaluator::new(0.01, WaveContext::new(10.0).unwrap(), 1e-10);
        let w = DensityCoefficients::zeros(4);
        let dirs = crate::geometry::direction_set(5, 10).unwrap();
        let ff = far_field_decay(&ev, &w, &[10.0, 100.0], &dirs).unwrap();
        assert!(ff.iter().all(|s| s.r_sup == 0.0));
        let p = radiated_power_on_spheres(&ev, &w, &[1.0], [8, 16]).unwrap();
        assert_eq!(p[0].power, 0.0);
    }

    #[test]
    fn monopole_far_field_is_flat() {
        let ev = FieldEvaluator::new(0.01, WaveContext::new(10.0).unwrap(), 1e-10);
        let w = DensityCoefficients::unit(2, HarmonicIndex::new(0, 0).unwrap());
        let dirs = crate::geometry::direction_set(5, 10).unwrap();
        let ff = far_field_decay(&ev, &w, &[10.0, 100.0, 1000.0], &dirs).unwrap();
        for s in &ff[1..] {
            assert!((s.r_sup - ff[0].r_sup).abs() <= 1e-3 * ff[0].r_sup);
        }
        let rad = radiation_residual(&ev, &w, 100.0, &dirs).unwrap();
        // h₀ gives exactly 1/r before normalization
        assert!((rad.unnormalized - 0.01).abs() < 1e-9);
        assert!((rad.normalized - 0.001).abs() < 1e-10);
    }
}
