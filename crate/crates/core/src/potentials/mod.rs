//! Combined double/single layer potentials on a fictitious source sphere.
//!
//! The radiated field is represented as
//!
//! ```text
//! u(x) = η₁ ∫ w(y) ∂Φ(x,y)/∂n_y dS_y + iη₂ ∫ w(y) Φ(x,y) dS_y,
//! ```
//!
//! with the density `w` expanded in spherical harmonics on the source sphere.
//! A [`Propagator`] maps harmonic coefficients to field samples. Its columns
//! are computed by tensor quadrature over the source sphere: the azimuthal
//! sums for all orders at once by FFT, then the polar sums against tabulated
//! Legendre functions.

mod kernel;
pub mod multipole;

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

pub use kernel::{green_free, green_free_grad_y};

use crate::error::{NfsError, Result};
use crate::geometry::{norm, sphere_rule, sub, Point3, QuadratureRule, RegionSpec, SampleSet, SphereRule};
use crate::parallel::{self, Execution};
use crate::specfun::{legendre_offset, legendre_table, HarmonicIndex, MAX_DEGREE};

/// Wavenumber, medium constants and layer weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveContext {
    pub k: f64,
    pub rho: f64,
    pub c: f64,
    /// Weight of the double layer.
    pub eta1: f64,
    /// Weight of the single layer (entering as `iη₂`).
    pub eta2: f64,
}

impl WaveContext {
    /// Nondimensional medium (`ρ = c = 1`) with layer weights `(1, k)`.
    pub fn new(k: f64) -> Result<Self> {
        let ctx = Self {
            k,
            rho: 1.0,
            c: 1.0,
            eta1: 1.0,
            eta2: k,
        };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn with_weights(self, eta1: f64, eta2: f64) -> Result<Self> {
        let ctx = Self { eta1, eta2, ..self };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(NfsError::Domain(format!("wavenumber must be positive, got {}", self.k)));
        }
        if !(self.rho > 0.0 && self.c > 0.0 && self.rho.is_finite() && self.c.is_finite()) {
            return Err(NfsError::Domain("density and sound speed must be positive".into()));
        }
        if !(self.eta1.is_finite() && self.eta2.is_finite()) || (self.eta1 == 0.0 && self.eta2 == 0.0) {
            return Err(NfsError::Domain("layer weights must be finite and not both zero".into()));
        }
        Ok(())
    }

    /// Factor `-i/(ρck)` turning `∂u/∂n` into normal velocity.
    pub fn velocity_factor(&self) -> Complex64 {
        Complex64::new(0.0, -1.0 / (self.rho * self.c * self.k))
    }
}

/// Spherical-harmonic coefficients of the density, flat order `l² + l + m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDensity")]
pub struct DensityCoefficients {
    max_degree: usize,
    coeffs: Vec<Complex64>,
}

#[derive(Deserialize)]
struct RawDensity {
    max_degree: usize,
    coeffs: Vec<Complex64>,
}

impl TryFrom<RawDensity> for DensityCoefficients {
    type Error = NfsError;

    fn try_from(raw: RawDensity) -> Result<Self> {
        Self::new(raw.max_degree, raw.coeffs)
    }
}

impl DensityCoefficients {
    pub fn new(max_degree: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if max_degree > MAX_DEGREE {
            return Err(NfsError::Domain(format!(
                "density degree {max_degree} exceeds {MAX_DEGREE}"
            )));
        }
        if coeffs.len() != HarmonicIndex::count(max_degree) {
            return Err(NfsError::Data(format!(
                "degree {max_degree} needs {} coefficients, got {}",
                HarmonicIndex::count(max_degree),
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(NfsError::Data("density coefficients must be finite".into()));
        }
        Ok(Self { max_degree, coeffs })
    }

    pub fn zeros(max_degree: usize) -> Self {
        Self {
            max_degree,
            coeffs: vec![Complex64::new(0.0, 0.0); HarmonicIndex::count(max_degree)],
        }
    }

    /// A single harmonic with unit coefficient.
    pub fn unit(max_degree: usize, idx: HarmonicIndex) -> Self {
        let mut d = Self::zeros(max_degree);
        d.coeffs[idx.flat()] = Complex64::new(1.0, 0.0);
        d
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn get(&self, idx: HarmonicIndex) -> Complex64 {
        self.coeffs[idx.flat()]
    }

    /// Euclidean norm of the coefficient vector (the L² norm of the density
    /// on the unit sphere).
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        Self {
            max_degree: self.max_degree,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }
}

/// Dense row-major complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows).map(|i| dot_row(self.row(i), x)).collect()
    }
}

#[inline]
fn dot_row(row: &[Complex64], x: &[Complex64]) -> Complex64 {
    row.iter().zip(x).fold(Complex64::new(0.0, 0.0), |acc, (a, b)| acc + a * b)
}

/// Matrix from density coefficients to field samples at target points.
#[derive(Clone, Debug)]
pub struct Propagator {
    pub matrix: ComplexMatrix,
    /// Surface-measure weights of the targets; `None` for unweighted grids.
    pub row_weights: Option<Vec<f64>>,
    pub context: WaveContext,
    pub source: RegionSpec,
    pub max_degree: usize,
}

impl Propagator {
    pub fn apply(&self, w: &DensityCoefficients) -> Result<Vec<Complex64>> {
        if w.max_degree != self.max_degree {
            return Err(NfsError::Data(format!(
                "density degree {} does not match propagator degree {}",
                w.max_degree, self.max_degree
            )));
        }
        Ok(self.matrix.matvec(&w.coeffs))
    }

    /// Product with a raw coefficient vector of any length matching the
    /// column count.
    pub fn apply_coeffs(&self, coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
        if coeffs.len() != self.matrix.cols() {
            return Err(NfsError::Data(format!(
                "{} coefficients for a propagator with {} columns",
                coeffs.len(),
                self.matrix.cols()
            )));
        }
        Ok(self.matrix.matvec(coeffs))
    }

    /// Weighted (discrete L²) norm of a field sampled at this propagator's
    /// targets; unit weights when the targets carry none.
    pub fn weighted_norm(&self, field: &[Complex64]) -> f64 {
        match &self.row_weights {
            Some(w) => field.iter().zip(w).map(|(f, w)| w * f.norm_sqr()).sum::<f64>().sqrt(),
            None => field.iter().map(|f| f.norm_sqr()).sum::<f64>().sqrt(),
        }
    }
}

/// Largest polar node count chosen by [`source_rule_order`].
pub const MAX_RULE_THETA: usize = 256;

/// Sphere-rule size `(n_theta, n_phi)` resolving the layer kernel to roughly
/// `tol` for targets no closer than `min_target_radius` to the source center.
///
/// The aliasing error of an exact-to-degree-`N` rule decays like
/// `(a/r)^(N - L)`, so `N = L + ln(tol)/ln(a/r)` plus a fixed guard of 16
/// degrees. `n_theta` is rounded up to a multiple of 8, capped at
/// [`MAX_RULE_THETA`], and `n_phi = 2 n_theta`.
pub fn source_rule_order(source_radius: f64, min_target_radius: f64, degree: usize, tol: f64) -> (usize, usize) {
    let ratio = (source_radius / min_target_radius).clamp(1e-12, 1.0 - 1e-12);
    let extra = (tol.ln() / ratio.ln()).ceil().max(0.0);
    let exact = degree as f64 + extra + 16.0;
    let n_theta = (((exact + 1.0) / 2.0).ceil() as usize).max(degree + 1).max(8);
    let n_theta = n_theta.div_ceil(8) * 8;
    let n_theta = n_theta.min(MAX_RULE_THETA).max(degree + 1);
    (n_theta, 2 * n_theta)
}

/// Source rule sized by [`source_rule_order`].
pub fn source_rule_for(
    source_radius: f64,
    center: Point3,
    min_target_radius: f64,
    degree: usize,
    tol: f64,
) -> Result<SphereRule> {
    let (nt, np) = source_rule_order(source_radius, min_target_radius, degree, tol);
    sphere_rule(source_radius, center, nt, np)
}

/// Projects a kernel sampled on the source rule onto spherical harmonics.
///
/// For a target `x` the row entry of `(l, m)` is
/// `Σ_ij K(x, y_ij) Y_l^m(y_ij) w_ij`.
pub struct LayerProjector<'a> {
    rule: &'a SphereRule,
    degree: usize,
    ctx: WaveContext,
    /// `P̄_l^m(cos θ_i)` laid out as `[legendre_offset(l, m)][i]`.
    legendre: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl<'a> LayerProjector<'a> {
    pub fn new(rule: &'a SphereRule, degree: usize, ctx: &WaveContext) -> Result<Self> {
        ctx.validate()?;
        if degree > MAX_DEGREE {
            return Err(NfsError::Config(format!("degree {degree} exceeds {MAX_DEGREE}")));
        }
        if rule.n_phi < 2 * degree + 2 || rule.n_theta < degree + 1 {
            return Err(NfsError::Config(format!(
                "source rule {} x {} too coarse for degree {degree} (need n_theta >= {}, n_phi >= {})",
                rule.n_theta,
                rule.n_phi,
                degree + 1,
                2 * degree + 2
            )));
        }
        if rule.rule.normals.is_none() {
            return Err(NfsError::Config("source rule needs outward normals".into()));
        }
        let nt = rule.n_theta;
        let tri = legendre_offset(degree, degree) + 1;
        let mut legendre = vec![0.0; tri * nt];
        for i in 0..nt {
            let table = legendre_table(degree, rule.cos_theta[i], rule.sin_theta[i]);
            for (o, v) in table.iter().enumerate() {
                legendre[o * nt + i] = *v;
            }
        }
        let fft = FftPlanner::new().plan_fft_inverse(rule.n_phi);
        Ok(Self {
            rule,
            degree,
            ctx: *ctx,
            legendre,
            fft,
        })
    }

    pub fn columns(&self) -> usize {
        HarmonicIndex::count(self.degree)
    }

    pub fn rule(&self) -> &SphereRule {
        self.rule
    }

    fn check_target(&self, x: Point3) -> Result<()> {
        let r = norm(sub(x, self.rule.center));
        if !(r > self.rule.radius * (1.0 + 1e-12)) {
            return Err(NfsError::Geometry(format!(
                "target at distance {r:e} from the source center is not outside the source sphere of radius {:e}",
                self.rule.radius
            )));
        }
        Ok(())
    }

    fn project(&self, kernel: impl Fn(Point3, Point3) -> Complex64, out: &mut [Complex64]) {
        let nt = self.rule.n_theta;
        let np = self.rule.n_phi;
        let l_max = self.degree;
        let n_orders = 2 * l_max + 1;
        let points = &self.rule.rule.points;
        let normals = self.rule.rule.normals.as_ref().expect("checked in new");
        let weights = &self.rule.rule.weights;

        let mut buf = vec![Complex64::new(0.0, 0.0); np];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        // azimuthal moments laid out as [order][theta row]
        let mut moments = vec![Complex64::new(0.0, 0.0); n_orders * nt];
        for i in 0..nt {
            let base = i * np;
            for (j, b) in buf.iter_mut().enumerate() {
                let n = base + j;
                *b = kernel(points[n], normals[n]) * weights[n];
            }
            // Σ_j b_j e^{+2πi jk/np}
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for m in -(l_max as i64)..=(l_max as i64) {
                let bin = m.rem_euclid(np as i64) as usize;
                moments[(m + l_max as i64) as usize * nt + i] = buf[bin];
            }
        }
        for idx in HarmonicIndex::all(l_max) {
            let (l, m) = (idx.degree(), idx.order());
            let ma = m.unsigned_abs() as usize;
            let leg = &self.legendre[legendre_offset(l, ma) * nt..][..nt];
            let mom = &moments[(m + l_max as i64) as usize * nt..][..nt];
            let mut s = Complex64::new(0.0, 0.0);
            for (p, g) in leg.iter().zip(mom) {
                s += g * p;
            }
            out[idx.flat()] = if m < 0 && ma % 2 == 1 { -s } else { s };
        }
    }

    /// Row of the combined-layer field at `x`.
    pub fn value_row(&self, x: Point3, out: &mut [Complex64]) -> Result<()> {
        self.check_target(x)?;
        let ctx = self.ctx;
        self.project(|y, n_y| kernel::combined(x, y, n_y, &ctx), out);
        Ok(())
    }

    /// Row of `n_x · ∇u` at `x`.
    pub fn normal_derivative_row(&self, x: Point3, n_x: Point3, out: &mut [Complex64]) -> Result<()> {
        self.check_target(x)?;
        let ctx = self.ctx;
        self.project(|y, n_y| kernel::combined_normal_derivative(x, n_x, y, n_y, &ctx), out);
        Ok(())
    }
}

/// Assemble the propagator onto `targets` with the default execution strategy.
pub fn assemble_propagator(
    source: &SphereRule,
    targets: &SampleSet,
    degree: usize,
    ctx: &WaveContext,
) -> Result<Propagator> {
    assemble_propagator_with(source, targets, degree, ctx, Execution::default())
}

pub fn assemble_propagator_with(
    source: &SphereRule,
    targets: &SampleSet,
    degree: usize,
    ctx: &WaveContext,
    exec: Execution,
) -> Result<Propagator> {
    let projector = LayerProjector::new(source, degree, ctx)?;
    for p in &targets.points {
        projector.check_target(*p)?;
    }
    let cols = projector.columns();
    let mut matrix = ComplexMatrix::zeros(targets.len(), cols);
    if cols > 0 && !targets.is_empty() {
        parallel::for_each_chunk_mut(exec, &mut matrix.data, cols, |i, row| {
            projector
                .value_row(targets.points[i], row)
                .expect("targets checked above");
        });
    }
    Ok(Propagator {
        matrix,
        row_weights: targets.weights.clone(),
        context: *ctx,
        source: RegionSpec::SphereSurface {
            center: source.center,
            radius: source.radius,
        },
        max_degree: degree,
    })
}

fn check_density(w: &DensityCoefficients, projector: &LayerProjector<'_>) -> Result<()> {
    if w.max_degree != projector.degree {
        return Err(NfsError::Data(format!(
            "density degree {} does not match requested degree {}",
            w.max_degree, projector.degree
        )));
    }
    Ok(())
}

/// Field of the density at `points`; row by row the same arithmetic as
/// assembling the propagator and multiplying.
pub fn evaluate_field(
    w: &DensityCoefficients,
    points: &[Point3],
    source: &SphereRule,
    ctx: &WaveContext,
) -> Result<Vec<Complex64>> {
    evaluate_field_with(w, points, source, ctx, Execution::default())
}

pub fn evaluate_field_with(
    w: &DensityCoefficients,
    points: &[Point3],
    source: &SphereRule,
    ctx: &WaveContext,
    exec: Execution,
) -> Result<Vec<Complex64>> {
    let projector = LayerProjector::new(source, w.max_degree, ctx)?;
    check_density(w, &projector)?;
    for p in points {
        projector.check_target(*p)?;
    }
    let cols = projector.columns();
    Ok(parallel::map_indices(exec, points.len(), |i| {
        let mut row = vec![Complex64::new(0.0, 0.0); cols];
        projector.value_row(points[i], &mut row).expect("checked");
        dot_row(&row, &w.coeffs)
    }))
}

/// `n · ∇u` at `points` with unit normals `normals`.
pub fn evaluate_normal_derivative(
    w: &DensityCoefficients,
    points: &[Point3],
    normals: &[Point3],
    source: &SphereRule,
    ctx: &WaveContext,
) -> Result<Vec<Complex64>> {
    if points.len() != normals.len() {
        return Err(NfsError::Data("points and normals differ in length".into()));
    }
    let projector = LayerProjector::new(source, w.max_degree, ctx)?;
    check_density(w, &projector)?;
    for p in points {
        projector.check_target(*p)?;
    }
    let cols = projector.columns();
    Ok(parallel::map_indices(Execution::default(), points.len(), |i| {
        let mut row = vec![Complex64::new(0.0, 0.0); cols];
        projector
            .normal_derivative_row(points[i], normals[i], &mut row)
            .expect("checked");
        dot_row(&row, &w.coeffs)
    }))
}

/// Pressure and normal velocity on a physical source surface.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundaryTraces {
    pub points: Vec<Point3>,
    pub pressure: Vec<Complex64>,
    pub normal_velocity: Vec<Complex64>,
}

/// Boundary inputs `p_b = u|_S` and `v_n = -i/(ρck) ∂u/∂n` on a surface
/// enclosing the fictitious source sphere.
pub fn boundary_traces(
    w: &DensityCoefficients,
    surface: &QuadratureRule,
    source: &SphereRule,
    ctx: &WaveContext,
) -> Result<BoundaryTraces> {
    let normals = surface
        .normals
        .as_ref()
        .ok_or_else(|| NfsError::Config("trace surface needs normals".into()))?;
    for p in &surface.points {
        if norm(sub(*p, source.center)) <= source.radius * (1.0 + 1e-12) {
            return Err(NfsError::Geometry(
                "trace surface intersects the fictitious source sphere".into(),
            ));
        }
    }
    let pressure = evaluate_field(w, &surface.points, source, ctx)?;
    let dudn = evaluate_normal_derivative(w, &surface.points, normals, source, ctx)?;
    let factor = ctx.velocity_factor();
    Ok(BoundaryTraces {
        points: surface.points.clone(),
        pressure,
        normal_velocity: dudn.into_iter().map(|d| d * factor).collect(),
    })
}

/// Field evaluation that picks the source rule per point from its distance
/// to the source, so far targets use small rules.
#[derive(Clone, Debug)]
pub struct FieldEvaluator {
    pub source_radius: f64,
    pub center: Point3,
    pub ctx: WaveContext,
    pub tolerance: f64,
    pub exec: Execution,
}

impl FieldEvaluator {
    pub fn new(source_radius: f64, ctx: WaveContext, tolerance: f64) -> Self {
        Self {
            source_radius,
            center: [0.0; 3],
            ctx,
            tolerance,
            exec: Execution::default(),
        }
    }

    pub fn rule_for_radius(&self, radius: f64, degree: usize) -> Result<SphereRule> {
        source_rule_for(self.source_radius, self.center, radius, degree, self.tolerance)
    }

    fn grouped<T: Copy + Default + Send>(
        &self,
        degree: usize,
        points: &[Point3],
        eval: impl Fn(&[usize], &SphereRule) -> Result<Vec<T>>,
    ) -> Result<Vec<T>> {
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (i, p) in points.iter().enumerate() {
            let r = norm(sub(*p, self.center));
            if !(r > self.source_radius * (1.0 + 1e-12)) {
                return Err(NfsError::Geometry(format!(
                    "evaluation point at radius {r:e} is not outside the source sphere"
                )));
            }
            let (nt, _) = source_rule_order(self.source_radius, r, degree, self.tolerance);
            groups.entry(nt).or_default().push(i);
        }
        let mut out = vec![T::default(); points.len()];
        for (nt, idx) in groups {
            let rule = sphere_rule(self.source_radius, self.center, nt, 2 * nt)?;
            let vals = eval(&idx, &rule)?;
            for (i, v) in idx.into_iter().zip(vals) {
                out[i] = v;
            }
        }
        Ok(out)
    }

    pub fn field(&self, w: &DensityCoefficients, points: &[Point3]) -> Result<Vec<Complex64>> {
        self.grouped(w.max_degree, points, |idx, rule| {
            let pts: Vec<Point3> = idx.iter().map(|&i| points[i]).collect();
            evaluate_field_with(w, &pts, rule, &self.ctx, self.exec)
        })
    }

    pub fn normal_derivative(
        &self,
        w: &DensityCoefficients,
        points: &[Point3],
        normals: &[Point3],
    ) -> Result<Vec<Complex64>> {
        self.grouped(w.max_degree, points, |idx, rule| {
            let pts: Vec<Point3> = idx.iter().map(|&i| points[i]).collect();
            let nrm: Vec<Point3> = idx.iter().map(|&i| normals[i]).collect();
            evaluate_normal_derivative(w, &pts, &nrm, rule, &self.ctx)
        })
    }
}
