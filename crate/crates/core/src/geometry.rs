//! Regions, sphere quadrature and sample-point generation.
//!
//! Two angle conventions appear here. Sphere rules and spherical harmonics use
//! the polar angle (colatitude) measured from +z. Sector shells are
//! parameterised by *latitude* (elevation from the xy-plane) and azimuth from
//! +x, so a shell with azimuth in `[3π/4, 5π/4]` faces the −x axis:
//!
//! ```text
//! p(r, lat, φ) = offset + r (cos lat cos φ, cos lat sin φ, sin lat)
//! ```

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{NfsError, Result};

pub type Point3 = [f64; 3];

#[inline]
pub fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: Point3, b: Point3) -> Point3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(a: Point3, s: f64) -> Point3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn norm(a: Point3) -> f64 {
    dot(a, a).sqrt()
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 1..n {
                let kf = k as f64;
                let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            dp = nf * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        // refresh the derivative at the converged node
        let (mut p0, mut p1) = (1.0, x);
        for k in 1..n {
            let kf = k as f64;
            let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
            p0 = p1;
            p1 = p2;
        }
        if n > 0 {
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Gauss–Legendre rule mapped onto `[a, b]`.
pub fn gauss_legendre_interval(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|t| mid + half * t).collect(),
        w.iter().map(|v| v * half).collect(),
    )
}

/// Weighted points on a surface, with outward normals for closed carriers.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub points: Vec<Point3>,
    pub weights: Vec<f64>,
    pub normals: Option<Vec<Point3>>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Tensor rule on a sphere: Gauss–Legendre in `cos θ` times the trapezoid rule
/// in `φ`. Exact for spherical-harmonic integrands up to degree
/// `min(2 n_theta - 1, n_phi - 1)`. Node `(i, j)` is stored at
/// `i * n_phi + j` with `φ_j = 2πj / n_phi`.
#[derive(Clone, Debug)]
pub struct SphereRule {
    pub center: Point3,
    pub radius: f64,
    pub n_theta: usize,
    pub n_phi: usize,
    pub cos_theta: Vec<f64>,
    pub sin_theta: Vec<f64>,
    /// Gauss–Legendre weights in `cos θ` (unit sphere, without the `φ` factor).
    pub theta_weights: Vec<f64>,
    pub rule: QuadratureRule,
}

impl SphereRule {
    /// Highest spherical-harmonic degree integrated exactly.
    pub fn exact_degree(&self) -> usize {
        (2 * self.n_theta - 1).min(self.n_phi - 1)
    }

    pub fn phi(&self, j: usize) -> f64 {
        TAU * j as f64 / self.n_phi as f64
    }
}

/// Tensor quadrature rule on the sphere of the given radius and center.
pub fn sphere_rule(radius: f64, center: Point3, n_theta: usize, n_phi: usize) -> Result<SphereRule> {
    if n_theta < 2 || n_phi < 4 {
        return Err(NfsError::Config(format!(
            "sphere rule needs n_theta >= 2 and n_phi >= 4, got {n_theta} x {n_phi}"
        )));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(NfsError::Domain(format!("sphere radius must be positive, got {radius}")));
    }
    let (x, w) = gauss_legendre(n_theta);
    let sin: Vec<f64> = x.iter().map(|c| ((1.0 - c) * (1.0 + c)).sqrt()).collect();
    let dphi = TAU / n_phi as f64;
    let mut points = Vec::with_capacity(n_theta * n_phi);
    let mut weights = Vec::with_capacity(n_theta * n_phi);
    let mut normals = Vec::with_capacity(n_theta * n_phi);
    for i in 0..n_theta {
        for j in 0..n_phi {
            let (sp, cp) = (dphi * j as f64).sin_cos();
            let n = [sin[i] * cp, sin[i] * sp, x[i]];
            points.push(add(center, scale(n, radius)));
            normals.push(n);
            weights.push(radius * radius * w[i] * dphi);
        }
    }
    Ok(SphereRule {
        center,
        radius,
        n_theta,
        n_phi,
        cos_theta: x,
        sin_theta: sin,
        theta_weights: w,
        rule: QuadratureRule {
            points,
            weights,
            normals: Some(normals),
        },
    })
}

/// Spherical-sector shell in (radius, latitude, azimuth), rigidly translated by
/// `offset`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorShell {
    pub r_min: f64,
    pub r_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    #[serde(default)]
    pub offset: Point3,
}

impl SectorShell {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.r_min,
            self.r_max,
            self.theta_min,
            self.theta_max,
            self.phi_min,
            self.phi_max,
        ]
        .iter()
        .chain(self.offset.iter())
        .all(|v| v.is_finite());
        if !finite {
            return Err(NfsError::Domain("sector shell has non-finite parameters".into()));
        }
        if !(self.r_min > 0.0 && self.r_min < self.r_max) {
            return Err(NfsError::Domain(format!(
                "sector shell needs 0 < r_min < r_max, got [{}, {}]",
                self.r_min, self.r_max
            )));
        }
        if !(-FRAC_PI_2 <= self.theta_min
            && self.theta_min < self.theta_max
            && self.theta_max <= FRAC_PI_2)
        {
            return Err(NfsError::Domain(format!(
                "latitude interval [{}, {}] must be nonempty within [-π/2, π/2]",
                self.theta_min, self.theta_max
            )));
        }
        let width = self.phi_max - self.phi_min;
        if !(width > 0.0 && width <= TAU + 1e-12) {
            return Err(NfsError::Domain(format!(
                "azimuth interval [{}, {}] must be nonempty and at most 2π wide",
                self.phi_min, self.phi_max
            )));
        }
        Ok(())
    }

    pub fn point(&self, r: f64, lat: f64, phi: f64) -> Point3 {
        let (sl, cl) = lat.sin_cos();
        let (sp, cp) = phi.sin_cos();
        add(self.offset, [r * cl * cp, r * cl * sp, r * sl])
    }

    pub fn contains(&self, p: Point3) -> bool {
        let q = sub(p, self.offset);
        let r = norm(q);
        if r < self.r_min || r > self.r_max || r == 0.0 {
            return false;
        }
        let lat = (q[2] / r).clamp(-1.0, 1.0).asin();
        if lat < self.theta_min || lat > self.theta_max {
            return false;
        }
        let phi = q[1].atan2(q[0]);
        let rel = (phi - self.phi_min).rem_euclid(TAU);
        rel <= self.phi_max - self.phi_min
    }

    /// Parameter box enlarged by `margin` times each interval width, clamped to
    /// the valid ranges.
    pub fn enlarged(&self, margin: f64) -> Result<SectorShell> {
        if !(margin >= 0.0) || !margin.is_finite() {
            return Err(NfsError::Domain(format!("margin must be nonnegative, got {margin}")));
        }
        let dr = margin * (self.r_max - self.r_min);
        let dt = margin * (self.theta_max - self.theta_min);
        let dp = margin * (self.phi_max - self.phi_min);
        let mut out = SectorShell {
            r_min: (self.r_min - dr).max(0.0),
            r_max: self.r_max + dr,
            theta_min: (self.theta_min - dt).max(-FRAC_PI_2),
            theta_max: (self.theta_max + dt).min(FRAC_PI_2),
            phi_min: self.phi_min - dp,
            phi_max: self.phi_max + dp,
            offset: self.offset,
        };
        if out.phi_max - out.phi_min > TAU {
            let mid = 0.5 * (out.phi_min + out.phi_max);
            out.phi_min = mid - PI;
            out.phi_max = mid + PI;
        }
        out.validate()?;
        Ok(out)
    }

    /// Closed-form area of the six faces.
    pub fn boundary_area(&self) -> f64 {
        let (r0, r1) = (self.r_min, self.r_max);
        let (t0, t1) = (self.theta_min, self.theta_max);
        let dphi = self.phi_max - self.phi_min;
        let radial = (r0 * r0 + r1 * r1) * (t1.sin() - t0.sin()) * dphi;
        let conical = 0.5 * (r1 * r1 - r0 * r0) * (t0.cos() + t1.cos()) * dphi;
        let planar = (r1 * r1 - r0 * r0) * (t1 - t0);
        radial + conical + planar
    }

    /// Smallest distance from `p` to the closed shell, estimated by dense
    /// boundary sampling (exact up to the sampling resolution when `p` lies
    /// outside the shell).
    pub fn distance_estimate(&self, p: Point3) -> f64 {
        if self.contains(p) {
            return 0.0;
        }
        let n = 48;
        let mut best = f64::INFINITY;
        let lin = |a: f64, b: f64, i: usize| a + (b - a) * i as f64 / (n - 1) as f64;
        for i in 0..n {
            for j in 0..n {
                let candidates = [
                    self.point(self.r_min, lin(self.theta_min, self.theta_max, i), lin(self.phi_min, self.phi_max, j)),
                    self.point(self.r_max, lin(self.theta_min, self.theta_max, i), lin(self.phi_min, self.phi_max, j)),
                    self.point(lin(self.r_min, self.r_max, i), self.theta_min, lin(self.phi_min, self.phi_max, j)),
                    self.point(lin(self.r_min, self.r_max, i), self.theta_max, lin(self.phi_min, self.phi_max, j)),
                    self.point(lin(self.r_min, self.r_max, i), lin(self.theta_min, self.theta_max, j), self.phi_min),
                    self.point(lin(self.r_min, self.r_max, i), lin(self.theta_min, self.theta_max, j), self.phi_max),
                ];
                for c in candidates {
                    best = best.min(norm(sub(c, p)));
                }
            }
        }
        best
    }

    /// Largest distance from `p` to a point of the shell (sampled on its
    /// boundary).
    pub fn max_distance_estimate(&self, p: Point3) -> f64 {
        let n = 24;
        let lin = |a: f64, b: f64, i: usize| a + (b - a) * i as f64 / (n - 1) as f64;
        let mut best: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let c = self.point(self.r_max, lin(self.theta_min, self.theta_max, i), lin(self.phi_min, self.phi_max, j));
                best = best.max(norm(sub(c, p)));
            }
        }
        best
    }
}

/// Geometric description of a source sphere or control region.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegionSpec {
    SphereSurface { center: Point3, radius: f64 },
    SectorShell(SectorShell),
    BallExterior { center: Point3, radius: f64 },
}

impl RegionSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            RegionSpec::SectorShell(s) => s.validate(),
            RegionSpec::SphereSurface { center, radius } | RegionSpec::BallExterior { center, radius } => {
                if !(*radius > 0.0) || !radius.is_finite() || !center.iter().all(|c| c.is_finite()) {
                    return Err(NfsError::Domain(format!(
                        "sphere needs a finite center and positive radius, got {radius}"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self, RegionSpec::BallExterior { .. })
    }

    pub fn contains(&self, p: Point3) -> bool {
        match self {
            RegionSpec::SectorShell(s) => s.contains(p),
            RegionSpec::SphereSurface { center, radius } => (norm(sub(p, *center)) - radius).abs() <= 1e-12 * radius,
            RegionSpec::BallExterior { center, radius } => norm(sub(p, *center)) >= *radius,
        }
    }

    /// Distance between the region and the point `p` (zero if `p` is inside).
    pub fn distance_to(&self, p: Point3) -> f64 {
        match self {
            RegionSpec::SectorShell(s) => s.distance_estimate(p),
            RegionSpec::SphereSurface { center, radius } => (norm(sub(p, *center)) - radius).abs(),
            RegionSpec::BallExterior { center, radius } => (radius - norm(sub(p, *center))).max(0.0),
        }
    }
}

/// What a sample set is used for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleRole {
    ControlMatch,
    Null,
    EvaluationGrid,
}

/// Face of a sector shell parameter box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShellFace {
    RadiusMin,
    RadiusMax,
    LatitudeMin,
    LatitudeMax,
    AzimuthMin,
    AzimuthMax,
}

impl ShellFace {
    pub const ALL: [ShellFace; 6] = [
        ShellFace::RadiusMin,
        ShellFace::RadiusMax,
        ShellFace::LatitudeMin,
        ShellFace::LatitudeMax,
        ShellFace::AzimuthMin,
        ShellFace::AzimuthMax,
    ];
}

/// Sample points, with surface-measure weights when the set discretizes an L²
/// norm.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleSet {
    pub points: Vec<Point3>,
    pub weights: Option<Vec<f64>>,
    pub role: SampleRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub faces: Option<Vec<ShellFace>>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Unweighted points.
    pub fn grid(points: Vec<Point3>) -> Self {
        Self {
            points,
            weights: None,
            role: SampleRole::EvaluationGrid,
            faces: None,
        }
    }

    /// Weighted samples taken from a quadrature rule.
    pub fn from_rule(rule: &QuadratureRule, role: SampleRole) -> Self {
        Self {
            points: rule.points.clone(),
            weights: match role {
                SampleRole::EvaluationGrid => None,
                _ => Some(rule.weights.clone()),
            },
            role,
            faces: None,
        }
    }

    /// Smallest distance of any point from `center`.
    pub fn min_radius(&self, center: Point3) -> f64 {
        self.points
            .iter()
            .map(|p| norm(sub(*p, center)))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Weighted samples on the six faces of a (possibly enlarged) sector shell.
///
/// Each face carries an `n × n` Gauss–Legendre tensor rule in its two
/// parameters, `n = points_per_edge`, with weights equal to the surface
/// measure of the face.
pub fn sector_shell_boundary(
    shell: &SectorShell,
    margin: f64,
    points_per_edge: usize,
    role: SampleRole,
) -> Result<SampleSet> {
    shell.validate()?;
    if points_per_edge < 1 {
        return Err(NfsError::Config("points_per_edge must be positive".into()));
    }
    let s = shell.enlarged(margin)?;
    let n = points_per_edge;
    let (rs, wr) = gauss_legendre_interval(n, s.r_min, s.r_max);
    let (ts, wt) = gauss_legendre_interval(n, s.theta_min, s.theta_max);
    let (ps, wp) = gauss_legendre_interval(n, s.phi_min, s.phi_max);

    let mut points = Vec::with_capacity(6 * n * n);
    let mut weights = Vec::with_capacity(6 * n * n);
    let mut faces = Vec::with_capacity(6 * n * n);
    for face in ShellFace::ALL {
        for a in 0..n {
            for b in 0..n {
                let (p, w) = match face {
                    ShellFace::RadiusMin | ShellFace::RadiusMax => {
                        let r = if face == ShellFace::RadiusMin { s.r_min } else { s.r_max };
                        (s.point(r, ts[a], ps[b]), r * r * ts[a].cos() * wt[a] * wp[b])
                    }
                    ShellFace::LatitudeMin | ShellFace::LatitudeMax => {
                        let lat = if face == ShellFace::LatitudeMin { s.theta_min } else { s.theta_max };
                        (s.point(rs[a], lat, ps[b]), rs[a] * lat.cos() * wr[a] * wp[b])
                    }
                    ShellFace::AzimuthMin | ShellFace::AzimuthMax => {
                        let phi = if face == ShellFace::AzimuthMin { s.phi_min } else { s.phi_max };
                        (s.point(rs[a], ts[b], phi), rs[a] * wr[a] * wt[b])
                    }
                };
                points.push(p);
                weights.push(w);
                faces.push(face);
            }
        }
    }
    Ok(SampleSet {
        points,
        weights: Some(weights),
        role,
        faces: Some(faces),
    })
}

/// Cell-centred tensor grid strictly inside a sector shell.
pub fn sector_shell_interior_grid(
    shell: &SectorShell,
    n_r: usize,
    n_theta: usize,
    n_phi: usize,
) -> Result<SampleSet> {
    shell.validate()?;
    if n_r < 1 || n_theta < 1 || n_phi < 1 {
        return Err(NfsError::Config("interior grid counts must be positive".into()));
    }
    let centers = |a: f64, b: f64, n: usize| -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * (i as f64 + 0.5) / n as f64).collect()
    };
    let rs = centers(shell.r_min, shell.r_max, n_r);
    let ts = centers(shell.theta_min, shell.theta_max, n_theta);
    let ps = centers(shell.phi_min, shell.phi_max, n_phi);
    let mut points = Vec::with_capacity(n_r * n_theta * n_phi);
    for &r in &rs {
        for &t in &ts {
            for &p in &ps {
                points.push(shell.point(r, t, p));
            }
        }
    }
    Ok(SampleSet::grid(points))
}

fn linspace(range: [f64; 2], n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| range[0] + (range[1] - range[0]) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Row-major grid on the plane `z`: index `i * n_x + j` holds `(x_j, y_i, z)`,
/// endpoints included.
pub fn cartesian_slice_grid(
    z: f64,
    x_range: [f64; 2],
    y_range: [f64; 2],
    n_x: usize,
    n_y: usize,
) -> Result<SampleSet> {
    if n_x < 2 || n_y < 2 {
        return Err(NfsError::Config(format!(
            "slice grids need at least 2 x 2 points, got {n_x} x {n_y}"
        )));
    }
    let xs = linspace(x_range, n_x);
    let ys = linspace(y_range, n_y);
    let mut points = Vec::with_capacity(n_x * n_y);
    for &y in &ys {
        for &x in &xs {
            points.push([x, y, z]);
        }
    }
    Ok(SampleSet::grid(points))
}

/// Unit directions at the nodes of a sphere rule.
pub fn direction_set(n_theta: usize, n_phi: usize) -> Result<Vec<Point3>> {
    Ok(sphere_rule(1.0, [0.0; 3], n_theta, n_phi)?.rule.points)
}
