//! Scenario configuration, defaults and validation.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{NfsError, Result};
use crate::geometry::{dot, norm, Point3, RegionSpec, SectorShell};
use crate::inverse::MorozovOptions;
use crate::potentials::WaveContext;
use crate::specfun::MAX_DEGREE;

/// The three geometric settings: match only, match plus a bounded null
/// region, match plus the exterior of a large ball.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseId {
    #[serde(rename = "i")]
    I,
    #[serde(rename = "ii")]
    Ii,
    #[serde(rename = "iii")]
    Iii,
}

impl CaseId {
    pub const ALL: [CaseId; 3] = [CaseId::I, CaseId::Ii, CaseId::Iii];

    pub fn as_str(self) -> &'static str {
        match self {
            CaseId::I => "i",
            CaseId::Ii => "ii",
            CaseId::Iii => "iii",
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CaseId {
    type Err = NfsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "i" => Ok(CaseId::I),
            "ii" => Ok(CaseId::Ii),
            "iii" => Ok(CaseId::Iii),
            other => Err(NfsError::Config(format!("unknown case `{other}`, expected i, ii or iii"))),
        }
    }
}

/// Field to reproduce on the match region.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetField {
    /// `exp(i·sign·k·(d̂·x))`.
    PlaneWave { direction: Point3, sign: f64 },
    Null,
}

impl TargetField {
    /// `e^{-ikx}`, travelling along `-x` away from a source at the origin
    /// towards a region on the negative x side.
    pub fn outgoing_x() -> Self {
        TargetField::PlaneWave {
            direction: [1.0, 0.0, 0.0],
            sign: -1.0,
        }
    }

    /// `e^{+ikx}`, travelling along `+x` towards the source.
    pub fn incoming_x() -> Self {
        TargetField::PlaneWave {
            direction: [1.0, 0.0, 0.0],
            sign: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let TargetField::PlaneWave { direction, sign } = self {
            if !direction.iter().all(|v| v.is_finite()) || (norm(*direction) - 1.0).abs() > 1e-12 {
                return Err(NfsError::Config("plane-wave direction must be a unit vector".into()));
            }
            if sign.abs() != 1.0 {
                return Err(NfsError::Config(format!("plane-wave sign must be +1 or -1, got {sign}")));
            }
        }
        Ok(())
    }

    pub fn value(&self, x: Point3, k: f64) -> Complex64 {
        match self {
            TargetField::PlaneWave { direction, sign } => Complex64::from_polar(1.0, sign * k * dot(*direction, x)),
            TargetField::Null => Complex64::new(0.0, 0.0),
        }
    }
}

/// Plane-wave (or zero) samples of `target` at `points`.
pub fn target_samples(target: &TargetField, points: &[Point3], ctx: &WaveContext) -> Vec<Complex64> {
    points.iter().map(|p| target.value(*p, ctx.k)).collect()
}

fn one() -> f64 {
    1.0
}

/// Medium and layer weights as written in a config; missing weights resolve
/// to `(1, k)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveConfig {
    pub k: f64,
    #[serde(default = "one")]
    pub rho: f64,
    #[serde(default = "one")]
    pub c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta2: Option<f64>,
}

impl WaveConfig {
    pub fn new(k: f64) -> Self {
        Self {
            k,
            rho: 1.0,
            c: 1.0,
            eta1: None,
            eta2: None,
        }
    }

    pub fn context(&self) -> Result<WaveContext> {
        let ctx = WaveContext {
            k: self.k,
            rho: self.rho,
            c: self.c,
            eta1: self.eta1.unwrap_or(1.0),
            eta2: self.eta2.unwrap_or(self.k),
        };
        ctx.validate()?;
        Ok(ctx)
    }
}

fn default_degree() -> usize {
    30
}

fn default_source_radius() -> f64 {
    0.01
}

fn default_physical_radius() -> Option<f64> {
    Some(0.0105)
}

/// Sample densities and quadrature tolerances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    /// Gauss–Legendre points per edge on each face of a sector-shell boundary.
    pub control_points_per_edge: usize,
    /// Fractional enlargement of the shells' parameter boxes for the control
    /// surfaces.
    pub control_margin: f64,
    /// `(n_theta, n_phi)` of the control sphere for a ball-exterior null region.
    pub null_sphere_rule: [usize; 2],
    /// Cell-centred `(n_r, n_theta, n_phi)` grid inside shells for errors and
    /// sup norms.
    pub interior_grid: [usize; 3],
    /// Fixed source rule for assembly; adaptive when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_rule: Option<[usize; 2]>,
    /// Target accuracy of the source quadrature for assembly and metrics.
    pub quadrature_tol: f64,
    /// Target accuracy of the source quadrature for output slices.
    pub grid_tol: f64,
    pub far_field_radii: Vec<f64>,
    /// `(n_theta, n_phi)` direction rule for sup norms on spheres.
    pub far_field_directions: [usize; 2],
    pub power_radii: Vec<f64>,
    pub power_rule: [usize; 2],
    pub radiation_radius: f64,
    pub helmholtz_radius: f64,
    pub helmholtz_step: f64,
    pub trace_rule: [usize; 2],
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            control_points_per_edge: 26,
            control_margin: 0.0,
            null_sphere_rule: [32, 64],
            interior_grid: [8, 8, 8],
            source_rule: None,
            quadrature_tol: 1e-12,
            grid_tol: 1e-8,
            far_field_radii: (0..=8).map(|j| 10f64.powf(1.0 + j as f64 / 4.0)).collect(),
            far_field_directions: [17, 34],
            power_radii: vec![1.0, 5.0],
            power_rule: [32, 64],
            radiation_radius: 100.0,
            helmholtz_radius: 0.5,
            helmholtz_step: 1e-3,
            trace_rule: [16, 32],
        }
    }
}

/// Planar output grid, row-major with `(x_j, y_i)` at `i * nx + j`,
/// endpoints included.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceSpec {
    pub name: String,
    pub z: f64,
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub nx: usize,
    pub ny: usize,
}

impl SliceSpec {
    pub fn square(name: &str, half_width: f64, n: usize) -> Self {
        Self {
            name: name.into(),
            z: 0.0,
            x_range: [-half_width, half_width],
            y_range: [-half_width, half_width],
            nx: n,
            ny: n,
        }
    }
}

/// Real snapshots `Re(u e^{-ikct})` of a slice at the listed values of `kct`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotSpec {
    pub slice: String,
    pub kct: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub slices: Vec<SliceSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<SnapshotSpec>,
    /// Slice on which the relative error against the target is mapped.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_slice: Option<String>,
    /// `(n_theta, n_phi)` of the density map on the source sphere.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density_map: Option<[usize; 2]>,
    /// Pressure and normal velocity on the physical surface.
    pub traces: bool,
}

/// Everything needed to run one synthesis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub case: CaseId,
    pub wave: WaveConfig,
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default = "default_source_radius")]
    pub source_radius: f64,
    #[serde(default = "default_physical_radius")]
    pub physical_surface_radius: Option<f64>,
    pub d1: RegionSpec,
    #[serde(default)]
    pub d2: Option<RegionSpec>,
    pub target: TargetField,
    #[serde(default)]
    pub morozov: MorozovOptions,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
}

/// The match region used by all three built-in cases.
pub fn default_d1() -> SectorShell {
    SectorShell {
        r_min: 0.011,
        r_max: 0.015,
        theta_min: -PI / 4.0,
        theta_max: PI / 4.0,
        phi_min: 3.0 * PI / 4.0,
        phi_max: 5.0 * PI / 4.0,
        offset: [0.0; 3],
    }
}

fn phases(numerators: &[f64]) -> Vec<f64> {
    numerators.iter().map(|n| n / 50.0 * PI).collect()
}

/// The three built-in scenarios at `k = 10`, `L = 30`, source radius 0.01.
pub fn builtin_scenarios() -> Vec<ScenarioConfig> {
    CaseId::ALL.iter().map(|c| builtin(*c)).collect()
}

pub fn builtin(case: CaseId) -> ScenarioConfig {
    let d1 = RegionSpec::SectorShell(default_d1());
    let wide = SliceSpec::square("wide", 5.0, 101);
    let mid = SliceSpec::square("mid", 0.1, 81);
    let near = SliceSpec::square("near", 0.02, 61);
    let (name, d2, target, slices, snapshots) = match case {
        CaseId::I => (
            "case_i",
            None,
            TargetField::outgoing_x(),
            vec![wide, near],
            SnapshotSpec {
                slice: "near".into(),
                kct: phases(&[15.0, 16.0, 17.0, 18.0, 19.0, 20.0]),
            },
        ),
        CaseId::Ii => (
            "case_ii",
            Some(RegionSpec::SectorShell(SectorShell {
                phi_min: -PI / 4.0,
                phi_max: PI / 4.0,
                offset: [0.018, 0.0, 0.0],
                ..default_d1()
            })),
            TargetField::outgoing_x(),
            vec![wide, mid, near],
            SnapshotSpec {
                slice: "mid".into(),
                kct: phases(&[83.0, 84.0, 85.0, 86.0, 87.0, 88.0]),
            },
        ),
        CaseId::Iii => (
            "case_iii",
            Some(RegionSpec::BallExterior {
                center: [0.0; 3],
                radius: 10.0,
            }),
            TargetField::incoming_x(),
            vec![wide, mid, near],
            SnapshotSpec {
                slice: "mid".into(),
                kct: phases(&[79.0, 80.0, 81.0, 81.5, 81.7, 82.0, 82.1, 83.0, 84.0]),
            },
        ),
    };
    ScenarioConfig {
        name: name.into(),
        case,
        wave: WaveConfig::new(10.0),
        degree: default_degree(),
        source_radius: default_source_radius(),
        physical_surface_radius: default_physical_radius(),
        d1,
        d2,
        target,
        morozov: MorozovOptions::default(),
        sampling: SamplingConfig::default(),
        outputs: OutputConfig {
            slices,
            snapshots: Some(snapshots),
            error_slice: Some("near".into()),
            density_map: Some([64, 128]),
            traces: true,
        },
    }
}

fn shell_of(region: &RegionSpec) -> Option<&SectorShell> {
    match region {
        RegionSpec::SectorShell(s) => Some(s),
        _ => None,
    }
}

/// Distance from the origin to a bounded region, zero if it contains it.
fn distance_from_origin(region: &RegionSpec) -> f64 {
    region.distance_to([0.0; 3])
}

/// Whether two sector shells share a point, checked on boundary and interior
/// samples of each.
fn shells_overlap(a: &SectorShell, b: &SectorShell) -> bool {
    let probe = |s: &SectorShell, other: &SectorShell| {
        let n = 12;
        let c = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (n - 1) as f64;
        (0..n).any(|i| {
            (0..n).any(|j| {
                (0..n).any(|l| other.contains(s.point(c(s.r_min, s.r_max, i), c(s.theta_min, s.theta_max, j), c(s.phi_min, s.phi_max, l))))
            })
        })
    };
    probe(a, b) || probe(b, a)
}

impl ScenarioConfig {
    pub fn context(&self) -> Result<WaveContext> {
        self.wave.context()
    }

    /// Copy with every optional default spelled out.
    pub fn resolved(&self) -> Result<ScenarioConfig> {
        let ctx = self.context()?;
        let mut out = self.clone();
        out.wave.eta1 = Some(ctx.eta1);
        out.wave.eta2 = Some(ctx.eta2);
        Ok(out)
    }

    pub fn d1_shell(&self) -> Result<&SectorShell> {
        shell_of(&self.d1).ok_or_else(|| NfsError::Config("d1 must be a sector shell".into()))
    }

    /// Every violated constraint, empty when the config is usable.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.name.trim().is_empty() {
            v.push("name must not be empty".to_string());
        }
        if let Err(e) = self.context() {
            v.push(e.to_string());
        }
        if self.degree > MAX_DEGREE {
            v.push(format!("degree {} exceeds the supported maximum {MAX_DEGREE}", self.degree));
        }
        let a = self.source_radius;
        if !(a > 0.0 && a.is_finite()) {
            v.push(format!("source_radius must be positive, got {a}"));
        }
        if let Err(e) = self.target.validate() {
            v.push(e.to_string());
        }
        if matches!(self.target, TargetField::Null) {
            v.push("target on d1 must be a plane wave".to_string());
        }
        if let Err(e) = self.morozov.validate() {
            v.push(e.to_string());
        }

        let d1 = match shell_of(&self.d1) {
            Some(s) => match s.validate() {
                Ok(()) => Some(*s),
                Err(e) => {
                    v.push(format!("d1: {e}"));
                    None
                }
            },
            None => {
                v.push("d1 must be a sector shell".to_string());
                None
            }
        };
        match (self.case, &self.d2) {
            (CaseId::I, Some(_)) => v.push("case i takes no d2".to_string()),
            (CaseId::Ii, None) | (CaseId::Ii, Some(RegionSpec::BallExterior { .. })) => {
                v.push("case ii needs a bounded sector-shell d2".to_string())
            }
            (CaseId::Ii, Some(RegionSpec::SphereSurface { .. })) => v.push("d2 must be a sector shell or ball exterior".to_string()),
            (CaseId::Iii, Some(RegionSpec::BallExterior { .. })) => {}
            (CaseId::Iii, _) => v.push("case iii needs a ball-exterior d2".to_string()),
            _ => {}
        }
        if let Some(d2) = &self.d2 {
            if let Err(e) = d2.validate() {
                v.push(format!("d2: {e}"));
            }
            if let Err(e) = crate::inverse::mu_for_region(Some(d2)) {
                v.push(format!("d2: {e}"));
            }
        }

        if let Some(d1) = d1 {
            let dist = distance_from_origin(&self.d1);
            if a.is_finite() && dist <= a {
                v.push("regions must not intersect source: d1".to_string());
            }
            match d1.enlarged(self.sampling.control_margin) {
                Ok(w1) => {
                    if a.is_finite() && distance_from_origin(&RegionSpec::SectorShell(w1)) <= a {
                        v.push("regions must not intersect source: enlarged d1 control surface".to_string());
                    }
                }
                Err(e) => v.push(format!("control margin: {e}")),
            }
            if let Some(r) = self.physical_surface_radius {
                if !(r > a && r < dist) {
                    v.push(format!(
                        "physical_surface_radius {r} must lie between the source radius {a} and the distance {dist:.6} to d1"
                    ));
                }
            }
            match &self.d2 {
                Some(RegionSpec::SectorShell(d2)) if d2.validate().is_ok() => {
                    let d2_dist = distance_from_origin(&RegionSpec::SectorShell(*d2));
                    if d2_dist <= a {
                        v.push("regions must not intersect source: d2".to_string());
                    }
                    if shells_overlap(&d1, d2) {
                        v.push("d1 and d2 must be disjoint".to_string());
                    }
                    if let Some(r) = self.physical_surface_radius {
                        if r >= d2_dist {
                            v.push("physical surface must not reach d2".to_string());
                        }
                    }
                }
                Some(RegionSpec::BallExterior { center, radius }) if d1.max_distance_estimate(*center) >= *radius => {
                    v.push("d1 and d2 must be disjoint: d1 must lie inside the ball".to_string());
                }
                _ => {}
            }
        }

        let s = &self.sampling;
        if s.control_points_per_edge < 2 {
            v.push("control_points_per_edge must be at least 2".to_string());
        }
        if s.null_sphere_rule[0] < 2 || s.null_sphere_rule[1] < 4 {
            v.push("null_sphere_rule must be at least 2 x 4".to_string());
        }
        if s.interior_grid.contains(&0) {
            v.push("interior_grid counts must be positive".to_string());
        }
        for (name, tol) in [("quadrature_tol", s.quadrature_tol), ("grid_tol", s.grid_tol)] {
            if !(tol > 0.0 && tol < 1.0) {
                v.push(format!("{name} must lie in (0, 1), got {tol}"));
            }
        }
        if let Some([nt, np]) = s.source_rule {
            if nt < self.degree + 1 || np < 2 * self.degree + 2 {
                v.push(format!(
                    "source_rule {nt} x {np} too coarse for degree {} (need at least {} x {})",
                    self.degree,
                    self.degree + 1,
                    2 * self.degree + 2
                ));
            }
        }
        let outside = |r: f64| r.is_finite() && r > a;
        if s.far_field_radii.is_empty() || !s.far_field_radii.iter().all(|r| outside(*r)) {
            v.push("far_field_radii must be nonempty and exceed the source radius".to_string());
        }
        if s.power_radii.is_empty() || !s.power_radii.iter().all(|r| outside(*r)) {
            v.push("power_radii must be nonempty and exceed the source radius".to_string());
        }
        for (name, rule) in [
            ("far_field_directions", s.far_field_directions),
            ("power_rule", s.power_rule),
            ("trace_rule", s.trace_rule),
        ] {
            if rule[0] < 2 || rule[1] < 4 {
                v.push(format!("{name} must be at least 2 x 4"));
            }
        }
        if !outside(s.radiation_radius) {
            v.push("radiation_radius must exceed the source radius".to_string());
        }
        if !(s.helmholtz_step > 0.0 && outside(s.helmholtz_radius - 2.0 * s.helmholtz_step)) {
            v.push("helmholtz stencil must stay outside the source sphere".to_string());
        }

        let o = &self.outputs;
        let mut names = std::collections::HashSet::new();
        for sl in &o.slices {
            if !names.insert(sl.name.as_str()) {
                v.push(format!("duplicate slice name `{}`", sl.name));
            }
            if sl.name.is_empty() || !sl.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                v.push(format!("slice name `{}` must be nonempty ASCII letters, digits, `_` or `-`", sl.name));
            }
            if sl.nx < 2 || sl.ny < 2 {
                v.push(format!("slice `{}` needs at least 2 x 2 points", sl.name));
            }
            let finite = sl.x_range.iter().chain(&sl.y_range).all(|x| x.is_finite()) && sl.z.is_finite();
            if !finite || sl.x_range[0] >= sl.x_range[1] || sl.y_range[0] >= sl.y_range[1] {
                v.push(format!("slice `{}` has an invalid range", sl.name));
            }
        }
        if let Some(snap) = &o.snapshots {
            if !names.contains(snap.slice.as_str()) {
                v.push(format!("snapshot slice `{}` is not defined", snap.slice));
            }
            if snap.kct.is_empty() || !snap.kct.iter().all(|p| p.is_finite()) {
                v.push("snapshot phases must be nonempty and finite".to_string());
            }
        }
        if let Some(e) = &o.error_slice {
            if !names.contains(e.as_str()) {
                v.push(format!("error slice `{e}` is not defined"));
            }
        }
        if let Some([nt, np]) = o.density_map {
            if nt < 2 || np < 2 {
                v.push("density_map needs at least 2 x 2 points".to_string());
            }
        }
        if o.traces && self.physical_surface_radius.is_none() {
            v.push("traces requested without a physical_surface_radius".to_string());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(NfsError::Config(v.join("; ")))
        }
    }

    /// SHA-256 of the resolved config's canonical JSON.
    pub fn hash(&self) -> Result<String> {
        let json = serde_json::to_vec(&self.resolved()?)?;
        Ok(format!("{:x}", Sha256::digest(&json)))
    }
}
