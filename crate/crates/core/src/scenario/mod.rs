//! End-to-end synthesis runs for the three geometric cases.

mod config;
pub mod diagnostics;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use config::{
    builtin, builtin_scenarios, default_d1, target_samples, CaseId, OutputConfig, SamplingConfig, ScenarioConfig,
    SliceSpec, SnapshotSpec, TargetField, WaveConfig,
};
pub use diagnostics::{
    far_field_decay, helmholtz_residual, pointwise_relative_error, radiated_power, radiated_power_on_spheres,
    radiation_residual, time_snapshots, ErrorSummary, FarFieldSample, HelmholtzCheck, PowerSample, RadiationCheck,
};

use crate::error::{NfsError, Result};
use crate::geometry::{
    cartesian_slice_grid, direction_set, norm, scale, sector_shell_boundary, sector_shell_interior_grid, sphere_rule,
    Point3, RegionSpec, SampleRole, SampleSet, SphereRule,
};
use crate::inverse::{morozov_select, mu_for_region, SolveReport, TikhonovProblem};
use crate::potentials::{
    assemble_propagator, boundary_traces, evaluate_field, source_rule_for, BoundaryTraces, DensityCoefficients,
    FieldEvaluator, WaveContext,
};
use crate::specfun::{sph_harm_all, HarmonicIndex};

/// Complex values on a planar (or angular) grid, row-major with `(x_j, y_i)`
/// at `i * nx + j` and endpoints included.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridData {
    pub name: String,
    pub quantity: String,
    pub nx: usize,
    pub ny: usize,
    pub z: f64,
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub values: Vec<Complex64>,
}

/// Quantities recomputable from the config and the density alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub match_residual: f64,
    pub null_level: Option<f64>,
    pub d1_error: ErrorSummary,
    pub d1_sup: f64,
    /// `sup|u|` over the null region samples (interior grid of a shell, or
    /// the control sphere of a ball exterior).
    pub d2_sup: Option<f64>,
    pub null_ratio: Option<f64>,
    pub far_field: Vec<FarFieldSample>,
    pub radiated_power: Vec<PowerSample>,
    pub power_spread: f64,
    pub radiation: RadiationCheck,
    pub helmholtz: HelmholtzCheck,
}

/// Everything written to `metrics.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub case: CaseId,
    pub config_hash: String,
    pub mu: f64,
    /// `(n_theta, n_phi)` of the source rule used for the match block.
    pub source_rule: [usize; 2],
    pub summary: Summary,
    pub diagnostics: Diagnostics,
    pub solve: SolveSummary,
    pub warnings: Vec<String>,
}

/// Headline numbers, duplicated from the diagnostics for quick inspection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct Summary {
    pub median_rel_error_D1: f64,
    pub max_rel_error_D1: f64,
    pub sup_D1: f64,
    pub sup_D2: Option<f64>,
    pub null_ratio: Option<f64>,
    /// `r · sup|u|` at the largest far-field radius.
    pub far_field_asymptote: f64,
    /// Power through the first measurement sphere.
    pub radiated_power: f64,
    pub radiation_residual: f64,
}

impl Summary {
    pub fn from_diagnostics(d: &Diagnostics) -> Self {
        Self {
            median_rel_error_D1: d.d1_error.median,
            max_rel_error_D1: d.d1_error.max,
            sup_D1: d.d1_sup,
            sup_D2: d.d2_sup,
            null_ratio: d.null_ratio,
            far_field_asymptote: d.far_field.last().map_or(f64::NAN, |f| f.r_sup),
            radiated_power: d.radiated_power.first().map_or(f64::NAN, |p| p.power),
            radiation_residual: d.radiation.normalized,
        }
    }
}

/// The solve report without the density, which is stored separately.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub alpha: f64,
    pub match_residual: f64,
    pub null_level: Option<f64>,
    pub coeff_norm: f64,
    pub delta: Option<f64>,
    pub morozov_converged: bool,
    pub discrepancy_trace: Vec<(f64, f64)>,
}

impl From<&SolveReport> for SolveSummary {
    fn from(r: &SolveReport) -> Self {
        Self {
            alpha: r.alpha,
            match_residual: r.match_residual,
            null_level: r.null_level,
            coeff_norm: r.coeff_norm,
            delta: r.delta,
            morozov_converged: r.morozov_converged,
            discrepancy_trace: r.discrepancy_trace.clone(),
        }
    }
}

/// Output of [`run_scenario`].
#[derive(Clone, Debug)]
pub struct ScenarioRun {
    /// The config with all defaults resolved.
    pub config: ScenarioConfig,
    pub metrics: MetricsReport,
    pub density: DensityCoefficients,
    pub grids: Vec<GridData>,
    pub frames: Vec<GridData>,
    pub traces: Option<BoundaryTraces>,
}

const ORIGIN: Point3 = [0.0; 3];

/// Sample sets and source rules shared by the solve and the diagnostics.
struct Layout {
    ctx: WaveContext,
    control: SampleSet,
    control_rule: SphereRule,
    null: Option<(SampleSet, SphereRule)>,
    d1_grid: SampleSet,
    d2_grid: Option<SampleSet>,
    evaluator: FieldEvaluator,
}

fn null_samples(cfg: &ScenarioConfig) -> Result<Option<SampleSet>> {
    let s = &cfg.sampling;
    match &cfg.d2 {
        None => Ok(None),
        Some(RegionSpec::SectorShell(shell)) => Ok(Some(sector_shell_boundary(
            shell,
            s.control_margin,
            s.control_points_per_edge,
            SampleRole::Null,
        )?)),
        Some(RegionSpec::BallExterior { center, radius }) => {
            let rule = sphere_rule(*radius, *center, s.null_sphere_rule[0], s.null_sphere_rule[1])?;
            Ok(Some(SampleSet::from_rule(&rule.rule, SampleRole::Null)))
        }
        Some(RegionSpec::SphereSurface { .. }) => Err(NfsError::Config("d2 cannot be a sphere surface".into())),
    }
}

fn d2_grid(cfg: &ScenarioConfig) -> Result<Option<SampleSet>> {
    let s = &cfg.sampling;
    match &cfg.d2 {
        None => Ok(None),
        Some(RegionSpec::SectorShell(shell)) => Ok(Some(sector_shell_interior_grid(
            shell,
            s.interior_grid[0],
            s.interior_grid[1],
            s.interior_grid[2],
        )?)),
        Some(RegionSpec::BallExterior { center, radius }) => {
            let dirs = direction_set(s.far_field_directions[0], s.far_field_directions[1])?;
            Ok(Some(SampleSet::grid(
                dirs.iter().map(|d| crate::geometry::add(*center, scale(*d, *radius))).collect(),
            )))
        }
        Some(RegionSpec::SphereSurface { .. }) => Err(NfsError::Config("d2 cannot be a sphere surface".into())),
    }
}

fn assembly_rule(cfg: &ScenarioConfig, targets: &SampleSet) -> Result<SphereRule> {
    match cfg.sampling.source_rule {
        Some([nt, np]) => sphere_rule(cfg.source_radius, ORIGIN, nt, np),
        None => source_rule_for(
            cfg.source_radius,
            ORIGIN,
            targets.min_radius(ORIGIN),
            cfg.degree,
            cfg.sampling.quadrature_tol,
        ),
    }
}

impl Layout {
    fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let ctx = cfg.context()?;
        let s = &cfg.sampling;
        let d1 = cfg.d1_shell()?;
        let control = sector_shell_boundary(d1, s.control_margin, s.control_points_per_edge, SampleRole::ControlMatch)?;
        let control_rule = assembly_rule(cfg, &control)?;
        let null = match null_samples(cfg)? {
            Some(set) => {
                let rule = assembly_rule(cfg, &set)?;
                Some((set, rule))
            }
            None => None,
        };
        let [nr, nt, np] = s.interior_grid;
        Ok(Self {
            ctx,
            control,
            control_rule,
            null,
            d1_grid: sector_shell_interior_grid(d1, nr, nt, np)?,
            d2_grid: d2_grid(cfg)?,
            evaluator: FieldEvaluator::new(cfg.source_radius, ctx, s.quadrature_tol),
        })
    }
}

/// Diagnostics of a density under `cfg`. Deterministic, so re-running it on
/// a persisted density reproduces the values of the original run.
pub fn compute_diagnostics(cfg: &ScenarioConfig, w: &DensityCoefficients) -> Result<Diagnostics> {
    let layout = Layout::new(cfg)?;
    diagnostics_with(cfg, &layout, w)
}

fn weighted_norm(set: &SampleSet, u: &[Complex64]) -> f64 {
    match &set.weights {
        Some(w) => u.iter().zip(w).map(|(v, w)| w * v.norm_sqr()).sum::<f64>().sqrt(),
        None => u.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt(),
    }
}

fn diagnostics_with(cfg: &ScenarioConfig, layout: &Layout, w: &DensityCoefficients) -> Result<Diagnostics> {
    if w.max_degree() != cfg.degree {
        return Err(NfsError::Data(format!(
            "density has degree {} but the scenario uses {}",
            w.max_degree(),
            cfg.degree
        )));
    }
    let ctx = &layout.ctx;
    let s = &cfg.sampling;
    let ev = &layout.evaluator;

    let b1 = target_samples(&cfg.target, &layout.control.points, ctx);
    let u_ctrl = evaluate_field(w, &layout.control.points, &layout.control_rule, ctx)?;
    let diff: Vec<Complex64> = u_ctrl.iter().zip(&b1).map(|(a, b)| a - b).collect();
    let match_residual = weighted_norm(&layout.control, &diff) / weighted_norm(&layout.control, &b1);
    let null_level = match &layout.null {
        Some((set, rule)) => Some(weighted_norm(set, &evaluate_field(w, &set.points, rule, ctx)?)),
        None => None,
    };

    let u1 = ev.field(w, &layout.d1_grid.points)?;
    let t1 = target_samples(&cfg.target, &layout.d1_grid.points, ctx);
    let d1_error = pointwise_relative_error(&u1, &t1)?.summary;
    let d1_sup = diagnostics::sup_abs(&u1);
    let d2_sup = match &layout.d2_grid {
        Some(g) => Some(diagnostics::sup_abs(&ev.field(w, &g.points)?)),
        None => None,
    };

    let dirs = direction_set(s.far_field_directions[0], s.far_field_directions[1])?;
    let far_field = far_field_decay(ev, w, &s.far_field_radii, &dirs)?;
    let radiated_power = radiated_power_on_spheres(ev, w, &s.power_radii, s.power_rule)?;
    Ok(Diagnostics {
        match_residual,
        null_level,
        d1_error,
        d1_sup,
        d2_sup,
        null_ratio: d2_sup.map(|d| d / d1_sup),
        far_field,
        power_spread: diagnostics::power_spread(&radiated_power),
        radiated_power,
        radiation: radiation_residual(ev, w, s.radiation_radius, &dirs)?,
        helmholtz: helmholtz_residual(ev, w, s.helmholtz_radius, s.helmholtz_step)?,
    })
}

/// Solve for the density of `config` and evaluate every metric and output.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioRun> {
    let cfg = config.resolved()?;
    let layout = Layout::new(&cfg)?;
    let ctx = layout.ctx;
    let mu = mu_for_region(cfg.d2.as_ref())?;

    let a1 = assemble_propagator(&layout.control_rule, &layout.control, cfg.degree, &ctx)?;
    let a2 = match &layout.null {
        Some((set, rule)) => Some(assemble_propagator(rule, set, cfg.degree, &ctx)?),
        None => None,
    };
    let b1 = target_samples(&cfg.target, &layout.control.points, &ctx);
    let problem = TikhonovProblem::new(a1, b1, a2, mu)?;
    let report = morozov_select(&problem, &cfg.morozov)?;
    drop(problem);

    let mut warnings = Vec::new();
    if !report.morozov_converged {
        warnings.push(format!(
            "discrepancy target {} not reached; alpha = {:e} gives match residual {:e}",
            cfg.morozov.delta, report.alpha, report.match_residual
        ));
    }
    let density = report.w.clone();
    let diagnostics = diagnostics_with(&cfg, &layout, &density)?;
    for p in diagnostics.radiated_power.iter().filter(|p| p.near_source) {
        warnings.push(format!("power sphere of radius {} is within twice the source radius", p.radius));
    }
    if diagnostics.d1_error.excluded > 0 {
        warnings.push(format!(
            "{} d1 grid points excluded from the error where the target vanishes",
            diagnostics.d1_error.excluded
        ));
    }

    let (grids, frames) = output_grids(&cfg, &density, &ctx)?;
    let traces = match (cfg.outputs.traces, cfg.physical_surface_radius) {
        (true, Some(r)) => {
            let [nt, np] = cfg.sampling.trace_rule;
            let surface = sphere_rule(r, ORIGIN, nt, np)?;
            let rule = source_rule_for(cfg.source_radius, ORIGIN, r, cfg.degree, cfg.sampling.quadrature_tol)?;
            Some(boundary_traces(&density, &surface.rule, &rule, &ctx)?)
        }
        _ => None,
    };

    let metrics = MetricsReport {
        scenario: cfg.name.clone(),
        case: cfg.case,
        config_hash: cfg.hash()?,
        mu,
        source_rule: [layout.control_rule.n_theta, layout.control_rule.n_phi],
        summary: Summary::from_diagnostics(&diagnostics),
        diagnostics,
        solve: SolveSummary::from(&report),
        warnings,
    };
    Ok(ScenarioRun {
        config: cfg,
        metrics,
        density,
        grids,
        frames,
        traces,
    })
}

fn output_grids(cfg: &ScenarioConfig, w: &DensityCoefficients, ctx: &WaveContext) -> Result<(Vec<GridData>, Vec<GridData>)> {
    let o = &cfg.outputs;
    let ev = FieldEvaluator::new(cfg.source_radius, *ctx, cfg.sampling.grid_tol);
    // inside the physical surface the representation has no meaning
    let cutoff = cfg.physical_surface_radius.unwrap_or(cfg.source_radius);
    let mut grids = Vec::new();
    let mut frames = Vec::new();
    for sl in &o.slices {
        let set = cartesian_slice_grid(sl.z, sl.x_range, sl.y_range, sl.nx, sl.ny)?;
        let outside: Vec<usize> = (0..set.len()).filter(|&i| norm(set.points[i]) > cutoff).collect();
        let pts: Vec<Point3> = outside.iter().map(|&i| set.points[i]).collect();
        let vals = ev.field(w, &pts)?;
        let mut values = vec![Complex64::new(f64::NAN, f64::NAN); set.len()];
        for (i, v) in outside.iter().zip(vals) {
            values[*i] = v;
        }
        let grid = |name: String, quantity: &str, values: Vec<Complex64>| GridData {
            name,
            quantity: quantity.into(),
            nx: sl.nx,
            ny: sl.ny,
            z: sl.z,
            x_range: sl.x_range,
            y_range: sl.y_range,
            values,
        };
        if o.error_slice.as_deref() == Some(sl.name.as_str()) {
            let err = set
                .points
                .iter()
                .zip(&values)
                .map(|(p, u)| {
                    let t = cfg.target.value(*p, ctx.k);
                    if cfg.d1.contains(*p) && t.norm() > 0.0 {
                        Complex64::new((u - t).norm() / t.norm(), 0.0)
                    } else {
                        Complex64::new(f64::NAN, 0.0)
                    }
                })
                .collect();
            grids.push(grid(format!("{}_error", sl.name), "relative_error", err));
        }
        if let Some(snap) = o.snapshots.as_ref().filter(|s| s.slice == sl.name) {
            for (n, frame) in time_snapshots(&values, &snap.kct).into_iter().enumerate() {
                let values = frame.into_iter().map(|v| Complex64::new(v, 0.0)).collect();
                frames.push(grid(format!("frame_{n:04}"), "snapshot", values));
            }
        }
        grids.push(grid(sl.name.clone(), "field", values));
    }
    if let Some([nt, np]) = o.density_map {
        grids.push(density_map(w, nt, np)?);
    }
    Ok((grids, frames))
}

/// The density `Σ c_lm Y_l^m(θ, φ)` on an equispaced `(φ, θ)` grid: `x` is the
/// azimuth on `[0, 2π]`, `y` the polar angle on `[0, π]`.
pub fn density_map(w: &DensityCoefficients, n_theta: usize, n_phi: usize) -> Result<GridData> {
    if n_theta < 2 || n_phi < 2 {
        return Err(NfsError::Config("density map needs at least 2 x 2 points".into()));
    }
    let tau = std::f64::consts::TAU;
    let pi = std::f64::consts::PI;
    let mut values = Vec::with_capacity(n_theta * n_phi);
    for i in 0..n_theta {
        let theta = pi * i as f64 / (n_theta - 1) as f64;
        for j in 0..n_phi {
            let phi = tau * j as f64 / (n_phi - 1) as f64;
            let y = sph_harm_all(w.max_degree(), theta, phi)?;
            values.push(
                HarmonicIndex::all(w.max_degree())
                    .map(|idx| w.get(idx) * y[idx.flat()])
                    .sum(),
            );
        }
    }
    Ok(GridData {
        name: "density".into(),
        quantity: "density".into(),
        nx: n_phi,
        ny: n_theta,
        z: 0.0,
        x_range: [0.0, tau],
        y_range: [0.0, pi],
        values,
    })
}
