//! Tikhonov-regularized synthesis of the density.
//!
//! The density minimizes
//!
//! ```text
//! F(w) = ν ‖A₁w − b₁‖² + μ ‖A₂w‖² + α ‖w‖²
//! ```
//!
//! where the norms on the sample sets carry their quadrature weights and
//! `‖w‖` is the Euclidean norm of the harmonic coefficients. The stacked
//! matrix `[√ν W₁^½ A₁; √μ W₂^½ A₂]` is factored once by SVD and reused for
//! every `α`.

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{NfsError, Result};
use crate::geometry::RegionSpec;
use crate::potentials::{DensityCoefficients, Propagator};

/// Penalty weight on the null region: `0` without one, `1` when it is
/// bounded and `1/(4πR²)` for the exterior of a ball of radius `R` about the
/// origin.
pub fn mu_for_region(d2: Option<&RegionSpec>) -> Result<f64> {
    match d2 {
        None => Ok(0.0),
        Some(RegionSpec::BallExterior { center, radius }) => {
            if center.iter().any(|c| *c != 0.0) {
                return Err(NfsError::Unsupported(
                    "ball-exterior null region must be centred at the origin".into(),
                ));
            }
            if !(*radius > 0.0 && radius.is_finite()) {
                return Err(NfsError::Geometry(format!("ball radius must be positive, got {radius}")));
            }
            Ok(1.0 / (4.0 * std::f64::consts::PI * radius * radius))
        }
        Some(region) => {
            region.validate()?;
            Ok(1.0)
        }
    }
}

/// Discretized synthesis problem.
#[derive(Clone, Debug)]
pub struct TikhonovProblem {
    pub a1: Propagator,
    pub b1: Vec<Complex64>,
    pub a2: Option<Propagator>,
    pub mu: f64,
    /// Factor `ν` on the match term.
    pub normalization: f64,
}

impl TikhonovProblem {
    /// Problem with `ν = 1/‖b₁‖²`, so the match term is the squared relative
    /// misfit.
    pub fn new(a1: Propagator, b1: Vec<Complex64>, a2: Option<Propagator>, mu: f64) -> Result<Self> {
        let nb = a1.weighted_norm(&b1);
        if !(nb > 0.0 && nb.is_finite()) {
            return Err(NfsError::Data("target field must be nonzero and finite on the match set".into()));
        }
        Self::with_normalization(a1, b1, a2, mu, 1.0 / (nb * nb))
    }

    pub fn with_normalization(
        a1: Propagator,
        b1: Vec<Complex64>,
        a2: Option<Propagator>,
        mu: f64,
        normalization: f64,
    ) -> Result<Self> {
        if b1.len() != a1.matrix.rows() {
            return Err(NfsError::Data(format!(
                "target has {} samples but the match propagator has {} rows",
                b1.len(),
                a1.matrix.rows()
            )));
        }
        if let Some(a2) = &a2 {
            if a2.matrix.cols() != a1.matrix.cols() {
                return Err(NfsError::Data("propagators differ in column count".into()));
            }
        }
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(NfsError::Config(format!("mu must be nonnegative, got {mu}")));
        }
        if !(normalization > 0.0 && normalization.is_finite()) {
            return Err(NfsError::Config(format!("normalization must be positive, got {normalization}")));
        }
        Ok(Self {
            a1,
            b1,
            a2,
            mu,
            normalization,
        })
    }

    pub fn columns(&self) -> usize {
        self.a1.matrix.cols()
    }

    /// Relative misfit `√ν ‖A₁w − b₁‖` evaluated directly.
    pub fn match_residual(&self, w: &[Complex64]) -> Result<f64> {
        let u = self.a1.apply_coeffs(w)?;
        let diff: Vec<Complex64> = u.iter().zip(&self.b1).map(|(a, b)| a - b).collect();
        Ok(self.normalization.sqrt() * self.a1.weighted_norm(&diff))
    }

    /// `‖A₂w‖` on the null samples.
    pub fn null_level(&self, w: &[Complex64]) -> Result<Option<f64>> {
        match &self.a2 {
            Some(a2) => Ok(Some(a2.weighted_norm(&a2.apply_coeffs(w)?))),
            None => Ok(None),
        }
    }

    /// The functional `F(w)`.
    pub fn functional(&self, w: &[Complex64], alpha: f64) -> Result<f64> {
        let m = self.match_residual(w)?;
        let n = self.null_level(w)?.unwrap_or(0.0);
        let c = w.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        Ok(m * m + self.mu * n * n + alpha * c * c)
    }
}

/// Result of a solve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub alpha: f64,
    pub w: DensityCoefficients,
    pub match_residual: f64,
    pub null_level: Option<f64>,
    pub coeff_norm: f64,
    pub delta: Option<f64>,
    pub morozov_converged: bool,
    /// `(α, match residual)` pairs visited by the search.
    pub discrepancy_trace: Vec<(f64, f64)>,
}

/// SVD of the stacked weighted system, reusable across `α`.
pub struct TikhonovSolver<'a> {
    problem: &'a TikhonovProblem,
    sigma: Vec<f64>,
    /// `U*` applied to the stacked right-hand side.
    beta: Vec<Complex64>,
    /// Rows of `U` belonging to the match block, `n₁ × r`.
    u_top: Mat<Complex64>,
    v: Mat<Complex64>,
    rhs_top: Vec<Complex64>,
}

fn row_scale(p: &Propagator, i: usize) -> f64 {
    p.row_weights.as_ref().map_or(1.0, |w| w[i].sqrt())
}

fn check_finite(p: &Propagator, name: &str) -> Result<()> {
    if p.matrix.data().iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(NfsError::Data(format!("{name} has non-finite entries")));
    }
    if let Some(w) = &p.row_weights {
        if w.len() != p.matrix.rows() || w.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(NfsError::Data(format!("{name} has invalid row weights")));
        }
    }
    Ok(())
}

impl<'a> TikhonovSolver<'a> {
    pub fn new(problem: &'a TikhonovProblem) -> Result<Self> {
        check_finite(&problem.a1, "match propagator")?;
        if problem.b1.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(NfsError::Data("target has non-finite samples".into()));
        }
        let a1 = &problem.a1;
        let n1 = a1.matrix.rows();
        let cols = a1.matrix.cols();
        // With μ = 0 the null block is dropped so the factorization is the
        // same as for the problem without it.
        let a2 = match &problem.a2 {
            Some(a2) if problem.mu > 0.0 => {
                check_finite(a2, "null propagator")?;
                Some(a2)
            }
            _ => None,
        };
        let n2 = a2.map_or(0, |a| a.matrix.rows());
        let sn = problem.normalization.sqrt();
        let sm = problem.mu.sqrt();
        let stacked = Mat::<Complex64>::from_fn(n1 + n2, cols, |i, j| {
            if i < n1 {
                a1.matrix.get(i, j) * (sn * row_scale(a1, i))
            } else {
                let a2 = a2.expect("rows beyond n1 exist only with a null block");
                a2.matrix.get(i - n1, j) * (sm * row_scale(a2, i - n1))
            }
        });
        let rhs_top: Vec<Complex64> = (0..n1).map(|i| problem.b1[i] * (sn * row_scale(a1, i))).collect();
        let svd = stacked
            .thin_svd()
            .map_err(|e| NfsError::LinearAlgebra(format!("SVD failed: {e:?}")))?;
        let u = svd.U();
        let r = u.ncols();
        let s = svd.S().column_vector();
        let sigma: Vec<f64> = (0..r).map(|i| s[i].re).collect();
        let u_top = Mat::<Complex64>::from_fn(n1, r, |i, j| u[(i, j)]);
        let beta = (0..r)
            .map(|j| (0..n1).fold(Complex64::new(0.0, 0.0), |acc, i| acc + u[(i, j)].conj() * rhs_top[i]))
            .collect();
        Ok(Self {
            problem,
            sigma,
            beta,
            u_top,
            v: svd.V().to_owned(),
            rhs_top,
        })
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.sigma
    }

    fn check_alpha(alpha: f64) -> Result<()> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(NfsError::Config(format!("alpha must be positive, got {alpha}")));
        }
        Ok(())
    }

    /// Filtered spectral coefficients `σ/(σ²+α) β`.
    fn filtered(&self, alpha: f64) -> Vec<Complex64> {
        self.sigma
            .iter()
            .zip(&self.beta)
            .map(|(s, b)| b * (s / (s * s + alpha)))
            .collect()
    }

    /// Minimizer as a raw coefficient vector.
    pub fn coefficients(&self, alpha: f64) -> Result<Vec<Complex64>> {
        Self::check_alpha(alpha)?;
        let z = self.filtered(alpha);
        Ok((0..self.problem.columns())
            .map(|i| {
                z.iter()
                    .enumerate()
                    .fold(Complex64::new(0.0, 0.0), |acc, (j, zj)| acc + self.v[(i, j)] * zj)
            })
            .collect())
    }

    pub fn density(&self, alpha: f64) -> Result<DensityCoefficients> {
        DensityCoefficients::new(self.problem.a1.max_degree, self.coefficients(alpha)?)
    }

    /// Match residual from the factorization, without forming `w`.
    pub fn spectral_match_residual(&self, alpha: f64) -> Result<f64> {
        Self::check_alpha(alpha)?;
        let f: Vec<Complex64> = self
            .sigma
            .iter()
            .zip(&self.beta)
            .map(|(s, b)| b * (s * s / (s * s + alpha)))
            .collect();
        let mut sum = 0.0;
        for (i, rhs) in self.rhs_top.iter().enumerate() {
            let fit = f
                .iter()
                .enumerate()
                .fold(Complex64::new(0.0, 0.0), |acc, (j, fj)| acc + self.u_top[(i, j)] * fj);
            sum += (fit - rhs).norm_sqr();
        }
        Ok(sum.sqrt())
    }

    /// Coefficient norm from the factorization.
    pub fn spectral_coeff_norm(&self, alpha: f64) -> Result<f64> {
        Self::check_alpha(alpha)?;
        Ok(self.filtered(alpha).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
    }

    pub fn solve(&self, alpha: f64) -> Result<SolveReport> {
        let w = self.density(alpha)?;
        Ok(SolveReport {
            alpha,
            match_residual: self.problem.match_residual(w.coeffs())?,
            null_level: self.problem.null_level(w.coeffs())?,
            coeff_norm: w.norm(),
            w,
            delta: None,
            morozov_converged: false,
            discrepancy_trace: Vec::new(),
        })
    }
}

/// Minimizer of the functional for a fixed `α`.
pub fn solve_fixed_alpha(problem: &TikhonovProblem, alpha: f64) -> Result<SolveReport> {
    TikhonovSolver::check_alpha(alpha)?;
    TikhonovSolver::new(problem)?.solve(alpha)
}

/// Settings for the discrepancy search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorozovOptions {
    pub delta: f64,
    pub alpha_range: [f64; 2],
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for MorozovOptions {
    fn default() -> Self {
        Self {
            delta: 1e-3,
            alpha_range: [1e-16, 1e2],
            tol: 0.05,
            max_steps: 60,
        }
    }
}

impl MorozovOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(NfsError::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        let [lo, hi] = self.alpha_range;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(NfsError::Config(format!("invalid alpha range [{lo}, {hi}]")));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(NfsError::Config(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_steps == 0 {
            return Err(NfsError::Config("at least one bisection step is required".into()));
        }
        Ok(())
    }
}

/// Choose `α` so that the match residual equals `delta`, by bisection in
/// `log α` on the monotone residual curve.
pub fn morozov_select(problem: &TikhonovProblem, opts: &MorozovOptions) -> Result<SolveReport> {
    opts.validate()?;
    let solver = TikhonovSolver::new(problem)?;
    morozov_with_solver(&solver, opts)
}

/// Outcome of the discrepancy search before the density is formed.
#[derive(Clone, Debug, PartialEq)]
pub struct MorozovOutcome {
    pub alpha: f64,
    pub residual: f64,
    pub converged: bool,
    pub trace: Vec<(f64, f64)>,
}

pub fn morozov_alpha(solver: &TikhonovSolver<'_>, opts: &MorozovOptions) -> Result<MorozovOutcome> {
    opts.validate()?;
    let delta = opts.delta;
    let close = |r: f64| (r - delta).abs() <= opts.tol * delta;
    let [mut lo, mut hi] = opts.alpha_range;
    let mut trace = Vec::new();
    let mut eval = |alpha: f64| -> Result<f64> {
        let r = solver.spectral_match_residual(alpha)?;
        trace.push((alpha, r));
        Ok(r)
    };
    let done = |alpha, residual, converged, trace| MorozovOutcome {
        alpha,
        residual,
        converged,
        trace,
    };

    let r_lo = eval(lo)?;
    if close(r_lo) || r_lo > delta {
        return Ok(done(lo, r_lo, close(r_lo), trace));
    }
    let r_hi = eval(hi)?;
    if close(r_hi) || r_hi < delta {
        return Ok(done(hi, r_hi, close(r_hi), trace));
    }
    let mut best = (lo, r_lo);
    for _ in 0..opts.max_steps {
        let mid = (0.5 * (lo.ln() + hi.ln())).exp();
        let r = eval(mid)?;
        if (r - delta).abs() < (best.1 - delta).abs() {
            best = (mid, r);
        }
        if close(r) {
            return Ok(done(mid, r, true, trace));
        }
        if r < delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(done(best.0, best.1, false, trace))
}

pub fn morozov_with_solver(solver: &TikhonovSolver<'_>, opts: &MorozovOptions) -> Result<SolveReport> {
    let outcome = morozov_alpha(solver, opts)?;
    let mut report = solver.solve(outcome.alpha)?;
    report.delta = Some(opts.delta);
    report.morozov_converged = outcome.converged;
    report.discrepancy_trace = outcome.trace;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SectorShell;

    #[test]
    fn mu_values() {
        assert_eq!(mu_for_region(None).unwrap(), 0.0);
        let shell = SectorShell {
            r_min: 0.011,
            r_max: 0.015,
            theta_min: -0.7,
            theta_max: 0.7,
            phi_min: -0.7,
            phi_max: 0.7,
            offset: [0.018, 0.0, 0.0],
        };
        assert_eq!(mu_for_region(Some(&RegionSpec::SectorShell(shell))).unwrap(), 1.0);
        let ball = RegionSpec::BallExterior {
            center: [0.0; 3],
            radius: 10.0,
        };
        let mu = mu_for_region(Some(&ball)).unwrap();
        assert!((mu - 7.957747e-4).abs() < 1e-10);
        let off = RegionSpec::BallExterior {
            center: [1.0, 0.0, 0.0],
            radius: 10.0,
        };
        assert!(matches!(mu_for_region(Some(&off)), Err(NfsError::Unsupported(_))));
    }

    #[test]
    fn options_are_validated() {
        let bad = MorozovOptions {
            alpha_range: [1.0, 1e-3],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = MorozovOptions {
            delta: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
