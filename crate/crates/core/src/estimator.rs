//! Global ML / REML estimation: every real critical point inside the
//! admissible set competes with the `sigma1_sq = 0` boundary maximizer.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::candidates::{enumerate, CandidateSolution, Classification, PolyMode};
use crate::config::Tolerances;
use crate::degree::{replicate_rng, standard_normal_vector, ThetaCheck};
use crate::error::{Error, Result};
use crate::likelihood::{degree_bound, loglik, Mode, STAT_ZERO_TOL};
use crate::model::{
    check_ml_existence, check_reml_existence, null_space_basis_with, ModelSpec, NullBasisMethod,
    VariancePoint,
};
use crate::spectral::{reduce_with_basis, sufficient_stats, SpectralSummary, SpectrumInfo, SufficientStats};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub tol: Tolerances,
    pub poly_mode: PolyMode,
    pub null_basis: NullBasisMethod,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            tol: Tolerances::default(),
            poly_mode: PolyMode::Exact,
            null_basis: NullBasisMethod::Householder,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Existence {
    pub ml_condition: bool,
    pub reml_condition: bool,
}

/// Which competitor won the comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Winner {
    Interior,
    Boundary,
    /// Interior and boundary agree within the tie tolerance; the interior point is reported.
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub poly_degree: Option<usize>,
    pub degree_bound: usize,
    pub n_solutions: usize,
    pub n_poles: usize,
    pub n_spurious: usize,
    pub multiple_roots: bool,
    pub near_threshold: bool,
    /// All leading statistics vanished, so only the boundary was considered.
    pub boundary_only: bool,
    /// The winner has `sigma2_sq` below `1e-12 * sum nu_i T_i`.
    pub small_sigma2: bool,
    pub theta: Option<ThetaCheck>,
    pub spectrum: SpectrumInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub mode: Mode,
    pub s_hat: Option<VariancePoint>,
    /// Why no estimate exists, when `s_hat` is `None`.
    pub nonexistence: Option<String>,
    pub beta_hat: Option<Vec<f64>>,
    pub loglik: Option<f64>,
    pub winner: Option<Winner>,
    pub boundary_point: Option<VariancePoint>,
    pub boundary_value: Option<f64>,
    pub existence: Existence,
    pub candidates: Vec<CandidateSolution>,
    pub diagnostics: Option<Diagnostics>,
}

impl FitResult {
    pub fn exists(&self) -> bool {
        self.s_hat.is_some()
    }
}

fn existence(y: &DVector<f64>, spec: &ModelSpec, tol: f64) -> Result<Existence> {
    Ok(Existence {
        ml_condition: check_ml_existence(y, spec, tol)?,
        reml_condition: check_reml_existence(y, spec, tol)?,
    })
}

pub fn fit(y: &DVector<f64>, spec: &ModelSpec, mode: Mode, cfg: &FitConfig) -> Result<FitResult> {
    let b = null_space_basis_with(spec.x(), cfg.null_basis)?;
    fit_with_basis(y, spec, &b, mode, cfg)
}

/// As [`fit`], with a caller-supplied orthonormal basis of the residual space.
pub fn fit_with_basis(
    y: &DVector<f64>,
    spec: &ModelSpec,
    basis: &DMatrix<f64>,
    mode: Mode,
    cfg: &FitConfig,
) -> Result<FitResult> {
    let ex = existence(y, spec, cfg.tol.rank)?;
    let holds = match mode {
        Mode::Ml => ex.ml_condition,
        Mode::Reml => ex.reml_condition,
    };
    if !holds {
        let reason = match mode {
            Mode::Ml => "ml_condition: y lies in span([X, V])",
            Mode::Reml => "reml_condition: My lies in span(MV)",
        };
        return Ok(FitResult {
            mode,
            s_hat: None,
            nonexistence: Some(reason.into()),
            beta_hat: None,
            loglik: None,
            winner: None,
            boundary_point: None,
            boundary_value: None,
            existence: ex,
            candidates: Vec::new(),
            diagnostics: None,
        });
    }

    let summary = reduce_with_basis(spec, basis.clone(), cfg.tol.eigen_group)?;
    let stats = sufficient_stats(y, &summary)?;
    estimate_from_stats(y, spec, &summary, &stats, mode, cfg, ex)
}

fn boundary_point(mode: Mode, summary: &SpectralSummary, stats: &SufficientStats) -> Result<VariancePoint> {
    let total = stats.weighted_total(&summary.nu);
    if total <= 0.0 {
        return Err(Error::DataInMeanSpace);
    }
    let dof = match mode {
        Mode::Ml => summary.n,
        Mode::Reml => summary.n - summary.p,
    };
    VariancePoint::new(0.0, total / dof as f64)
}

fn estimate_from_stats(
    y: &DVector<f64>,
    spec: &ModelSpec,
    summary: &SpectralSummary,
    stats: &SufficientStats,
    mode: Mode,
    cfg: &FitConfig,
    ex: Existence,
) -> Result<FitResult> {
    let total = stats.weighted_total(&summary.nu);
    let bpoint = boundary_point(mode, summary, stats)?;
    let bvalue = loglik(mode, &bpoint, summary, stats)?;

    let boundary_only = !stats.has_positive_leading(&summary.nu, STAT_ZERO_TOL);
    let count = if boundary_only {
        None
    } else {
        Some(enumerate(summary, stats, mode, cfg.poly_mode, &cfg.tol)?)
    };

    let mut best: Option<(VariancePoint, f64)> = None;
    if let Some(c) = &count {
        for cand in &c.candidates {
            if !matches!(
                cand.classification,
                Classification::InteriorReal | Classification::Boundary
            ) {
                continue;
            }
            let Some(pt) = cand.variance_point() else { continue };
            let value = loglik(mode, &pt, summary, stats)?;
            if best.map_or(true, |(_, v)| value > v) {
                best = Some((pt, value));
            }
        }
    }
    let (s_hat, value, winner) = match best {
        Some((pt, v)) if v >= bvalue - cfg.tol.tie => {
            let w = if (v - bvalue).abs() <= cfg.tol.tie {
                Winner::Tie
            } else {
                Winner::Interior
            };
            (pt, v, w)
        }
        _ => (bpoint, bvalue, Winner::Boundary),
    };
    let beta = gls_beta(&s_hat, y, spec)?;

    let diagnostics = Diagnostics {
        poly_degree: count.as_ref().map(|c| c.poly_degree),
        degree_bound: degree_bound(mode, summary),
        n_solutions: count.as_ref().map_or(0, |c| c.n_solutions),
        n_poles: count.as_ref().map_or(0, |c| c.n_poles),
        n_spurious: count.as_ref().map_or(0, |c| c.n_spurious),
        multiple_roots: count.as_ref().is_some_and(|c| c.has_multiple_roots),
        near_threshold: count.as_ref().is_some_and(|c| c.near_threshold),
        boundary_only,
        small_sigma2: s_hat.sigma2_sq < 1e-12 * total,
        theta: count.as_ref().map(|c| c.theta),
        spectrum: summary.info(),
    };
    Ok(FitResult {
        mode,
        s_hat: Some(s_hat),
        nonexistence: None,
        beta_hat: Some(beta.iter().copied().collect()),
        loglik: Some(value),
        winner: Some(winner),
        boundary_point: Some(bpoint),
        boundary_value: Some(bvalue),
        existence: ex,
        candidates: count.map(|c| c.candidates).unwrap_or_default(),
        diagnostics: Some(diagnostics),
    })
}

/// `Sigma(s)^{-1}` through the eigendecomposition of `V`.
fn inverse_covariance(s: &VariancePoint, spec: &ModelSpec) -> Result<DMatrix<f64>> {
    if !(s.sigma2_sq > 0.0) || s.sigma1_sq < 0.0 {
        return Err(Error::InvalidVariance(format!(
            "({}, {}) is outside the admissible set",
            s.sigma1_sq, s.sigma2_sq
        )));
    }
    let eig = SymmetricEigen::new(spec.v().clone());
    let w = eig
        .eigenvalues
        .map(|l| 1.0 / (s.sigma1_sq * l.max(0.0) + s.sigma2_sq));
    let u = &eig.eigenvectors;
    Ok(u * DMatrix::from_diagonal(&w) * u.transpose())
}

/// Generalized least squares `(X' Sigma^-1 X)^-1 X' Sigma^-1 y`.
pub fn gls_beta(s: &VariancePoint, y: &DVector<f64>, spec: &ModelSpec) -> Result<DVector<f64>> {
    if y.len() != spec.n() {
        return Err(Error::Dimension(format!("y has length {}, n = {}", y.len(), spec.n())));
    }
    let w = inverse_covariance(s, spec)?;
    let xt_w = spec.x().transpose() * &w;
    let normal = &xt_w * spec.x();
    let rhs = &xt_w * y;
    let chol = normal.cholesky().ok_or(Error::RankDeficient {
        rank: 0,
        cols: spec.p(),
    })?;
    Ok(chol.solve(&rhs))
}

/// Draws `y = X beta + L u + sigma2 eps` with `L L' = sigma1_sq V`.
pub fn simulate(spec: &ModelSpec, beta: &DVector<f64>, s: &VariancePoint, seed: u64) -> Result<DVector<f64>> {
    if beta.len() != spec.p() {
        return Err(Error::Dimension(format!("beta has length {}, p = {}", beta.len(), spec.p())));
    }
    let s = VariancePoint::new(s.sigma1_sq, s.sigma2_sq)?;
    let n = spec.n();
    let eig = SymmetricEigen::new(spec.v().clone());
    let scale = eig.eigenvalues.map(|l| (s.sigma1_sq * l.max(0.0)).sqrt());
    let mut rng = replicate_rng(seed, 0);
    let u = standard_normal_vector(n, &mut rng).component_mul(&scale);
    let eps = standard_normal_vector(n, &mut rng);
    Ok(spec.x() * beta + &eig.eigenvectors * u + eps * s.sigma2_sq.sqrt())
}
