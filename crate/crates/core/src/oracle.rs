//! Brute-force reference computations for validating the polynomial route.
//! Nothing here calls into the likelihood or polynomial modules.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::likelihood::Mode;
use crate::model::{null_space_basis, ModelSpec, VariancePoint};
use crate::spectral::{reduce, sufficient_stats, SpectralSummary, SufficientStats};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleConfig {
    /// Grid over `[0, 1 - 1e-6]`; at least 64.
    pub rho_grid_points: usize,
    /// Golden-section iterations inside the best bracket.
    pub refine_iters: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            rho_grid_points: 4096,
            refine_iters: 80,
        }
    }
}

const RHO_MAX: f64 = 1.0 - 1e-6;

struct Concentrated<'a> {
    /// `(eigenvalue, multiplicity, statistic)` of the quadratic form.
    quad: Vec<(f64, f64, f64)>,
    /// `(eigenvalue, multiplicity)` of the determinant.
    det: &'a [f64],
    det_mult: Vec<f64>,
    dof: f64,
}

impl Concentrated<'_> {
    fn sigma_sq(&self, rho: f64) -> f64 {
        let s: f64 = self
            .quad
            .iter()
            .map(|&(mu, k, t)| k * t / (1.0 + rho * (mu - 1.0)))
            .sum();
        s / self.dof
    }

    fn value(&self, rho: f64) -> f64 {
        let logdet: f64 = self
            .det
            .iter()
            .zip(&self.det_mult)
            .map(|(&mu, &k)| k * (1.0 + rho * (mu - 1.0)).ln())
            .sum();
        -self.dof * self.sigma_sq(rho).ln() - logdet
    }
}

/// Maximizes the likelihood concentrated over `sigma^2` by a grid scan in
/// `rho` and golden-section refinement around the best grid point.
pub fn grid_refine_mle(
    stats: &SufficientStats,
    summary: &SpectralSummary,
    mode: Mode,
    cfg: &OracleConfig,
) -> Result<VariancePoint> {
    if cfg.rho_grid_points < 64 {
        return Err(Error::Input("rho_grid_points must be at least 64".into()));
    }
    let quad = summary
        .m
        .iter()
        .zip(&summary.nu)
        .zip(&stats.t)
        .map(|((&m, &k), &t)| (m, k as f64, t))
        .collect();
    let (det, det_mult, dof) = match mode {
        Mode::Ml => (&summary.alpha[..], &summary.s_mult, summary.n),
        Mode::Reml => (&summary.m[..], &summary.nu, summary.n - summary.p),
    };
    let f = Concentrated {
        quad,
        det,
        det_mult: det_mult.iter().map(|&k| k as f64).collect(),
        dof: dof as f64,
    };
    if !(f.sigma_sq(0.0) > 0.0) {
        return Err(Error::DataInMeanSpace);
    }

    let g = cfg.rho_grid_points;
    let grid = |k: usize| RHO_MAX * k as f64 / (g - 1) as f64;
    let (k_best, _) = (0..g)
        .map(|k| (k, f.value(grid(k))))
        .filter(|(_, v)| v.is_finite())
        .fold((0, f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc });

    let (mut lo, mut hi) = (grid(k_best.saturating_sub(1)), grid((k_best + 1).min(g - 1)));
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (f.value(x1), f.value(x2));
    for _ in 0..cfg.refine_iters {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f.value(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f.value(x2);
        }
    }
    let mut rho = 0.5 * (lo + hi);
    let mut best = f.value(rho);
    for edge in [lo, hi] {
        let v = f.value(edge);
        if v > best {
            best = v;
            rho = edge;
        }
    }
    VariancePoint::from_total_and_ratio(f.sigma_sq(rho), rho)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnovaEstimate {
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
    /// The moment estimate of `sigma1_sq` was not positive.
    pub boundary: bool,
    /// `sigma2_sq > 0`.
    pub admissible: bool,
}

/// Balanced one-way moment estimator; `y` is ordered group by group.
/// On the boundary `sigma2_sq` is the total sum of squares over `n - 1`.
pub fn anova_balanced(y: &[f64], q: usize, r: usize) -> Result<AnovaEstimate> {
    if r < 2 || q < 2 {
        return Err(Error::Input(format!("need q >= 2 and r >= 2, got q = {q}, r = {r}")));
    }
    if y.len() != q * r {
        return Err(Error::Dimension(format!("y has length {}, q r = {}", y.len(), q * r)));
    }
    let n = (q * r) as f64;
    let grand = y.iter().sum::<f64>() / n;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in y.chunks(r) {
        let mean = g.iter().sum::<f64>() / r as f64;
        ssb += r as f64 * (mean - grand).powi(2);
        ssw += g.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    }
    let msb = ssb / (q - 1) as f64;
    let msw = ssw / (q * (r - 1)) as f64;
    let est = if msb > msw {
        AnovaEstimate {
            sigma1_sq: (msb - msw) / r as f64,
            sigma2_sq: msw,
            boundary: false,
            admissible: msw > 0.0,
        }
    } else {
        let s2 = (ssb + ssw) / (n - 1.0);
        AnovaEstimate {
            sigma1_sq: 0.0,
            sigma2_sq: s2,
            boundary: true,
            admissible: s2 > 0.0,
        }
    };
    Ok(est)
}

fn dense_covariance(s: &VariancePoint, spec: &ModelSpec) -> Result<DMatrix<f64>> {
    if !(s.sigma2_sq > 0.0) || s.sigma1_sq < 0.0 {
        return Err(Error::InvalidVariance(format!("({}, {})", s.sigma1_sq, s.sigma2_sq)));
    }
    Ok(spec.v() * s.sigma1_sq + DMatrix::identity(spec.n(), spec.n()) * s.sigma2_sq)
}

fn chol_logdet(a: DMatrix<f64>) -> Result<(f64, nalgebra::Cholesky<f64, nalgebra::Dyn>)> {
    let c = a
        .cholesky()
        .ok_or_else(|| Error::InvalidVariance("covariance is not positive definite".into()))?;
    let logdet = 2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok((logdet, c))
}

/// `-log det Sigma - r' Sigma^-1 r` where `r` is the GLS residual.
pub fn dense_loglik(s: &VariancePoint, y: &DVector<f64>, spec: &ModelSpec) -> Result<f64> {
    let (logdet, c) = chol_logdet(dense_covariance(s, spec)?)?;
    let beta = gls_from_cholesky(&c, y, spec)?;
    let r = y - spec.x() * beta;
    Ok(-logdet - r.dot(&c.solve(&r)))
}

/// `-log det(B Sigma B') - z' (B Sigma B')^-1 z` with `z = B y`.
pub fn dense_reml_loglik(s: &VariancePoint, y: &DVector<f64>, spec: &ModelSpec) -> Result<f64> {
    let sigma = dense_covariance(s, spec)?;
    let b = null_space_basis(spec.x())?;
    let k = &b * sigma * b.transpose();
    let z = &b * y;
    let (logdet, c) = chol_logdet(k)?;
    Ok(-logdet - z.dot(&c.solve(&z)))
}

pub fn dense_mode_loglik(mode: Mode, s: &VariancePoint, y: &DVector<f64>, spec: &ModelSpec) -> Result<f64> {
    match mode {
        Mode::Ml => dense_loglik(s, y, spec),
        Mode::Reml => dense_reml_loglik(s, y, spec),
    }
}

/// GLS through a Cholesky factor of the dense covariance.
pub fn dense_gls_beta(s: &VariancePoint, y: &DVector<f64>, spec: &ModelSpec) -> Result<DVector<f64>> {
    let (_, c) = chol_logdet(dense_covariance(s, spec)?)?;
    gls_from_cholesky(&c, y, spec)
}

fn gls_from_cholesky(
    c: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
    y: &DVector<f64>,
    spec: &ModelSpec,
) -> Result<DVector<f64>> {
    let lhs = spec.x().transpose() * c.solve(spec.x());
    let rhs = spec.x().transpose() * c.solve(y);
    lhs.lu()
        .solve(&rhs)
        .ok_or(Error::RankDeficient { rank: 0, cols: spec.p() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleFit {
    pub s_hat: VariancePoint,
    /// Dense log-likelihood at `s_hat`.
    pub loglik: f64,
}

pub fn oracle_fit(y: &DVector<f64>, spec: &ModelSpec, mode: Mode, grouping_tol: f64, cfg: &OracleConfig) -> Result<OracleFit> {
    let summary = reduce(spec, grouping_tol)?;
    let stats = sufficient_stats(y, &summary)?;
    let s_hat = grid_refine_mle(&stats, &summary, mode, cfg)?;
    Ok(OracleFit {
        s_hat,
        loglik: dense_mode_loglik(mode, &s_hat, y, spec)?,
    })
}
