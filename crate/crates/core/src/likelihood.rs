//! Profile log-likelihoods, likelihood equations, and their reduction to a
//! single polynomial in `rho = sigma1_sq / (sigma1_sq + sigma2_sq)`.
//!
//! With `phi_mu(rho) = (mu - 1) rho + 1`, every denominator `mu sigma1_sq +
//! sigma2_sq` equals `sigma^2 phi_mu(rho)`. The ML polynomial is
//! `P = P1 P2 - P3 P4` where each `P_k` is a sum of products of `phi`
//! factors; the REML polynomial is expanded from the pairwise form
//! `sum_{i<j} nu_i nu_j (m_j - m_i) (T_i phi_j - T_j phi_i) prod_{k != i,j} phi_k^2`.
//! Both are assembled without dividing coefficient arrays.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{Float, Zero};
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::model::VariancePoint;
use crate::poly::{self, ExactPolynomial, Polynomial, Ring};
use crate::spectral::{SpectralSummary, SufficientStats};

/// Full likelihood or restricted (error-contrast) likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Ml,
    Reml,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Ml => "ml",
            Mode::Reml => "reml",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ml" => Ok(Mode::Ml),
            "reml" => Ok(Mode::Reml),
            other => Err(Error::Input(format!("unknown mode '{other}'"))),
        }
    }
}

/// Statistics below this fraction of `sum nu_i T_i` count as zero.
pub const STAT_ZERO_TOL: f64 = 1e-12;


pub fn phi(mu: f64, rho: Complex64) -> Complex64 {
    (mu - 1.0) * rho + 1.0
}

/// The eigen-data that plays the role of the covariance kernel: `(alpha_j,
/// s_j)` of `V` for ML, `(m_i, nu_i)` of `BVB'` for REML.
fn kernel(mode: Mode, summary: &SpectralSummary) -> (&[f64], &[usize]) {
    match mode {
        Mode::Ml => (&summary.alpha, &summary.s_mult),
        Mode::Reml => (&summary.m, &summary.nu),
    }
}

/// `V` eigenvalues equal to a `BVB'` eigenvalue within the grouping tolerance
/// are replaced by it, so shared factors cancel exactly.
fn snapped_alpha(summary: &SpectralSummary) -> Vec<f64> {
    summary
        .alpha
        .iter()
        .map(|&a| {
            summary
                .m
                .iter()
                .copied()
                .find(|&m| (m - a).abs() <= summary.grouping_tol * a.abs().max(1.0))
                .unwrap_or(a)
        })
        .collect()
}

fn check_stats(summary: &SpectralSummary, stats: &SufficientStats) -> Result<()> {
    if stats.t.len() != summary.d() {
        return Err(Error::Dimension(format!(
            "{} statistics for d = {}",
            stats.t.len(),
            summary.d()
        )));
    }
    if summary.d() < 2 || !stats.has_positive_leading(&summary.nu, STAT_ZERO_TOL) {
        return Err(Error::VanishingStatistics);
    }
    Ok(())
}

/// Inputs of the division-free assembly over a coefficient ring. `unit`
/// is the representation of 1; all eigenvalues and statistics carry one
/// factor of it so every term of the result is homogeneous.
struct Weights<T> {
    unit: T,
    m: Vec<T>,
    nu: Vec<T>,
    t: Vec<T>,
    alpha: Vec<T>,
    s: Vec<T>,
}

impl<T: Ring> Weights<T> {
    fn phi(&self, mu: &T) -> Vec<T> {
        vec![self.unit.clone(), mu.clone() - self.unit.clone()]
    }
}

fn product_except<T: Ring>(factors: &[Vec<T>], skip: &[usize]) -> Vec<T> {
    let kept: Vec<&[T]> = factors
        .iter()
        .enumerate()
        .filter(|(k, _)| !skip.contains(k))
        .map(|(_, f)| f.as_slice())
        .collect();
    poly::product(&kept)
}

fn ml_coeffs<T: Ring>(w: &Weights<T>) -> Vec<T> {
    let d = w.m.len();
    let d0 = w.alpha.len();
    let phi_m_sq: Vec<Vec<T>> = w.m[..d - 1]
        .iter()
        .map(|mu| {
            let f = w.phi(mu);
            poly::mul(&f, &f)
        })
        .collect();
    let phi0 = w.phi(&T::zero());
    let phi0_sq = poly::mul(&phi0, &phi0);
    let phi_a: Vec<Vec<T>> = w.alpha[..d0 - 1].iter().map(|a| w.phi(a)).collect();

    let mut p1: Vec<Vec<T>> = (0..d - 1)
        .map(|i| {
            let c = w.nu[i].clone() * w.t[i].clone();
            poly::scale(&poly::mul(&phi0_sq, &product_except(&phi_m_sq, &[i])), &c)
        })
        .collect();
    p1.push(poly::scale(
        &product_except(&phi_m_sq, &[]),
        &(w.nu[d - 1].clone() * w.t[d - 1].clone()),
    ));
    let p1 = poly::sum_pairwise(p1);

    let p2 = poly::sum_pairwise(
        (0..d0 - 1)
            .map(|j| {
                poly::scale(
                    &product_except(&phi_a, &[j]),
                    &(w.alpha[j].clone() * w.s[j].clone()),
                )
            })
            .collect(),
    );

    let p3 = poly::sum_pairwise(
        (0..d - 1)
            .map(|i| {
                let c = w.nu[i].clone() * w.m[i].clone() * w.t[i].clone();
                poly::scale(&product_except(&phi_m_sq, &[i]), &c)
            })
            .collect(),
    );

    let mut p4: Vec<Vec<T>> = (0..d0 - 1)
        .map(|j| poly::scale(&poly::mul(&phi0_sq, &product_except(&phi_a, &[j])), &w.s[j]))
        .collect();
    p4.push(poly::scale(
        &poly::mul(&phi0, &product_except(&phi_a, &[])),
        &w.s[d0 - 1],
    ));
    let p4 = poly::sum_pairwise(p4);

    poly::sub(&poly::mul(&p1, &p2), &poly::mul(&p3, &p4))
}

fn reml_coeffs<T: Ring>(w: &Weights<T>) -> Vec<T> {
    let d = w.m.len();
    let phis: Vec<Vec<T>> = w.m.iter().map(|mu| w.phi(mu)).collect();
    let phis_sq: Vec<Vec<T>> = phis.iter().map(|f| poly::mul(f, f)).collect();
    let mut terms = Vec::with_capacity(d * (d - 1) / 2);
    for i in 0..d {
        for j in (i + 1)..d {
            let coef = w.nu[i].clone() * w.nu[j].clone() * (w.m[j].clone() - w.m[i].clone());
            let lin = poly::sub(
                &poly::scale(&phis[j], &w.t[i]),
                &poly::scale(&phis[i], &w.t[j]),
            );
            let rest = product_except(&phis_sq, &[i, j]);
            terms.push(poly::scale(&poly::mul(&lin, &rest), &coef));
        }
    }
    poly::sum_pairwise(terms)
}

fn float_weights(summary: &SpectralSummary, stats: &SufficientStats) -> Weights<f64> {
    Weights {
        unit: 1.0,
        m: summary.m.clone(),
        nu: summary.nu.iter().map(|&k| k as f64).collect(),
        t: stats.t.clone(),
        alpha: snapped_alpha(summary),
        s: summary.s_mult.iter().map(|&k| k as f64).collect(),
    }
}

/// Every finite `f64` is `mantissa * 2^exponent`; multiplying all inputs by
/// a common power of two turns them into integers without rounding.
struct DyadicScale {
    shift: u64,
}

impl DyadicScale {
    fn covering(values: impl IntoIterator<Item = f64>) -> Self {
        let shift = values
            .into_iter()
            .filter(|x| *x != 0.0)
            .map(|x| {
                let (_, exp, _) = x.integer_decode();
                (-i64::from(exp)).max(0) as u64
            })
            .max()
            .unwrap_or(0);
        Self { shift }
    }

    fn int(&self, x: f64) -> BigInt {
        if x == 0.0 {
            return BigInt::zero();
        }
        let (mantissa, exp, sign) = x.integer_decode();
        let v = BigInt::from(mantissa) << (i64::from(exp) + self.shift as i64) as usize;
        if sign < 0 {
            -v
        } else {
            v
        }
    }
}

fn exact_scale(summary: &SpectralSummary, stats: Option<&SufficientStats>) -> DyadicScale {
    let mut vals: Vec<f64> = vec![1.0];
    vals.extend(&summary.m);
    vals.extend(snapped_alpha(summary));
    if let Some(st) = stats {
        vals.extend(&st.t);
    }
    DyadicScale::covering(vals)
}

fn exact_weights(summary: &SpectralSummary, stats: &SufficientStats, scale: &DyadicScale) -> Weights<BigInt> {
    Weights {
        unit: scale.int(1.0),
        m: summary.m.iter().map(|&x| scale.int(x)).collect(),
        nu: summary.nu.iter().map(|&k| BigInt::from(k)).collect(),
        t: stats.t.iter().map(|&x| scale.int(x)).collect(),
        alpha: snapped_alpha(summary).into_iter().map(|x| scale.int(x)).collect(),
        s: summary.s_mult.iter().map(|&k| BigInt::from(k)).collect(),
    }
}

/// Upper bound on the degree of the polynomial: `2d + d0 - 4` (ML) or `2d - 3` (REML).
pub fn degree_bound(mode: Mode, summary: &SpectralSummary) -> usize {
    let d = summary.d();
    match mode {
        Mode::Ml => (2 * d + summary.d0()).saturating_sub(4),
        Mode::Reml => (2 * d).saturating_sub(3),
    }
}

pub fn build_ml_polynomial(
    summary: &SpectralSummary,
    stats: &SufficientStats,
    tol: &Tolerances,
) -> Result<Polynomial> {
    build_polynomial(Mode::Ml, summary, stats, tol)
}

pub fn build_reml_polynomial(
    summary: &SpectralSummary,
    stats: &SufficientStats,
    tol: &Tolerances,
) -> Result<Polynomial> {
    build_polynomial(Mode::Reml, summary, stats, tol)
}

pub fn build_polynomial(
    mode: Mode,
    summary: &SpectralSummary,
    stats: &SufficientStats,
    tol: &Tolerances,
) -> Result<Polynomial> {
    check_stats(summary, stats)?;
    let w = float_weights(summary, stats);
    let coeffs = match mode {
        Mode::Ml => ml_coeffs(&w),
        Mode::Reml => reml_coeffs(&w),
    };
    let p = Polynomial::new(coeffs, tol.degree_drop);
    assert!(
        p.degree().unwrap_or(0) <= degree_bound(mode, summary),
        "polynomial degree exceeds 2d+d0-4 / 2d-3"
    );
    Ok(p)
}

/// Same polynomial expanded in exact integer arithmetic from the binary
/// values of the eigenvalues and statistics.
pub fn build_exact_polynomial(
    mode: Mode,
    summary: &SpectralSummary,
    stats: &SufficientStats,
) -> Result<ExactPolynomial> {
    check_stats(summary, stats)?;
    let w = exact_weights(summary, stats, &exact_scale(summary, Some(stats)));
    let coeffs = match mode {
        Mode::Ml => ml_coeffs(&w),
        Mode::Reml => reml_coeffs(&w),
    };
    let p = ExactPolynomial::from_integers(coeffs);
    assert!(p.degree().unwrap_or(0) <= degree_bound(mode, summary));
    Ok(p)
}

/// Values `tau` whose factor `phi_tau` appears in the cleared denominators.
pub fn pole_eigenvalues(mode: Mode, summary: &SpectralSummary) -> Vec<f64> {
    let mut taus: Vec<f64> = summary.m.clone();
    if mode == Mode::Ml {
        taus.extend(snapped_alpha(summary));
    }
    taus.retain(|&t| t != 1.0);
    taus.sort_by(|a, b| b.total_cmp(a));
    taus.dedup();
    taus
}

/// `rho` at which `phi_tau` vanishes: `1 / (1 - tau)`.
pub fn pole_location(tau: f64) -> f64 {
    1.0 / (1.0 - tau)
}

/// Exact pole locations matching [`build_exact_polynomial`]'s rationalization.
pub fn exact_pole_locations(mode: Mode, summary: &SpectralSummary) -> Vec<BigRational> {
    let scale = exact_scale(summary, None);
    let unit = scale.int(1.0);
    let mut out: Vec<BigRational> = Vec::new();
    for tau in pole_eigenvalues(mode, summary) {
        let a = scale.int(tau);
        if a == unit {
            continue;
        }
        let r = BigRational::new(unit.clone(), &unit - a);
        if !out.contains(&r) {
            out.push(r);
        }
    }
    out
}

/// `h(rho) = H1(rho) / H2(rho)`; at an ML critical point `sigma^2 = h(rho)`.
pub fn h_value(rho: Complex64, summary: &SpectralSummary, stats: &SufficientStats) -> Result<Complex64> {
    sigma_sq_from_rho(Mode::Ml, rho, summary, stats)
}

/// `sigma^2` recovered from `rho` by the first likelihood equation:
/// `sum_{i<d} nu_i m_i T_i / phi_{m_i}^2` over `sum_{j<last} k_j kappa_j / phi_{kappa_j}`
/// where `(kappa, k)` is `(alpha, s)` for ML and `(m, nu)` for REML.
pub fn sigma_sq_from_rho(
    mode: Mode,
    rho: Complex64,
    summary: &SpectralSummary,
    stats: &SufficientStats,
) -> Result<Complex64> {
    let d = summary.d();
    let mut h1 = Complex64::zero();
    for i in 0..d - 1 {
        let f = phi(summary.m[i], rho);
        if f.norm() <= 1e-14 {
            return Err(Error::SpuriousPoint(format!("phi_{{m_{}}} vanishes", i + 1)));
        }
        h1 += summary.nu[i] as f64 * summary.m[i] * stats.t[i] / (f * f);
    }
    let (kappa, mult) = kernel(mode, summary);
    let mut h2 = Complex64::zero();
    let mut h2_scale = 0.0;
    for j in 0..kappa.len() - 1 {
        let f = phi(kappa[j], rho);
        if f.norm() <= 1e-14 {
            return Err(Error::SpuriousPoint(format!("kernel phi factor {} vanishes", j + 1)));
        }
        let term = mult[j] as f64 * kappa[j] / f;
        h2_scale += term.norm();
        h2 += term;
    }
    if h2.norm() <= 1e-14 * h2_scale.max(f64::MIN_POSITIVE) {
        return Err(Error::SpuriousPoint("H2 vanishes".into()));
    }
    Ok(h1 / h2)
}

fn check_point(s: &VariancePoint) -> Result<()> {
    VariancePoint::new(s.sigma1_sq, s.sigma2_sq).map(|_| ())
}

/// Profile log-likelihood (twice, up to a constant):
/// `-sum_j s_j log(alpha_j a + b) - sum_i nu_i T_i / (m_i a + b)`.
pub fn profile_loglik(
    s: &VariancePoint,
    summary: &SpectralSummary,
    stats: &SufficientStats,
) -> Result<f64> {
    check_point(s)?;
    Ok(loglik_at(Mode::Ml, s.sigma1_sq, s.sigma2_sq, summary, stats))
}

/// Restricted log-likelihood: `-sum_i nu_i log(m_i a + b) - sum_i nu_i T_i / (m_i a + b)`.
pub fn reml_loglik(
    s: &VariancePoint,
    summary: &SpectralSummary,
    stats: &SufficientStats,
) -> Result<f64> {
    check_point(s)?;
    Ok(loglik_at(Mode::Reml, s.sigma1_sq, s.sigma2_sq, summary, stats))
}

pub fn loglik(
    mode: Mode,
    s: &VariancePoint,
    summary: &SpectralSummary,
    stats: &SufficientStats,
) -> Result<f64> {
    check_point(s)?;
    Ok(loglik_at(mode, s.sigma1_sq, s.sigma2_sq, summary, stats))
}

/// Unchecked evaluation; callers guarantee every `mu a + b > 0`.
pub fn loglik_at(
    mode: Mode,
    a: f64,
    b: f64,
    summary: &SpectralSummary,
    stats: &SufficientStats,
) -> f64 {
    let (kappa, mult) = kernel(mode, summary);
    let logdet: f64 = kappa
        .iter()
        .zip(mult)
        .map(|(&k, &c)| c as f64 * (k * a + b).ln())
        .sum();
    let quad: f64 = summary
        .m
        .iter()
        .zip(&summary.nu)
        .zip(&stats.t)
        .map(|((&m, &nu), &t)| nu as f64 * t / (m * a + b))
        .sum();
    -logdet - quad
}

/// The two likelihood equations, each as `lhs - rhs`, together with the sum
/// of absolute term magnitudes used to form relative residuals.
#[derive(Debug, Clone, Copy)]
pub struct ScoreEval {
    pub values: [Complex64; 2],
    pub scales: [f64; 2],
}

impl ScoreEval {
    pub fn relative_residuals(&self) -> [f64; 2] {
        [0, 1].map(|k| {
            if self.scales[k] > 0.0 {
                self.values[k].norm() / self.scales[k]
            } else {
                self.values[k].norm()
            }
        })
    }
}

/// Partial derivatives of the (restricted) profile log-likelihood with
/// respect to `(sigma1_sq, sigma2_sq)`, evaluated at complex arguments.
pub fn score(
    mode: Mode,
    a: Complex64,
    b: Complex64,
    summary: &SpectralSummary,
    stats: &SufficientStats,
) -> ScoreEval {
    let (kappa, mult) = kernel(mode, summary);
    let mut values = [Complex64::zero(); 2];
    let mut scales = [0.0; 2];
    for ((&m, &nu), &t) in summary.m.iter().zip(&summary.nu).zip(&stats.t) {
        let den = m * a + b;
        let q = nu as f64 * t / (den * den);
        values[0] += m * q;
        values[1] += q;
        scales[0] += (m * q).norm();
        scales[1] += q.norm();
    }
    for (&k, &c) in kappa.iter().zip(mult) {
        let r = c as f64 / (k * a + b);
        values[0] -= k * r;
        values[1] -= r;
        scales[0] += (k * r).norm();
        scales[1] += r.norm();
    }
    ScoreEval { values, scales }
}

/// Hessian of [`loglik_at`] in `(sigma1_sq, sigma2_sq)`.
pub fn score_jacobian(
    mode: Mode,
    a: f64,
    b: f64,
    summary: &SpectralSummary,
    stats: &SufficientStats,
) -> [[f64; 2]; 2] {
    score_jacobian_complex(mode, a.into(), b.into(), summary, stats).map(|row| row.map(|v| v.re))
}

/// The same second derivatives continued to complex arguments.
pub fn score_jacobian_complex(
    mode: Mode,
    a: Complex64,
    b: Complex64,
    summary: &SpectralSummary,
    stats: &SufficientStats,
) -> [[Complex64; 2]; 2] {
    let (kappa, mult) = kernel(mode, summary);
    let mut h = [[Complex64::zero(); 2]; 2];
    for ((&m, &nu), &t) in summary.m.iter().zip(&summary.nu).zip(&stats.t) {
        let den = m * a + b;
        let q = -2.0 * nu as f64 * t / (den * den * den);
        h[0][0] += m * m * q;
        h[0][1] += m * q;
        h[1][1] += q;
    }
    for (&k, &c) in kappa.iter().zip(mult) {
        let den = k * a + b;
        let r = c as f64 / (den * den);
        h[0][0] += k * k * r;
        h[0][1] += k * r;
        h[1][1] += r;
    }
    h[1][0] = h[0][1];
    h
}
