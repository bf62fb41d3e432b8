//! Turns roots of the `rho`-polynomial into candidate variance points,
//! discarding poles of the cleared denominators and roots that do not
//! satisfy the original likelihood equations.

use num_complex::Complex64;
use serde::{Serialize, Serializer};

use crate::config::Tolerances;
use crate::degree::{theta_family_check, ThetaCheck, ThetaStatus};
use crate::error::{Error, Result};
use crate::likelihood::{
    build_exact_polynomial, build_polynomial, exact_pole_locations, pole_eigenvalues,
    pole_location, score, score_jacobian_complex, sigma_sq_from_rho, Mode,
};
use crate::model::VariancePoint;
use crate::roots::{all_roots, clustered};
use crate::spectral::{SpectralSummary, SufficientStats};

/// Where a root of the polynomial lands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    /// Real, `0 < rho < 1`, `sigma^2 > 0`, verified against the equations.
    InteriorReal,
    /// Real root at `rho = 0` (a critical point with `sigma1_sq = 0`).
    Boundary,
    /// Non-real critical point.
    Complex,
    /// Real critical point outside the admissible set.
    Exterior,
    /// Fails the original equations.
    Spurious,
    /// A `phi` factor of the cleared denominators vanishes.
    Pole,
}

fn ser_complex<S: Serializer>(z: &Option<Complex64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match z {
        Some(z) => [z.re, z.im].serialize(s),
        None => s.serialize_none(),
    }
}

fn ser_rho<S: Serializer>(z: &Complex64, s: S) -> std::result::Result<S::Ok, S::Error> {
    [z.re, z.im].serialize(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateSolution {
    #[serde(serialize_with = "ser_rho")]
    pub rho: Complex64,
    #[serde(serialize_with = "ser_complex")]
    pub sigma_sq: Option<Complex64>,
    #[serde(serialize_with = "ser_complex")]
    pub sigma1_sq: Option<Complex64>,
    #[serde(serialize_with = "ser_complex")]
    pub sigma2_sq: Option<Complex64>,
    pub classification: Classification,
    /// Relative residuals of the two likelihood equations in the original coordinates.
    pub residuals: Option<[f64; 2]>,
    /// Lies within 1e-6 of another root.
    pub multiple: bool,
}

impl CandidateSolution {
    /// The admissible point for interior and boundary candidates.
    pub fn variance_point(&self) -> Option<VariancePoint> {
        match self.classification {
            Classification::InteriorReal | Classification::Boundary => VariancePoint::new(
                self.sigma1_sq?.re.max(0.0),
                self.sigma2_sq?.re,
            )
            .ok(),
            _ => None,
        }
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.map_or(f64::INFINITY, |r| r[0].max(r[1]))
    }

    /// Counts towards the number of complex solutions of the equations.
    pub fn is_solution(&self) -> bool {
        !matches!(
            self.classification,
            Classification::Spurious | Classification::Pole
        )
    }
}

fn is_real(z: Complex64) -> bool {
    z.im.abs() <= 1e-8 * (1.0 + z.norm())
}

const POLE_TOL: f64 = 1e-6;
const REFINE_ITERS: usize = 30;
/// Largest relative change in `rho` a Newton polish may make.
const MAX_DRIFT: f64 = 1e-4;

fn residuals_at(mode: Mode, a: Complex64, b: Complex64, summary: &SpectralSummary, stats: &SufficientStats) -> [f64; 2] {
    score(mode, a, b, summary, stats).relative_residuals()
}

fn worst(r: [f64; 2]) -> f64 {
    r[0].max(r[1])
}

/// Newton iteration on the score equations in `(sigma1_sq, sigma2_sq)`,
/// keeping the best iterate. Real starting points stay real.
fn refine(
    mode: Mode,
    mut a: Complex64,
    mut b: Complex64,
    summary: &SpectralSummary,
    stats: &SufficientStats,
) -> (Complex64, Complex64, [f64; 2]) {
    let mut best = (a, b, residuals_at(mode, a, b, summary, stats));
    for _ in 0..REFINE_ITERS {
        let g = score(mode, a, b, summary, stats).values;
        let h = score_jacobian_complex(mode, a, b, summary, stats);
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        if det.norm() == 0.0 || !det.is_finite() {
            break;
        }
        a -= (h[1][1] * g[0] - h[0][1] * g[1]) / det;
        b -= (h[0][0] * g[1] - h[1][0] * g[0]) / det;
        if !(a.is_finite() && b.is_finite()) {
            break;
        }
        let r = residuals_at(mode, a, b, summary, stats);
        if worst(r) < worst(best.2) {
            best = (a, b, r);
        } else {
            break;
        }
        if worst(best.2) < 1e-15 {
            break;
        }
    }
    best
}

/// Distance from each root to its nearest neighbour.
fn separations(roots: &[Complex64]) -> Vec<f64> {
    roots
        .iter()
        .enumerate()
        .map(|(i, r)| {
            roots
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| (r - q).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Classifies each root and maps the survivors to `(sigma1_sq, sigma2_sq)`
/// through `sigma^2 = h(rho)` (or its REML analog), `sigma1_sq = sigma^2 rho`,
/// `sigma2_sq = sigma^2 (1 - rho)`. Roots whose residual on the original
/// equations is not already negligible are polished by Newton steps on those
/// equations; a polish that moves `rho` by more than 1e-4 (relative) or
/// more than half-way to another root is discarded.
///
/// With `poles_removed` the pole factors were divided out exactly, so no
/// root is labelled a pole by proximity.
pub fn recover_candidates(
    roots: &[Complex64],
    summary: &SpectralSummary,
    stats: &SufficientStats,
    mode: Mode,
    tol: &Tolerances,
    poles_removed: bool,
) -> Vec<CandidateSolution> {
    let poles: Vec<f64> = if poles_removed {
        Vec::new()
    } else {
        pole_eigenvalues(mode, summary)
            .into_iter()
            .map(pole_location)
            .collect()
    };
    let multiple = clustered(roots, 1e-6);
    let gaps = separations(roots);
    roots
        .iter()
        .zip(multiple)
        .zip(gaps)
        .map(|((&rho, multiple), gap)| {
            let mut cand = CandidateSolution {
                rho,
                sigma_sq: None,
                sigma1_sq: None,
                sigma2_sq: None,
                classification: Classification::Pole,
                residuals: None,
                multiple,
            };
            if poles
                .iter()
                .any(|&p| (rho - p).norm() <= POLE_TOL * p.abs().max(1.0))
            {
                return cand;
            }
            let sigma_sq = match sigma_sq_from_rho(mode, rho, summary, stats) {
                Ok(s) if s.norm() > 0.0 && s.is_finite() => s,
                _ => {
                    cand.classification = Classification::Spurious;
                    return cand;
                }
            };
            let real = is_real(rho) && is_real(sigma_sq);
            let (mut a, mut b) = if real {
                ((sigma_sq * rho).re.into(), (sigma_sq * (1.0 - rho)).re.into())
            } else {
                (sigma_sq * rho, sigma_sq * (1.0 - rho))
            };
            let in_s = real && rho.re > -1e-12 && rho.re < 1.0 && sigma_sq.re > 0.0;
            if in_s {
                a = a.re.max(0.0).into();
            }
            let mut res = residuals_at(mode, a, b, summary, stats);
            if worst(res) > tol.interior * 1e-3 {
                let (ra, rb, rres) = refine(mode, a, b, summary, stats);
                let moved = (ra / (ra + rb) - rho).norm();
                if moved <= (0.5 * gap).min(MAX_DRIFT * rho.norm().max(1.0)) {
                    (a, b, res) = (ra, rb, rres);
                }
            }
            let rho_now = a / (a + b);
            cand.rho = if real { rho_now.re.into() } else { rho_now };
            cand.sigma1_sq = Some(a);
            cand.sigma2_sq = Some(b);
            cand.sigma_sq = Some(a + b);
            cand.residuals = Some(res);
            let w = worst(res);
            cand.classification = if !w.is_finite() || w > tol.spurious {
                Classification::Spurious
            } else if in_s {
                if w > tol.interior || b.re <= 0.0 || a.re < 0.0 {
                    Classification::Spurious
                } else if rho.re.abs() <= 1e-12 || a.re <= 0.0 {
                    Classification::Boundary
                } else {
                    Classification::InteriorReal
                }
            } else if real {
                Classification::Exterior
            } else {
                Classification::Complex
            };
            cand
        })
        .collect()
}

/// How the polynomial is assembled for counting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PolyMode {
    Float,
    /// Eigenvalues and statistics rationalized at 1e-12, expanded exactly,
    /// pole factors divided out exactly.
    #[default]
    Exact,
}

/// Number of complex critical points for one data set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionCount {
    pub poly_degree: usize,
    pub n_solutions: usize,
    pub n_poles: usize,
    pub n_spurious: usize,
    pub has_multiple_roots: bool,
    pub near_threshold: bool,
    pub theta: ThetaCheck,
    pub candidates: Vec<CandidateSolution>,
}

/// Counts critical points, refusing data where the `(theta, -theta)` test
/// has a vanishing denominator.
pub fn solution_count(
    summary: &SpectralSummary,
    stats: &SufficientStats,
    mode: Mode,
    poly_mode: PolyMode,
    tol: &Tolerances,
) -> Result<SolutionCount> {
    let count = enumerate(summary, stats, mode, poly_mode, tol)?;
    if count.theta.status == ThetaStatus::ZeroDenominator {
        return Err(Error::DegenerateSpectrum(
            "sum s_j alpha_j / (alpha_j - 1) vanishes with nonzero statistics".into(),
        ));
    }
    Ok(count)
}

/// Builds the polynomial, finds its roots and classifies every one.
pub fn enumerate(
    summary: &SpectralSummary,
    stats: &SufficientStats,
    mode: Mode,
    poly_mode: PolyMode,
    tol: &Tolerances,
) -> Result<SolutionCount> {
    let theta = theta_family_check(mode, summary, stats);
    let (poly_degree, n_exact_poles, float_poly) = match poly_mode {
        PolyMode::Float => {
            let p = build_polynomial(mode, summary, stats, tol)?;
            (p.degree().ok_or(Error::ZeroPolynomial)?, 0, p)
        }
        PolyMode::Exact => {
            let mut p = build_exact_polynomial(mode, summary, stats)?;
            let degree = p.degree().ok_or(Error::ZeroPolynomial)?;
            let mut removed = 0;
            for pole in exact_pole_locations(mode, summary) {
                while let Some(q) = p.deflate(&pole) {
                    p = q;
                    removed += 1;
                }
            }
            (degree, removed, p.to_float(tol.degree_drop))
        }
    };
    let roots = match float_poly.degree() {
        Some(0) | None => Vec::new(),
        Some(_) => all_roots(&float_poly)?,
    };
    let candidates = recover_candidates(&roots, summary, stats, mode, tol, poly_mode == PolyMode::Exact);
    let n_poles = n_exact_poles
        + candidates
            .iter()
            .filter(|c| c.classification == Classification::Pole)
            .count();
    let n_spurious = candidates
        .iter()
        .filter(|c| c.classification == Classification::Spurious)
        .count();
    Ok(SolutionCount {
        poly_degree,
        n_solutions: candidates.iter().filter(|c| c.is_solution()).count(),
        n_poles,
        n_spurious,
        has_multiple_roots: candidates.iter().any(|c| c.multiple),
        near_threshold: float_poly.near_threshold,
        theta,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::build_reml_polynomial;
    use crate::model::{build_one_way_model, ones_design};
    use crate::spectral::{reduce, sufficient_stats};
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    fn balanced() -> (SpectralSummary, SufficientStats) {
        let spec = build_one_way_model(&[2, 2], ones_design(4)).unwrap();
        let s = reduce(&spec, 1e-9).unwrap();
        let st = sufficient_stats(&DVector::from_vec(vec![1.0, 2.0, 3.0, 5.0]), &s).unwrap();
        (s, st)
    }

    #[test]
    fn balanced_ml_candidates() {
        let (s, st) = balanced();
        let tol = Tolerances::default();
        let p = build_polynomial(Mode::Ml, &s, &st, &tol).unwrap();
        let roots = all_roots(&p).unwrap();
        let c = recover_candidates(&roots, &s, &st, Mode::Ml, &tol, false);
        let interior: Vec<_> = c
            .iter()
            .filter(|c| c.classification == Classification::InteriorReal)
            .collect();
        assert_eq!(interior.len(), 1);
        assert_abs_diff_eq!(interior[0].rho.re, 3.0 / 7.0, epsilon = 1e-12);
        let vp = interior[0].variance_point().unwrap();
        assert_abs_diff_eq!(vp.sigma1_sq, 0.9375, epsilon = 1e-12);
        assert_abs_diff_eq!(vp.sigma2_sq, 1.25, epsilon = 1e-12);
        // rho = -1 is where phi_2 = 1 + rho vanishes
        assert!(c.iter().any(|c| c.classification == Classification::Pole
            && (c.rho.re + 1.0).abs() < 1e-9));
    }

    #[test]
    fn balanced_reml_candidate() {
        let (s, st) = balanced();
        let tol = Tolerances::default();
        let p = build_reml_polynomial(&s, &st, &tol).unwrap();
        let roots = all_roots(&p).unwrap();
        assert_eq!(roots.len(), 1);
        assert_abs_diff_eq!(roots[0].re, 2.0 / 3.0, epsilon = 1e-14);
        let c = recover_candidates(&roots, &s, &st, Mode::Reml, &tol, false);
        let vp = c[0].variance_point().unwrap();
        assert_eq!(c[0].classification, Classification::InteriorReal);
        assert_abs_diff_eq!(vp.sigma1_sq, 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(vp.sigma2_sq, 1.25, epsilon = 1e-12);
    }

    #[test]
    fn explicit_pole_is_excluded() {
        let (s, st) = balanced();
        let rho = Complex64::new(1.0 / (1.0 - s.m[0]), 0.0);
        let c = recover_candidates(&[rho], &s, &st, Mode::Ml, &Tolerances::default(), false);
        assert_eq!(c[0].classification, Classification::Pole);
        assert!(!c[0].is_solution());
        let c = recover_candidates(&[Complex64::new(1.0, 0.0)], &s, &st, Mode::Reml, &Tolerances::default(), false);
        assert_eq!(c[0].classification, Classification::Pole);
    }

    #[test]
    fn off_root_value_is_spurious() {
        let (s, st) = balanced();
        let c = recover_candidates(&[Complex64::new(0.1, 0.0)], &s, &st, Mode::Ml, &Tolerances::default(), false);
        assert_eq!(c[0].classification, Classification::Spurious);
    }

    #[test]
    fn balanced_counts_within_bounds() {
        let (s, st) = balanced();
        let tol = Tolerances::default();
        for pm in [PolyMode::Float, PolyMode::Exact] {
            let ml = solution_count(&s, &st, Mode::Ml, pm, &tol).unwrap();
            assert_eq!(ml.poly_degree, 2);
            assert_eq!(ml.n_solutions, 1);
            assert_eq!(ml.n_poles, 1);
            let reml = solution_count(&s, &st, Mode::Reml, pm, &tol).unwrap();
            assert_eq!((reml.poly_degree, reml.n_solutions), (1, 1));
        }
    }
}
