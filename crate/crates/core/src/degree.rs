//! Empirical checks of the ML-degree and REML-degree bounds over generic
//! (standard normal) data.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::candidates::{solution_count, PolyMode};
use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::likelihood::{degree_bound, Mode, STAT_ZERO_TOL};
use crate::model::{check_genericity, ModelSpec};
use crate::spectral::{reduce, sufficient_stats, SpectralSummary, SufficientStats};

/// Outcome of testing whether the equations admit a solution `s = (theta, -theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaStatus {
    /// `theta` computed from the first equation; `residual` is the second equation's value.
    Evaluated,
    /// All leading statistics vanish, so `theta = 0` and no admissible `theta` exists.
    ZeroStatistics,
    /// `sum s_j alpha_j / (alpha_j - 1) = 0` while the statistics are nonzero.
    ZeroDenominator,
    /// An eigenvalue equal to 1 makes the substituted equations undefined.
    EigenvalueOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThetaCheck {
    pub status: ThetaStatus,
    pub denominator: Option<f64>,
    pub theta: Option<f64>,
    pub residual: Option<f64>,
    /// `|residual|` over the sum of absolute terms of the second equation.
    pub relative_residual: Option<f64>,
}

impl ThetaCheck {
    fn bare(status: ThetaStatus, denominator: Option<f64>) -> Self {
        Self {
            status,
            denominator,
            theta: None,
            residual: None,
            relative_residual: None,
        }
    }

    /// A `(theta, -theta)` solution exists only when the residual is exactly zero.
    pub fn admits_solution(&self) -> bool {
        self.status == ThetaStatus::Evaluated && self.residual == Some(0.0)
    }
}

/// Substitutes `sigma1_sq = theta`, `sigma2_sq = -theta` into the likelihood
/// equations. For ML the kernel spectrum is `(alpha, s)` of `V`; for REML it
/// is `(m, nu)` of `BVB'`.
pub fn theta_family_check(mode: Mode, summary: &SpectralSummary, stats: &SufficientStats) -> ThetaCheck {
    let (kappa, mult): (&[f64], &[usize]) = match mode {
        Mode::Ml => (&summary.alpha, &summary.s_mult),
        Mode::Reml => (&summary.m, &summary.nu),
    };
    let tol = summary.grouping_tol;
    let near_one = |x: &f64| (x - 1.0).abs() <= tol * x.abs().max(1.0);
    if summary.m.iter().any(near_one) || kappa.iter().any(near_one) {
        return ThetaCheck::bare(ThetaStatus::EigenvalueOne, None);
    }
    let d = summary.d();
    let d0 = kappa.len();

    let lhs1: f64 = (0..d - 1)
        .map(|i| summary.nu[i] as f64 * summary.m[i] * stats.t[i] / (summary.m[i] - 1.0).powi(2))
        .sum();
    let den_terms: Vec<f64> = (0..d0 - 1)
        .map(|j| mult[j] as f64 * kappa[j] / (kappa[j] - 1.0))
        .collect();
    let denominator: f64 = den_terms.iter().sum();
    let den_scale: f64 = den_terms.iter().map(|t| t.abs()).sum();

    let total = stats.weighted_total(&summary.nu);
    if lhs1 <= STAT_ZERO_TOL * total || total == 0.0 {
        return ThetaCheck::bare(ThetaStatus::ZeroStatistics, Some(denominator));
    }
    if denominator.abs() <= 1e-12 * den_scale {
        return ThetaCheck::bare(ThetaStatus::ZeroDenominator, Some(denominator));
    }
    let theta = lhs1 / denominator;
    let lhs2_terms: Vec<f64> = (0..d)
        .map(|i| summary.nu[i] as f64 * stats.t[i] / (summary.m[i] - 1.0).powi(2))
        .collect();
    let rhs2_terms: Vec<f64> = (0..d0)
        .map(|j| theta * mult[j] as f64 / (kappa[j] - 1.0))
        .collect();
    let residual = lhs2_terms.iter().sum::<f64>() - rhs2_terms.iter().sum::<f64>();
    let scale: f64 = lhs2_terms.iter().chain(&rhs2_terms).map(|t| t.abs()).sum();
    ThetaCheck {
        status: ThetaStatus::Evaluated,
        denominator: Some(denominator),
        theta: Some(theta),
        residual: Some(residual),
        relative_residual: Some(if scale > 0.0 { residual.abs() / scale } else { 0.0 }),
    }
}

/// Degree bounds from the spectrum, and from the group count for one-way layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Bounds {
    /// `2d + d0 - 4`
    pub ml_bound: usize,
    /// `2d - 3`
    pub reml_bound: usize,
    /// `3q - 3`
    pub one_way_ml_bound: Option<usize>,
    /// `2q - 3`
    pub one_way_reml_bound: Option<usize>,
}

impl Bounds {
    pub fn spectral(&self, mode: Mode) -> usize {
        match mode {
            Mode::Ml => self.ml_bound,
            Mode::Reml => self.reml_bound,
        }
    }

    /// The one-way bound when available, otherwise the spectral bound.
    pub fn headline(&self, mode: Mode) -> usize {
        match mode {
            Mode::Ml => self.one_way_ml_bound.unwrap_or(self.ml_bound),
            Mode::Reml => self.one_way_reml_bound.unwrap_or(self.reml_bound),
        }
    }
}

pub fn theoretical_bounds(summary: &SpectralSummary, one_way_q: Option<usize>) -> Result<Bounds> {
    let bounds = Bounds {
        ml_bound: degree_bound(Mode::Ml, summary),
        reml_bound: degree_bound(Mode::Reml, summary),
        one_way_ml_bound: one_way_q.map(|q| 3 * q - 3),
        one_way_reml_bound: one_way_q.map(|q| (2 * q).saturating_sub(3)),
    };
    if let Some(q) = one_way_q {
        if summary.d0() > q + 1 || summary.d() > q {
            return Err(Error::DegenerateSpectrum(format!(
                "d0 = {} > q + 1 or d = {} > q for q = {q}",
                summary.d0(),
                summary.d()
            )));
        }
        debug_assert!(bounds.ml_bound <= 3 * q - 3);
        debug_assert!(bounds.reml_bound <= (2 * q).saturating_sub(3));
    }
    Ok(bounds)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeConfig {
    pub tol: Tolerances,
    pub poly_mode: PolyMode,
}

impl Default for DegreeConfig {
    fn default() -> Self {
        Self {
            tol: Tolerances::default(),
            poly_mode: PolyMode::Exact,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub replicate: u64,
    pub n_solutions: usize,
    pub poly_degree: usize,
    pub bound: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeReport {
    pub model: String,
    pub mode: Mode,
    pub replicates: u64,
    pub seed: u64,
    pub poly_mode: PolyMode,
    /// Solution count -> number of replicates.
    pub counts: BTreeMap<usize, u64>,
    pub degree_counts: BTreeMap<usize, u64>,
    pub max_count: usize,
    pub max_degree: usize,
    /// One-way bound (`3q - 3` / `2q - 3`) for one-way layouts, otherwise the spectral bound.
    pub bound: usize,
    /// `2d + d0 - 4` or `2d - 3`.
    pub spectral_bound: usize,
    pub bounds: Bounds,
    pub d: usize,
    pub d0: usize,
    pub violations: Vec<Violation>,
    pub degenerate_replicates: u64,
    pub theta_skipped: bool,
    /// Smallest relative residual of the `(theta, -theta)` test across replicates.
    pub theta_min_relative_residual: Option<f64>,
    pub multiple_root_replicates: u64,
    pub tolerances: Tolerances,
}

/// Describes the model in one line for reports.
pub fn describe(spec: &ModelSpec) -> String {
    match spec.one_way() {
        Some(ow) => format!(
            "one-way sizes={:?} n={} p={} q={}",
            ow.group_sizes,
            spec.n(),
            spec.p(),
            ow.q()
        ),
        None => format!("general n={} p={}", spec.n(), spec.p()),
    }
}

/// Per-replicate generator: stream `replicate` of a ChaCha8 generator seeded by `seed`.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

pub fn standard_normal_vector(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

enum Outcome {
    Degenerate,
    Counted {
        n_solutions: usize,
        degree: usize,
        theta_rel: Option<f64>,
        theta_skipped: bool,
        multiple: bool,
    },
}

pub fn degree_experiment(
    spec: &ModelSpec,
    mode: Mode,
    replicates: u64,
    seed: u64,
    cfg: &DegreeConfig,
) -> Result<DegreeReport> {
    if replicates == 0 {
        return Err(Error::Input("replicates must be at least 1".into()));
    }
    let gen = check_genericity(spec, cfg.tol.rank);
    match mode {
        Mode::Ml if !gen.ml_as => {
            return Err(Error::NotGeneric("span([X, V]) is all of R^n".into()))
        }
        Mode::Reml if !gen.reml_as => {
            return Err(Error::NotGeneric("span(MV) equals span(M)".into()))
        }
        _ => {}
    }
    let summary = reduce(spec, cfg.tol.eigen_group)?;
    let bounds = theoretical_bounds(&summary, spec.one_way().map(|ow| ow.q()))?;
    let spectral_bound = bounds.spectral(mode);
    let bound = bounds.headline(mode);

    let outcomes: Vec<(u64, Outcome)> = (0..replicates)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replicate_rng(seed, rep);
            let y = standard_normal_vector(spec.n(), &mut rng);
            let stats = sufficient_stats(&y, &summary)?;
            if !stats.has_positive_leading(&summary.nu, STAT_ZERO_TOL) {
                return Ok((rep, Outcome::Degenerate));
            }
            match solution_count(&summary, &stats, mode, cfg.poly_mode, &cfg.tol) {
                Ok(c) => Ok((
                    rep,
                    Outcome::Counted {
                        n_solutions: c.n_solutions,
                        degree: c.poly_degree,
                        theta_rel: c.theta.relative_residual,
                        theta_skipped: c.theta.status == ThetaStatus::EigenvalueOne,
                        multiple: c.has_multiple_roots,
                    },
                )),
                Err(Error::ZeroPolynomial) | Err(Error::VanishingStatistics) => {
                    Ok((rep, Outcome::Degenerate))
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mut counts = BTreeMap::new();
    let mut degree_counts = BTreeMap::new();
    let mut violations = Vec::new();
    let mut degenerate = 0;
    let mut theta_skipped = false;
    let mut theta_min: Option<f64> = None;
    let mut multiple_reps = 0;
    for (rep, outcome) in outcomes {
        match outcome {
            Outcome::Degenerate => degenerate += 1,
            Outcome::Counted {
                n_solutions,
                degree,
                theta_rel,
                theta_skipped: skipped,
                multiple,
            } => {
                *counts.entry(n_solutions).or_insert(0) += 1;
                *degree_counts.entry(degree).or_insert(0) += 1;
                if n_solutions > bound.min(spectral_bound) || degree > spectral_bound {
                    violations.push(Violation {
                        replicate: rep,
                        n_solutions,
                        poly_degree: degree,
                        bound: bound.min(spectral_bound),
                    });
                }
                theta_skipped |= skipped;
                if let Some(r) = theta_rel {
                    theta_min = Some(theta_min.map_or(r, |m: f64| m.min(r)));
                }
                multiple_reps += u64::from(multiple);
            }
        }
    }

    Ok(DegreeReport {
        model: describe(spec),
        mode,
        replicates,
        seed,
        poly_mode: cfg.poly_mode,
        max_count: counts.keys().next_back().copied().unwrap_or(0),
        max_degree: degree_counts.keys().next_back().copied().unwrap_or(0),
        counts,
        degree_counts,
        bound,
        spectral_bound,
        bounds,
        d: summary.d(),
        d0: summary.d0(),
        violations,
        degenerate_replicates: degenerate,
        theta_skipped,
        theta_min_relative_residual: theta_min,
        multiple_root_replicates: multiple_reps,
        tolerances: cfg.tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_one_way_model, ones_design};
    use approx::assert_abs_diff_eq;

    fn balanced() -> (SpectralSummary, SufficientStats) {
        let spec = build_one_way_model(&[2, 2], ones_design(4)).unwrap();
        let s = reduce(&spec, 1e-9).unwrap();
        let st = sufficient_stats(&DVector::from_vec(vec![1.0, 2.0, 3.0, 5.0]), &s).unwrap();
        (s, st)
    }

    #[test]
    fn theta_check_hand_values() {
        let (s, st) = balanced();
        let c = theta_family_check(Mode::Ml, &s, &st);
        assert_eq!(c.status, ThetaStatus::Evaluated);
        assert_abs_diff_eq!(c.denominator.unwrap(), 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.theta.unwrap(), 3.125, epsilon = 1e-12);
        assert_abs_diff_eq!(c.residual.unwrap(), 8.75, epsilon = 1e-12);
        assert!(!c.admits_solution());
    }

    #[test]
    fn theta_check_zero_stats() {
        let (s, _) = balanced();
        let st = SufficientStats { z: vec![0.0; 3], t: vec![0.0, 0.0] };
        assert_eq!(theta_family_check(Mode::Ml, &s, &st).status, ThetaStatus::ZeroStatistics);
    }

    #[test]
    fn theta_check_skips_unit_eigenvalue() {
        let spec = build_one_way_model(&[1, 2, 3], ones_design(6)).unwrap();
        let s = reduce(&spec, 1e-9).unwrap();
        let st = sufficient_stats(&DVector::from_vec(vec![1., 0., 2., 5., 1., 3.]), &s).unwrap();
        assert_eq!(theta_family_check(Mode::Ml, &s, &st).status, ThetaStatus::EigenvalueOne);
    }

    #[test]
    fn bound_formulas() {
        let (s, _) = balanced();
        let b = theoretical_bounds(&s, None).unwrap();
        assert_eq!((b.ml_bound, b.reml_bound), (2, 1));
        let spec = build_one_way_model(&[1, 2, 3], ones_design(6)).unwrap();
        let s = reduce(&spec, 1e-9).unwrap();
        let b = theoretical_bounds(&s, Some(3)).unwrap();
        assert_eq!((b.one_way_ml_bound, b.one_way_reml_bound), (Some(6), Some(3)));
        assert_eq!((s.d(), s.d0()), (3, 4));
        assert_eq!((b.ml_bound, b.reml_bound), (6, 3));
    }

    #[test]
    fn experiment_is_reproducible() {
        let spec = build_one_way_model(&[1, 2, 3], ones_design(6)).unwrap();
        let cfg = DegreeConfig::default();
        let a = degree_experiment(&spec, Mode::Ml, 20, 7, &cfg).unwrap();
        let b = degree_experiment(&spec, Mode::Ml, 20, 7, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.violations.is_empty());
        assert_eq!(a.bound, 6);
    }

    #[test]
    fn experiment_refuses_non_generic_models() {
        let spec = build_one_way_model(&[1, 1], ones_design(2)).unwrap();
        for mode in [Mode::Ml, Mode::Reml] {
            assert!(matches!(
                degree_experiment(&spec, mode, 5, 1, &DegreeConfig::default()),
                Err(Error::NotGeneric(_))
            ));
        }
    }
}
