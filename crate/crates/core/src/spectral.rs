//! Distinct-eigenvalue summaries of `V` and `B V B'`, and the sufficient
//! statistics `T_i` that drive every downstream equation.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{max_asymmetry, null_space_basis, symmetrize, ModelSpec};

/// One distinct eigenvalue with its multiplicity and an orthonormal basis
/// (columns) of its eigenspace.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenGroup {
    pub value: f64,
    pub multiplicity: usize,
    pub basis: DMatrix<f64>,
}

/// Groups the eigenvalues of a symmetric PSD matrix into distinct values,
/// largest first. Neighbours closer than `rel_tol * max(1, lambda_max)` are
/// merged; a group within that distance of 0 or 1 is reported as exactly 0 or 1,
/// the two values the likelihood equations treat specially.
pub fn distinct_eigen(a: &DMatrix<f64>, rel_tol: f64) -> Result<Vec<EigenGroup>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension(format!("{}x{} matrix is not square", n, a.ncols())));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let scale = a.amax().max(1.0);
    let asym = max_asymmetry(a);
    if asym > 1e-10 * scale {
        return Err(Error::NotSymmetric(asym));
    }
    let eig = symmetrize(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let lmax = eig.eigenvalues[order[0]];
    let thresh = rel_tol * lmax.abs().max(1.0);
    let lmin = eig.eigenvalues[order[n - 1]];
    if lmin < -thresh.max(1e-8 * lmax.abs().max(1.0)) {
        return Err(Error::NegativeEigenvalue(lmin));
    }

    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for &k in &order {
        match clusters.last_mut() {
            Some(c) if eig.eigenvalues[*c.last().unwrap()] - eig.eigenvalues[k] <= thresh => {
                c.push(k)
            }
            _ => clusters.push(vec![k]),
        }
    }
    let groups = clusters
        .into_iter()
        .map(|c| {
            let mean = c.iter().map(|&k| eig.eigenvalues[k]).sum::<f64>() / c.len() as f64;
            let value = if mean.abs() <= thresh {
                0.0
            } else if (mean - 1.0).abs() <= thresh {
                1.0
            } else {
                mean
            };
            let basis = DMatrix::from_fn(n, c.len(), |r, col| eig.eigenvectors[(r, c[col])]);
            EigenGroup {
                value,
                multiplicity: c.len(),
                basis,
            }
        })
        .collect();
    Ok(groups)
}

/// Distinct eigenvalues `m_1 > ... > m_d = 0` of `B V B'` with multiplicities
/// `nu_i`, and `alpha_1 > ... > alpha_d0 = 0` of `V` with multiplicities `s_j`.
#[derive(Debug, Clone)]
pub struct SpectralSummary {
    pub m: Vec<f64>,
    pub nu: Vec<usize>,
    pub eig_bases: Vec<DMatrix<f64>>,
    pub alpha: Vec<f64>,
    pub s_mult: Vec<usize>,
    /// The `(n-p) x n` basis `B` the eigen-bases are expressed in.
    pub null_basis: DMatrix<f64>,
    pub grouping_tol: f64,
    pub n: usize,
    pub p: usize,
}

/// Serializable subset of [`SpectralSummary`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumInfo {
    pub m: Vec<f64>,
    pub nu: Vec<usize>,
    pub d: usize,
    pub alpha: Vec<f64>,
    pub s_mult: Vec<usize>,
    pub d0: usize,
    pub grouping_tol: f64,
}

impl SpectralSummary {
    pub fn d(&self) -> usize {
        self.m.len()
    }

    pub fn d0(&self) -> usize {
        self.alpha.len()
    }

    pub fn info(&self) -> SpectrumInfo {
        SpectrumInfo {
            m: self.m.clone(),
            nu: self.nu.clone(),
            d: self.d(),
            alpha: self.alpha.clone(),
            s_mult: self.s_mult.clone(),
            d0: self.d0(),
            grouping_tol: self.grouping_tol,
        }
    }
}

/// Reduces a model with the default null-space basis.
pub fn reduce(spec: &ModelSpec, grouping_tol: f64) -> Result<SpectralSummary> {
    let b = null_space_basis(spec.x())?;
    reduce_with_basis(spec, b, grouping_tol)
}

/// Reduces a model using a caller-supplied `B` with `BB' = I`, `B'B = M`.
pub fn reduce_with_basis(
    spec: &ModelSpec,
    b: DMatrix<f64>,
    grouping_tol: f64,
) -> Result<SpectralSummary> {
    let n = spec.n();
    let p = spec.p();
    if b.shape() != (n - p, n) {
        return Err(Error::Dimension(format!(
            "B is {}x{}, expected {}x{n}",
            b.nrows(),
            b.ncols(),
            n - p
        )));
    }
    let bvb = symmetrize(&(&b * spec.v() * b.transpose()));
    let inner = distinct_eigen(&bvb, grouping_tol)?;
    if inner.last().map(|g| g.value) != Some(0.0) {
        return Err(Error::NoNullEigenvalue);
    }
    let outer = distinct_eigen(spec.v(), grouping_tol)?;
    if outer.last().map(|g| g.value) != Some(0.0) {
        return Err(Error::InvalidModel("V has full rank".into()));
    }

    let summary = SpectralSummary {
        m: inner.iter().map(|g| g.value).collect(),
        nu: inner.iter().map(|g| g.multiplicity).collect(),
        eig_bases: inner.into_iter().map(|g| g.basis).collect(),
        alpha: outer.iter().map(|g| g.value).collect(),
        s_mult: outer.iter().map(|g| g.multiplicity).collect(),
        null_basis: b,
        grouping_tol,
        n,
        p,
    };
    if let Some(ow) = spec.one_way() {
        let q = ow.q();
        if summary.d0() > q + 1 || summary.d() > q {
            return Err(Error::DegenerateSpectrum(format!(
                "one-way layout with q = {q} produced d0 = {}, d = {}",
                summary.d0(),
                summary.d()
            )));
        }
    }
    Ok(summary)
}

/// Transformed data `z = B y` and `T_i = z' E_i z / nu_i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SufficientStats {
    pub z: Vec<f64>,
    pub t: Vec<f64>,
}

impl SufficientStats {
    /// `sum_i nu_i T_i`, equal to `y' M y`.
    pub fn weighted_total(&self, nu: &[usize]) -> f64 {
        self.t.iter().zip(nu).map(|(t, &k)| t * k as f64).sum()
    }

    /// Whether some `T_i` with `i < d` is positive relative to the total.
    pub fn has_positive_leading(&self, nu: &[usize], rel_tol: f64) -> bool {
        let total = self.weighted_total(nu);
        let d = self.t.len();
        total > 0.0
            && self.t[..d - 1]
                .iter()
                .zip(nu)
                .any(|(t, &k)| t * k as f64 > rel_tol * total)
    }
}

pub fn sufficient_stats(y: &DVector<f64>, summary: &SpectralSummary) -> Result<SufficientStats> {
    sufficient_stats_with_basis(y, &summary.null_basis, summary)
}

pub fn sufficient_stats_with_basis(
    y: &DVector<f64>,
    b: &DMatrix<f64>,
    summary: &SpectralSummary,
) -> Result<SufficientStats> {
    if y.len() != b.ncols() {
        return Err(Error::Dimension(format!(
            "y has length {}, B has {} columns",
            y.len(),
            b.ncols()
        )));
    }
    let z = b * y;
    let t = summary
        .eig_bases
        .iter()
        .zip(&summary.nu)
        .map(|(basis, &nu)| {
            if basis.nrows() != z.len() {
                return Err(Error::Dimension("eigen-basis does not match B".into()));
            }
            Ok((basis.transpose() * &z).norm_squared() / nu as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SufficientStats {
        z: z.iter().copied().collect(),
        t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_one_way_model, null_space_basis_with, ones_design, NullBasisMethod};
    use approx::assert_abs_diff_eq;

    fn blockdiag_j2() -> DMatrix<f64> {
        let mut a = DMatrix::zeros(4, 4);
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1), (2, 2), (2, 3), (3, 2), (3, 3)] {
            a[(i, j)] = 1.0;
        }
        a
    }

    #[test]
    fn groups_block_ones() {
        let g = distinct_eigen(&blockdiag_j2(), 1e-9).unwrap();
        assert_eq!(g.len(), 2);
        assert_abs_diff_eq!(g[0].value, 2.0, epsilon = 1e-12);
        assert_eq!(g[0].multiplicity, 2);
        assert_eq!(g[1].value, 0.0);
        assert_eq!(g[1].multiplicity, 2);
        let recon = g.iter().fold(DMatrix::zeros(4, 4), |acc, e| {
            acc + &e.basis * e.basis.transpose() * e.value
        });
        assert_abs_diff_eq!(recon, blockdiag_j2(), epsilon = 1e-8);
    }

    #[test]
    fn identity_is_one_group() {
        let g = distinct_eigen(&DMatrix::identity(3, 3), 1e-9).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].multiplicity, 3);
        assert_abs_diff_eq!(g[0].value, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn near_equal_values_merge() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 3.0 + 1e-14, 1.0]));
        let g = distinct_eigen(&a, 1e-9).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].multiplicity, 2);
        assert_abs_diff_eq!(g[0].value, 3.0, epsilon = 1e-12);
        assert_eq!((g[1].value, g[1].multiplicity), (1.0, 1));
    }

    #[test]
    fn eigen_rejects_bad_input() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(distinct_eigen(&a, 1e-9), Err(Error::NotSymmetric(_))));
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.5]));
        assert!(matches!(distinct_eigen(&a, 1e-9), Err(Error::NegativeEigenvalue(_))));
    }

    #[test]
    fn balanced_two_by_two_reduction() {
        let spec = build_one_way_model(&[2, 2], ones_design(4)).unwrap();
        let s = reduce(&spec, 1e-9).unwrap();
        assert_eq!(s.alpha.len(), 2);
        assert_abs_diff_eq!(s.alpha[0], 2.0, epsilon = 1e-12);
        assert_eq!(s.alpha[1], 0.0);
        assert_eq!(s.s_mult, vec![2, 2]);
        assert_abs_diff_eq!(s.m[0], 2.0, epsilon = 1e-12);
        assert_eq!(s.m[1], 0.0);
        assert_eq!(s.nu, vec![1, 2]);

        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 5.0]);
        let st = sufficient_stats(&y, &s).unwrap();
        assert_abs_diff_eq!(st.t[0], 6.25, epsilon = 1e-12);
        assert_abs_diff_eq!(st.t[1], 1.25, epsilon = 1e-12);
    }

    #[test]
    fn unbalanced_reduction_counts() {
        let spec = build_one_way_model(&[1, 2, 3], ones_design(6)).unwrap();
        let s = reduce(&spec, 1e-9).unwrap();
        assert_eq!(s.d0(), 4);
        for (a, e) in s.alpha.iter().zip([3.0, 2.0, 1.0, 0.0]) {
            assert_abs_diff_eq!(*a, e, epsilon = 1e-12);
        }
        assert_eq!(s.s_mult, vec![1, 1, 1, 3]);
        assert!(s.d() <= 3);
        assert_eq!(s.nu.iter().sum::<usize>(), 5);

        let spec = build_one_way_model(&[2, 2, 2], ones_design(6)).unwrap();
        let s = reduce(&spec, 1e-9).unwrap();
        assert_eq!((s.d0(), s.d()), (2, 2));
    }

    #[test]
    fn mean_space_data_gives_zero_stats() {
        let spec = build_one_way_model(&[2, 3], ones_design(5)).unwrap();
        let s = reduce(&spec, 1e-9).unwrap();
        let st = sufficient_stats(&DVector::from_element(5, -2.5), &s).unwrap();
        assert!(st.t.iter().all(|t| t.abs() < 1e-24));
    }

    #[test]
    fn stats_do_not_depend_on_basis() {
        let spec = build_one_way_model(&[1, 2, 3], ones_design(6)).unwrap();
        let y = DVector::from_vec(vec![0.3, -1.2, 2.2, 0.7, -0.4, 1.9]);
        let b1 = null_space_basis_with(spec.x(), NullBasisMethod::Householder).unwrap();
        let b2 = null_space_basis_with(spec.x(), NullBasisMethod::ProjectorEigen).unwrap();
        let s1 = reduce_with_basis(&spec, b1, 1e-9).unwrap();
        let s2 = reduce_with_basis(&spec, b2, 1e-9).unwrap();
        let t1 = sufficient_stats(&y, &s1).unwrap().t;
        let t2 = sufficient_stats(&y, &s2).unwrap().t;
        for (a, b) in t1.iter().zip(&t2) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
        assert_eq!(s1.nu, s2.nu);
    }

    #[test]
    fn full_rank_inner_matrix_is_rejected() {
        let spec = build_one_way_model(&[1, 1, 1], ones_design(3)).unwrap();
        assert!(matches!(reduce(&spec, 1e-9), Err(Error::NoNullEigenvalue)));
    }
}
