//! Model specification, projectors and the existence conditions for ML and
//! REML estimates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Variance components `(sigma1_sq, sigma2_sq)` of `Sigma(s) = sigma1_sq V + sigma2_sq I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariancePoint {
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
}

impl VariancePoint {
    /// Builds a point of the admissible set: `sigma1_sq >= 0`, `sigma2_sq > 0`.
    pub fn new(sigma1_sq: f64, sigma2_sq: f64) -> Result<Self> {
        if !(sigma1_sq.is_finite() && sigma2_sq.is_finite()) {
            return Err(Error::InvalidVariance("non-finite component".into()));
        }
        if sigma1_sq < 0.0 {
            return Err(Error::InvalidVariance(format!("sigma1_sq = {sigma1_sq} < 0")));
        }
        if sigma2_sq <= 0.0 {
            return Err(Error::InvalidVariance(format!("sigma2_sq = {sigma2_sq} <= 0")));
        }
        Ok(Self { sigma1_sq, sigma2_sq })
    }

    /// Inverse of the `(sigma^2, rho)` reparameterization.
    pub fn from_total_and_ratio(sigma_sq: f64, rho: f64) -> Result<Self> {
        Self::new(sigma_sq * rho, sigma_sq * (1.0 - rho))
    }

    pub fn sigma_sq(&self) -> f64 {
        self.sigma1_sq + self.sigma2_sq
    }

    pub fn rho(&self) -> f64 {
        self.sigma1_sq / self.sigma_sq()
    }
}

/// Group structure of a one-way layout `Y = W beta + Z alpha + eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneWay {
    pub z: DMatrix<f64>,
    pub group_sizes: Vec<usize>,
}

impl OneWay {
    pub fn q(&self) -> usize {
        self.group_sizes.len()
    }
}

/// A normal linear mixed model with `E(Y) = X beta`, `Cov(Y) = sigma1_sq V + sigma2_sq I`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    x: DMatrix<f64>,
    v: DMatrix<f64>,
    one_way: Option<OneWay>,
}

impl ModelSpec {
    /// Validates `X` (full column rank, `p < n`) and `V` (symmetric, PSD, nonzero).
    ///
    /// `rank(V) < n` is not enforced here; a full-rank kernel is reported by
    /// [`check_genericity`] and rejected by the spectral reduction.
    pub fn new(x: DMatrix<f64>, v: DMatrix<f64>) -> Result<Self> {
        let n = x.nrows();
        let p = x.ncols();
        if p == 0 || n == 0 {
            return Err(Error::Dimension("X must have at least one row and column".into()));
        }
        if p >= n {
            return Err(Error::InvalidModel(format!("p = {p} must be smaller than n = {n}")));
        }
        if v.nrows() != n || v.ncols() != n {
            return Err(Error::Dimension(format!(
                "V is {}x{}, expected {n}x{n}",
                v.nrows(),
                v.ncols()
            )));
        }
        check_full_column_rank(&x, crate::config::Tolerances::default().rank)?;
        let asym = max_asymmetry(&v);
        let scale = v.amax().max(f64::MIN_POSITIVE);
        if asym > 1e-10 * scale.max(1.0) {
            return Err(Error::NotSymmetric(asym));
        }
        if v.amax() == 0.0 {
            return Err(Error::InvalidModel("V is the zero matrix".into()));
        }
        let v = symmetrize(&v);
        let eig = v.clone().symmetric_eigen();
        let lmax = eig.eigenvalues.amax();
        let lmin = eig.eigenvalues.min();
        if lmin < -1e-8 * lmax.max(1.0) {
            return Err(Error::NegativeEigenvalue(lmin));
        }
        Ok(Self { x, v, one_way: None })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn one_way(&self) -> Option<&OneWay> {
        self.one_way.as_ref()
    }

    /// `Sigma(s) = sigma1_sq V + sigma2_sq I`.
    pub fn covariance(&self, s: &VariancePoint) -> DMatrix<f64> {
        let n = self.n();
        &self.v * s.sigma1_sq + DMatrix::identity(n, n) * s.sigma2_sq
    }
}

/// 0/1 incidence matrix of consecutive groups with the given sizes.
pub fn incidence_matrix(group_sizes: &[usize]) -> DMatrix<f64> {
    let n: usize = group_sizes.iter().sum();
    let mut z = DMatrix::zeros(n, group_sizes.len());
    let mut row = 0;
    for (k, &nk) in group_sizes.iter().enumerate() {
        for _ in 0..nk {
            z[(row, k)] = 1.0;
            row += 1;
        }
    }
    z
}

/// One-way layout with group sizes `n_1..n_q` and mean design `W`.
pub fn build_one_way_model(group_sizes: &[usize], w: DMatrix<f64>) -> Result<ModelSpec> {
    if group_sizes.len() < 2 {
        return Err(Error::InvalidModel(format!(
            "one-way layout needs q >= 2 groups, got {}",
            group_sizes.len()
        )));
    }
    if let Some(k) = group_sizes.iter().position(|&nk| nk == 0) {
        return Err(Error::InvalidModel(format!("group {} has size 0", k + 1)));
    }
    one_way_from_parts(incidence_matrix(group_sizes), group_sizes.to_vec(), w)
}

/// One-way layout from an arbitrary 0/1 incidence matrix (each row has a single 1).
pub fn build_one_way_from_incidence(z: DMatrix<f64>, w: DMatrix<f64>) -> Result<ModelSpec> {
    for (i, row) in z.row_iter().enumerate() {
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        if ones != 1 || row.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidModel(format!(
                "row {} of Z is not a group indicator",
                i + 1
            )));
        }
    }
    let sizes: Vec<usize> = z
        .column_iter()
        .map(|c| c.iter().filter(|&&v| v == 1.0).count())
        .collect();
    if sizes.len() < 2 {
        return Err(Error::InvalidModel(format!(
            "one-way layout needs q >= 2 groups, got {}",
            sizes.len()
        )));
    }
    if let Some(k) = sizes.iter().position(|&nk| nk == 0) {
        return Err(Error::InvalidModel(format!("group {} has size 0", k + 1)));
    }
    one_way_from_parts(z, sizes, w)
}

fn one_way_from_parts(z: DMatrix<f64>, group_sizes: Vec<usize>, w: DMatrix<f64>) -> Result<ModelSpec> {
    let n = z.nrows();
    if w.nrows() != n {
        return Err(Error::Dimension(format!(
            "W has {} rows but the layout has n = {n}",
            w.nrows()
        )));
    }
    let tol = crate::config::Tolerances::default().rank;
    check_full_column_rank(&w, tol)?;
    let ones = DVector::from_element(n, 1.0);
    let basis = column_space_basis(&w, tol);
    let resid = &ones - &basis * (basis.transpose() * &ones);
    if resid.norm() > 1e-8 * (n as f64).sqrt() {
        return Err(Error::InvalidModel("1_n is not in the column space of W".into()));
    }
    let v = &z * z.transpose();
    let mut spec = ModelSpec::new(w, v)?;
    spec.one_way = Some(OneWay { z, group_sizes });
    Ok(spec)
}

/// `W = 1_n`.
pub fn ones_design(n: usize) -> DMatrix<f64> {
    DMatrix::from_element(n, 1, 1.0)
}

pub(crate) fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub(crate) fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Numerical rank with threshold `rel_tol * sigma_max`.
pub fn numerical_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

fn check_full_column_rank(x: &DMatrix<f64>, tol: f64) -> Result<()> {
    let rank = numerical_rank(x, tol);
    if rank < x.ncols() {
        return Err(Error::RankDeficient { rank, cols: x.ncols() });
    }
    Ok(())
}

/// Orthonormal basis (as columns) of the column space of `a`.
///
/// Built from a column-pivoted QR. The bidiagonal SVD in nalgebra can return
/// inaccurate singular vectors for exactly rank-deficient inputs such as
/// `M V`, while the pivoted factorization stays accurate there.
pub(crate) fn column_space_basis(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = a.nrows();
    if a.ncols() == 0 || n == 0 {
        return DMatrix::zeros(n, 0);
    }
    let qr = a.clone().col_piv_qr();
    let r = qr.r();
    let lead = r[(0, 0)].abs();
    let rank = (0..r.nrows().min(r.ncols()))
        .take_while(|&i| lead > 0.0 && r[(i, i)].abs() > rel_tol * lead)
        .count();
    qr.q().columns(0, rank).into_owned()
}

/// `M = I - X X^+`.
pub fn residual_projector(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let tol = crate::config::Tolerances::default().rank;
    check_full_column_rank(x, tol)?;
    let q = x.clone().qr().q();
    let n = x.nrows();
    Ok(DMatrix::identity(n, n) - &q * q.transpose())
}

/// How the orthonormal complement of `span(X)` is constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NullBasisMethod {
    /// Householder QR of `[X, I_n]`; the trailing `n - p` columns of `Q`.
    #[default]
    Householder,
    /// Unit eigenvectors of `M`.
    ProjectorEigen,
}

/// `(n-p) x n` matrix `B` with `B B' = I` and `B' B = M`.
pub fn null_space_basis(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    null_space_basis_with(x, NullBasisMethod::Householder)
}

pub fn null_space_basis_with(x: &DMatrix<f64>, method: NullBasisMethod) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    let p = x.ncols();
    if p >= n {
        return Err(Error::InvalidModel(format!("p = {p} must be smaller than n = {n}")));
    }
    check_full_column_rank(x, crate::config::Tolerances::default().rank)?;
    match method {
        NullBasisMethod::Householder => {
            let mut aug = DMatrix::zeros(n, n + p);
            aug.view_mut((0, 0), (n, p)).copy_from(x);
            aug.view_mut((0, p), (n, n)).fill_with_identity();
            let q = aug.qr().q();
            Ok(q.columns(p, n - p).transpose())
        }
        NullBasisMethod::ProjectorEigen => {
            let m = residual_projector(x)?;
            let eig = symmetrize(&m).symmetric_eigen();
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
            let keep = &idx[..n - p];
            Ok(DMatrix::from_fn(n - p, n, |r, c| eig.eigenvectors[(c, keep[r])]))
        }
    }
}

fn check_len(y: &DVector<f64>, spec: &ModelSpec) -> Result<()> {
    if y.len() != spec.n() {
        return Err(Error::Dimension(format!(
            "y has length {}, model has n = {}",
            y.len(),
            spec.n()
        )));
    }
    Ok(())
}

/// True iff `y` is not in the column space of `[X, V]`, i.e. the ML estimate exists.
pub fn check_ml_existence(y: &DVector<f64>, spec: &ModelSpec, tol: f64) -> Result<bool> {
    check_len(y, spec)?;
    let ynorm = y.norm();
    if ynorm == 0.0 {
        return Ok(false);
    }
    let basis = column_space_basis(&hcat(spec.x(), spec.v()), tol);
    let resid = y - &basis * (basis.transpose() * y);
    Ok(resid.norm() > tol * ynorm)
}

/// True iff `My` is not in the column space of `MV`, i.e. the REML estimate exists.
pub fn check_reml_existence(y: &DVector<f64>, spec: &ModelSpec, tol: f64) -> Result<bool> {
    check_len(y, spec)?;
    let ynorm = y.norm();
    if ynorm == 0.0 {
        return Ok(false);
    }
    let m = residual_projector(spec.x())?;
    let my = &m * y;
    let basis = column_space_basis(&(&m * spec.v()), tol);
    let resid = &my - &basis * (basis.transpose() * &my);
    Ok(resid.norm() > tol * ynorm)
}

/// Whether ML and REML estimates exist with probability one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Genericity {
    /// `span([X, V])` is a proper subspace of R^n.
    pub ml_as: bool,
    /// `span(MV)` is a proper subspace of `span(M)`, equivalently `nu_d > 0`.
    pub reml_as: bool,
}

pub fn check_genericity(spec: &ModelSpec, tol: f64) -> Genericity {
    let n = spec.n();
    let ml_as = numerical_rank(&hcat(spec.x(), spec.v()), tol) < n;
    let b = null_space_basis(spec.x()).expect("validated model");
    let bvb = &b * spec.v() * b.transpose();
    let reml_as = numerical_rank(&bvb, tol) < n - spec.p();
    debug_assert!(!ml_as || reml_as, "ML condition must imply the REML condition");
    Genericity { ml_as, reml_as }
}

/// For a one-way layout, `rank([W, Z]) < n`; agrees with `check_genericity(..).ml_as`.
pub fn one_way_rank_condition(spec: &ModelSpec, tol: f64) -> Option<bool> {
    spec.one_way()
        .map(|ow| numerical_rank(&hcat(spec.x(), &ow.z), tol) < spec.n())
}

pub(crate) fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn column_basis_of_rank_deficient_product() {
        // M V for a one-way layout: rank q - 1 with exact zero directions
        let spec = build_one_way_model(&[2, 3, 4], ones_design(9)).unwrap();
        let m = residual_projector(spec.x()).unwrap();
        let mv = &m * spec.v();
        let q = column_space_basis(&mv, 1e-8);
        assert_eq!(q.ncols(), 2);
        assert!((q.transpose() * &q - DMatrix::identity(2, 2)).amax() < 1e-12);
        assert!((&q * q.transpose() * &mv - &mv).amax() < 1e-12);
        assert_eq!(column_space_basis(&DMatrix::zeros(3, 2), 1e-8).ncols(), 0);
    }

    fn y4() -> DVector<f64> {
        DVector::from_vec(vec![1.0, 2.0, 3.0, 5.0])
    }

    #[test]
    fn one_way_incidence_and_kernel() {
        let spec = build_one_way_model(&[2, 2], ones_design(4)).unwrap();
        let z = &spec.one_way().unwrap().z;
        let expected = DMatrix::from_row_slice(4, 2, &[1., 0., 1., 0., 0., 1., 0., 1.]);
        assert_eq!(z, &expected);
        let v = DMatrix::from_row_slice(
            4,
            4,
            &[1., 1., 0., 0., 1., 1., 0., 0., 0., 0., 1., 1., 0., 0., 1., 1.],
        );
        assert_eq!(spec.v(), &v);

        let spec = build_one_way_model(&[1, 2, 3], ones_design(6)).unwrap();
        assert_eq!(spec.n(), 6);
        assert_eq!(spec.one_way().unwrap().q(), 3);
        assert_eq!(spec.v()[(0, 0)], 1.0);
        assert_eq!(spec.v()[(0, 1)], 0.0);
        assert_eq!(spec.v()[(1, 2)], 1.0);
        assert_eq!(spec.v()[(3, 5)], 1.0);
        assert_eq!(spec.v()[(2, 3)], 0.0);
    }

    #[test]
    fn one_way_errors() {
        assert!(matches!(
            build_one_way_model(&[2, 2], ones_design(6)),
            Err(Error::Dimension(_))
        ));
        assert!(build_one_way_model(&[4], ones_design(4)).is_err());
        assert!(build_one_way_model(&[2, 0, 2], ones_design(4)).is_err());
        let w = DMatrix::from_column_slice(4, 1, &[1., 2., 3., 4.]);
        assert!(matches!(
            build_one_way_model(&[2, 2], w),
            Err(Error::InvalidModel(_))
        ));
        let w = DMatrix::from_column_slice(4, 2, &[1., 1., 1., 1., 2., 2., 2., 2.]);
        assert!(matches!(
            build_one_way_model(&[2, 2], w),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn centering_projector() {
        let m = residual_projector(&ones_design(4)).unwrap();
        let expected = DMatrix::identity(4, 4) - DMatrix::from_element(4, 4, 0.25);
        assert_abs_diff_eq!(m, expected, epsilon = 1e-14);
    }

    #[test]
    fn orthonormal_design_projector() {
        let s = 0.5f64.sqrt();
        let x = DMatrix::from_column_slice(4, 2, &[s, s, 0., 0., 0., 0., s, s]);
        let m = residual_projector(&x).unwrap();
        let expected = DMatrix::identity(4, 4) - &x * x.transpose();
        assert_abs_diff_eq!(m, expected, epsilon = 1e-14);
        assert!((&m * &x).norm() <= 1e-12 * x.norm());
    }

    #[test]
    fn projector_rejects_rank_deficiency() {
        let x = DMatrix::from_column_slice(3, 2, &[1., 1., 1., 2., 2., 2.]);
        assert!(matches!(
            residual_projector(&x),
            Err(Error::RankDeficient { rank: 1, cols: 2 })
        ));
    }

    #[test]
    fn two_point_null_basis() {
        let b = null_space_basis(&ones_design(2)).unwrap();
        assert_eq!(b.shape(), (1, 2));
        let h = 0.5f64.sqrt();
        assert_abs_diff_eq!(b[(0, 0)].abs(), h, epsilon = 1e-14);
        assert_abs_diff_eq!(b[(0, 0)], -b[(0, 1)], epsilon = 1e-14);
    }

    #[test]
    fn null_basis_identities_both_methods() {
        let x = ones_design(4);
        let m = residual_projector(&x).unwrap();
        for method in [NullBasisMethod::Householder, NullBasisMethod::ProjectorEigen] {
            let b = null_space_basis_with(&x, method).unwrap();
            assert_abs_diff_eq!(&b * b.transpose(), DMatrix::identity(3, 3), epsilon = 1e-12);
            assert_abs_diff_eq!(b.transpose() * &b, m, epsilon = 1e-12);
        }
        assert!(null_space_basis(&DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn ml_existence_examples() {
        let spec = build_one_way_model(&[2, 2], ones_design(4)).unwrap();
        assert!(check_ml_existence(&y4(), &spec, 1e-8).unwrap());
        let first_col = spec.x().column(0).into_owned();
        assert!(!check_ml_existence(&first_col, &spec, 1e-8).unwrap());
        assert!(!check_ml_existence(&DVector::zeros(4), &spec, 1e-8).unwrap());

        let spec = build_one_way_model(&[1, 1], ones_design(2)).unwrap();
        let y = DVector::from_vec(vec![0.3, -1.7]);
        assert!(!check_ml_existence(&y, &spec, 1e-8).unwrap());
        assert!(check_ml_existence(&DVector::zeros(3), &spec, 1e-8).is_err());
    }

    #[test]
    fn reml_existence_examples() {
        let spec = build_one_way_model(&[2, 2], ones_design(4)).unwrap();
        assert!(check_reml_existence(&y4(), &spec, 1e-8).unwrap());
        let in_x = DVector::from_element(4, 3.5);
        assert!(!check_reml_existence(&in_x, &spec, 1e-8).unwrap());
        let c = DVector::from_vec(vec![0.4, -1.0, 2.0, 0.1]);
        let y = spec.v() * c + spec.x() * DVector::from_element(1, 7.0);
        assert!(!check_reml_existence(&y, &spec, 1e-8).unwrap());
        assert!(!check_reml_existence(&DVector::zeros(4), &spec, 1e-8).unwrap());
    }

    #[test]
    fn genericity_examples() {
        let spec = build_one_way_model(&[2, 2], ones_design(4)).unwrap();
        assert_eq!(
            check_genericity(&spec, 1e-8),
            Genericity { ml_as: true, reml_as: true }
        );
        let spec = build_one_way_model(&[1, 1], ones_design(2)).unwrap();
        assert_eq!(
            check_genericity(&spec, 1e-8),
            Genericity { ml_as: false, reml_as: false }
        );
        for sizes in [vec![1, 2], vec![1, 1, 3], vec![2, 1, 1, 1]] {
            let n = sizes.iter().sum();
            let spec = build_one_way_model(&sizes, ones_design(n)).unwrap();
            let g = check_genericity(&spec, 1e-8);
            assert!(g.ml_as && g.reml_as, "{sizes:?}");
            assert_eq!(one_way_rank_condition(&spec, 1e-8), Some(g.ml_as));
        }
    }

    #[test]
    fn variance_point_roundtrip() {
        let s = VariancePoint::new(0.9375, 1.25).unwrap();
        assert_abs_diff_eq!(s.rho(), 3.0 / 7.0, epsilon = 1e-15);
        let back = VariancePoint::from_total_and_ratio(s.sigma_sq(), s.rho()).unwrap();
        assert_abs_diff_eq!(back.sigma1_sq, 0.9375, epsilon = 1e-15);
        assert_abs_diff_eq!(back.sigma2_sq, 1.25, epsilon = 1e-15);
        assert!(VariancePoint::new(-1.0, 1.0).is_err());
        assert!(VariancePoint::new(1.0, 0.0).is_err());
    }

    #[test]
    fn model_rejects_bad_kernels() {
        let x = ones_design(3);
        let asym = DMatrix::from_row_slice(3, 3, &[1., 2., 0., 0., 1., 0., 0., 0., 0.]);
        assert!(matches!(ModelSpec::new(x.clone(), asym), Err(Error::NotSymmetric(_))));
        let neg = DMatrix::from_diagonal(&DVector::from_vec(vec![1., -1., 0.]));
        assert!(matches!(ModelSpec::new(x.clone(), neg), Err(Error::NegativeEigenvalue(_))));
        assert!(ModelSpec::new(x, DMatrix::zeros(3, 3)).is_err());
    }
}
