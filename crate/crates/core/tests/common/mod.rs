#![allow(dead_code)]

use mldegree::model::{build_one_way_model, ones_design, ModelSpec};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn gaussian_matrix(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Random orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    gaussian_matrix(n, n, rng).qr().q()
}

/// `n x n` PSD kernel of rank `rank` with distinct nonzero eigenvalues in (0.5, 3.5).
pub fn random_psd(n: usize, rank: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let u = random_orthogonal(n, rng);
    let mut lam = DVector::zeros(n);
    for k in 0..rank {
        lam[k] = 0.5 + 3.0 * (k as f64 + rng.gen::<f64>()) / rank as f64;
    }
    let v = &u * DMatrix::from_diagonal(&lam) * u.transpose();
    (&v + v.transpose()) * 0.5
}

/// Dense model with `rank(V) = n - 2` and a design whose first column lies in
/// the range of `V`, so that `span([X, V])` is a proper subspace and both
/// estimates exist with probability one.
pub fn random_dense_model(n: usize, p: usize, rng: &mut ChaCha8Rng) -> ModelSpec {
    assert!(p >= 1 && p + 2 <= n);
    let v = random_psd(n, n - 2, rng);
    let mut x = gaussian_matrix(n, p, rng);
    let g = gaussian_vector(n, rng);
    x.set_column(0, &(&v * g));
    ModelSpec::new(x, v).expect("random dense model is valid")
}

/// One-way layout with `q` groups of sizes in `1..=4` and `W = 1_n`, with at
/// least one group of size two or more.
pub fn random_one_way(q: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, ModelSpec) {
    loop {
        let sizes: Vec<usize> = (0..q).map(|_| rng.gen_range(1..=4)).collect();
        if sizes.iter().all(|&s| s == 1) {
            continue;
        }
        let n = sizes.iter().sum();
        let spec = build_one_way_model(&sizes, ones_design(n)).expect("valid one-way");
        return (sizes, spec);
    }
}
