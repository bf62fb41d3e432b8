//! Dense univariate polynomials with ascending coefficients.

use std::ops::{Add, Mul, Sub};

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

/// Coefficient ring used by the division-free assembly.
pub trait Ring:
    Clone + Zero + One + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self>
{
}

impl<T> Ring for T where
    T: Clone + Zero + One + Add<Output = T> + Sub<Output = T> + Mul<Output = T>
{
}

pub(crate) fn mul<T: Ring>(a: &[T], b: &[T]) -> Vec<T> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![T::zero(); a.len() + b.len() - 1];
    for (i, ai) in a.iter().enumerate() {
        if ai.is_zero() {
            continue;
        }
        for (j, bj) in b.iter().enumerate() {
            out[i + j] = out[i + j].clone() + ai.clone() * bj.clone();
        }
    }
    out
}

pub(crate) fn add<T: Ring>(a: &[T], b: &[T]) -> Vec<T> {
    let len = a.len().max(b.len());
    (0..len)
        .map(|k| match (a.get(k), b.get(k)) {
            (Some(x), Some(y)) => x.clone() + y.clone(),
            (Some(x), None) => x.clone(),
            (None, Some(y)) => y.clone(),
            (None, None) => unreachable!(),
        })
        .collect()
}

pub(crate) fn sub<T: Ring>(a: &[T], b: &[T]) -> Vec<T> {
    let len = a.len().max(b.len());
    (0..len)
        .map(|k| {
            let x = a.get(k).cloned().unwrap_or_else(T::zero);
            let y = b.get(k).cloned().unwrap_or_else(T::zero);
            x - y
        })
        .collect()
}

pub(crate) fn scale<T: Ring>(a: &[T], c: &T) -> Vec<T> {
    a.iter().map(|x| x.clone() * c.clone()).collect()
}

pub(crate) fn product<T: Ring>(factors: &[&[T]]) -> Vec<T> {
    factors
        .iter()
        .fold(vec![T::one()], |acc, f| mul(&acc, f))
}

/// Sums polynomials by pairwise reduction, which keeps floating-point
/// rounding at O(log k) depth for k terms.
pub(crate) fn sum_pairwise<T: Ring>(mut terms: Vec<Vec<T>>) -> Vec<T> {
    if terms.is_empty() {
        return Vec::new();
    }
    while terms.len() > 1 {
        let mut next = Vec::with_capacity(terms.len().div_ceil(2));
        let mut it = terms.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(add(&a, &b)),
                None => next.push(a),
            }
        }
        terms = next;
    }
    terms.pop().unwrap()
}

/// Real-coefficient polynomial in `rho`, trailing negligible terms removed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Polynomial {
    coeffs: Vec<f64>,
    /// The retained leading coefficient is within 10x of the drop threshold.
    pub near_threshold: bool,
}

impl Polynomial {
    /// Drops trailing coefficients with `|c| <= drop_tol * max|c|`.
    pub fn new(mut coeffs: Vec<f64>, drop_tol: f64) -> Self {
        let cmax = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let cut = drop_tol * cmax;
        while let Some(&last) = coeffs.last() {
            if last.abs() <= cut || last == 0.0 {
                coeffs.pop();
            } else {
                break;
            }
        }
        let near_threshold = coeffs
            .last()
            .is_some_and(|&c| coeffs.len() > 1 && c.abs() <= 10.0 * cut);
        Self {
            coeffs,
            near_threshold,
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn eval(&self, x: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::zero(), |acc, &c| acc * x + c)
    }

    pub fn eval_real(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// Value and first derivative by Horner's scheme.
    pub fn eval_with_derivative(&self, x: Complex64) -> (Complex64, Complex64) {
        let mut p = Complex64::zero();
        let mut dp = Complex64::zero();
        for &c in self.coeffs.iter().rev() {
            dp = dp * x + p;
            p = p * x + c;
        }
        (p, dp)
    }
}

/// Exact rational polynomial, used for degree bookkeeping where coefficient
/// cancellation must not be mistaken for a nonzero term.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactPolynomial {
    coeffs: Vec<BigRational>,
}

impl ExactPolynomial {
    pub fn from_integers(coeffs: Vec<BigInt>) -> Self {
        Self::from_rationals(coeffs.into_iter().map(BigRational::from_integer).collect())
    }

    pub fn from_rationals(mut coeffs: Vec<BigRational>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[BigRational] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn eval(&self, x: &BigRational) -> BigRational {
        self.coeffs
            .iter()
            .rev()
            .fold(BigRational::zero(), |acc, c| acc * x + c)
    }

    /// Divides out `(rho - root)` if it is an exact factor.
    pub fn deflate(&self, root: &BigRational) -> Option<Self> {
        if self.coeffs.len() < 2 {
            return None;
        }
        let n = self.coeffs.len() - 1;
        let mut q = vec![BigRational::zero(); n];
        let mut carry = BigRational::zero();
        for k in (0..=n).rev() {
            let val = &self.coeffs[k] + &carry * root;
            if k == 0 {
                return if val.is_zero() {
                    Some(Self::from_rationals(q))
                } else {
                    None
                };
            }
            q[k - 1] = val.clone();
            carry = val;
        }
        unreachable!()
    }

    /// Floating-point copy scaled so the largest coefficient has magnitude 1.
    pub fn to_float(&self, drop_tol: f64) -> Polynomial {
        let cmax = self
            .coeffs
            .iter()
            .map(|c| c.abs())
            .max()
            .unwrap_or_else(BigRational::zero);
        if cmax.is_zero() {
            return Polynomial::new(Vec::new(), drop_tol);
        }
        let coeffs = self
            .coeffs
            .iter()
            .map(|c| (c / &cmax).to_f64().unwrap_or(0.0))
            .collect();
        // exact leading coefficient is nonzero, so keep it even if tiny
        let mut p = Polynomial::new(coeffs, 0.0);
        p.near_threshold = p
            .coeffs
            .last()
            .is_some_and(|c| p.coeffs.len() > 1 && c.abs() <= 10.0 * drop_tol);
        p
    }
}
