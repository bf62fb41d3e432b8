//! All complex roots of a real polynomial: eigenvalues of the balanced
//! companion matrix by the Francis double-shift QR iteration, followed by
//! Newton polishing on the original coefficients.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::poly::Polynomial;

const MAX_QR_ITERS: usize = 60;
const MAX_NEWTON_ITERS: usize = 50;

/// Returns exactly `deg` roots (with multiplicity), sorted by real then
/// imaginary part.
pub fn all_roots(p: &Polynomial) -> Result<Vec<Complex64>> {
    let deg = match p.degree() {
        None => return Err(Error::ZeroPolynomial),
        Some(0) => return Err(Error::ConstantPolynomial),
        Some(d) => d,
    };
    let c = p.coeffs();
    let lead = c[deg];
    let mut h = vec![vec![0.0; deg]; deg];
    for j in 0..deg {
        h[0][j] = -c[deg - 1 - j] / lead;
    }
    for i in 1..deg {
        h[i][i - 1] = 1.0;
    }
    balance(&mut h);
    let mut roots = hessenberg_eigenvalues(h)?;
    for r in roots.iter_mut() {
        *r = polish(p, *r);
    }
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(roots)
}

/// Residual bound `1e-10 * max|c| * max(1, |r|)^deg` that a polished root meets.
pub fn residual_bound(p: &Polynomial, r: Complex64) -> f64 {
    let deg = p.degree().unwrap_or(0) as i32;
    1e-10 * p.max_abs_coeff() * r.norm().max(1.0).powi(deg)
}

/// Indices of roots that lie within `rel_tol * max(1, |r|)` of another root.
pub fn clustered(roots: &[Complex64], rel_tol: f64) -> Vec<bool> {
    roots
        .iter()
        .enumerate()
        .map(|(i, r)| {
            roots
                .iter()
                .enumerate()
                .any(|(j, s)| i != j && (r - s).norm() <= rel_tol * r.norm().max(1.0))
        })
        .collect()
}

fn polish(p: &Polynomial, start: Complex64) -> Complex64 {
    let mut x = start;
    let mut best = x;
    let mut best_res = p.eval(x).norm();
    for _ in 0..MAX_NEWTON_ITERS {
        let (v, dv) = p.eval_with_derivative(x);
        if v.norm() == 0.0 || dv.norm() == 0.0 {
            break;
        }
        let step = v / dv;
        x -= step;
        let res = p.eval(x).norm();
        if res < best_res {
            best = x;
            best_res = res;
        }
        if step.norm() <= 4.0 * f64::EPSILON * x.norm().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    best
}

/// Parlett-Reinsch balancing by powers of two.
fn balance(a: &mut [Vec<f64>]) {
    const RADIX: f64 = 2.0;
    let n = a.len();
    let sqrdx = RADIX * RADIX;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[j][i].abs();
                    r += a[i][j].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= sqrdx;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= sqrdx;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let ginv = 1.0 / f;
                for j in 0..n {
                    a[i][j] *= ginv;
                }
                for row in a.iter_mut() {
                    row[i] *= f;
                }
            }
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Eigenvalues of an upper Hessenberg matrix (EISPACK `hqr`).
fn hessenberg_eigenvalues(mut a: Vec<Vec<f64>>) -> Result<Vec<Complex64>> {
    let n = a.len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[i][j].abs();
        }
    }
    let eps = f64::EPSILON;
    let mut nn = n as isize - 1;
    let mut t = 0.0;
    while nn >= 0 {
        let mut its = 0;
        loop {
            let nu = nn as usize;
            let mut l = 0usize;
            for ll in (1..=nu).rev() {
                let mut s = a[ll - 1][ll - 1].abs() + a[ll][ll].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[ll][ll - 1].abs() <= eps * s {
                    a[ll][ll - 1] = 0.0;
                    l = ll;
                    break;
                }
            }
            let mut x = a[nu][nu];
            if l == nu {
                out[nu] = Complex64::new(x + t, 0.0);
                nn -= 1;
            } else {
                let mut y = a[nu - 1][nu - 1];
                let mut w = a[nu][nu - 1] * a[nu - 1][nu];
                if l == nu - 1 {
                    let p = 0.5 * (y - x);
                    let q = p * p + w;
                    let mut z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        z = p + sign(z, p);
                        out[nu - 1] = Complex64::new(x + z, 0.0);
                        out[nu] = Complex64::new(if z != 0.0 { x - w / z } else { x + z }, 0.0);
                    } else {
                        out[nu] = Complex64::new(x + p, -z);
                        out[nu - 1] = Complex64::new(x + p, z);
                    }
                    nn -= 2;
                } else {
                    if its == MAX_QR_ITERS {
                        return Err(Error::NoConvergence);
                    }
                    if its == 10 || its == 20 || its == 40 {
                        // exceptional shift
                        t += x;
                        for (i, row) in a.iter_mut().enumerate().take(nu + 1) {
                            row[i] -= x;
                        }
                        let s = a[nu][nu - 1].abs() + a[nu - 1][nu - 2].abs();
                        x = 0.75 * s;
                        y = x;
                        w = -0.4375 * s * s;
                    }
                    its += 1;
                    let (mut p, mut q, mut r);
                    let mut m = nu - 2;
                    loop {
                        let z = a[m][m];
                        let rr = x - z;
                        let ss = y - z;
                        p = (rr * ss - w) / a[m + 1][m] + a[m][m + 1];
                        q = a[m + 1][m + 1] - z - rr - ss;
                        r = a[m + 2][m + 1];
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                        let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                        if u <= eps * v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in m..nu - 1 {
                        a[i + 2][i] = 0.0;
                        if i != m {
                            a[i + 2][i - 1] = 0.0;
                        }
                    }
                    let mut k = m;
                    while k < nu {
                        if k != m {
                            p = a[k][k - 1];
                            q = a[k + 1][k - 1];
                            r = if k + 1 != nu { a[k + 2][k - 1] } else { 0.0 };
                            x = p.abs() + q.abs() + r.abs();
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = sign((p * p + q * q + r * r).sqrt(), p);
                        if s != 0.0 {
                            if k == m {
                                if l != m {
                                    a[k][k - 1] = -a[k][k - 1];
                                }
                            } else {
                                a[k][k - 1] = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            let z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nu {
                                let mut pp = a[k][j] + q * a[k + 1][j];
                                if k + 1 != nu {
                                    pp += r * a[k + 2][j];
                                    a[k + 2][j] -= pp * z;
                                }
                                a[k + 1][j] -= pp * y;
                                a[k][j] -= pp * x;
                            }
                            let mmin = if nu < k + 3 { nu } else { k + 3 };
                            for row in a.iter_mut().take(mmin + 1).skip(l) {
                                let mut pp = x * row[k] + y * row[k + 1];
                                if k + 1 != nu {
                                    pp += z * row[k + 2];
                                    row[k + 2] -= pp * r;
                                }
                                row[k + 1] -= pp * q;
                                row[k] -= pp;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if nn < 0 || l + 1 >= nn as usize {
                break;
            }
        }
    }
    Ok(out)
}
