//! Symmetric eigenvalues by Householder tridiagonalisation and implicit QL.
//!
//! Kept separate from the eigen-solver used inside the LMI iterations so that
//! certificates are re-checked on an independent code path.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::domain(format!("matrix is {}x{}, expected square", m.nrows(), m.ncols())));
    }
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > 1e-9 * scale {
        return Err(Error::domain(format!("matrix is not symmetric (max asymmetry {asym:.3e})")));
    }
    Ok(())
}

/// Reduces the symmetric matrix `a` to tridiagonal form; returns `(diag, offdiag)`
/// with `offdiag[0] = 0` and `offdiag[i]` coupling rows `i-1` and `i`.
fn tridiagonalize(mut a: DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = a.nrows();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let scale: f64 = (0..=l).map(|k| a[(i, k)].abs()).sum();
            if scale == 0.0 {
                e[i] = a[(i, l)];
            } else {
                for k in 0..=l {
                    a[(i, k)] /= scale;
                    h += a[(i, k)] * a[(i, k)];
                }
                let f = a[(i, l)];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                a[(i, l)] = f - g;
                let mut f = 0.0;
                for j in 0..=l {
                    let mut g = 0.0;
                    for k in 0..=j {
                        g += a[(j, k)] * a[(i, k)];
                    }
                    for k in j + 1..=l {
                        g += a[(k, j)] * a[(i, k)];
                    }
                    e[j] = g / h;
                    f += e[j] * a[(i, j)];
                }
                let hh = f / (h + h);
                for j in 0..=l {
                    let f = a[(i, j)];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        a[(j, k)] -= f * e[k] + g * a[(i, k)];
                    }
                }
            }
        } else {
            e[i] = a[(i, l)];
        }
        d[i] = h;
    }
    for (i, di) in d.iter_mut().enumerate() {
        *di = a[(i, i)];
    }
    e[0] = 0.0;
    (d, e)
}

/// Implicit QL with Wilkinson shifts on a symmetric tridiagonal matrix.
fn tridiagonal_ql(d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Numerical { message: "QL iteration did not converge".into(), last_good_time: 0.0 });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + if g >= 0.0 { r.abs() } else { -r.abs() });
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// All eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_symmetric(m)?;
    let sym = (m + m.transpose()) * 0.5;
    let (mut d, mut e) = tridiagonalize(sym);
    tridiagonal_ql(&mut d, &mut e)?;
    d.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Ok(d)
}

/// `(lambda_min, lambda_max)` of a symmetric matrix.
pub fn eig_extreme(m: &DMatrix<f64>) -> Result<(f64, f64)> {
    if m.nrows() == 0 {
        return Err(Error::domain("empty matrix"));
    }
    let ev = symmetric_eigenvalues(m)?;
    Ok((ev[0], ev[ev.len() - 1]))
}

/// Whether `[[X, Y], [Y^T, Z]] <= -margin I`, decided through the Schur
/// complement of the shifted `Z` block.
pub fn schur_negdef_check(x: &DMatrix<f64>, y: &DMatrix<f64>, z: &DMatrix<f64>, margin: f64) -> Result<bool> {
    if !x.is_square() || !z.is_square() || y.nrows() != x.nrows() || y.ncols() != z.nrows() {
        return Err(Error::domain(format!(
            "block dimensions do not match: X {:?}, Y {:?}, Z {:?}",
            x.shape(),
            y.shape(),
            z.shape()
        )));
    }
    let zs = z + DMatrix::identity(z.nrows(), z.ncols()) * margin;
    let xs = x + DMatrix::identity(x.nrows(), x.ncols()) * margin;
    let (_, z_max) = eig_extreme(&zs)?;
    if z_max >= 0.0 {
        return Ok(false);
    }
    let Some(z_inv) = zs.clone().try_inverse() else { return Ok(false) };
    let schur = &xs - y * &z_inv * y.transpose();
    let schur = (&schur + schur.transpose()) * 0.5;
    let (_, s_max) = eig_extreme(&schur)?;
    Ok(s_max < 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        (&a + a.transpose()) * 0.5
    }

    /// Sylvester's criterion on `M - lambda I`: positive definite iff every
    /// leading principal minor is positive.
    fn shifted_is_pd(m: &DMatrix<f64>, lambda: f64) -> bool {
        let n = m.nrows();
        let s = m - DMatrix::identity(n, n) * lambda;
        (1..=n).all(|k| s.view((0, 0), (k, k)).into_owned().determinant() > 0.0)
    }

    fn bisect_min(m: &DMatrix<f64>) -> f64 {
        let bound = m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
        let (mut lo, mut hi) = (-bound - 1.0, bound + 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if shifted_is_pd(m, mid) {
                lo = mid
            } else {
                hi = mid
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn identity_and_diagonal() {
        assert_eq!(eig_extreme(&DMatrix::identity(4, 4)).unwrap(), (1.0, 1.0));
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-3.0, 5.0]));
        assert_eq!(eig_extreme(&d).unwrap(), (-3.0, 5.0));
        assert_eq!(eig_extreme(&DMatrix::from_element(1, 1, 2.5)).unwrap(), (2.5, 2.5));
    }

    #[test]
    fn rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(eig_extreme(&m).is_err());
        assert!(eig_extreme(&DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn matches_minor_bisection_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let m = random_symmetric(&mut rng, 8);
            let (lo, hi) = eig_extreme(&m).unwrap();
            assert!((lo - bisect_min(&m)).abs() < 1e-8, "min");
            assert!((hi + bisect_min(&(-&m))).abs() < 1e-8, "max");
        }
    }

    #[test]
    fn spectrum_matches_trace_and_frobenius() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..10 {
            let m = random_symmetric(&mut rng, n);
            let ev = symmetric_eigenvalues(&m).unwrap();
            let tr: f64 = ev.iter().sum();
            let fro: f64 = ev.iter().map(|v| v * v).sum();
            assert!((tr - m.trace()).abs() < 1e-12 * (1.0 + m.amax()));
            assert!((fro - m.norm_squared()).abs() < 1e-10 * (1.0 + m.norm_squared()));
        }
    }

    #[test]
    fn schur_examples() {
        let i = DMatrix::<f64>::identity(3, 3);
        assert!(schur_negdef_check(&(-&i), &DMatrix::zeros(3, 3), &(-&i), 1e-9).unwrap());
        assert!(!schur_negdef_check(&(-&i), &(&i * 2.0), &(-&i), 1e-9).unwrap());
        assert!(schur_negdef_check(&(-&i), &DMatrix::zeros(2, 3), &(-&i), 0.0).is_err());
    }

    #[test]
    fn schur_agrees_with_assembled_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let margin = 1e-6;
        let mut agree = 0;
        for _ in 0..300 {
            let x = random_symmetric(&mut rng, 3) - DMatrix::identity(3, 3) * rng.random_range(0.0..2.0);
            let z = random_symmetric(&mut rng, 2) - DMatrix::identity(2, 2) * rng.random_range(0.0..2.0);
            let y = DMatrix::from_fn(3, 2, |_, _| rng.random_range(-0.7..0.7));
            let mut full = DMatrix::zeros(5, 5);
            full.view_mut((0, 0), (3, 3)).copy_from(&x);
            full.view_mut((0, 3), (3, 2)).copy_from(&y);
            full.view_mut((3, 0), (2, 3)).copy_from(&y.transpose());
            full.view_mut((3, 3), (2, 2)).copy_from(&z);
            let (_, max) = eig_extreme(&full).unwrap();
            if (max + margin).abs() < 1e-9 {
                continue;
            }
            assert_eq!(schur_negdef_check(&x, &y, &z, margin).unwrap(), max <= -margin);
            agree += 1;
        }
        assert!(agree > 250);
    }
}
