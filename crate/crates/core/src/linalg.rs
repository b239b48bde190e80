//! Symmetric eigenvalue decomposition: Householder reduction to
//! tridiagonal form followed by the implicit-shift QL iteration, after the
//! classic EISPACK tred2/tql2 pair. Kept in-repo so the spectrum diagnostic
//! has no external linear-algebra dependency.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Eigenvalues (ascending) and orthonormal eigenvectors (columns of `v`).
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Array2<f64>,
}

const MAX_QL_SWEEPS: usize = 50;

/// Full symmetric eigendecomposition A = V·diag(values)·Vᵀ.
pub fn sym_eigen(a: &Array2<f64>) -> Result<SymEigen> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    let mut v = a.clone();
    let mut d = vec![0.0f64; n];
    let mut e = vec![0.0f64; n];
    tred2(&mut v, &mut d, &mut e);
    tql2(&mut v, &mut d, &mut e)?;
    Ok(SymEigen { values: d, vectors: v })
}

/// Eigenvalues (ascending) of a symmetric tridiagonal matrix given its
/// diagonal `d` and subdiagonal `e` (length n, `e[0]` unused).
pub fn sym_tridiag_eigenvalues(mut d: Vec<f64>, mut e: Vec<f64>) -> Result<Vec<f64>> {
    let n = d.len();
    assert_eq!(e.len(), n);
    ql_iterate(&mut d, &mut e, None, n)?;
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(d)
}

/// Householder reduction of `v` (symmetric, overwritten with the
/// accumulated transformation) to tridiagonal form in `d` (diagonal) and
/// `e` (subdiagonal, `e[0] = 0`).
fn tred2(v: &mut Array2<f64>, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[[n - 1, j]];
    }

    for i in (1..n).rev() {
        // Scale to avoid under/overflow.
        let mut scale = 0.0;
        let mut h = 0.0;
        for item in d.iter().take(i) {
            scale += item.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[[i - 1, j]];
                v[[i, j]] = 0.0;
                v[[j, i]] = 0.0;
            }
        } else {
            for item in d.iter_mut().take(i) {
                *item /= scale;
                h += *item * *item;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for item in e.iter_mut().take(i) {
                *item = 0.0;
            }

            // Apply similarity transformation to remaining columns.
            for j in 0..i {
                f = d[j];
                v[[j, i]] = f;
                g = e[j] + v[[j, j]] * f;
                for k in j + 1..i {
                    g += v[[k, j]] * d[k];
                    e[k] += v[[k, j]] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[[k, j]] -= f * e[k] + g * d[k];
                }
                d[j] = v[[i - 1, j]];
                v[[i, j]] = 0.0;
            }
        }
        d[i] = h;
    }

    // Accumulate transformations.
    for i in 0..n - 1 {
        v[[n - 1, i]] = v[[i, i]];
        v[[i, i]] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[[k, i + 1]] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[[k, i + 1]] * v[[k, j]];
                }
                for k in 0..=i {
                    v[[k, j]] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[[k, i + 1]] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[[n - 1, j]];
        v[[n - 1, j]] = 0.0;
    }
    v[[n - 1, n - 1]] = 1.0;
    e[0] = 0.0;
}

/// Implicit-shift QL on the tridiagonal (d, e), accumulating eigenvectors
/// into `v`, then sorting ascending.
fn tql2(v: &mut Array2<f64>, d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    ql_iterate(d, e, Some(v), n)?;

    // Sort eigenvalues and matching vectors ascending.
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for j in i + 1..n {
            if d[j] < p {
                k = j;
                p = d[j];
            }
        }
        if k != i {
            d[k] = d[i];
            d[i] = p;
            for j in 0..n {
                let tmp = v[[j, i]];
                v[[j, i]] = v[[j, k]];
                v[[j, k]] = tmp;
            }
        }
    }
    Ok(())
}

fn ql_iterate(
    d: &mut [f64],
    e: &mut [f64],
    mut v: Option<&mut Array2<f64>>,
    n: usize,
) -> Result<()> {
    if n == 0 {
        return Ok(());
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0f64;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }

        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_QL_SWEEPS {
                    return Err(Error::numeric(
                        format!("eigenvalue {l}"),
                        format!("QL iteration did not converge after {MAX_QL_SWEEPS} sweeps"),
                    ));
                }

                // Shift.
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for item in d.iter_mut().take(n).skip(l + 2) {
                    *item -= h;
                }
                f += h;

                // Implicit QL sweep.
                p = d[m];
                let mut c = 1.0f64;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0f64;
                let mut s2 = 0.0f64;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);

                    if let Some(vm) = v.as_deref_mut() {
                        for k in 0..n {
                            h = vm[[k, i + 1]];
                            vm[[k, i + 1]] = s * vm[[k, i]] + c * h;
                            vm[[k, i]] = c * vm[[k, i]] - s * h;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..=i {
                let v = rng.gen_range(-1.0..1.0);
                a[[i, j]] = v;
                a[[j, i]] = v;
            }
        }
        a
    }

    #[test]
    fn identity_and_diagonal() {
        let eye = Array2::<f64>::eye(5);
        let e = sym_eigen(&eye).unwrap();
        for v in &e.values {
            assert_relative_eq!(*v, 1.0, max_relative = 1e-14);
        }
        let mut d = Array2::<f64>::zeros((2, 2));
        d[[0, 0]] = 3.0;
        d[[1, 1]] = 1.0;
        let e = sym_eigen(&d).unwrap();
        assert_relative_eq!(e.values[0], 1.0, max_relative = 1e-14);
        assert_relative_eq!(e.values[1], 3.0, max_relative = 1e-14);
    }

    #[test]
    fn reconstruction_and_orthogonality() {
        for seed in [1, 2, 3] {
            let a = random_symmetric(20, seed);
            let e = sym_eigen(&a).unwrap();
            let lam_max = e.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            // A = V Λ Vᵀ
            for i in 0..20 {
                for j in 0..20 {
                    let mut s = 0.0;
                    for k in 0..20 {
                        s += e.vectors[[i, k]] * e.values[k] * e.vectors[[j, k]];
                    }
                    assert!(
                        (s - a[[i, j]]).abs() <= 1e-12 * lam_max.max(1.0),
                        "reconstruction off at ({i},{j})"
                    );
                }
            }
            // VᵀV = I
            for i in 0..20 {
                for j in 0..20 {
                    let mut s = 0.0;
                    for k in 0..20 {
                        s += e.vectors[[k, i]] * e.vectors[[k, j]];
                    }
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((s - want).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn matches_power_iteration_with_deflation() {
        // Independent oracle: dominant eigenpairs by power iteration on a
        // PSD matrix, deflating after each.
        let raw = random_symmetric(20, 9);
        let mut a = Array2::<f64>::zeros((20, 20));
        for i in 0..20 {
            for j in 0..20 {
                let mut s = 0.0;
                for k in 0..20 {
                    s += raw[[i, k]] * raw[[j, k]];
                }
                a[[i, j]] = s;
            }
        }
        let e = sym_eigen(&a).unwrap();
        let mut work = a.clone();
        let mut top = Vec::new();
        for _ in 0..5 {
            let mut v = vec![1.0f64; 20];
            let mut lam = 0.0;
            for _ in 0..50_000 {
                let mut w = vec![0.0f64; 20];
                for i in 0..20 {
                    for j in 0..20 {
                        w[i] += work[[i, j]] * v[j];
                    }
                }
                let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                for x in w.iter_mut() {
                    *x /= norm;
                }
                let prev = lam;
                lam = norm;
                v = w;
                if (lam - prev).abs() <= 1e-13 * lam {
                    break;
                }
            }
            top.push(lam);
            for i in 0..20 {
                for j in 0..20 {
                    work[[i, j]] -= lam * v[i] * v[j];
                }
            }
        }
        let lam_max = e.values[19];
        for (k, lam) in top.iter().enumerate() {
            assert!(
                (e.values[19 - k] - lam).abs() <= 1e-8 * lam_max,
                "eigenvalue {k}: ql {} vs power {lam}",
                e.values[19 - k]
            );
        }
    }

    #[test]
    fn tridiagonal_eigenvalues_match_dense_path() {
        let n = 30;
        let d: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let e: Vec<f64> =
            (0..n).map(|i| if i == 0 { 0.0 } else { 0.5 + 0.1 * (i as f64).cos() }).collect();
        let mut dense = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            dense[[i, i]] = d[i];
            if i > 0 {
                dense[[i, i - 1]] = e[i];
                dense[[i - 1, i]] = e[i];
            }
        }
        let full = sym_eigen(&dense).unwrap();
        let tri = sym_tridiag_eigenvalues(d, e).unwrap();
        for (a, b) in full.values.iter().zip(&tri) {
            assert_relative_eq!(a, b, max_relative = 1e-11, epsilon = 1e-11);
        }
    }
}
