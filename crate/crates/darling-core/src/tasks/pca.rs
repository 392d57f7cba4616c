//! Exact PCA via eigendecomposition of the covariance (cyclic Jacobi).
//! When the feature dimension exceeds the sample count, the dual Gram-matrix
//! form is used, which is exact for the leading components.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns `(eigenvalues, eigenvectors)` sorted by descending eigenvalue;
/// eigenvectors are columns.
pub fn symmetric_eigen(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.dim().0;
    if a.dim().1 != n {
        return Err(Error::validation("symmetric_eigen needs a square matrix"));
    }
    let mut m = a.clone();
    let mut v: Array2<f64> = Array2::eye(n);
    let tol = 1e-13 * (1.0 + a.iter().map(|x| x.abs()).fold(0.0, f64::max));
    for _sweep in 0..120 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off = f64::max(off, m[[p, q]].abs());
            }
        }
        if off < tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() < tol * 1e-2 {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut pairs: Vec<(f64, usize)> = (0..n).map(|i| (m[[i, i]], i)).collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let vals = Array1::from_iter(pairs.iter().map(|&(val, _)| val));
    let mut vecs = Array2::zeros((n, n));
    for (new_col, &(_, old_col)) in pairs.iter().enumerate() {
        for r in 0..n {
            vecs[[r, new_col]] = v[[r, old_col]];
        }
    }
    Ok((vals, vecs))
}

/// Project rows of `data` (`n x d`) onto the top two principal components.
/// Returns `(projections n x 2, component variances)`.
pub fn pca_2d(data: &Array2<f64>) -> Result<(Array2<f64>, [f64; 2])> {
    let (n, d) = data.dim();
    if n == 0 || d == 0 {
        return Err(Error::validation("pca over an empty matrix"));
    }
    let mean = data.mean_axis(Axis(0)).expect("n > 0");
    let centered = data - &mean.insert_axis(Axis(0));
    if n == 1 {
        return Ok((Array2::zeros((1, 2)), [0.0, 0.0]));
    }
    let denom = (n - 1) as f64;

    let (vals, proj) = if d <= n {
        let cov = centered.t().dot(&centered) / denom;
        let (vals, vecs) = symmetric_eigen(&cov)?;
        let mut proj = Array2::zeros((n, 2));
        for comp in 0..2.min(d) {
            let axis = vecs.column(comp);
            for i in 0..n {
                proj[[i, comp]] = centered.row(i).dot(&axis);
            }
        }
        (vals, proj)
    } else {
        // Dual form: eigenvectors of the Gram matrix map to covariance
        // eigenvectors via X^T u / sqrt(lambda (n-1)).
        let gram = centered.dot(&centered.t()) / denom;
        let (vals, vecs) = symmetric_eigen(&gram)?;
        let mut proj = Array2::zeros((n, 2));
        for comp in 0..2.min(n) {
            let lambda = vals[comp];
            if lambda <= 1e-12 {
                continue;
            }
            let u = vecs.column(comp);
            let axis = centered.t().dot(&u) / (lambda * denom).sqrt();
            for i in 0..n {
                proj[[i, comp]] = centered.row(i).dot(&axis);
            }
        }
        (vals, proj)
    };
    let v1 = if vals.len() > 0 { vals[0].max(0.0) } else { 0.0 };
    let v2 = if vals.len() > 1 { vals[1].max(0.0) } else { 0.0 };
    Ok((proj, [v1, v2]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::random_array;
    use crate::rng::rng_from;

    #[test]
    fn jacobi_recovers_known_spectrum() {
        // Symmetric matrix with known eigenvalues 3 and 1.
        let a = ndarray::array![[2.0, 1.0], [1.0, 2.0]];
        let (vals, vecs) = symmetric_eigen(&a).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-10);
        assert!((vals[1] - 1.0).abs() < 1e-10);
        // A v = lambda v for each column.
        for c in 0..2 {
            let v = vecs.column(c).to_owned();
            let av = a.dot(&v);
            for i in 0..2 {
                assert!((av[i] - vals[c] * v[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn jacobi_reconstructs_random_symmetric() {
        let mut rng = rng_from(4);
        let b = random_array(&mut rng, 6, 6);
        let a = &b + &b.t();
        let (vals, vecs) = symmetric_eigen(&a).unwrap();
        // V diag(vals) V^T == A.
        let mut rebuilt: Array2<f64> = Array2::zeros((6, 6));
        for c in 0..6 {
            let v = vecs.column(c);
            for i in 0..6 {
                for j in 0..6 {
                    rebuilt[[i, j]] += vals[c] * v[i] * v[j];
                }
            }
        }
        for (x, y) in a.iter().zip(rebuilt.iter()) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn pca_variances_are_ordered_and_projection_count_matches() {
        let mut rng = rng_from(5);
        // 20 samples in 7 dims (covariance route).
        let data = random_array(&mut rng, 20, 7);
        let (proj, vars) = pca_2d(&data).unwrap();
        assert_eq!(proj.dim(), (20, 2));
        assert!(vars[0] >= vars[1]);
        // 5 samples in 40 dims (Gram route).
        let wide = random_array(&mut rng, 5, 40);
        let (proj, vars) = pca_2d(&wide).unwrap();
        assert_eq!(proj.dim(), (5, 2));
        assert!(vars[0] >= vars[1]);
        // Empirical variance of the projected first component matches.
        let mean: f64 = proj.column(0).sum() / 5.0;
        let emp: f64 =
            proj.column(0).iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
        assert!((emp - vars[0]).abs() < 1e-8 * (1.0 + vars[0]), "{emp} vs {}", vars[0]);
    }

    #[test]
    fn dual_and_primal_routes_agree() {
        let mut rng = rng_from(6);
        let data = random_array(&mut rng, 8, 8);
        let (proj_a, vars_a) = pca_2d(&data).unwrap();
        // Force the dual route by widening with zero columns (same geometry).
        let mut wide = Array2::zeros((8, 20));
        wide.slice_mut(ndarray::s![.., ..8]).assign(&data);
        let (proj_b, vars_b) = pca_2d(&wide).unwrap();
        assert!((vars_a[0] - vars_b[0]).abs() < 1e-9);
        assert!((vars_a[1] - vars_b[1]).abs() < 1e-9);
        for c in 0..2 {
            // Components are sign-ambiguous.
            let dot: f64 = proj_a.column(c).iter().zip(proj_b.column(c)).map(|(a, b)| a * b).sum();
            let sign = dot.signum();
            for (a, b) in proj_a.column(c).iter().zip(proj_b.column(c)) {
                assert!((a - sign * b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn identical_rows_project_identically() {
        let row = random_array(&mut rng_from(7), 1, 12);
        let mut data = Array2::zeros((6, 12));
        for i in 0..6 {
            data.row_mut(i).assign(&row.row(0));
        }
        let (proj, vars) = pca_2d(&data).unwrap();
        for i in 1..6 {
            assert_eq!(proj.row(0), proj.row(i));
        }
        assert!(vars[0].abs() < 1e-18);
    }
}
