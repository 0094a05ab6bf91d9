//! Cyclic Jacobi eigensolver for dense symmetric matrices.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Off-diagonal Frobenius norm at which the sweeps stop.
pub const OFF_DIAGONAL_TOL: f64 = 1e-10;

/// Eigenvalues closer than this are treated as a tie.
pub const TIE_TOL: f64 = 1e-9;

/// Entries at or below this magnitude are skipped when fixing signs.
const SIGN_EPS: f64 = 1e-10;

const MAX_SWEEPS: usize = 100;

#[derive(Clone, Debug)]
pub struct SymEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `j` is the unit eigenvector for `values[j]`.
    pub vectors: Tensor,
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j] * a[i * n + j];
            }
        }
    }
    s.sqrt()
}

/// Flips `v` so that its first entry with magnitude above `SIGN_EPS` is
/// positive.
pub fn fix_sign(v: &mut [f64]) {
    if let Some(&first) = v.iter().find(|x| x.abs() > SIGN_EPS) {
        if first < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
    }
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}

/// Eigen-decomposition of a symmetric matrix. Eigenvectors come back
/// sign-fixed; eigenvalues within [`TIE_TOL`] of each other are ordered by
/// the lexicographic order of their eigenvectors.
pub fn sym_eigen(m: &Tensor) -> Result<SymEigen> {
    let n = m.rows();
    if !m.is_matrix() || m.cols() != n {
        return Err(Error::Dimension {
            op: "sym_eigen",
            detail: format!("expected a square matrix, got {:?}", m.shape()),
        });
    }
    for i in 0..n {
        for j in 0..i {
            if (m.get(i, j) - m.get(j, i)).abs() > 1e-12 * (1.0 + m.get(i, j).abs()) {
                return Err(Error::Parameter(format!("matrix not symmetric at ({i},{j})")));
            }
        }
    }
    let mut a = m.data().to_vec();
    let mut v = Tensor::eye(n).into_data();

    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a, n) < OFF_DIAGONAL_TOL {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[p * n + k];
                    let akq = a[q * n + k];
                    let np = c * akp - s * akq;
                    let nq = s * akp + c * akq;
                    a[p * n + k] = np;
                    a[q * n + k] = nq;
                    a[k * n + p] = np;
                    a[k * n + q] = nq;
                }
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;

                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged && off_diagonal_norm(&a, n) >= OFF_DIAGONAL_TOL {
        return Err(Error::NumericalStability(
            "Jacobi sweeps did not converge".into(),
        ));
    }

    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|j| {
            let mut col: Vec<f64> = (0..n).map(|i| v[i * n + j]).collect();
            fix_sign(&mut col);
            (a[j * n + j], col)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    // reorder inside runs of tied eigenvalues
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && pairs[end].0 - pairs[start].0 <= TIE_TOL {
            end += 1;
        }
        pairs[start..end].sort_by(|x, y| lexicographic(&x.1, &y.1));
        start = end;
    }

    let mut vectors = Tensor::zeros(n, n);
    for (j, (_, col)) in pairs.iter().enumerate() {
        for (i, &x) in col.iter().enumerate() {
            vectors.set(i, j, x);
        }
    }
    Ok(SymEigen {
        values: pairs.into_iter().map(|p| p.0).collect(),
        vectors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix() {
        let m = Tensor::from_rows(&[&[3.0, 0.0], &[0.0, 1.0]]);
        let e = sym_eigen(&m).unwrap();
        assert_eq!(e.values, vec![1.0, 3.0]);
        assert_eq!(e.vectors, Tensor::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]));
    }

    #[test]
    fn two_by_two_closed_form() {
        let m = Tensor::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let e = sym_eigen(&m).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-14);
        assert!((e.values[1] - 3.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.vectors.get(0, 1) - h).abs() < 1e-14);
        assert!((e.vectors.get(1, 1) - h).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_square_and_asymmetric() {
        assert!(sym_eigen(&Tensor::zeros(2, 3)).is_err());
        assert!(sym_eigen(&Tensor::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]])).is_err());
    }

    #[test]
    fn sign_fix_makes_first_significant_entry_positive() {
        let mut v = vec![0.0, -1e-12, -0.5, 0.2];
        fix_sign(&mut v);
        assert_eq!(v, vec![-0.0, 1e-12, 0.5, -0.2]);
    }
}
