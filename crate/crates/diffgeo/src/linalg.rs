//! Thin bridge between ndarray storage and the faer eigensolvers.

use faer::Mat;
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

pub fn to_faer(a: &Array2<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Eigendecomposition of a symmetric matrix. Eigenvalues ascending,
/// eigenvectors as columns.
pub fn sym_eigh(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::invalid("sym_eigh: matrix must be square"));
    }
    let m = to_faer(a);
    let evd = m
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::numeric(format!("symmetric eigensolver failed: {e:?} (n = {n})")))?;
    let s = evd.S();
    let u = evd.U();
    let mut values = Array1::zeros(n);
    let mut vectors = Array2::zeros((n, n));
    for i in 0..n {
        values[i] = s[i];
        for j in 0..n {
            vectors[[i, j]] = u[(i, j)];
        }
    }
    Ok((values, vectors))
}

/// Squared Euclidean distance matrix, computed in parallel over rows.
pub fn pairwise_sq_dists(points: &Array2<f64>) -> Array2<f64> {
    use ndarray::parallel::prelude::*;
    use ndarray::Axis;
    let n = points.nrows();
    let mut out = Array2::zeros((n, n));
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            let pi = points.row(i);
            for j in 0..n {
                let pj = points.row(j);
                let mut d = 0.0;
                for a in 0..points.ncols() {
                    let diff = pi[a] - pj[a];
                    d += diff * diff;
                }
                row[j] = d;
            }
        });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn eigh_matches_analytic_2x2() {
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let (vals, vecs) = sym_eigh(&a).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
        // residual check A v = lambda v
        for k in 0..2 {
            for i in 0..2 {
                let av = a[[i, 0]] * vecs[[0, k]] + a[[i, 1]] * vecs[[1, k]];
                assert!((av - vals[k] * vecs[[i, k]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn distances_symmetric_zero_diag() {
        let p = array![[0.0, 0.0], [3.0, 4.0], [1.0, 1.0]];
        let d = pairwise_sq_dists(&p);
        assert_eq!(d[[0, 0]], 0.0);
        assert_eq!(d[[0, 1]], 25.0);
        assert_eq!(d[[1, 0]], d[[0, 1]]);
    }
}
