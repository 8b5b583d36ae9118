//! Per-point metric spectra of the ambient coordinate functions:
//! manifold-hypothesis testing, singularity scores, and tangent-space
//! estimation.

use ndarray::{Array1, Array2, Array3};
use rayon::prelude::*;

use crate::algebra::{carre_apply, eval, expand, CarreTensor};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::kernel::SpectralBasis;
use crate::linalg::sym_eigh;

/// Per-point spectral data of the coordinate metric
/// `M_ab(s) = Gamma(x_a, x_b)(s)` for mean-centered ambient coordinates.
#[derive(Debug, Clone)]
pub struct PointMetricField {
    /// n x d, eigenvalues descending, clipped at zero.
    pub eigenvalues: Array2<f64>,
    /// n x d x d, eigenvectors as rows matching `eigenvalues` order.
    pub eigenvectors: Array3<f64>,
    /// Largest negative eigenvalue magnitude seen before clipping.
    pub clip_magnitude: f64,
    /// Set when the top two eigenvalues are within 10% of each other, so
    /// the leading eigenvector direction is not meaningful.
    pub degenerate: Vec<bool>,
}

impl PointMetricField {
    pub fn n(&self) -> usize {
        self.eigenvalues.nrows()
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.ncols()
    }
}

/// Builds the coordinate metric field: expand each centered coordinate in
/// the basis, evaluate the carre du champ of every pair pointwise, and
/// eigendecompose the resulting d x d matrix at each sample.
pub fn coordinate_metric(
    pc: &PointCloud,
    basis: &SpectralBasis,
    carre: &CarreTensor,
) -> Result<PointMetricField> {
    let n = pc.n();
    let d = pc.dim();
    if basis.n != n {
        return Err(Error::invalid("basis and cloud disagree on sample count"));
    }
    let limit = carre.limit();

    let coords: Vec<Array1<f64>> = (0..d)
        .map(|a| {
            let col = pc.points.column(a);
            let mean = col.mean().unwrap_or(0.0);
            let centered: Array1<f64> = col.mapv(|v| v - mean);
            let full = expand(basis, &centered);
            full.slice(ndarray::s![..limit]).to_owned()
        })
        .collect();

    // pointwise values of Gamma(x_a, x_b) for a <= b
    let mut pair_vals: Vec<Array1<f64>> = Vec::with_capacity(d * (d + 1) / 2);
    for a in 0..d {
        for b in a..d {
            let coeffs = carre_apply(&coords[a], &coords[b], carre);
            pair_vals.push(eval(basis, &coeffs));
        }
    }
    let pair_index = |a: usize, b: usize| -> usize {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        lo * d - lo * (lo + 1) / 2 + hi
    };

    let per_point: Vec<(Array1<f64>, Array2<f64>, f64, bool)> = (0..n)
        .into_par_iter()
        .map(|s| {
            let mut m = Array2::zeros((d, d));
            for a in 0..d {
                for b in 0..d {
                    m[[a, b]] = pair_vals[pair_index(a, b)][s];
                }
            }
            let (vals, vecs) = sym_eigh(&m).expect("pointwise eigensolve");
            // descending order, clipped
            let mut eig = Array1::zeros(d);
            let mut evec = Array2::zeros((d, d));
            let mut clip = 0.0f64;
            for r in 0..d {
                let src = d - 1 - r;
                let v = vals[src];
                if v < 0.0 {
                    clip = clip.max(-v);
                }
                eig[r] = v.max(0.0);
                for c in 0..d {
                    evec[[r, c]] = vecs[[c, src]];
                }
            }
            let degenerate = d >= 2 && eig[0] > 0.0 && (eig[0] - eig[1]).abs() <= 0.1 * eig[0];
            (eig, evec, clip, degenerate)
        })
        .collect();

    let mut eigenvalues = Array2::zeros((n, d));
    let mut eigenvectors = Array3::zeros((n, d, d));
    let mut clip_magnitude = 0.0f64;
    let mut degenerate = Vec::with_capacity(n);
    for (s, (eig, evec, clip, deg)) in per_point.into_iter().enumerate() {
        for r in 0..d {
            eigenvalues[[s, r]] = eig[r];
            for c in 0..d {
                eigenvectors[[s, r, c]] = evec[[r, c]];
            }
        }
        clip_magnitude = clip_magnitude.max(clip);
        degenerate.push(deg);
    }
    Ok(PointMetricField { eigenvalues, eigenvectors, clip_magnitude, degenerate })
}

/// Largest metric eigenvalue per point, normalized by its median over the
/// cloud. Dips below 1 flag degenerating tangent directions.
pub fn singularity_score(field: &PointMetricField) -> Array1<f64> {
    let n = field.n();
    let mut top: Vec<f64> = (0..n).map(|s| field.eigenvalues[[s, 0]]).collect();
    let mut sorted = top.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    if median > 0.0 {
        for v in top.iter_mut() {
            *v /= median;
        }
    }
    Array1::from(top)
}

/// Top metric eigenvector per point, sign-fixed so the first component of
/// largest magnitude is positive.
pub fn tangent_field(field: &PointMetricField) -> Array2<f64> {
    let n = field.n();
    let d = field.dim();
    let mut out = Array2::zeros((n, d));
    for s in 0..n {
        let mut best = 0.0f64;
        let mut best_abs = -1.0f64;
        for c in 0..d {
            let v = field.eigenvectors[[s, 0, c]];
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = v;
            }
        }
        let sign = if best < 0.0 { -1.0 } else { 1.0 };
        for c in 0..d {
            out[[s, c]] = sign * field.eigenvectors[[s, 0, c]];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{carre_tensor, structure_constants};
    use crate::cloud::{gen_circle, gen_square};
    use crate::kernel::{build_markov, spectral_basis, KernelConfig};

    fn field_for(pc: &PointCloud, n0: usize) -> (SpectralBasis, PointMetricField) {
        let op = build_markov(pc, &KernelConfig::new(n0)).unwrap();
        let basis = spectral_basis(&op, n0).unwrap();
        let c = structure_constants(&basis, n0).unwrap();
        let g = carre_tensor(&basis, &c).unwrap();
        let f = coordinate_metric(pc, &basis, &g).unwrap();
        (basis, f)
    }

    #[test]
    fn flat_square_metric_isotropic() {
        let pc = gen_square(400, 2.0, 0.0, 3).unwrap();
        let (_, field) = field_for(&pc, 24);
        // interior points: both eigenvalues positive and comparable
        let mut checked = 0;
        for s in 0..pc.n() {
            let x = pc.points[[s, 0]] - 1.0;
            let y = pc.points[[s, 1]] - 1.0;
            if x.abs() > 0.6 || y.abs() > 0.6 {
                continue;
            }
            checked += 1;
            let top = field.eigenvalues[[s, 0]];
            let second = field.eigenvalues[[s, 1]];
            assert!(top > 0.0 && second > 0.0, "nonpositive metric at interior point {s}");
            let ratio = top / second;
            assert!((0.5..=2.0).contains(&ratio), "anisotropic interior metric: ratio {ratio}");
        }
        assert!(checked > 50, "too few interior points exercised");
    }

    #[test]
    fn circle_metric_rank_one() {
        let pc = gen_circle(300, 1.0, 0.0, 7, false).unwrap();
        let (_, field) = field_for(&pc, 20);
        let mut ok = 0;
        for s in 0..pc.n() {
            if field.eigenvalues[[s, 1]] <= 0.2 * field.eigenvalues[[s, 0]] {
                ok += 1;
            }
        }
        assert!(
            ok as f64 >= 0.9 * pc.n() as f64,
            "rank-1 structure on only {ok}/{} points",
            pc.n()
        );
    }

    #[test]
    fn circle_tangents_accurate() {
        let pc = gen_circle(300, 1.0, 0.0, 7, false).unwrap();
        let (_, field) = field_for(&pc, 20);
        let tangents = tangent_field(&field);
        let mut ok = 0;
        for s in 0..pc.n() {
            let x = pc.points[[s, 0]];
            let y = pc.points[[s, 1]];
            let r = (x * x + y * y).sqrt();
            let tx = -y / r;
            let ty = x / r;
            let dot = (tangents[[s, 0]] * tx + tangents[[s, 1]] * ty).abs();
            if dot >= 0.95 {
                ok += 1;
            }
        }
        assert!(ok as f64 >= 0.9 * pc.n() as f64, "accurate tangents on only {ok} points");
    }

    #[test]
    fn circle_scores_homogeneous() {
        let pc = gen_circle(300, 1.0, 0.0, 7, false).unwrap();
        let (_, field) = field_for(&pc, 20);
        let scores = singularity_score(&field);
        let min = scores.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min >= 0.3, "false singularity: min score {min}");
    }

    #[test]
    fn duplicated_points_identical_rows() {
        let mut pts = gen_circle(60, 1.0, 0.0, 2, false).unwrap().points;
        let last = pts.nrows() - 1;
        let first_row = pts.row(0).to_owned();
        pts.row_mut(last).assign(&first_row);
        let pc = PointCloud::new(pts).unwrap();
        let (_, field) = field_for(&pc, 12);
        for c in 0..2 {
            assert!(
                (field.eigenvalues[[0, c]] - field.eigenvalues[[last, c]]).abs() < 1e-9,
                "duplicated points disagree"
            );
        }
    }

    #[test]
    fn rotation_equivariance() {
        use ndarray::array;
        let pc = gen_circle(200, 1.0, 0.01, 5, false).unwrap();
        let theta = 0.37f64;
        let rot = array![[theta.cos(), -theta.sin()], [theta.sin(), theta.cos()]];
        let moved = pc.transformed(&rot, &array![0.4, -0.2]).unwrap();
        let (_, f1) = field_for(&pc, 16);
        let (_, f2) = field_for(&moved, 16);
        let s1 = singularity_score(&f1);
        let s2 = singularity_score(&f2);
        for s in 0..pc.n() {
            assert!((s1[s] - s2[s]).abs() <= 1e-6 * s1[s].max(1.0), "score moved at {s}");
        }
        let t1 = tangent_field(&f1);
        let t2 = tangent_field(&f2);
        let mut ok = 0;
        for s in 0..pc.n() {
            if f1.degenerate[s] || f2.degenerate[s] {
                ok += 1;
                continue;
            }
            let rx = rot[[0, 0]] * t1[[s, 0]] + rot[[0, 1]] * t1[[s, 1]];
            let ry = rot[[1, 0]] * t1[[s, 0]] + rot[[1, 1]] * t1[[s, 1]];
            let dot = (rx * t2[[s, 0]] + ry * t2[[s, 1]]).abs();
            if dot >= 1.0 - 1e-3 {
                ok += 1;
            }
        }
        assert!(ok as f64 >= 0.98 * pc.n() as f64, "tangent equivariance failed: {ok}");
    }
}
