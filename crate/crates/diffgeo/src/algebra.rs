//! The truncated function algebra in the eigenbasis: triple products,
//! carré du champ coefficients, multiplication, and coefficient transport.

use ndarray::{Array1, Array3, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::SpectralBasis;

/// Triple products `c_ijk = (1/n) sum_s phi_i phi_j phi_k D`, the structure
/// constants of pointwise multiplication.
#[derive(Debug, Clone)]
pub struct StructureTensor {
    pub c: Array3<f64>,
}

impl StructureTensor {
    pub fn limit(&self) -> usize {
        self.c.shape()[0]
    }
}

/// Carré du champ coefficients `Gamma_ijs = (lambda_i + lambda_j - lambda_s) c_ijs / 2`.
#[derive(Debug, Clone)]
pub struct CarreTensor {
    pub gamma: Array3<f64>,
}

impl CarreTensor {
    pub fn limit(&self) -> usize {
        self.gamma.shape()[0]
    }
}

pub fn structure_constants(basis: &SpectralBasis, limit: usize) -> Result<StructureTensor> {
    let n0 = basis.n0();
    if limit > n0 {
        return Err(Error::invalid(format!("limit {limit} exceeds basis size {n0}")));
    }
    let n = basis.n;
    let weights: Array1<f64> = basis.density.mapv(|d| d / n as f64);
    let phi = basis.phi.slice(ndarray::s![.., ..limit]).to_owned();

    let mut c = Array3::zeros((limit, limit, limit));
    c.axis_iter_mut(Axis(2))
        .into_par_iter()
        .enumerate()
        .for_each(|(k, mut slab)| {
            // c[.., .., k] = Phi^T diag(w * phi_k) Phi
            let mut scaled = phi.clone();
            for (s, mut row) in scaled.axis_iter_mut(Axis(0)).enumerate() {
                let f = weights[s] * phi[[s, k]];
                row.mapv_inplace(|x| x * f);
            }
            let block = phi.t().dot(&scaled);
            slab.assign(&block);
        });

    // Average over index permutations once per sorted triple and write the
    // same value to every slot, so the symmetry is bitwise exact.
    let mut sym = Array3::zeros((limit, limit, limit));
    for i in 0..limit {
        for j in i..limit {
            for k in j..limit {
                let avg = (c[[i, j, k]]
                    + c[[i, k, j]]
                    + c[[j, i, k]]
                    + c[[j, k, i]]
                    + c[[k, i, j]]
                    + c[[k, j, i]])
                    / 6.0;
                sym[[i, j, k]] = avg;
                sym[[i, k, j]] = avg;
                sym[[j, i, k]] = avg;
                sym[[j, k, i]] = avg;
                sym[[k, i, j]] = avg;
                sym[[k, j, i]] = avg;
            }
        }
    }
    Ok(StructureTensor { c: sym })
}

pub fn carre_tensor(basis: &SpectralBasis, structure: &StructureTensor) -> Result<CarreTensor> {
    let limit = structure.limit();
    if limit > basis.n0() {
        return Err(Error::invalid("structure tensor is larger than the basis"));
    }
    let lam = &basis.eigenvalues;
    let mut gamma = Array3::zeros((limit, limit, limit));
    for i in 0..limit {
        for j in 0..limit {
            // Gamma against the constant function vanishes identically;
            // write the exact zero instead of the rounding residue.
            if i == 0 || j == 0 {
                continue;
            }
            for s in 0..limit {
                gamma[[i, j, s]] = 0.5 * (lam[i] + lam[j] - lam[s]) * structure.c[[i, j, s]];
            }
        }
    }
    Ok(CarreTensor { gamma })
}

/// Coefficients of the pointwise product: `(f h)_k = sum_ij f_i h_j c_ijk`.
pub fn multiply(f: &Array1<f64>, h: &Array1<f64>, structure: &StructureTensor) -> Array1<f64> {
    let limit = structure.limit();
    let lf = f.len().min(limit);
    let lh = h.len().min(limit);
    let mut out = Array1::zeros(limit);
    for i in 0..lf {
        if f[i] == 0.0 {
            continue;
        }
        for j in 0..lh {
            if h[j] == 0.0 {
                continue;
            }
            let w = f[i] * h[j];
            for k in 0..limit {
                out[k] += w * structure.c[[i, j, k]];
            }
        }
    }
    out
}

/// Coefficients of `Gamma(f, h)` in the function basis.
pub fn carre_apply(f: &Array1<f64>, h: &Array1<f64>, carre: &CarreTensor) -> Array1<f64> {
    let limit = carre.limit();
    let lf = f.len().min(limit);
    let lh = h.len().min(limit);
    let mut out = Array1::zeros(limit);
    for i in 0..lf {
        if f[i] == 0.0 {
            continue;
        }
        for j in 0..lh {
            if h[j] == 0.0 {
                continue;
            }
            let w = f[i] * h[j];
            for s in 0..limit {
                out[s] += w * carre.gamma[[i, j, s]];
            }
        }
    }
    out
}

/// Per-point values of the function with the given coefficients.
pub fn eval(basis: &SpectralBasis, f: &Array1<f64>) -> Array1<f64> {
    let m = f.len().min(basis.n0());
    basis.phi.slice(ndarray::s![.., ..m]).dot(&f.slice(ndarray::s![..m]))
}

/// Density-weighted projection of per-point values onto the basis.
pub fn expand(basis: &SpectralBasis, values: &Array1<f64>) -> Array1<f64> {
    let n = basis.n as f64;
    let weighted: Array1<f64> = values
        .iter()
        .zip(basis.density.iter())
        .map(|(v, d)| v * d / n)
        .collect();
    basis.phi.t().dot(&weighted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::gen_circle;
    use crate::kernel::{build_markov, spectral_basis, KernelConfig};

    fn small_basis(n: usize, n0: usize) -> SpectralBasis {
        let pc = gen_circle(n, 1.0, 0.0, 13, false).unwrap();
        let op = build_markov(&pc, &KernelConfig::new(n0)).unwrap();
        spectral_basis(&op, n0).unwrap()
    }

    #[test]
    fn c_000_is_phi0() {
        let basis = small_basis(60, 6);
        let c = structure_constants(&basis, 6).unwrap();
        // phi_0 = 1, so c_000 = 1
        assert!((c.c[[0, 0, 0]] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn c_ij0_is_kronecker() {
        let basis = small_basis(60, 6);
        let c = structure_constants(&basis, 6).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((c.c[[i, j, 0]] - expected).abs() < 1e-8, "c[{i}{j}0]");
            }
        }
    }

    #[test]
    fn matches_brute_force_triple_loop() {
        let basis = small_basis(50, 6);
        let c = structure_constants(&basis, 6).unwrap();
        let n = basis.n;
        for i in 0..6 {
            for j in 0..6 {
                for k in 0..6 {
                    let mut acc = 0.0;
                    for s in 0..n {
                        acc += basis.phi[[s, i]] * basis.phi[[s, j]] * basis.phi[[s, k]] * basis.density[s];
                    }
                    acc /= n as f64;
                    assert!((acc - c.c[[i, j, k]]).abs() < 1e-13, "c[{i}{j}{k}]");
                }
            }
        }
    }

    #[test]
    fn permutation_symmetry_exact() {
        let basis = small_basis(50, 6);
        let c = structure_constants(&basis, 6).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                for k in 0..6 {
                    assert_eq!(c.c[[i, j, k]], c.c[[j, i, k]]);
                    assert_eq!(c.c[[i, j, k]], c.c[[k, j, i]]);
                }
            }
        }
    }

    #[test]
    fn limit_exceeding_basis_rejected() {
        let basis = small_basis(30, 5);
        assert!(structure_constants(&basis, 6).is_err());
    }

    #[test]
    fn gamma_identities() {
        let basis = small_basis(80, 8);
        let c = structure_constants(&basis, 8).unwrap();
        let g = carre_tensor(&basis, &c).unwrap();
        // Gamma symmetric in (i, j) exactly
        for i in 0..8 {
            for j in 0..8 {
                for s in 0..8 {
                    assert_eq!(g.gamma[[i, j, s]], g.gamma[[j, i, s]]);
                }
            }
        }
        // Gamma(const, .) = 0
        for j in 0..8 {
            for s in 0..8 {
                assert!(g.gamma[[0, j, s]].abs() < 1e-8, "Gamma[0,{j},{s}]");
            }
        }
        // Gamma_ij0 = phi0 lambda_i delta_ij
        for i in 0..8 {
            for j in 0..8 {
                let expected = if i == j { basis.eigenvalues[i] } else { 0.0 };
                assert!(
                    (g.gamma[[i, j, 0]] - expected).abs() < 1e-8 * (1.0 + basis.eigenvalues[i]),
                    "Gamma[{i},{j},0]"
                );
            }
        }
    }

    #[test]
    fn carre_matches_generator_oracle_full_basis() {
        // With the full basis the tensor route and the operator route
        // 1/2 (f Lh + h Lf - L(fh)) agree to rounding.
        let n = 60;
        let basis = small_basis(n, n);
        let c = structure_constants(&basis, n).unwrap();
        let g = carre_tensor(&basis, &c).unwrap();

        let mut f = Array1::zeros(n);
        let mut h = Array1::zeros(n);
        f[1] = 1.0;
        f[3] = 0.4;
        h[2] = 0.7;
        h[1] = -0.2;

        let tensor_route = eval(&basis, &carre_apply(&f, &h, &g));

        // operator route on value vectors, using L phi_i = lambda_i phi_i
        let fv = eval(&basis, &f);
        let hv = eval(&basis, &h);
        let lf = eval(&basis, &(&f * &basis.eigenvalues));
        let lh = eval(&basis, &(&h * &basis.eigenvalues));
        let fh = expand(&basis, &(&fv * &hv));
        let lfh = eval(&basis, &(&fh * &basis.eigenvalues));
        let oracle: Array1<f64> = (0..n).map(|s| 0.5 * (fv[s] * lh[s] + hv[s] * lf[s] - lfh[s])).collect();

        let scale = oracle.iter().map(|x| x.abs()).fold(0.0f64, f64::max);
        for s in 0..n {
            assert!(
                (tensor_route[s] - oracle[s]).abs() <= 1e-6 * scale,
                "point {s}: {} vs {}",
                tensor_route[s],
                oracle[s]
            );
        }
    }

    #[test]
    fn multiply_unit_and_zero() {
        let basis = small_basis(60, 8);
        let c = structure_constants(&basis, 8).unwrap();
        let mut e0 = Array1::zeros(8);
        e0[0] = 1.0;
        let mut h = Array1::zeros(8);
        h[2] = 0.5;
        h[4] = -1.5;
        let prod = multiply(&e0, &h, &c);
        for k in 0..8 {
            assert!((prod[k] - h[k]).abs() < 1e-7, "unit multiply at {k}");
        }
        let zero = Array1::zeros(8);
        assert!(multiply(&h, &zero, &c).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn multiply_matches_pointwise_on_circle() {
        let n = 100;
        let n0 = 30;
        let basis = small_basis(n, n0);
        let c = structure_constants(&basis, n0).unwrap();
        // x-coordinate on the circle
        let pc = gen_circle(n, 1.0, 0.0, 13, false).unwrap();
        let x = expand(&basis, &pc.points.column(0).to_owned());
        let via_algebra = eval(&basis, &multiply(&x, &x, &c));
        let direct = eval(&basis, &x).mapv(|v| v * v);
        // compare in weighted L2
        let diff: f64 = basis.inner(&(&via_algebra - &direct), &(&via_algebra - &direct)).sqrt();
        let norm: f64 = basis.inner(&direct, &direct).sqrt();
        assert!(diff / norm <= 0.05, "relative multiply error {}", diff / norm);
    }

    #[test]
    fn expand_eval_identity_on_span() {
        let basis = small_basis(70, 10);
        let mut f = Array1::zeros(10);
        f[0] = 0.3;
        f[4] = -1.1;
        f[9] = 2.0;
        let back = expand(&basis, &eval(&basis, &f));
        for k in 0..10 {
            assert!((back[k] - f[k]).abs() <= 1e-10, "coefficient {k}");
        }
        // eval of e_0 is the constant function
        let mut e0 = Array1::zeros(10);
        e0[0] = 1.0;
        let v = eval(&basis, &e0);
        assert!(v.iter().all(|&x| (x - v[0]).abs() < 1e-12));
    }

    #[test]
    fn coordinate_reconstruction_improves_with_n0() {
        let n = 120;
        let pc = gen_circle(n, 1.0, 0.0, 13, false).unwrap();
        let op = build_markov(&pc, &KernelConfig::new(n)).unwrap();
        let basis = spectral_basis(&op, n).unwrap();
        let xvals = pc.points.column(0).to_owned();
        let coeffs = expand(&basis, &xvals);
        let err_at = |m: usize| -> f64 {
            let truncated = coeffs.slice(ndarray::s![..m]).to_owned();
            let rec = eval(&basis, &truncated);
            (&rec - &xvals).mapv(|d| d * d).sum().sqrt()
        };
        assert!(err_at(20) < err_at(5));
        assert!(err_at(60) < err_at(20));
    }

    #[test]
    fn gamma_positivity_up_to_truncation() {
        let basis = small_basis(90, 10);
        let c = structure_constants(&basis, 10).unwrap();
        let g = carre_tensor(&basis, &c).unwrap();
        let mut f = Array1::zeros(10);
        f[1] = 0.8;
        f[2] = -0.5;
        f[3] = 0.3;
        let vals = eval(&basis, &carre_apply(&f, &f, &g));
        let max = vals.iter().map(|x| x.abs()).fold(0.0f64, f64::max);
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min >= -1e-6 * max, "Gamma(f,f) dipped to {min} (scale {max})");
    }

    #[test]
    fn chain_rule_spot_check() {
        // Gamma(f^2, h) ~ 2 f Gamma(f, h) within 5% relative L2
        let n = 150;
        let n0 = 25;
        let basis = small_basis(n, n0);
        let c = structure_constants(&basis, n0).unwrap();
        let g = carre_tensor(&basis, &c).unwrap();
        let mut f = Array1::zeros(n0);
        let mut h = Array1::zeros(n0);
        f[1] = 1.0;
        h[2] = 1.0;
        let f2 = multiply(&f, &f, &c);
        let lhs = eval(&basis, &carre_apply(&f2, &h, &g));
        let fv = eval(&basis, &f);
        let rhs_vals = eval(&basis, &carre_apply(&f, &h, &g));
        let rhs: Array1<f64> = (0..n).map(|s| 2.0 * fv[s] * rhs_vals[s]).collect();
        let num = basis.inner(&(&lhs - &rhs), &(&lhs - &rhs)).sqrt();
        let den = basis.inner(&rhs, &rhs).sqrt();
        assert!(num / den <= 0.05, "chain rule residual {}", num / den);
    }
}
