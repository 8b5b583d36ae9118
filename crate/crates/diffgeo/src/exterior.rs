//! Exterior calculus on the frame spaces: pointwise metric, wedge product,
//! weak and strong exterior derivative, codifferential, musical
//! isomorphisms, interior product, and vector-field action.

use std::collections::HashMap;

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::algebra::{multiply, CarreTensor, StructureTensor};
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::frames::{FormCoeffs, FrameIndex};

/// A vector field as its action matrix on the function basis: column l
/// holds the coefficients of X(phi_l). Fields built from an (n1, n2) frame
/// are zero outside that block; the full square shape is kept so fields
/// compose (Lie brackets need a common shape).
#[derive(Debug, Clone)]
pub struct VectorFieldMatrix {
    pub x: Array2<f64>,
}

impl VectorFieldMatrix {
    pub fn zero(n0: usize) -> Self {
        VectorFieldMatrix { x: Array2::zeros((n0, n0)) }
    }
}

/// Matrix of `<alpha_I, d alpha_J>` between consecutive frame degrees.
#[derive(Debug, Clone)]
pub struct WeakOperator {
    /// (k, k + 1): domain and codomain degrees.
    pub degrees: (usize, usize),
    pub matrix: Array2<f64>,
}

fn frame_positions(indices: &[FrameIndex]) -> HashMap<(usize, Vec<usize>), usize> {
    indices
        .iter()
        .enumerate()
        .map(|(pos, f)| ((f.base, f.wedge.clone()), pos))
        .collect()
}

fn permutations(k: usize) -> Vec<(Vec<usize>, f64)> {
    let mut out = vec![(vec![], 1.0)];
    for _ in 0..k {
        let mut next = Vec::new();
        for (p, sign) in &out {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, p.len());
                let flips = p.len() - pos;
                next.push((q, sign * if flips % 2 == 0 { 1.0 } else { -1.0 }));
            }
        }
        out = next;
    }
    out
}

fn gamma_coeffs(carre: &CarreTensor, a: usize, b: usize) -> Array1<f64> {
    let n0 = carre.limit();
    (0..n0).map(|s| carre.gamma[[a, b, s]]).collect()
}

/// Function coefficients of the pointwise metric of one frame pair,
/// `g(alpha_I, alpha_J)`: the base product expanded through c, times the
/// determinant of carre-du-champ functions, contracted as nested triple
/// products.
fn metric_pair_coeffs(
    fi: &FrameIndex,
    fj: &FrameIndex,
    carre: &CarreTensor,
    structure: &StructureTensor,
    perms: &[(Vec<usize>, f64)],
) -> Array1<f64> {
    let n0 = structure.limit();
    let base: Array1<f64> = (0..n0).map(|s| structure.c[[fi.base, fj.base, s]]).collect();
    if fi.wedge.is_empty() {
        return base;
    }
    let mut acc = Array1::zeros(n0);
    for (perm, sign) in perms {
        let mut p = base.clone();
        for (m, &pm) in perm.iter().enumerate() {
            p = multiply(&p, &gamma_coeffs(carre, fi.wedge[pm], fj.wedge[m]), structure);
        }
        acc = acc + p.mapv(|x| x * *sign);
    }
    acc
}

/// Coefficients of the function `g(alpha, beta)` for two forms of equal
/// degree.
pub fn metric_pointwise(
    engine: &Engine,
    alpha: &FormCoeffs,
    beta: &FormCoeffs,
) -> Result<Array1<f64>> {
    if alpha.degree != beta.degree {
        return Err(Error::invalid("metric_pointwise: degree mismatch"));
    }
    let space = engine.space(alpha.degree)?;
    if alpha.v.len() != space.dim() || beta.v.len() != space.dim() {
        return Err(Error::invalid("metric_pointwise: coefficient length mismatch"));
    }
    let perms = permutations(alpha.degree);
    let n0 = engine.limit();
    let rows: Vec<Array1<f64>> = space
        .indices
        .par_iter()
        .enumerate()
        .map(|(a, fi)| {
            let mut acc = Array1::zeros(n0);
            if alpha.v[a] == 0.0 {
                return acc;
            }
            for (b, fj) in space.indices.iter().enumerate() {
                if beta.v[b] == 0.0 {
                    continue;
                }
                let pair = metric_pair_coeffs(fi, fj, &engine.carre, &engine.structure, &perms);
                acc = acc + pair.mapv(|x| x * alpha.v[a] * beta.v[b]);
            }
            acc
        })
        .collect();
    let mut out = Array1::zeros(n0);
    for r in rows {
        out = out + r;
    }
    Ok(out)
}

/// Wedge product of a k-form and an l-form as a (k + l)-form. Product base
/// functions are re-expanded through c; repeated wedge indices drop out and
/// the rest are sorted into increasing order with sign.
pub fn wedge(engine: &Engine, alpha: &FormCoeffs, beta: &FormCoeffs) -> Result<FormCoeffs> {
    let k = alpha.degree;
    let l = beta.degree;
    let target = k + l;
    if target > engine.trunc.n2 {
        return Err(Error::invalid(format!(
            "wedge degree {target} exceeds n2 = {}",
            engine.trunc.n2
        )));
    }
    let sa = engine.space(k)?;
    let sb = engine.space(l)?;
    let st = engine.space(target)?;
    let lookup = frame_positions(&st.indices);
    let n1 = engine.trunc.n1;
    let mut out = Array1::zeros(st.dim());

    for (a, fi) in sa.indices.iter().enumerate() {
        if alpha.v[a] == 0.0 {
            continue;
        }
        for (b, fj) in sb.indices.iter().enumerate() {
            if beta.v[b] == 0.0 {
                continue;
            }
            let mut combined: Vec<usize> = Vec::with_capacity(target);
            combined.extend_from_slice(&fi.wedge);
            combined.extend_from_slice(&fj.wedge);
            let Some((sorted, sign)) = sort_with_sign(&combined) else {
                continue; // repeated differential: term vanishes
            };
            let weight = alpha.v[a] * beta.v[b] * sign;
            if target == 0 {
                // plain function product over the full basis
                let prod: Array1<f64> =
                    (0..engine.limit()).map(|s| engine.structure.c[[fi.base, fj.base, s]]).collect();
                for s in 0..engine.limit() {
                    out[s] += weight * prod[s];
                }
            } else {
                let base_limit = n1;
                for s in 0..base_limit {
                    let c = engine.structure.c[[fi.base, fj.base, s]];
                    if c == 0.0 {
                        continue;
                    }
                    if let Some(&pos) = lookup.get(&(s, sorted.clone())) {
                        out[pos] += weight * c;
                    }
                }
            }
        }
    }
    Ok(FormCoeffs::new(target, out))
}

/// Sorts wedge indices into increasing order; None when an index repeats.
fn sort_with_sign(indices: &[usize]) -> Option<(Vec<usize>, f64)> {
    let mut v = indices.to_vec();
    let mut sign = 1.0;
    // insertion sort, counting swaps
    for i in 1..v.len() {
        let mut j = i;
        while j > 0 && v[j - 1] > v[j] {
            v.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
    }
    for w in v.windows(2) {
        if w[0] == w[1] {
            return None;
        }
    }
    Some((v, sign))
}

/// Weak exterior derivative from degree k: the matrix of
/// `<alpha_I^{k+1}, d alpha_J^k>`, with the derivative of a frame element
/// `phi dh_1 ^ ... ^ dh_k` being `dphi ^ dh_1 ^ ... ^ dh_k`.
pub fn ext_derivative_weak(
    k: usize,
    lower: &[FrameIndex],
    upper: &[FrameIndex],
    carre: &CarreTensor,
    structure: &StructureTensor,
) -> Result<WeakOperator> {
    let n0 = structure.limit();
    let rows = upper.len();
    let cols = lower.len();
    let mut d = Array2::zeros((rows, cols));
    match k {
        0 => {
            for (a, fi) in upper.iter().enumerate() {
                let (i0, i1) = (fi.base, fi.wedge[0]);
                for (b, fj) in lower.iter().enumerate() {
                    d[[a, b]] = carre.gamma[[i1, fj.base, i0]];
                }
            }
        }
        1 => {
            d.outer_iter_mut().into_par_iter().enumerate().for_each(|(a, mut row)| {
                let (i0, i1, i2) = (upper[a].base, upper[a].wedge[0], upper[a].wedge[1]);
                for (b, fj) in lower.iter().enumerate() {
                    let (j0, j1) = (fj.base, fj.wedge[0]);
                    let mut acc = 0.0;
                    for s in 0..n0 {
                        let g1 = carre.gamma[[i1, j0, s]];
                        let g2 = carre.gamma[[i2, j0, s]];
                        if g1 == 0.0 && g2 == 0.0 {
                            continue;
                        }
                        for t in 0..n0 {
                            let c = structure.c[[i0, s, t]];
                            if c == 0.0 {
                                continue;
                            }
                            acc += c
                                * (g1 * carre.gamma[[i2, j1, t]] - g2 * carre.gamma[[i1, j1, t]]);
                        }
                    }
                    row[b] = acc;
                }
            });
        }
        _ => {
            let perms = permutations(k + 1);
            d.outer_iter_mut().into_par_iter().enumerate().for_each(|(a, mut row)| {
                let fi = &upper[a];
                for (b, fj) in lower.iter().enumerate() {
                    // the derivative side contributes (j0, j1, .., jk)
                    let mut jlist = Vec::with_capacity(k + 1);
                    jlist.push(fj.base);
                    jlist.extend_from_slice(&fj.wedge);
                    let mut acc = 0.0;
                    for (perm, sign) in &perms {
                        let mut p = Array1::zeros(n0);
                        p[fi.base] = 1.0;
                        for (m, &pm) in perm.iter().enumerate() {
                            p = multiply(&p, &gamma_coeffs(carre, fi.wedge[pm], jlist[m]), structure);
                        }
                        acc += sign * p[0];
                    }
                    row[b] = acc;
                }
            });
        }
    }
    Ok(WeakOperator { degrees: (k, k + 1), matrix: d })
}

/// Strong exterior derivative: pseudo-inverse of the weak image.
pub fn ext_derivative(engine: &Engine, v: &FormCoeffs) -> Result<FormCoeffs> {
    let k = v.degree;
    let upper = engine.space(k + 1)?;
    let weak = engine.weak_d(k)?;
    let w = weak.dot(&v.v);
    Ok(FormCoeffs::new(k + 1, upper.pinv_apply(&w)))
}

/// Codifferential: adjoint of d, `(G^{k-1})^+ dtilde^T`.
pub fn codifferential(engine: &Engine, v: &FormCoeffs) -> Result<FormCoeffs> {
    let k = v.degree;
    if k == 0 {
        return Err(Error::invalid("codifferential of a 0-form"));
    }
    let lower = engine.space(k - 1)?;
    let weak = engine.weak_d(k - 1)?;
    let w = weak.t().dot(&v.v);
    Ok(FormCoeffs::new(k - 1, lower.pinv_apply(&w)))
}

/// Dual vector field of a 1-form: `G^1 v` reshaped into the action matrix.
pub fn sharp(engine: &Engine, v: &FormCoeffs) -> Result<VectorFieldMatrix> {
    if v.degree != 1 {
        return Err(Error::invalid("sharp expects a 1-form"));
    }
    let space = engine.space(1)?;
    let gv = space.gram.dot(&v.v);
    let n0 = engine.limit();
    let mut x = Array2::zeros((n0, n0));
    for (pos, f) in space.indices.iter().enumerate() {
        x[[f.base, f.wedge[0]]] = gv[pos];
    }
    Ok(VectorFieldMatrix { x })
}

/// Dual 1-form of a vector field: restrict the matrix to the frame block
/// and apply the Gram pseudo-inverse.
pub fn flat(engine: &Engine, field: &VectorFieldMatrix) -> Result<FormCoeffs> {
    let space = engine.space(1)?;
    let mut w = Array1::zeros(space.dim());
    for (pos, f) in space.indices.iter().enumerate() {
        w[pos] = field.x[[f.base, f.wedge[0]]];
    }
    Ok(FormCoeffs::new(1, space.pinv_apply(&w)))
}

/// Action of a vector field on a function, `X(f)`.
pub fn vf_apply(field: &VectorFieldMatrix, f: &Array1<f64>) -> Array1<f64> {
    field.x.dot(f)
}

/// Pointwise pairing of a 1-form with a vector field, `alpha(X)`, as function
/// coefficients. Expands `alpha(X) = sum_I v_I phi_b X(phi_w)` directly from
/// the field's action matrix, so no pseudo-inverse is involved; this keeps the
/// evaluation stable even when X (for example a Lie bracket) has substantial
/// content outside the well-conditioned part of the frame.
pub fn form_field_pairing(
    engine: &Engine,
    alpha: &FormCoeffs,
    field: &VectorFieldMatrix,
) -> Result<Array1<f64>> {
    if alpha.degree != 1 {
        return Err(Error::invalid("form_field_pairing expects a 1-form"));
    }
    let space = engine.space(1)?;
    if alpha.v.len() != space.dim() {
        return Err(Error::invalid("form_field_pairing: coefficient length mismatch"));
    }
    let n0 = engine.limit();
    let mut out = Array1::zeros(n0);
    for (pos, fr) in space.indices.iter().enumerate() {
        let v = alpha.v[pos];
        if v == 0.0 {
            continue;
        }
        let xw: Array1<f64> = field.x.column(fr.wedge[0]).to_owned();
        let mut eb = Array1::zeros(n0);
        eb[fr.base] = 1.0;
        let prod = crate::algebra::multiply(&eb, &xw, &engine.structure);
        out = out + prod.mapv(|p| p * v);
    }
    Ok(out)
}

/// Gradient field of a function, `(df)^sharp`.
pub fn gradient(engine: &Engine, f: &Array1<f64>) -> Result<VectorFieldMatrix> {
    let df = ext_derivative(engine, &FormCoeffs::new(0, f.clone()))?;
    sharp(engine, &df)
}

/// Interior product `i_X alpha` by the frame recursion: each wedge factor
/// dh_m is consumed into the function X(h_m) with alternating sign.
pub fn interior_product(
    engine: &Engine,
    field: &VectorFieldMatrix,
    alpha: &FormCoeffs,
) -> Result<FormCoeffs> {
    let k = alpha.degree;
    if k == 0 {
        return Err(Error::invalid("interior product of a 0-form"));
    }
    let source = engine.space(k)?;
    let target = engine.space(k - 1)?;
    let lookup = frame_positions(&target.indices);
    let n0 = engine.limit();
    let n1 = engine.trunc.n1;
    let mut out = Array1::zeros(target.dim());

    for (a, fi) in source.indices.iter().enumerate() {
        if alpha.v[a] == 0.0 {
            continue;
        }
        let mut base = Array1::zeros(n0);
        base[fi.base] = 1.0;
        for (t, &m) in fi.wedge.iter().enumerate() {
            let sign = if t % 2 == 0 { 1.0 } else { -1.0 };
            let xcol: Array1<f64> = field.x.column(m).to_owned();
            // f * X(h_m) as function coefficients
            let q = multiply(&base, &xcol, &engine.structure);
            let remaining: Vec<usize> =
                fi.wedge.iter().enumerate().filter(|&(i, _)| i != t).map(|(_, &w)| w).collect();
            if k == 1 {
                for s in 0..n0 {
                    out[s] += alpha.v[a] * sign * q[s];
                }
            } else {
                for s in 0..n1 {
                    if q[s] == 0.0 {
                        continue;
                    }
                    if let Some(&pos) = lookup.get(&(s, remaining.clone())) {
                        out[pos] += alpha.v[a] * sign * q[s];
                    }
                }
            }
        }
    }
    Ok(FormCoeffs::new(k - 1, out))
}
