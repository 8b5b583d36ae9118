//! Frames for k-forms built from eigenfunction products, their Gram
//! matrices, rank projectors, and pseudo-inverses. A k-form is a coefficient
//! vector against the (generally redundant) frame phi_{i0} dphi_{j1} ^ ... ^
//! dphi_{jk}; the Gram null space realizes the quotient by degenerate
//! directions.

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{multiply, CarreTensor, StructureTensor};
use crate::error::{Error, Result};
use crate::linalg::sym_eigh;

/// Relative eigenvalue threshold separating the positive-definite part of a
/// Gram matrix from its null space.
pub const DEFAULT_TAU: f64 = 1e-8;

/// Refuse Gram assemblies predicted to need more than this many bytes.
pub const DEFAULT_MEMORY_BUDGET: usize = 2 << 30;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationConfig {
    /// Function-basis size.
    pub n0: usize,
    /// Coefficient-index limit (the i0 of a frame element).
    pub n1: usize,
    /// Differential-index limit (the wedge factors).
    pub n2: usize,
}

impl TruncationConfig {
    pub fn new(n0: usize, n1: usize, n2: usize) -> Self {
        TruncationConfig { n0, n1, n2 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n0 == 0 || self.n1 == 0 {
            return Err(Error::invalid("n0 and n1 must be positive"));
        }
        if self.n1 > self.n0 || self.n2 >= self.n0 {
            return Err(Error::invalid(format!(
                "truncation requires n1 <= n0 and n2 < n0 (wedge factors skip the \
                 constant, so the largest wedge index is n2; got n0={}, n1={}, n2={})",
                self.n0, self.n1, self.n2
            )));
        }
        Ok(())
    }
}

/// One frame element: `phi_base dphi_{wedge[0]} ^ ... ^ dphi_{wedge[k-1]}`
/// with strictly increasing wedge indices. Degree 0 elements are plain basis
/// functions (`wedge` empty, `base` ranging over the full function basis).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameIndex {
    pub base: usize,
    pub wedge: Vec<usize>,
}

/// Lexicographically ordered frame for degree k. Degree 0 uses the first n0
/// basis indices; higher degrees use base < n1 and wedge factors drawn from
/// the first n2 non-constant basis functions (indices 1..=n2 — the constant
/// has vanishing differential and would only add null frame directions) with
/// strictly increasing wedge indices, so the frame has n1 * C(n2, k)
/// elements.
pub fn build_frame(k: usize, cfg: &TruncationConfig) -> Result<Vec<FrameIndex>> {
    cfg.validate()?;
    if k > cfg.n2 {
        return Err(Error::invalid(format!("degree {k} exceeds n2 = {}", cfg.n2)));
    }
    if k == 0 {
        return Ok((0..cfg.n0).map(|i| FrameIndex { base: i, wedge: vec![] }).collect());
    }
    let mut combos: Vec<Vec<usize>> = Vec::new();
    let mut current = Vec::with_capacity(k);
    fn rec(start: usize, k: usize, n2: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for j in start..=n2 {
            current.push(j);
            rec(j + 1, k, n2, current, out);
            current.pop();
        }
    }
    rec(1, k, cfg.n2, &mut current, &mut combos);
    let mut frame = Vec::with_capacity(cfg.n1 * combos.len());
    for i0 in 0..cfg.n1 {
        for combo in &combos {
            frame.push(FrameIndex { base: i0, wedge: combo.clone() });
        }
    }
    Ok(frame)
}

fn check_budget(bytes: usize, budget: usize) -> Result<()> {
    if bytes > budget {
        Err(Error::ResourceLimit { required: bytes, budget })
    } else {
        Ok(())
    }
}

/// Gram matrix of a degree-k frame:
/// `G_IJ = sum_{s_1..s_k} M_{i0 j0 s_1..s_k} det((Gamma_{i_n j_m s_m})_{n,m})`
/// where M is the multi-moment of the base functions, contracted as nested
/// triple products. Dummy indices run over the tensor limit.
pub fn gram(
    k: usize,
    frame: &[FrameIndex],
    carre: &CarreTensor,
    structure: &StructureTensor,
    budget: usize,
) -> Result<Array2<f64>> {
    let n0 = structure.limit();
    if carre.limit() != n0 {
        return Err(Error::invalid("structure and carre tensors disagree on size"));
    }
    for idx in frame {
        if idx.wedge.len() != k {
            return Err(Error::invalid("frame element degree mismatch"));
        }
        if idx.base >= n0 || idx.wedge.iter().any(|&j| j >= n0) {
            return Err(Error::invalid("frame index outside tensor range"));
        }
    }
    let n = frame.len();
    let bytes = n
        .checked_mul(n)
        .and_then(|x| x.checked_mul(8))
        .ok_or_else(|| Error::invalid("frame too large"))?;
    check_budget(bytes + 8 * n0 * n0, budget)?;

    let mut g = Array2::zeros((n, n));
    match k {
        0 => {
            for (a, fi) in frame.iter().enumerate() {
                for (b, fj) in frame.iter().enumerate() {
                    g[[a, b]] = structure.c[[fi.base, fj.base, 0]];
                }
            }
        }
        1 => {
            g.outer_iter_mut().into_par_iter().enumerate().for_each(|(a, mut row)| {
                let (i0, i1) = (frame[a].base, frame[a].wedge[0]);
                for b in 0..n {
                    let (j0, j1) = (frame[b].base, frame[b].wedge[0]);
                    let mut acc = 0.0;
                    for s in 0..n0 {
                        acc += structure.c[[i0, j0, s]] * carre.gamma[[i1, j1, s]];
                    }
                    row[b] = acc;
                }
            });
        }
        2 => {
            // M4[s,t] = sum_u c[i0,j0,u] c[u,s,t], the moment of
            // phi_i0 phi_j0 phi_s phi_t, reused across the wedge block.
            let pairs: Vec<(usize, usize)> = {
                let mut v = vec![];
                let n1max = frame.iter().map(|f| f.base).max().unwrap_or(0) + 1;
                for i in 0..n1max {
                    for j in 0..n1max {
                        v.push((i, j));
                    }
                }
                v
            };
            let n1max = frame.iter().map(|f| f.base).max().unwrap_or(0) + 1;
            check_budget(bytes + 8 * n1max * n1max * n0 * n0, budget)?;
            let moments: Vec<Array2<f64>> = pairs
                .par_iter()
                .map(|&(i0, j0)| {
                    let mut m = Array2::zeros((n0, n0));
                    for u in 0..n0 {
                        let w = structure.c[[i0, j0, u]];
                        if w == 0.0 {
                            continue;
                        }
                        for s in 0..n0 {
                            for t in 0..n0 {
                                m[[s, t]] += w * structure.c[[u, s, t]];
                            }
                        }
                    }
                    m
                })
                .collect();
            g.outer_iter_mut().into_par_iter().enumerate().for_each(|(a, mut row)| {
                let (i0, i1, i2) = (frame[a].base, frame[a].wedge[0], frame[a].wedge[1]);
                for b in 0..n {
                    let (j0, j1, j2) = (frame[b].base, frame[b].wedge[0], frame[b].wedge[1]);
                    let m4 = &moments[i0 * n1max + j0];
                    let mut acc = 0.0;
                    for s in 0..n0 {
                        for t in 0..n0 {
                            let det = carre.gamma[[i1, j1, s]] * carre.gamma[[i2, j2, t]]
                                - carre.gamma[[i2, j1, s]] * carre.gamma[[i1, j2, t]];
                            acc += m4[[s, t]] * det;
                        }
                    }
                    row[b] = acc;
                }
            });
        }
        _ => {
            // general degree: permutation expansion through the algebra,
            // G_IJ = sum_sigma sgn(sigma) [c(i0 j0) * Gamma(..) * ...]_0
            let perms = permutations(k);
            g.outer_iter_mut().into_par_iter().enumerate().for_each(|(a, mut row)| {
                for b in 0..n {
                    row[b] = gram_entry_generic(&frame[a], &frame[b], carre, structure, &perms);
                }
            });
        }
    }
    // enforce exact symmetry against rounding in the parallel assembly
    for a in 0..n {
        for b in 0..a {
            let avg = 0.5 * (g[[a, b]] + g[[b, a]]);
            g[[a, b]] = avg;
            g[[b, a]] = avg;
        }
    }
    Ok(g)
}

fn permutations(k: usize) -> Vec<(Vec<usize>, f64)> {
    let mut out = vec![(vec![], 1.0)];
    for _ in 0..k {
        let mut next = Vec::new();
        for (p, sign) in &out {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, p.len());
                // each shift from the end flips the sign
                let flips = p.len() - pos;
                next.push((q, sign * if flips % 2 == 0 { 1.0 } else { -1.0 }));
            }
        }
        out = next;
    }
    out
}

fn gram_entry_generic(
    fi: &FrameIndex,
    fj: &FrameIndex,
    carre: &CarreTensor,
    structure: &StructureTensor,
    perms: &[(Vec<usize>, f64)],
) -> f64 {
    let n0 = structure.limit();
    let base: Array1<f64> = (0..n0).map(|s| structure.c[[fi.base, fj.base, s]]).collect();
    let mut acc = 0.0;
    for (perm, sign) in perms {
        let mut p = base.clone();
        for (m, &pm) in perm.iter().enumerate() {
            let gcoef: Array1<f64> =
                (0..n0).map(|s| carre.gamma[[fi.wedge[pm], fj.wedge[m], s]]).collect();
            p = multiply(&p, &gcoef, structure);
        }
        acc += sign * p[0];
    }
    acc
}

/// Spectral projector onto the positive-definite part of a Gram matrix.
/// Keeps eigenvalues above `tau * lambda_max`; returns the kept eigenvectors
/// as rows plus the reciprocal eigenvalues.
pub fn projector(g: &Array2<f64>, tau: f64) -> Result<(Array2<f64>, Array1<f64>)> {
    projector_with_floor(g, tau, 0.0)
}

/// `projector` with an additional absolute eigenvalue floor: eigenvalues
/// must exceed both `tau * lambda_max` and `floor`.
pub fn projector_with_floor(
    g: &Array2<f64>,
    tau: f64,
    floor: f64,
) -> Result<(Array2<f64>, Array1<f64>)> {
    let n = g.nrows();
    let (vals, vecs) = sym_eigh(g)?;
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max <= 0.0 {
        return Err(Error::DegenerateSpace("Gram matrix has no positive eigenvalues".into()));
    }
    let cut = (tau * max).max(floor);
    let kept: Vec<usize> = (0..n).filter(|&i| vals[i] > cut).collect();
    if kept.is_empty() {
        return Err(Error::DegenerateSpace("all Gram eigenvalues below threshold".into()));
    }
    let r = kept.len();
    let mut p = Array2::zeros((r, n));
    let mut dinv = Array1::zeros(r);
    for (row, &i) in kept.iter().enumerate() {
        dinv[row] = 1.0 / vals[i];
        for s in 0..n {
            p[[row, s]] = vecs[[s, i]];
        }
    }
    Ok((p, dinv))
}

/// A k-form frame with its Gram matrix and pseudo-inverse data. Forms are
/// coefficient vectors of length `dim()` against `indices`.
#[derive(Debug, Clone)]
pub struct FormSpace {
    pub degree: usize,
    pub indices: Vec<FrameIndex>,
    pub gram: Array2<f64>,
    pub tau: f64,
    /// r x N rows spanning the positive-definite subspace.
    pub projector: Array2<f64>,
    /// Reciprocals of the kept Gram eigenvalues.
    pub dinv: Array1<f64>,
}

impl FormSpace {
    pub fn build(
        degree: usize,
        cfg: &TruncationConfig,
        carre: &CarreTensor,
        structure: &StructureTensor,
        tau: f64,
        budget: usize,
    ) -> Result<FormSpace> {
        let indices = build_frame(degree, cfg)?;
        let g = gram(degree, &indices, carre, structure, budget)?;
        let (p, dinv) = projector(&g, tau)?;
        Ok(FormSpace { degree, indices, gram: g, tau, projector: p, dinv })
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    pub fn rank(&self) -> usize {
        self.dinv.len()
    }

    /// Moore-Penrose action `G^+ w = P^T diag(dinv) P w`.
    pub fn pinv_apply(&self, w: &Array1<f64>) -> Array1<f64> {
        let mut mid = self.projector.dot(w);
        for (x, d) in mid.iter_mut().zip(self.dinv.iter()) {
            *x *= d;
        }
        self.projector.t().dot(&mid)
    }

    /// The frame inner product `v^T G w`.
    pub fn inner(&self, v: &Array1<f64>, w: &Array1<f64>) -> f64 {
        v.dot(&self.gram.dot(w))
    }

    pub fn norm(&self, v: &Array1<f64>) -> f64 {
        self.inner(v, v).max(0.0).sqrt()
    }

    /// Projection of a coefficient vector onto the positive-definite
    /// subspace (drops the null-space component).
    pub fn project(&self, v: &Array1<f64>) -> Array1<f64> {
        self.projector.t().dot(&self.projector.dot(v))
    }
}

/// Coefficients of a k-form against its frame.
#[derive(Debug, Clone)]
pub struct FormCoeffs {
    pub degree: usize,
    pub v: Array1<f64>,
}

impl FormCoeffs {
    pub fn new(degree: usize, v: Array1<f64>) -> Self {
        FormCoeffs { degree, v }
    }

    pub fn zero(degree: usize, dim: usize) -> Self {
        FormCoeffs { degree, v: Array1::zeros(dim) }
    }
}
