//! The k-Hodge Laplacian: up-energy by the kernel trick, down term from
//! the lower-degree weak derivative, regularized Galerkin eigensolve,
//! harmonic forms, Betti estimates, Hodge decomposition, and cup products.

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::algebra::multiply;
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::exterior::{codifferential, ext_derivative, wedge};
use crate::frames::FormCoeffs;
use crate::linalg::sym_eigh;

/// Relative scale of the default regularizer.
pub const DEFAULT_EPSILON_SCALE: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct HodgeOperator {
    pub degree: usize,
    /// `<d alpha_I, d alpha_J>`.
    pub up: Array2<f64>,
    /// `<del alpha_I, del alpha_J>`, zero for degree 0.
    pub down: Array2<f64>,
    /// Weak Laplacian, up + down.
    pub weak: Array2<f64>,
    /// Sobolev Gram `G + weak`.
    pub sobolev: Array2<f64>,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct HodgeSpectrum {
    /// Ascending, clipped at zero.
    pub eigenvalues: Array1<f64>,
    /// G-normalized eigenforms, one per eigenvalue.
    pub eigenforms: Vec<FormCoeffs>,
    pub epsilon: f64,
    /// Set when fewer pairs than requested were available.
    pub truncated: bool,
}

/// Rule reading Betti numbers off the spectrum: the largest relative gap
/// within the first `window` eigenvalues, accepted when it exceeds
/// `min_ratio`.
#[derive(Debug, Clone, Copy)]
pub struct GapRule {
    pub window: usize,
    pub min_ratio: f64,
}

impl Default for GapRule {
    fn default() -> Self {
        GapRule { window: 8, min_ratio: 5.0 }
    }
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

/// `<d alpha_I, d alpha_J>` on the degree-k frame. The derivative of a
/// frame element is a pure wedge of differentials, so the base functions
/// join the determinant and no (k+1)-frame is needed.
pub fn up_energy(engine: &Engine, k: usize) -> Result<Array2<f64>> {
    let space = engine.space(k)?;
    let n = space.dim();
    let n0 = engine.limit();
    let gamma = &engine.carre.gamma;
    let mut u = Array2::zeros((n, n));
    match k {
        0 => {
            for i in 0..n {
                for j in 0..n {
                    u[[i, j]] = gamma[[i, j, 0]];
                }
            }
        }
        1 => {
            u.outer_iter_mut().into_par_iter().enumerate().for_each(|(a, mut row)| {
                let fi = &space.indices[a];
                let (i0, i1) = (fi.base, fi.wedge[0]);
                for (b, fj) in space.indices.iter().enumerate() {
                    let (j0, j1) = (fj.base, fj.wedge[0]);
                    let mut acc = 0.0;
                    for s in 0..n0 {
                        acc += gamma[[i0, j0, s]] * gamma[[i1, j1, s]]
                            - gamma[[i1, j0, s]] * gamma[[i0, j1, s]];
                    }
                    row[b] = acc;
                }
            });
        }
        _ => {
            let perms = permutations(k + 1);
            u.outer_iter_mut().into_par_iter().enumerate().for_each(|(a, mut row)| {
                let fi = &space.indices[a];
                let mut ilist = vec![fi.base];
                ilist.extend_from_slice(&fi.wedge);
                for (b, fj) in space.indices.iter().enumerate() {
                    let mut jlist = vec![fj.base];
                    jlist.extend_from_slice(&fj.wedge);
                    let mut acc = 0.0;
                    for (perm, sign) in &perms {
                        let mut p: Array1<f64> =
                            (0..n0).map(|s| gamma[[ilist[perm[0]], jlist[0], s]]).collect();
                        for m in 1..=k {
                            let g: Array1<f64> =
                                (0..n0).map(|s| gamma[[ilist[perm[m]], jlist[m], s]]).collect();
                            p = multiply(&p, &g, &engine.structure);
                        }
                        acc += sign * p[0];
                    }
                    row[b] = acc;
                }
            });
        }
    }
    for a in 0..n {
        for b in 0..a {
            let avg = 0.5 * (u[[a, b]] + u[[b, a]]);
            u[[a, b]] = avg;
            u[[b, a]] = avg;
        }
    }
    Ok(u)
}

pub fn default_epsilon(sobolev: &Array2<f64>) -> f64 {
    let n = sobolev.nrows().max(1);
    let trace: f64 = (0..sobolev.nrows()).map(|i| sobolev[[i, i]]).sum();
    DEFAULT_EPSILON_SCALE * trace / n as f64
}

/// Builds the degree-k Hodge operator. `epsilon = None` picks the default
/// trace-scaled regularizer.
pub fn assemble(engine: &Engine, k: usize, epsilon: Option<f64>) -> Result<HodgeOperator> {
    let space = engine.space(k)?;
    let n = space.dim();
    let up = up_energy(engine, k)?;
    let down = if k == 0 {
        Array2::zeros((n, n))
    } else {
        let lower = engine.space(k - 1)?;
        let w = engine.weak_d(k - 1)?;
        // W G+ W^T through the eigendecomposition of the lower Gram
        let wp = w.dot(&lower.projector.t()); // N_k x r
        let mut scaled = wp.clone();
        for (mut col, d) in scaled.columns_mut().into_iter().zip(lower.dinv.iter()) {
            col.mapv_inplace(|x| x * d);
        }
        scaled.dot(&wp.t())
    };
    let weak = &up + &down;
    let sobolev = &space.gram + &weak;
    let epsilon = match epsilon {
        Some(e) if e >= 0.0 => e,
        Some(_) => return Err(Error::invalid("epsilon must be nonnegative")),
        None => default_epsilon(&sobolev),
    };
    Ok(HodgeOperator { degree: k, up, down, weak, sobolev, epsilon })
}

/// Fraction of the median diagonal Gram entry used as the variable
/// subspace threshold in `solve`: directions whose Sobolev energy falls
/// below this scale are dominated by cancellation error in the truncated
/// tensor contractions and would otherwise surface as spurious zero modes.
pub const SOLVE_MASS_FRACTION: f64 = 0.02;

/// Solves the regularized Galerkin problem `(weak + eps S) v = lambda G v`
/// on the S-positive subspace and reports Rayleigh quotients
/// `v^T weak v / v^T G v`, ascending and clipped at zero.
pub fn solve(engine: &Engine, op: &HodgeOperator, m: usize) -> Result<HodgeSpectrum> {
    let space = engine.space(op.degree)?;
    let g = &space.gram;
    let nd = g.nrows();
    let mut diag: Vec<f64> = (0..nd).map(|i| g[[i, i]]).collect();
    diag.sort_by(|a, b| a.total_cmp(b));
    let mass_floor = SOLVE_MASS_FRACTION * diag[nd / 2];
    let (ps, dsinv) = crate::frames::projector_with_floor(&op.sobolev, engine.tau, mass_floor)?;
    let r = dsinv.len();
    // S-orthonormal columns
    let mut q = ps.t().to_owned();
    for (mut col, d) in q.columns_mut().into_iter().zip(dsinv.iter()) {
        col.mapv_inplace(|x| x * d.sqrt());
    }
    let a = q.t().dot(&op.weak.dot(&q)) + Array2::<f64>::eye(r) * op.epsilon;
    let b = q.t().dot(&g.dot(&q));
    let (av, avec) = sym_eigh(&a)?;
    let amax = av.iter().cloned().fold(0.0f64, f64::max);
    if amax <= 0.0 {
        return Err(Error::numeric("Hodge operator has no positive Sobolev energy"));
    }
    let floor = amax * 1e-14;
    let mut ah = Array2::zeros((r, r));
    for i in 0..r {
        for j in 0..r {
            let mut acc = 0.0;
            for s in 0..r {
                acc += avec[[i, s]] * avec[[j, s]] / av[s].max(floor).sqrt();
            }
            ah[[i, j]] = acc;
        }
    }
    let mut c = ah.dot(&b.dot(&ah));
    for i in 0..r {
        for j in 0..i {
            let avg = 0.5 * (c[[i, j]] + c[[j, i]]);
            c[[i, j]] = avg;
            c[[j, i]] = avg;
        }
    }
    let (mu, y) = sym_eigh(&c)?;
    let mu_max = mu.iter().cloned().fold(0.0f64, f64::max);
    if mu_max <= 0.0 {
        return Err(Error::numeric("Galerkin mass matrix is null on the solve subspace"));
    }
    let mu_tol = mu_max * engine.tau;

    // largest mu corresponds to smallest eigenvalue of the pencil
    let mut pairs: Vec<(f64, Array1<f64>)> = Vec::new();
    for s in (0..r).rev() {
        if mu[s] <= mu_tol {
            break;
        }
        let ys: Array1<f64> = (0..r).map(|i| y[[i, s]]).collect();
        let v = q.dot(&ah.dot(&ys));
        let vgv = v.dot(&g.dot(&v));
        if vgv <= 0.0 {
            continue;
        }
        let lam = (v.dot(&op.weak.dot(&v)) / vgv).max(0.0);
        let vn = v.mapv(|x| x / vgv.sqrt());
        pairs.push((lam, vn));
        if pairs.len() == m {
            break;
        }
    }
    let truncated = pairs.len() < m;
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let eigenvalues: Array1<f64> = pairs.iter().map(|p| p.0).collect();
    let eigenforms = pairs.into_iter().map(|p| FormCoeffs::new(op.degree, p.1)).collect();
    Ok(HodgeSpectrum { eigenvalues, eigenforms, epsilon: op.epsilon, truncated })
}

/// Number of eigenvalues below the dominant spectral gap, per the rule.
pub fn harmonic_count(eigenvalues: &Array1<f64>, rule: &GapRule) -> usize {
    let w = rule.window.min(eigenvalues.len());
    if w < 2 {
        return 0;
    }
    let scale = eigenvalues.iter().take(w).cloned().fold(0.0f64, f64::max);
    if scale <= 0.0 {
        return 0;
    }
    let floor = scale * 1e-12;
    let mut best_p = 0;
    let mut best_ratio = 0.0;
    for p in 1..w {
        let ratio = (eigenvalues[p] + floor) / (eigenvalues[p - 1] + floor);
        if ratio > best_ratio {
            best_ratio = ratio;
            best_p = p;
        }
    }
    if best_ratio >= rule.min_ratio {
        best_p
    } else {
        0
    }
}

pub fn harmonic_forms(spectrum: &HodgeSpectrum, rule: &GapRule) -> Vec<FormCoeffs> {
    let count = harmonic_count(&spectrum.eigenvalues, rule);
    spectrum.eigenforms.iter().take(count).cloned().collect()
}

/// Betti estimate from an eigenvalue ladder (degree 0 passes the function
/// Laplacian eigenvalues, degree k the Hodge spectrum).
pub fn betti(eigenvalues: &Array1<f64>, rule: &GapRule) -> usize {
    harmonic_count(eigenvalues, rule)
}

/// Hodge decomposition of a 1-form: potential `f = Lap^+ del alpha`,
/// `exact = df`, `remainder = alpha - df`.
pub fn hodge_decompose(
    engine: &Engine,
    alpha: &FormCoeffs,
) -> Result<(FormCoeffs, FormCoeffs, Array1<f64>)> {
    if alpha.degree != 1 {
        return Err(Error::invalid("hodge_decompose expects a 1-form"));
    }
    let del = codifferential(engine, alpha)?;
    let lam = &engine.basis.eigenvalues;
    let lam_max = lam.iter().take(engine.limit()).cloned().fold(0.0f64, f64::max);
    let tol = lam_max * 1e-10;
    let mut potential = Array1::zeros(engine.limit());
    // restrict the potential to functions whose differential the 1-form
    // frame can represent; beyond that the recovered gradient is spurious
    for i in 0..engine.limit().min(engine.trunc.n2) {
        if lam[i] > tol {
            potential[i] = del.v[i] / lam[i];
        }
    }
    let exact = ext_derivative(engine, &FormCoeffs::new(0, potential.clone()))?;
    let remainder = FormCoeffs::new(1, &alpha.v - &exact.v);
    Ok((exact, remainder, potential))
}

/// Norm of the wedge of two harmonic 1-forms under the degree-2 Gram.
pub fn cup_norm(engine: &Engine, h1: &FormCoeffs, h2: &FormCoeffs) -> Result<f64> {
    if engine.space(2).is_err() {
        return Err(Error::MissingArtifact(
            "degree-2 form space required for cup products; call ensure_degree(2)".into(),
        ));
    }
    let w = wedge(engine, h1, h2)?;
    Ok(engine.space(2)?.norm(&w.v))
}
