//! Geometric feature vectors for statistics and learning, plus a PCA
//! projection utility for biomarker-style score curves.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::exterior::ext_derivative;
use crate::frames::FormCoeffs;
use crate::hodge::HodgeSpectrum;
use crate::kernel::SpectralBasis;
use crate::linalg::sym_eigh;

/// Declarative feature schedule. Counts of zero switch a group off; the
/// resulting vector has a fixed length and ordering for a given config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    /// Function-Laplacian eigenvalues lambda^0_1 .. lambda^0_f0.
    pub f0: usize,
    /// Heat traces exp(-t lambda^0_i) on the same indices.
    pub heat_times0: Vec<f64>,
    /// 1-form Hodge eigenvalues lambda^1_1 .. lambda^1_f1.
    pub f1: usize,
    /// Heat traces exp(-t lambda^1_i).
    pub heat_times1: Vec<f64>,
    /// Dirichlet energies ||dphi_i||^2 (= lambda_i).
    pub dirichlet: usize,
    /// Inner products <alpha_a, dphi_b> over retained eigenforms,
    /// a < f1, b in 1..=dirichlet.
    pub inner_products: bool,
    /// Cup norms of the leading harmonic pairs (pairs among the first
    /// `cup_pairs` harmonic forms).
    pub cup_pairs: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            f0: 6,
            heat_times0: vec![1.0, 10.0, 50.0],
            f1: 4,
            heat_times1: vec![1.0, 10.0],
            dirichlet: 4,
            inner_products: false,
            cup_pairs: 0,
        }
    }
}

impl FeatureConfig {
    pub fn empty() -> Self {
        FeatureConfig {
            f0: 0,
            heat_times0: vec![],
            f1: 0,
            heat_times1: vec![],
            dirichlet: 0,
            inner_products: false,
            cup_pairs: 0,
        }
    }
}

/// Named, ordered scalar features.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Artifacts the feature builder can draw on. Groups whose artifact is
/// absent produce a missing-artifact error naming the stage to run.
#[derive(Default)]
pub struct FeatureInputs<'a> {
    pub basis: Option<&'a SpectralBasis>,
    pub engine: Option<&'a Engine>,
    pub hodge1: Option<&'a HodgeSpectrum>,
    pub harmonic: Option<&'a [FormCoeffs]>,
}

/// Minimum relative gap between consecutive eigenvalues for
/// eigenfunction-derived quantities to be well defined. Entries guarded by
/// this are zeroed (not dropped) so the vector length stays fixed.
const SIMPLE_GAP: f64 = 0.01;

fn spectrum_simple(vals: &Array1<f64>, upto: usize) -> bool {
    let upto = upto.min(vals.len());
    for i in 2..upto {
        let prev = vals[i - 1];
        if prev <= 0.0 {
            return false;
        }
        if (vals[i] - prev) / prev < SIMPLE_GAP {
            return false;
        }
    }
    true
}

pub fn build_features(inputs: &FeatureInputs, config: &FeatureConfig) -> Result<FeatureVector> {
    let mut names = Vec::new();
    let mut values = Vec::new();

    let need_basis = config.f0 > 0 || config.dirichlet > 0 || config.inner_products;
    let basis = if need_basis {
        Some(inputs.basis.ok_or_else(|| {
            Error::MissingArtifact("function eigenvalues requested: run the basis stage".into())
        })?)
    } else {
        None
    };
    if let Some(basis) = basis {
        if config.f0 + 1 > basis.n0() {
            return Err(Error::invalid("f0 exceeds the available eigenvalues"));
        }
        for i in 1..=config.f0 {
            names.push(format!("lambda0_{i}"));
            values.push(basis.eigenvalues[i]);
        }
        for &t in &config.heat_times0 {
            for i in 1..=config.f0 {
                names.push(format!("heat0_t{t}_{i}"));
                values.push((-t * basis.eigenvalues[i]).exp());
            }
        }
        for i in 1..=config.dirichlet {
            names.push(format!("dirichlet_{i}"));
            values.push(basis.eigenvalues[i]);
        }
    }

    let need_hodge = config.f1 > 0 || config.inner_products;
    let hodge = if need_hodge {
        Some(inputs.hodge1.ok_or_else(|| {
            Error::MissingArtifact("1-form eigenvalues requested: run the hodge stage (degree 1)".into())
        })?)
    } else {
        None
    };
    if let Some(hodge) = hodge {
        if config.f1 > hodge.eigenvalues.len() {
            return Err(Error::invalid("f1 exceeds the computed Hodge eigenvalues"));
        }
        for i in 0..config.f1 {
            names.push(format!("lambda1_{}", i + 1));
            values.push(hodge.eigenvalues[i]);
        }
        for &t in &config.heat_times1 {
            for i in 0..config.f1 {
                names.push(format!("heat1_t{t}_{}", i + 1));
                values.push((-t * hodge.eigenvalues[i]).exp());
            }
        }
    }

    if config.inner_products {
        let engine = inputs.engine.ok_or_else(|| {
            Error::MissingArtifact("inner products requested: run the forms stage".into())
        })?;
        let hodge = hodge.unwrap();
        let basis = basis.unwrap();
        // guard: these pairings are only well defined on simple spectra
        let simple = spectrum_simple(&basis.eigenvalues, config.dirichlet + 1)
            && spectrum_simple(&hodge.eigenvalues, config.f1);
        for a in 0..config.f1.min(hodge.eigenforms.len()) {
            for b in 1..=config.dirichlet {
                names.push(format!("pair_a{a}_dphi{b}"));
                if simple && b < engine.limit() {
                    let mut f = Array1::zeros(engine.limit());
                    f[b] = 1.0;
                    let dphi = ext_derivative(engine, &FormCoeffs::new(0, f))?;
                    let val = engine.space(1)?.inner(&hodge.eigenforms[a].v, &dphi.v);
                    values.push(val.abs());
                } else {
                    values.push(0.0);
                }
            }
        }
    }

    if config.cup_pairs > 0 {
        let engine = inputs.engine.ok_or_else(|| {
            Error::MissingArtifact("cup norms requested: run the forms stage to degree 2".into())
        })?;
        let harmonic = inputs.harmonic.ok_or_else(|| {
            Error::MissingArtifact("cup norms requested: run the hodge stage for harmonic forms".into())
        })?;
        for a in 0..config.cup_pairs {
            for b in (a + 1)..config.cup_pairs {
                names.push(format!("cup_{a}_{b}"));
                if a < harmonic.len() && b < harmonic.len() {
                    values.push(crate::hodge::cup_norm(engine, &harmonic[a], &harmonic[b])?);
                } else {
                    values.push(0.0);
                }
            }
        }
    }

    for v in &values {
        if !v.is_finite() {
            return Err(Error::numeric("non-finite feature value"));
        }
    }
    Ok(FeatureVector { names, values })
}

/// The exemplar biomarker scalar: Dirichlet energies of the first two
/// eigenfunctions, a heat-trace combination of lambda^0_1, lambda^0_2, and
/// a heat-trace combination of the second 1-form eigenvalue.
pub fn biomarker(basis_eigenvalues: &Array1<f64>, hodge1_eigenvalues: &Array1<f64>) -> Result<f64> {
    if basis_eigenvalues.len() < 3 || hodge1_eigenvalues.len() < 2 {
        return Err(Error::invalid("biomarker needs 3 function and 2 form eigenvalues"));
    }
    let l01 = basis_eigenvalues[1];
    let l02 = basis_eigenvalues[2];
    let l11 = hodge1_eigenvalues[1];
    Ok(l01 + l02 // Dirichlet energies ||dphi_1||^2 + ||dphi_2||^2
        + (l01 - (-l01).exp() - (-10.0 * l01).exp() - (-50.0 * l01).exp())
        + l02
        + (l11 - (-l11).exp() - (-10.0 * l11).exp()))
}

/// PCA projection output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaResult {
    /// One row of scores per input vector.
    pub scores: Array2<f64>,
    /// Principal directions as rows, in the reduced (kept-column) space.
    pub components: Array2<f64>,
    /// First principal direction mapped back to feature positions
    /// (dropped columns carry weight 0).
    pub weights: Array1<f64>,
    /// The same weights with only the largest-magnitude entries kept.
    pub sparse_weights: Array1<f64>,
    /// Feature positions dropped as constant columns.
    pub dropped: Vec<usize>,
}

pub fn pca_project(vectors: &[FeatureVector], dim: usize, sparsity: usize) -> Result<PcaResult> {
    if vectors.len() < 2 {
        return Err(Error::invalid("pca_project needs at least 2 vectors"));
    }
    let p = vectors[0].len();
    if vectors.iter().any(|v| v.len() != p) {
        return Err(Error::invalid("feature vectors disagree in length"));
    }
    if dim == 0 || dim > p {
        return Err(Error::invalid("dim must satisfy 1 <= dim <= vector length"));
    }
    let m = vectors.len();
    let mut x = Array2::zeros((m, p));
    for (i, v) in vectors.iter().enumerate() {
        for j in 0..p {
            x[[i, j]] = v.values[j];
        }
    }
    // standardize, dropping constant columns
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..p {
        let col = x.column(j);
        let mean = col.mean().unwrap();
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0);
        let std = var.sqrt();
        if std <= 1e-12 * mean.abs().max(1.0) {
            dropped.push(j);
        } else {
            kept.push((j, mean, std));
        }
    }
    if kept.is_empty() {
        return Err(Error::DegenerateSpace("all feature columns are constant".into()));
    }
    let q = kept.len();
    let dim = dim.min(q);
    let mut z = Array2::zeros((m, q));
    for (col, &(j, mean, std)) in kept.iter().enumerate() {
        for i in 0..m {
            z[[i, col]] = (x[[i, j]] - mean) / std;
        }
    }
    let cov = z.t().dot(&z) / (m as f64 - 1.0);
    let (vals, vecs) = sym_eigh(&cov)?;
    let mut components = Array2::zeros((dim, q));
    for r in 0..dim {
        let src = q - 1 - r; // descending variance
        let _ = vals;
        // deterministic sign: largest-magnitude entry positive
        let mut best = 0.0f64;
        let mut best_abs = -1.0f64;
        for i in 0..q {
            if vecs[[i, src]].abs() > best_abs {
                best_abs = vecs[[i, src]].abs();
                best = vecs[[i, src]];
            }
        }
        let sign = if best < 0.0 { -1.0 } else { 1.0 };
        for i in 0..q {
            components[[r, i]] = sign * vecs[[i, src]];
        }
    }
    let scores = z.dot(&components.t());
    let mut weights = Array1::zeros(p);
    for (col, &(j, _, _)) in kept.iter().enumerate() {
        weights[j] = components[[0, col]];
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| weights[b].abs().total_cmp(&weights[a].abs()));
    let mut sparse_weights = Array1::zeros(p);
    for &j in order.iter().take(sparsity.max(1)) {
        sparse_weights[j] = weights[j];
    }
    Ok(PcaResult { scores, components, weights, sparse_weights, dropped })
}
