//! Generator estimation via diffusion maps: Gaussian kernel, density
//! renormalization, and the truncated eigenbasis of the estimated Laplacian.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::linalg::{pairwise_sq_dists, sym_eigh};

/// Kernel bandwidth: a fixed squared length, or selected from the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", untagged)]
pub enum Bandwidth {
    Fixed(f64),
    Auto,
}

impl Default for Bandwidth {
    fn default() -> Self {
        Bandwidth::Auto
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    #[serde(default)]
    pub bandwidth: Bandwidth,
    /// Density renormalization exponent in [0, 1]. The default 1 makes the
    /// estimated geometry invariant to the sampling density.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Optional symmetric k-NN truncation of the kernel before
    /// renormalization. The dense path remains the reference.
    #[serde(default)]
    pub knn: Option<usize>,
    /// Number of retained eigenpairs.
    pub n0: usize,
}

fn default_alpha() -> f64 {
    1.0
}

impl KernelConfig {
    pub fn new(n0: usize) -> Self {
        KernelConfig { bandwidth: Bandwidth::Auto, alpha: 1.0, knn: None, n0 }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid("alpha must lie in [0, 1]"));
        }
        if self.n0 == 0 || self.n0 > n {
            return Err(Error::invalid(format!("n0 must satisfy 1 <= n0 <= n = {n}")));
        }
        if let Some(k) = self.knn {
            if k == 0 || k >= n {
                return Err(Error::invalid("knn must satisfy 1 <= knn < n"));
            }
        }
        if let Bandwidth::Fixed(t) = self.bandwidth {
            if t <= 0.0 || !t.is_finite() {
                return Err(Error::invalid("bandwidth must be positive"));
            }
        }
        Ok(())
    }
}

/// Bandwidth selection rule.
#[derive(Debug, Clone, Copy)]
pub enum BandwidthMethod {
    /// Half the mean squared distance to the k-th nearest neighbour.
    MeanKnn { k: usize },
}

impl Default for BandwidthMethod {
    fn default() -> Self {
        BandwidthMethod::MeanKnn { k: 8 }
    }
}

pub fn select_bandwidth(pc: &PointCloud, method: BandwidthMethod) -> Result<f64> {
    let n = pc.n();
    if n < 2 {
        return Err(Error::invalid("select_bandwidth: need at least 2 points"));
    }
    let BandwidthMethod::MeanKnn { k } = method;
    let k = k.min(n - 1).max(1);
    let dists = pairwise_sq_dists(&pc.points);
    let mut acc = 0.0;
    let mut row_buf = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            row_buf[j] = dists[[i, j]];
        }
        row_buf.sort_by(|a, b| a.total_cmp(b));
        acc += row_buf[k]; // row_buf[0] is the point itself
    }
    let t = 0.5 * acc / n as f64;
    if t <= 0.0 {
        return Err(Error::invalid("zero bandwidth: cloud has no spread at the requested neighbour"));
    }
    Ok(t)
}

/// Discrete Markov diffusion built from the Gaussian kernel.
///
/// `kernel` holds the density-renormalized symmetric kernel; the
/// row-stochastic transition matrix is `diag(row_sums)^-1 * kernel`.
#[derive(Debug, Clone)]
pub struct MarkovOperator {
    pub kernel: Array2<f64>,
    /// Row sums of the raw Gaussian kernel (kernel density estimate).
    pub raw_density: Array1<f64>,
    /// Row sums of the renormalized kernel.
    pub row_sums: Array1<f64>,
    /// Stationary density, scaled to mean 1.
    pub density: Array1<f64>,
    pub bandwidth: f64,
}

impl MarkovOperator {
    pub fn n(&self) -> usize {
        self.kernel.nrows()
    }

    /// Materializes the row-stochastic transition matrix. Intended for
    /// inspection and tests at small n.
    pub fn transition_matrix(&self) -> Array2<f64> {
        let mut p = self.kernel.clone();
        for (i, mut row) in p.axis_iter_mut(Axis(0)).enumerate() {
            row.mapv_inplace(|x| x / self.row_sums[i]);
        }
        p
    }
}

pub fn build_markov(pc: &PointCloud, cfg: &KernelConfig) -> Result<MarkovOperator> {
    let n = pc.n();
    cfg.validate(n)?;
    let t = match cfg.bandwidth {
        Bandwidth::Fixed(t) => t,
        Bandwidth::Auto => {
            if n == 1 {
                1.0 // single state chain; any positive value works
            } else {
                select_bandwidth(pc, BandwidthMethod::default())?
            }
        }
    };

    let mut kernel = pairwise_sq_dists(&pc.points);
    kernel.mapv_inplace(|d2| (-d2 / (4.0 * t)).exp());

    if let Some(k) = cfg.knn {
        truncate_knn_symmetric(&mut kernel, k);
    }

    let raw_density = kernel.sum_axis(Axis(1));
    if raw_density.iter().any(|&q| q <= 0.0) {
        return Err(Error::numeric("kernel row with zero mass"));
    }
    if cfg.alpha != 0.0 {
        let scale: Array1<f64> = raw_density.mapv(|q| q.powf(-cfg.alpha));
        for i in 0..n {
            for j in 0..n {
                kernel[[i, j]] *= scale[i] * scale[j];
            }
        }
    }
    let row_sums = kernel.sum_axis(Axis(1));
    let total: f64 = row_sums.sum();
    let density = row_sums.mapv(|d| n as f64 * d / total);

    Ok(MarkovOperator { kernel, raw_density, row_sums, density, bandwidth: t })
}

/// Keeps entry (i, j) when j is among the k nearest of i or vice versa.
/// The diagonal always survives.
fn truncate_knn_symmetric(kernel: &mut Array2<f64>, k: usize) {
    let n = kernel.nrows();
    let mut keep = vec![false; n * n];
    for i in 0..n {
        // larger kernel value = nearer
        let mut idx: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        idx.sort_by(|&a, &b| kernel[[i, b]].total_cmp(&kernel[[i, a]]));
        keep[i * n + i] = true;
        for &j in idx.iter().take(k) {
            keep[i * n + j] = true;
            keep[j * n + i] = true;
        }
    }
    for i in 0..n {
        for j in 0..n {
            if !keep[i * n + j] {
                kernel[[i, j]] = 0.0;
            }
        }
    }
}

/// Truncated eigensystem of the estimated generator.
///
/// Eigenfunctions are orthonormal under the density-weighted inner product
/// `(1/n) sum_s f(s) h(s) D(s)`, the first eigenfunction is the constant 1,
/// and eigenvalues ascend from an exact 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralBasis {
    pub eigenvalues: Array1<f64>,
    /// n x n0, one eigenfunction per column.
    pub phi: Array2<f64>,
    pub density: Array1<f64>,
    pub bandwidth: f64,
    pub n: usize,
}

impl SpectralBasis {
    pub fn n0(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Density-weighted inner product of two value vectors.
    pub fn inner(&self, f: &Array1<f64>, h: &Array1<f64>) -> f64 {
        let n = self.n as f64;
        f.iter()
            .zip(h.iter())
            .zip(self.density.iter())
            .map(|((a, b), d)| a * b * d / n)
            .sum()
    }
}

pub fn spectral_basis(op: &MarkovOperator, n0: usize) -> Result<SpectralBasis> {
    let n = op.n();
    if n0 == 0 || n0 > n {
        return Err(Error::invalid(format!("n0 must satisfy 1 <= n0 <= n = {n}")));
    }

    // Conjugate to the symmetric form A = D^-1/2 K D^-1/2, which shares
    // eigenvalues with the transition matrix.
    let inv_sqrt: Array1<f64> = op.row_sums.mapv(|d| 1.0 / d.sqrt());
    let mut sym = op.kernel.clone();
    for i in 0..n {
        for j in 0..n {
            sym[[i, j]] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    let (vals, vecs) = sym_eigh(&sym)?;
    drop(sym);

    let t = op.bandwidth;
    let total_mass: f64 = op.row_sums.sum();
    let scale = total_mass.sqrt();

    let mut eigenvalues = Array1::zeros(n0);
    let mut phi = Array2::zeros((n, n0));
    for k in 0..n0 {
        let src = n - 1 - k; // Markov eigenvalues descend from 1
        let eta = vals[src];
        let lambda = (1.0 - eta) / t;
        eigenvalues[k] = lambda.max(0.0);
        for s in 0..n {
            phi[[s, k]] = scale * inv_sqrt[s] * vecs[[s, src]];
        }
    }
    // lambda_0 is exactly 0 and phi_0 is the exact constant with unit
    // weighted norm (mean density is 1).
    eigenvalues[0] = 0.0;
    phi.column_mut(0).fill(1.0);

    // deterministic sign: largest-magnitude entry positive
    for mut col in phi.columns_mut() {
        let mut best = 0.0f64;
        let mut best_abs = -1.0f64;
        for &x in col.iter() {
            if x.abs() > best_abs {
                best_abs = x.abs();
                best = x;
            }
        }
        if best < 0.0 {
            col.mapv_inplace(|x| -x);
        }
    }

    Ok(SpectralBasis { eigenvalues, phi, density: op.density.clone(), bandwidth: t, n })
}
