//! Configuration-driven orchestration of the pipeline stages. The CLI is a
//! thin wrapper over these functions; they are equally usable from tests
//! and library consumers.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::cloud::{self, PointCloud, ShapeSpec};
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::features::{build_features, FeatureConfig, FeatureInputs, FeatureVector};
use crate::frames::{TruncationConfig, DEFAULT_TAU};
use crate::geometry::{coordinate_metric, singularity_score, tangent_field};
use crate::hodge::{assemble, cup_norm, harmonic_forms, solve, GapRule};
use crate::kernel::{build_markov, spectral_basis, KernelConfig, SpectralBasis};

/// Version stamped into every JSON artifact.
pub const SCHEMA_VERSION: u32 = 1;

/// Where the points come from: a CSV file or a generator spec.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InputSpec {
    Path { path: String },
    Shape(ShapeSpec),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: InputSpec,
    pub kernel: KernelConfig,
    pub trunc: TruncationConfig,
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Hodge regularizer; None picks the trace-scaled default.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default = "default_num_eigs")]
    pub num_eigs: usize,
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

fn default_degree() -> usize {
    1
}

fn default_num_eigs() -> usize {
    8
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.trunc.validate()?;
        if self.trunc.n0 != self.kernel.n0 {
            return Err(Error::invalid("kernel.n0 and trunc.n0 must agree"));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::invalid("tau must lie in (0, 1)"));
        }
        if let Some(e) = self.epsilon {
            if !(e >= 0.0 && e.is_finite()) {
                return Err(Error::invalid("epsilon must be finite and nonnegative"));
            }
        }
        if self.num_eigs == 0 {
            return Err(Error::invalid("num_eigs must be positive"));
        }
        Ok(())
    }
}

pub fn load_cloud(input: &InputSpec) -> Result<PointCloud> {
    match input {
        InputSpec::Path { path } => cloud::load_csv(path),
        InputSpec::Shape(spec) => spec.generate(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasisReport {
    pub schema_version: u32,
    pub n: usize,
    pub dim: usize,
    pub bandwidth: f64,
    pub eigenvalues: Vec<f64>,
}

pub fn run_basis(cfg: &PipelineConfig) -> Result<(PointCloud, SpectralBasis, BasisReport)> {
    cfg.validate()?;
    let pc = load_cloud(&cfg.input)?;
    let op = build_markov(&pc, &cfg.kernel)?;
    let basis = spectral_basis(&op, cfg.kernel.n0)?;
    let report = BasisReport {
        schema_version: SCHEMA_VERSION,
        n: pc.n(),
        dim: pc.dim(),
        bandwidth: basis.bandwidth,
        eigenvalues: basis.eigenvalues.to_vec(),
    };
    Ok((pc, basis, report))
}

pub fn build_engine(cfg: &PipelineConfig, basis: SpectralBasis, degree: usize) -> Result<Engine> {
    let mut engine = Engine::new(basis, cfg.trunc, cfg.tau)?;
    engine.ensure_degree(degree)?;
    Ok(engine)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FormsReport {
    pub schema_version: u32,
    /// Dirichlet energies ||dphi_i||^2.
    pub dphi_norms: Vec<f64>,
    /// Gram dimensions and ranks per built degree.
    pub spaces: Vec<SpaceSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpaceSummary {
    pub degree: usize,
    pub dim: usize,
    pub rank: usize,
}

pub fn run_forms(cfg: &PipelineConfig) -> Result<(Engine, FormsReport)> {
    let (_, basis, _) = run_basis(cfg)?;
    let degree = cfg.degree.max(1);
    let engine = build_engine(cfg, basis, degree)?;
    let mut spaces = Vec::new();
    for k in 0..=degree {
        let s = engine.space(k)?;
        spaces.push(SpaceSummary { degree: k, dim: s.dim(), rank: s.rank() });
    }
    let report = FormsReport {
        schema_version: SCHEMA_VERSION,
        dphi_norms: engine.basis.eigenvalues.iter().take(engine.limit()).cloned().collect(),
        spaces,
    };
    Ok((engine, report))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HodgeReport {
    pub schema_version: u32,
    pub degree: usize,
    pub epsilon: f64,
    pub eigenvalues: Vec<f64>,
    pub betti: usize,
    /// Pairwise cup norms of the harmonic forms (empty off degree 1 or
    /// when fewer than two harmonic forms exist).
    pub cup_norms: Vec<Vec<f64>>,
}

pub struct HodgeOutputs {
    pub engine: Engine,
    pub spectrum: crate::hodge::HodgeSpectrum,
    pub harmonic: Vec<crate::frames::FormCoeffs>,
}

pub fn run_hodge(cfg: &PipelineConfig) -> Result<(HodgeOutputs, HodgeReport)> {
    let (_, basis, _) = run_basis(cfg)?;
    let k = cfg.degree;
    // cup products of harmonic 1-forms need the degree-2 frame
    let build_to = if k == 1 { 2.min(cfg.trunc.n2) } else { k };
    let engine = build_engine(cfg, basis, build_to)?;
    let op = assemble(&engine, k, cfg.epsilon)?;
    let spectrum = solve(&engine, &op, cfg.num_eigs)?;
    let rule = GapRule::default();
    let harmonic = harmonic_forms(&spectrum, &rule);
    let betti = harmonic.len();
    let mut cups = Vec::new();
    if k == 1 && harmonic.len() >= 2 && engine.space(2).is_ok() {
        for a in 0..harmonic.len() {
            let mut row = Vec::new();
            for b in 0..harmonic.len() {
                row.push(cup_norm(&engine, &harmonic[a], &harmonic[b])?);
            }
            cups.push(row);
        }
    }
    let report = HodgeReport {
        schema_version: SCHEMA_VERSION,
        degree: k,
        epsilon: spectrum.epsilon,
        eigenvalues: spectrum.eigenvalues.to_vec(),
        betti,
        cup_norms: cups,
    };
    Ok((HodgeOutputs { engine, spectrum, harmonic }, report))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SingularityReport {
    pub schema_version: u32,
    pub n: usize,
    pub dim: usize,
    /// Per-point rows: coordinates, metric eigenvalues, score, tangent
    /// components, degenerate flag.
    pub points: Vec<SingularityRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SingularityRow {
    pub coords: Vec<f64>,
    pub metric_eigenvalues: Vec<f64>,
    pub score: f64,
    pub tangent: Vec<f64>,
    pub degenerate: bool,
}

pub fn run_singularity(cfg: &PipelineConfig) -> Result<SingularityReport> {
    let (pc, basis, _) = run_basis(cfg)?;
    let engine = Engine::new(basis, cfg.trunc, cfg.tau)?;
    let field = coordinate_metric(&pc, &engine.basis, &engine.carre)?;
    let scores = singularity_score(&field);
    let tangents = tangent_field(&field);
    let d = pc.dim();
    let points = (0..pc.n())
        .map(|s| SingularityRow {
            coords: pc.points.row(s).to_vec(),
            metric_eigenvalues: (0..d).map(|c| field.eigenvalues[[s, c]]).collect(),
            score: scores[s],
            tangent: (0..d).map(|c| tangents[[s, c]]).collect(),
            degenerate: field.degenerate[s],
        })
        .collect();
    Ok(SingularityReport { schema_version: SCHEMA_VERSION, n: pc.n(), dim: d, points })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureReport {
    pub schema_version: u32,
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

pub fn run_features(cfg: &PipelineConfig, feat: &FeatureConfig) -> Result<FeatureReport> {
    let needs_hodge = feat.f1 > 0 || feat.inner_products || feat.cup_pairs > 0;
    let vector: FeatureVector = if needs_hodge {
        let mut hodge_cfg = cfg.clone();
        hodge_cfg.degree = 1;
        let (outputs, _) = run_hodge(&hodge_cfg)?;
        let inputs = FeatureInputs {
            basis: Some(&outputs.engine.basis),
            engine: Some(&outputs.engine),
            hodge1: Some(&outputs.spectrum),
            harmonic: Some(&outputs.harmonic),
        };
        build_features(&inputs, feat)?
    } else {
        let (_, basis, _) = run_basis(cfg)?;
        let inputs = FeatureInputs { basis: Some(&basis), ..Default::default() };
        build_features(&inputs, feat)?
    };
    Ok(FeatureReport { schema_version: SCHEMA_VERSION, names: vector.names, values: vector.values })
}

/// Function-Laplacian eigenvalue ladder for beta_0 style gap reading.
pub fn function_spectrum(basis: &SpectralBasis) -> Array1<f64> {
    basis.eigenvalues.clone()
}
