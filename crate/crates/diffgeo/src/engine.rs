//! The central object tying a spectral basis to its algebra tensors, form
//! spaces, and weak exterior derivative operators. Degrees are built on
//! demand and cached; everything else in the crate operates against an
//! `Engine`.

use ndarray::Array2;

use crate::algebra::{carre_tensor, structure_constants, CarreTensor, StructureTensor};
use crate::error::{Error, Result};
use crate::exterior::ext_derivative_weak;
use crate::frames::{FormSpace, TruncationConfig, DEFAULT_MEMORY_BUDGET, DEFAULT_TAU};
use crate::kernel::SpectralBasis;

pub struct Engine {
    pub basis: SpectralBasis,
    pub trunc: TruncationConfig,
    pub tau: f64,
    pub budget: usize,
    pub structure: StructureTensor,
    pub carre: CarreTensor,
    spaces: Vec<Option<FormSpace>>,
    /// weak_d[k] is the N_{k+1} x N_k matrix of <alpha_I, d alpha_J>.
    weak_d: Vec<Option<Array2<f64>>>,
}

impl Engine {
    pub fn new(basis: SpectralBasis, trunc: TruncationConfig, tau: f64) -> Result<Engine> {
        Engine::with_budget(basis, trunc, tau, DEFAULT_MEMORY_BUDGET)
    }

    pub fn with_budget(
        basis: SpectralBasis,
        trunc: TruncationConfig,
        tau: f64,
        budget: usize,
    ) -> Result<Engine> {
        trunc.validate()?;
        if trunc.n0 > basis.n0() {
            return Err(Error::invalid(format!(
                "truncation n0 = {} exceeds basis size {}",
                trunc.n0,
                basis.n0()
            )));
        }
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::invalid("tau must lie in (0, 1)"));
        }
        let structure = structure_constants(&basis, trunc.n0)?;
        let carre = carre_tensor(&basis, &structure)?;
        let max_deg = trunc.n2 + 1;
        Ok(Engine {
            basis,
            trunc,
            tau,
            budget,
            structure,
            carre,
            spaces: (0..=max_deg).map(|_| None).collect(),
            weak_d: (0..max_deg).map(|_| None).collect(),
        })
    }

    pub fn default_tau() -> f64 {
        DEFAULT_TAU
    }

    /// Number of function-basis coefficients in play.
    pub fn limit(&self) -> usize {
        self.trunc.n0
    }

    /// Builds form spaces for degrees 0..=k and the weak derivatives
    /// between them. Idempotent.
    pub fn ensure_degree(&mut self, k: usize) -> Result<()> {
        if k > self.trunc.n2 {
            return Err(Error::invalid(format!("degree {k} exceeds n2 = {}", self.trunc.n2)));
        }
        for deg in 0..=k {
            if self.spaces[deg].is_none() {
                let space = FormSpace::build(
                    deg,
                    &self.trunc,
                    &self.carre,
                    &self.structure,
                    self.tau,
                    self.budget,
                )?;
                self.spaces[deg] = Some(space);
            }
        }
        for deg in 0..k {
            if self.weak_d[deg].is_none() {
                let lower = self.spaces[deg].as_ref().unwrap();
                let upper = self.spaces[deg + 1].as_ref().unwrap();
                let d = ext_derivative_weak(
                    deg,
                    &lower.indices,
                    &upper.indices,
                    &self.carre,
                    &self.structure,
                )?;
                self.weak_d[deg] = Some(d.matrix);
            }
        }
        Ok(())
    }

    pub fn space(&self, k: usize) -> Result<&FormSpace> {
        self.spaces
            .get(k)
            .and_then(|s| s.as_ref())
            .ok_or_else(|| Error::MissingArtifact(format!("degree-{k} form space not built; call ensure_degree({k})")))
    }

    /// The weak exterior derivative from degree k to k + 1.
    pub fn weak_d(&self, k: usize) -> Result<&Array2<f64>> {
        self.weak_d
            .get(k)
            .and_then(|d| d.as_ref())
            .ok_or_else(|| {
                Error::MissingArtifact(format!(
                    "weak derivative d_{k} not built; call ensure_degree({})",
                    k + 1
                ))
            })
    }
}
