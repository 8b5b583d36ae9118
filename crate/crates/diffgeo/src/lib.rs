//! Diffusion geometry for point clouds.
//!
//! The pipeline estimates the generator of a Markov diffusion from samples
//! (diffusion maps), builds the truncated spectral function algebra, and
//! realizes exterior calculus on top of it: differential forms, metrics,
//! exterior derivative and codifferential, Hodge Laplacians with harmonic
//! forms and cup products, second-order calculus (Hessian, connection,
//! curvature), pointwise tangent/singularity analysis, and geometric
//! feature vectors.

pub mod algebra;
pub mod cloud;
pub mod engine;
pub mod error;
pub mod exterior;
pub mod features;
pub mod frames;
pub mod geometry;
pub mod hodge;
pub mod kernel;
pub mod linalg;
pub mod pipeline;
pub mod second_order;

pub use cloud::{PointCloud, ShapeSpec};
pub use engine::Engine;
pub use error::{Error, Result};
pub use frames::TruncationConfig;
pub use kernel::{Bandwidth, KernelConfig, SpectralBasis};
