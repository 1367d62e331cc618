//! Manifold random features: random-walk graph kernel estimators, exact
//! kernel oracles, a learned continuous surrogate for signature fields and
//! kernel-based interpolation on meshes.

pub mod error;
pub mod graph;
pub mod grf;
pub mod interp;
pub mod linalg;
pub mod manifolds;
pub mod mrf;
pub mod oracles;
pub mod surrogate;

pub use error::{Error, Result};
pub use graph::{Bandwidth, GridGraph, KnnGraph, PointCloud, WeightedGraph};
pub use grf::{AlphaCoefficients, ModulationFunction, SignatureVector, WalkConfig};
pub use interp::{FactoredKernel, InterpolationReport, KernelOperator, MaskedField, MrfConfig};
pub use linalg::DenseMatrix;
pub use manifolds::{DensifiedCloud, Mesh, SurfaceKind, SurfaceSpec};
pub use mrf::{KernelMetrics, MrfFeatureMap, MrfVariant};
pub use oracles::{HeatKernelParams, HeatSign, SpectralDecomposition};
pub use surrogate::{SurrogateParams, TrainConfig, TrainingTriple};
