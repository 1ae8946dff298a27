//! Energy-based prediction of binding free-energy changes (ΔΔG) for protein
//! complexes under mutation.
//!
//! ΔΔG is predicted as an inverse-folding log-odds term minus a structural
//! energy correction computed from Langevin-sampled mutant backbones.

pub mod ddg;
pub mod dsm;
pub mod energy;
pub mod eval;
pub mod geometry;
pub mod ingest;
pub mod net;
pub mod rng;
pub mod sampler;
pub mod seqmodel;
pub mod scalar;
pub mod synthetic;

pub use scalar::{Dual, Real};

/// Double-precision energy model.
pub type EnergyModelF64 = energy::EnergyModel<f64>;
/// Double-precision energy model with gradients.
pub type EnergyGradF64 = energy::EnergyGrad<f64>;
pub type MlpF64 = net::Mlp<f64>;
pub type DenseLayerF64 = net::DenseLayer<f64>;
pub type TensorF64 = net::Tensor<f64>;
pub type RadialBasisF64 = geometry::RadialBasis<f64>;
