//! Feature-weighted SVM classification with PCA reduction, mutual-information
//! feature weights and Modified Cuckoo Search hyperparameter tuning.
//!
//! The numeric modules are generic over [`Scalar`]; the aliases below fix the
//! scalar to `f64` (the default used by the CLI) or `f32`.

pub mod dataset;
pub mod evaluation;
pub mod mcs;
pub mod mi_weights;
mod nested;
pub mod pca;
pub mod rng;
pub mod scalar;
pub mod wfsvm;

pub use ndarray;
pub use scalar::Scalar;

pub use dataset::{FoldPlan, Label, RawRecord};
pub use evaluation::{ConfusionMatrix, Metrics, PipelineConfig};
pub use mcs::{McsConfig, Nest};
pub use mi_weights::ParzenConfig;
pub use wfsvm::{KernelVariant, SvmParams};

pub type SampleMatrix64 = dataset::SampleMatrix<f64>;
pub type SampleMatrix32 = dataset::SampleMatrix<f32>;
pub type StandardizationParams64 = dataset::StandardizationParams<f64>;
pub type PcaModel64 = pca::PcaModel<f64>;
pub type PcaModel32 = pca::PcaModel<f32>;
pub type FeatureWeights64 = mi_weights::FeatureWeights<f64>;
pub type FeatureWeights32 = mi_weights::FeatureWeights<f32>;
pub type KernelSpec64 = wfsvm::KernelSpec<f64>;
pub type SvmModel64 = wfsvm::SvmModel<f64>;
pub type SvmModel32 = wfsvm::SvmModel<f32>;
pub type ModelBundle64 = evaluation::ModelBundle<f64>;
pub type PipelineReport64 = evaluation::PipelineReport<f64>;
