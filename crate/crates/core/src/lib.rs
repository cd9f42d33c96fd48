//! Face presentation-attack detection with Fisher-vector-encoded compact
//! dense binarised statistical image features.
//!
//! The pipeline: learn a small bank of ICA filters from natural image
//! patches, binarise filter responses into code maps, pool them over a dense
//! multi-scale grid into local histograms, reduce with PCA, encode each image
//! as a Fisher vector against a Gaussian mixture, and classify with a linear
//! SVM. Evaluation follows the usual presentation-attack protocol families
//! (known attacks, leave-one-PAI-out, cross-dataset) with APCER/BPCER-based
//! metrics.
//!
//! All numeric code is generic over [`Real`] (`f32` or `f64`); the crate root
//! exports `f64` aliases for the common types.

pub mod bsif;
pub mod bundle;
pub mod config;
pub mod error;
pub mod filterbank;
pub mod fisher;
pub mod gmm;
pub mod ica;
pub mod image;
pub mod manifest;
pub mod metrics;
pub mod parallel;
pub mod pca;
pub mod protocols;
pub mod scalar;
pub mod splits;
pub mod svm;
pub mod synthetic;

mod linalg;
mod sampling;

pub use error::{Error, Result};
pub use scalar::Real;

/// Default-precision filter bank.
pub type FilterBank = filterbank::FilterBank<f64>;
/// Default-precision face image.
pub type FaceImage = image::FaceImage<f64>;
/// Default-precision local descriptor.
pub type LocalDescriptor = bsif::LocalDescriptor<f64>;
/// Default-precision descriptor set.
pub type DescriptorSet = bsif::DescriptorSet<f64>;
/// Default-precision PCA model.
pub type PcaModel = pca::PcaModel<f64>;
/// Default-precision Gaussian mixture.
pub type GmmModel = gmm::GmmModel<f64>;
/// Default-precision Fisher vector.
pub type FisherVector = fisher::FisherVector<f64>;
/// Default-precision linear classifier.
pub type LinearModel = svm::LinearModel<f64>;
/// Default-precision classifier score.
pub type PadScore = svm::PadScore<f64>;
