//! Supporting-document classification, RFE attack detection and response
//! drafting for work-visa petitions.
//!
//! The numeric modules are generic over [`Real`] (`f32`/`f64`); the aliases
//! below fix them to `f64`, which is what the CLI and file formats use.

pub mod attackdetect;
pub mod corpusgen;
pub mod drafting;
pub mod ensemble;
pub mod evalharness;
pub mod fsio;
pub mod imagefeat;
pub mod linclass;
pub mod scalar;
pub mod textprep;
pub mod vectorspace;

pub use scalar::Real;

pub type SparseVector = vectorspace::SparseVector<f64>;
pub type DenseFeatures = imagefeat::DenseFeatures<f64>;
pub type ClassDistribution = linclass::ClassDistribution<f64>;
pub type LinearModel = linclass::LinearModel<f64>;
pub type TrainConfig = linclass::TrainConfig<f64>;
pub type FusionTrace = ensemble::FusionTrace<f64>;
pub type DocumentClassifier = ensemble::DocumentClassifier<f64>;
pub type ExampleBank = attackdetect::ExampleBank<f64>;
pub type AttackReport = attackdetect::AttackReport<f64>;
pub type SimilarityMatrix = attackdetect::SimilarityMatrix<f64>;
