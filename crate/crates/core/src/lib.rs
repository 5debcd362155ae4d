//! Clinical sentence sentiment: per-domain three-way classifiers over sentence
//! embeddings, a lexicon baseline, semi-supervised augmentation, and the
//! evaluation and agreement statistics used to compare them.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the precision for callers that do not care.

pub mod corpus;
pub mod embedding;
pub mod lexicon;
pub mod metrics;
pub mod neuralnet;
pub mod num;
pub mod persist;
pub mod semisup;
pub mod suite;
pub mod text;

pub use num::Scalar;

pub type Vector = embedding::Embedding<f64>;
pub type Store = embedding::EmbeddingStore<f64>;
pub type Mlp = neuralnet::MlpParams<f64>;
pub type Model = suite::DomainModel<f64>;
pub type Suite = suite::ModelSuite<f64>;
pub type Pool = semisup::UnlabeledPool<f64>;

pub type Vector32 = embedding::Embedding<f32>;
pub type Store32 = embedding::EmbeddingStore<f32>;
pub type Mlp32 = neuralnet::MlpParams<f32>;
pub type Model32 = suite::DomainModel<f32>;
pub type Suite32 = suite::ModelSuite<f32>;
pub type Pool32 = semisup::UnlabeledPool<f32>;
