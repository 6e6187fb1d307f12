//! Differentially private gradient EM for sparse high-dimensional and classic
//! low-dimensional latent variable models: Gaussian mixtures, mixtures of
//! regressions and regression with missing covariates.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`). The aliases
//! at the crate root fix `f64`, which is what the harness and CLI use.

pub mod cli;
pub mod em_engine;
pub mod error;
pub mod harness;
pub mod mechanisms;
pub mod models;
pub mod oracle;
pub mod scalar;

pub use em_engine::Regime;
pub use error::{Error, Result};
pub use mechanisms::{NoiseMode, NoiseOracle};
pub use models::{Gmm, LatentModel, ModelKind, Mor, Rmc};
pub use scalar::Scalar;

pub type ParamVector = models::ParamVector<f64>;
pub type PrivacyBudget = mechanisms::PrivacyBudget<f64>;
pub type SparseSelection = mechanisms::SparseSelection<f64>;
pub type ModelSpec = models::ModelSpec<f64>;
pub type GmmSample = models::GmmSample<f64>;
pub type MorSample = models::MorSample<f64>;
pub type RmcSample = models::RmcSample<f64>;
pub type Dataset = models::Dataset<f64>;
pub type EmConfig = em_engine::EmConfig<f64>;
pub type Trajectory = em_engine::Trajectory<f64>;

pub type ParamVector32 = models::ParamVector<f32>;
pub type PrivacyBudget32 = mechanisms::PrivacyBudget<f32>;
pub type EmConfig32 = em_engine::EmConfig<f32>;
pub type Trajectory32 = em_engine::Trajectory<f32>;
