//! Interpretable spatio-temporal crime prediction.
//!
//! Graph attention over neighboring regions and their external features
//! feeds three sparse-attentive recurrent trend streams (recent, daily,
//! weekly), which are fused with location attention into a one-step-ahead
//! count forecast. Every attention distribution is recorded so predictions
//! can be attributed and their faithfulness tested.
//!
//! Model code is generic over [`Real`]; `f64` evaluates, and
//! [`autodiff::Var`] records a tape for gradients through the same code.

pub mod autodiff;
pub mod config;
pub mod dropout;
pub mod error;
pub mod fgat;
pub mod fusion;
pub mod graph;
pub mod hgat;
pub mod ingest;
pub mod interpret;
pub mod params;
pub mod sab_lstm;
pub mod scalar;
pub mod synth;
pub mod training;

pub use config::{Dims, FeatureMode, Recurrence, Stream, StreamSettings, TrainConfig, Variant};
pub use error::{Error, Result};
pub use fusion::{AttentionTrace, ModelInput, PredictionRecord};
pub use graph::RegionGraph;
pub use params::ModelParams;
pub use scalar::Real;

pub type Params = ModelParams<f64>;
pub type Params32 = ModelParams<f32>;
