//! Spatio-temporal imputation of multivariate sensor series.
//!
//! A dynamic sensor graph is built per window from fuzzy-rough connectivity
//! scores; graph attention blocks mix information across sensors at every
//! timestep and a transformer encoder models each sensor's sequence. The
//! crate also ships the data pipeline, baselines, training loop and the
//! missing-rate sweep used to evaluate them.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the bottom of this file name the common instantiations.

pub mod autodiff;
pub mod baselines;
pub mod checkpoint;
pub mod data;
pub mod encoder;
mod error;
pub mod fgat;
pub mod fuzzy;
pub mod gradcheck;
pub mod graph;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod params;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use baselines::{build_model, mean_impute_reference};
pub use data::{MissingPattern, NormalizationStats, SplitSpec, TimeSeriesDataset};
pub use graph::{DynamicGraph, GraphConfig, Pooling};
pub use harness::{MetricsReport, TrainConfig};
pub use model::{FgattModel, Imputer, MaskedWindow, ModelConfig, ModelKind, Shape};

pub type FgattModel64 = FgattModel<f64>;
pub type FgattModel32 = FgattModel<f32>;
pub type MaskedWindow64 = MaskedWindow<f64>;
pub type MaskedWindow32 = MaskedWindow<f32>;
pub type DynamicGraph64 = DynamicGraph<f64>;
pub type DynamicGraph32 = DynamicGraph<f32>;
pub type Kernel64 = fuzzy::Kernel<f64>;
pub type Kernel32 = fuzzy::Kernel<f32>;
