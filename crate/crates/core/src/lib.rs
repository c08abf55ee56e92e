//! Day-ahead hourly residential electricity load forecasting.
//!
//! The crate covers the whole path from raw meter readings to ranked model
//! reports: resampling to hourly series, outlier handling and imputation,
//! lagged feature matrices, a gradient-boosted tree regressor, ARIMA/ARIMAX
//! and SVR baselines, grid search with expanding-window cross-validation,
//! accuracy metrics, a synthetic data generator and a config-driven
//! pipeline.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below name the `f64` instantiations used by the pipeline.

// `!(x > 0.0)` is used on purpose so that NaN fails validation too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod features;
pub mod gbt;
pub mod metrics;
pub mod persist;
pub mod pipeline;
pub mod preprocess;
pub mod scalar;
pub mod seed;
pub mod synth;
pub mod timeseries;
pub mod tuning;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type HourlySeries64 = timeseries::HourlySeries<f64>;
pub type RawRecord64 = timeseries::RawRecord<f64>;
pub type FeatureMatrix64 = features::FeatureMatrix<f64>;
pub type GbtModel64 = gbt::GbtModel<f64>;
pub type GbtModel32 = gbt::GbtModel<f32>;
pub type ArimaModel64 = baselines::ArimaModel<f64>;
pub type SvrModel64 = baselines::SvrModel<f64>;
pub type MetricBundle64 = metrics::MetricBundle<f64>;
