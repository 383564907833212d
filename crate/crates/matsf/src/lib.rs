//! Multi-variable adversarial time-series forecasting.
//!
//! A batch of single-variable LSTM forecasters is trained against one
//! discriminator: each mini-batch runs a forecast phase (per-variable MSE)
//! followed by a regularization phase (the discriminator learns to separate
//! real target vectors from concatenated forecasts, then the forecasters
//! update to fool it). Two reference architectures — a single multi-output
//! network and fully independent per-variable networks — share the same data
//! pipeline and metrics so the three systems are directly comparable.

pub mod baselines;
pub mod checkpoint;
pub mod data;
pub mod eval;
pub mod models;
pub mod report;
pub mod run;
pub mod synth;
pub mod tensor;
pub mod trainer;
