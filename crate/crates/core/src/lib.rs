//! Multi-target filtering and tracking on GM-PHD maps with an online
//! ConvLSTM predictor of PHD differences.
//!
//! Every numeric type is generic over [`scalar::Real`] (`f32` or `f64`);
//! the aliases below fix the common choices.

pub mod association;
pub mod convlstm;
pub mod error;
pub mod gm;
pub mod grid;
pub mod io;
pub mod kv;
pub mod metrics;
pub mod pipeline;
pub mod scalar;
pub mod selftest;
pub mod simulate;
pub mod update;

pub use error::{Error, Result};
pub use scalar::Real;

pub type TargetTuple64 = gm::TargetTuple<f64>;
pub type TargetTuple32 = gm::TargetTuple<f32>;
pub type TargetSet64 = gm::TargetSet<f64>;
pub type TargetSet32 = gm::TargetSet<f32>;
pub type PhdMap64 = grid::PhdMap<f64>;
pub type PhdMap32 = grid::PhdMap<f32>;
pub type ConvLstm64 = convlstm::ConvLstmParams<f64>;
pub type ConvLstm32 = convlstm::ConvLstmParams<f32>;
pub type PipelineState64 = pipeline::PipelineState<f64>;
pub type PipelineState32 = pipeline::PipelineState<f32>;
