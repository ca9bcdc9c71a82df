//! Encoder-decoder segmentation model with a dropout-bearing prediction head.
//!
//! The whole parameter set is exposed as one flat, stably-indexed vector so
//! that index masks can address individual scalars; the (name → offset)
//! layer table is a pure function of [`ModelConfig`].

mod config;
mod error;
mod layout;
mod model;

pub use config::ModelConfig;
pub use error::{Result, SegnetError};
pub use layout::{build_layout, LayerEntry, Layout, ParamKind};
pub use model::{copy_params, ForwardMode, Model, NORM_EPS};
