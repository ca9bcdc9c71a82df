//! Dense f32 tensors, deterministic compute kernels, tape-based reverse-mode
//! autodiff, and a masked Adam optimizer.
//!
//! Everything here is bitwise reproducible under a fixed seed: reductions use
//! a fixed order, and the rayon paths (feature `parallel`, on by default)
//! split work only across disjoint outputs, so sequential and parallel builds
//! agree bit for bit.

mod adam;
mod error;
pub mod kernels;
mod mask;
pub mod ops;
pub mod rng;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use error::{NumericsError, Result};
pub use mask::{ClassMap, ParamMask, PixelMask};
pub use tape::{Graph, NodeId, CLAMP_LO};
pub use tensor::Tensor;

/// Flat view of every model scalar; indices are stable per model layout.
pub type ParamVector = Vec<f32>;
