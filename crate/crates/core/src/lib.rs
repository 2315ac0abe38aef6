//! Introspectable forward pass for small linear CNNs.
//!
//! Every activation of a forward pass is kept in an [`InferenceSession`], and
//! the [`introspect`] module derives the data behind the three explainer levels
//! from it: the per-layer overview, per-neuron convolution decompositions and
//! flatten wiring, and per-pixel window traces.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, image decoding
//! and the command line live in the `convscope` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod arch;
pub mod blob;
pub mod colormap;
pub mod engine;
mod error;
pub mod fixture;
pub mod introspect;
pub mod model;
pub mod tensor;

pub use arch::{Architecture, ConvHyper, GroupTag, LayerKind, LayerSpec, PoolHyper};
pub use colormap::{ColorScale, Scope};
pub use engine::{run_forward, InferenceSession};
pub use error::{Error, Result};
pub use model::{ConvWeights, DenseWeights, LayerWeights, Metadata, Model, WeightStore};
pub use tensor::{Shape, Tensor3, Window};
