//! File formats, image ingestion, rendering, the host bridge and the CLI
//! around `convscope-core`.

pub mod bench;
pub mod bridge;
pub mod cli;
pub mod dump;
mod error;
pub mod image;
pub mod manifest;
pub mod render;

pub use error::{Error, Result};
