//! Deterministic pathomics toolkit.

pub mod attribution;
pub mod autoencoder;
pub mod classify;
pub mod container;
pub mod error;
pub mod numeric;
pub mod pipeline;
pub mod slide;
pub mod stratify;
pub mod vit;

pub use error::{Error, ExitCode, Result};
