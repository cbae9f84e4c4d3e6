//! File formats, synthetic twin datasets and the end-to-end identification
//! pipeline built on `twinfuse-core`.

pub mod config;
pub mod error;
pub mod manifest;
pub mod pgm;
pub mod pipeline;
pub mod report;
pub mod synth;
pub mod tables;
pub mod wav;

pub use error::{Error, Result};
