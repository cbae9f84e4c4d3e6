//! Allocation-only building blocks for twin identification by hierarchical
//! score-level fusion.
//!
//! Everything in this crate is pure computation over in-memory values:
//! MFCC extraction, dynamic time warping, an LSTM sequence classifier, HOG
//! descriptors, PCA reduction of external embeddings, tanh score
//! normalization, weighted fusion trees and closed-set identification
//! metrics. File formats, the synthetic dataset generator and the command
//! line live in the `twinfuse` crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod audio;
pub mod datamodel;
pub mod dtw;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod hog;
pub mod linalg;
pub mod lstm;
pub mod matrix;
pub mod score;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use score::ScoreMatrix;
