//! Idiom detection for Sorani Kurdish text.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod numcore;
pub mod parallel;
pub mod rng;
pub mod textnorm;
pub mod tokenizer;
pub mod training;

pub use error::{Error, Result};
