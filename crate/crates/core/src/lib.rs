//! Dark-flash inverse rendering toolkit.

pub mod augment;
pub mod brdf;
pub mod cli;
pub mod error;
pub mod fusion;
pub mod imaging;
pub mod relight;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
