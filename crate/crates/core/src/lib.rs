//! Finite-dimensional frame theory: frame operators and bounds, binary
//! selector search, dyadic sampling, frame extraction, Beurling density
//! and cyclic time-frequency systems.

pub mod cli;
pub mod dyadic;
pub mod error;
pub mod extraction;
pub mod frames;
pub mod linalg;
pub mod pointsets;
pub mod sampling;
pub mod selectors;
pub mod timefreq;

pub use error::{FramexError, Result};
