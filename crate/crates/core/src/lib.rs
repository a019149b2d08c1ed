//! Correlation kernels of discrete symplectic and orthogonal (Pfaffian)
//! ensembles on the nonnegative integers.
//!
//! The crate builds the scalar kernels `S_N4` and `S_N1` for Meixner,
//! Charlier and generic rational-ratio weights, assembles the 2x2 matrix
//! kernels, and cross-checks them against brute-force enumeration.

pub mod error;
pub mod kernels;
pub mod limits;
pub mod numeric;
pub mod operators;
pub mod oracle;
pub mod orthofam;
pub mod pfaffian;
pub mod weights;
pub mod zmeasure;

pub use error::{Error, Result};
