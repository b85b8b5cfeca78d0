//! Compactness diagnostics for sampled bounded kernels: covering nets of rows
//! and columns, iterated discrete integrals and double limits, semicontinuous
//! envelopes, dyadic operator semigroups and almost-periodic kernels.

pub mod almost_periodic;
pub mod covering;
pub mod dyadic;
pub mod envelope;
pub mod error;
pub mod expm;
pub mod expr;
pub mod fubini;
pub mod kernel;
pub mod semigroup;
pub mod spec;
mod par;

pub use error::{Error, Result};
pub use kernel::{IndexSampling, SampledKernel};
