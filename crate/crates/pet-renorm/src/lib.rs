//! Rectangle exchange maps `Ψ_{α,β}`, the Truchet tilings they generate, and
//! the renormalization machinery relating them: the parameter map
//! `f(t) = t/(1−2t) mod G`, collapsing of ±1 sequences, the integer
//! return-time cocycle, and the resulting measure of non-periodic points.
//!
//! All dynamics run in exact arithmetic ([`numerics::Scalar`]); floats only
//! appear when formatting reports.

pub mod cli;
pub mod cocycle;
pub mod error;
pub mod numerics;
pub mod params;
pub mod pet;
pub mod symbolic;
pub mod tiling;

pub use error::{Error, Result};
pub use numerics::Scalar;
