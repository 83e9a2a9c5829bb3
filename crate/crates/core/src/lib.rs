//! Exact and numerical machinery for Kloosterman-type exponential sums, their
//! correlation sums, the `d(n)` Voronoi formula, bilinear forms in
//! hyper-Kloosterman sums, and `d_3` in arithmetic progressions.

pub mod arith;
pub mod bessel;
pub mod bilinear;
pub mod charsums;
pub mod checks;
pub mod distribution;
pub mod error;
pub mod expsums;
pub mod format;
pub mod modarith;
pub mod quad;
pub mod voronoi;

pub use error::{Error, Result};
