//! False discovery rate bounds for cross-sectional return predictability.
//!
//! - [`panel`]: return panels, t-statistics, summaries.
//! - [`bounds`]: the easy, Storey, extrapolation and interval bounds.
//! - [`control`]: BH95 and BY 1.3 hurdles, Bonferroni.
//! - [`simkit`]: Monte Carlo panels with known truth.
//! - [`hlz`]: the parametric factor model with publication selection.

pub mod bounds;
pub mod control;
pub mod error;
pub mod hlz;
pub mod normal;
pub mod panel;
pub mod rng;
pub mod simkit;
pub mod stats;

pub use error::{Error, Result};
