//! Simulation and analysis toolkit for nuclear-spin detection with NV-center
//! CPMG spectroscopy.
//!
//! - [`signal`]: closed-form survival probability, contrast decay, shot noise.
//! - [`oracle`]: explicit piecewise propagation used to validate [`signal`].
//! - [`dataset`]: deterministic dataset generation, shard format, splits and
//!   normalization statistics.
//! - [`imaging`]: Gaussian heat-map targets and the morphological decoder that
//!   turns heat maps back into couplings.
//! - [`eval`]: IoU matching, precision/recall, coupling and signal errors, and
//!   the robustness and selectivity studies.
//! - [`peaks`]: classical dip finder for high-field traces.
//! - [`cli`]: the `nvscope` command-line tool.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod imaging;
pub mod oracle;
pub mod peaks;
pub mod rng;
pub mod signal;

pub use error::{Error, Result};
