//! Evaluation of probabilistic tumor segmentations against multi-rater
//! annotations: overlap, calibration, probabilistic volume and vascular
//! invasion metrics, with rank-based leaderboards and their statistics.

pub mod consensus;
pub mod error;
pub mod grid;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod phantom;
pub mod ranking;
pub mod vascular;

pub use error::{EvalError, Result};
