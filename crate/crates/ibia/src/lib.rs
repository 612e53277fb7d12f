//! File formats, command line and benchmark harness around `ibia-core`.
//!
//! [`uai`] reads and writes UAI competition model, evidence and result files,
//! [`harness`] runs single instances, seed sweeps and manifest batches, and
//! [`report`] renders their metrics as stable line-oriented text.

mod error;
pub mod harness;
pub mod report;
pub mod uai;

pub use error::{Error, Result};
