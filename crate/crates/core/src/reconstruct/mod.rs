// SPDX-License-Identifier: Apache-2.0

//! Initialisation and the iterative solver.

mod config;
mod init;
mod palm;

pub use config::{BackgroundMode, InitParams, ReconConfig, StepSize};
pub use init::{init_matched_filter, Peak};
pub(crate) use init::{detect_peaks, spawn, DetectOptions};
pub use palm::{palm_step, reconstruct, reconstruct_from, Diagnostics, Reconstruction, Report, Timings};
