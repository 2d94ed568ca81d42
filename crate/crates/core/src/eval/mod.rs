// SPDX-License-Identifier: Apache-2.0

//! Metrics, the cross-correlation baseline and the scaling benchmark.

mod baseline;
mod bench;
mod metrics;

pub use baseline::baseline_xcorr;
pub use bench::{bench_scaling, densify, linear_fit, BenchAxis, BenchResult, BenchRow};
pub use metrics::{evaluate, evaluate_columns, evaluate_rows, upsample_to_fine, ColumnPoint, EvalResult};
