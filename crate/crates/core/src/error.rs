// SPDX-License-Identifier: Apache-2.0

use std::fmt;

use thiserror::Error;

/// Axis of the world-to-lidar mapping that a range check failed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Row,
    Col,
    Depth,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Axis::Row => f.write_str("row (x)"),
            Axis::Col => f.write_str("column (y)"),
            Axis::Depth => f.write_str("depth"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed file: bad magic, unsupported version, truncated payload.
    #[error("format error: {0}")]
    Format(String),

    #[error("invalid data at pixel ({row}, {col}): {msg}")]
    Invariant { row: usize, col: usize, msg: String },

    #[error("{axis} out of range: {value} not in [{min}, {max})")]
    OutOfRange {
        axis: Axis,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("config error (line {line}): {msg}")]
    Config { line: usize, msg: String },
}

impl Error {
    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn config(line: usize, msg: impl Into<String>) -> Self {
        Error::Config {
            line,
            msg: msg.into(),
        }
    }

    /// True for errors caused by malformed input data rather than bad
    /// arguments or the environment.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Format(_) | Error::Invariant { .. } | Error::OutOfRange { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
