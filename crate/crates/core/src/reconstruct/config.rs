// SPDX-License-Identifier: Apache-2.0

//! Solver configuration and its `key = value` file form.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::denoise::{ApssParams, Projection};
use crate::error::{Error, Result};
use crate::kv::KvDoc;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    /// Per-point `1 / curvature`, backtracked.
    Auto,
    /// A fixed scale on the raw gradient, backtracked.
    Fixed(f64),
}

impl FromStr for StepSize {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(StepSize::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(StepSize::Fixed(v)),
            _ => Err(Error::argument(format!("step size must be 'auto' or > 0, got {s:?}"))),
        }
    }
}

impl std::fmt::Display for StepSize {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StepSize::Auto => f.write_str("auto"),
            StepSize::Fixed(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BackgroundMode {
    /// No spatial regularisation (bistatic systems).
    Identity,
    /// Radial low-pass with normalised cutoff in `(0, 1]`.
    Fft { cutoff: f64 },
}

impl FromStr for BackgroundMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "identity" {
            return Ok(BackgroundMode::Identity);
        }
        if let Some(c) = s.strip_prefix("fft:") {
            if let Ok(cutoff) = c.trim().parse::<f64>() {
                if cutoff > 0.0 && cutoff <= 1.0 {
                    return Ok(BackgroundMode::Fft { cutoff });
                }
            }
        }
        Err(Error::argument(format!("background must be 'identity' or 'fft:<cutoff in (0,1]>', got {s:?}")))
    }
}

impl std::fmt::Display for BackgroundMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BackgroundMode::Identity => f.write_str("identity"),
            BackgroundMode::Fft { cutoff } => write!(f, "fft:{cutoff}"),
        }
    }
}

/// Matched-filter initialisation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct InitParams {
    /// Maximum returns proposed per pixel (`K`).
    pub max_returns: usize,
    /// Minimum peak amplitude, in photons per pixel.
    pub peak_threshold: f64,
    /// Minimum distance between accepted peaks of one pixel, in bins.
    pub min_peak_separation: f64,
    /// Histograms of the `(2 p + 1)^2` neighbourhood are pooled for peak
    /// detection when `p > 0`.
    pub pool_radius: usize,
}

impl Default for InitParams {
    fn default() -> Self {
        InitParams {
            max_returns: 2,
            peak_threshold: 0.5,
            min_peak_separation: 10.0,
            pool_radius: 1,
        }
    }
}

impl InitParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_returns < 1 {
            return Err(Error::argument("init.max_returns must be >= 1"));
        }
        if !(self.min_peak_separation >= 1.0) {
            return Err(Error::argument("init.min_peak_separation must be >= 1"));
        }
        if !self.peak_threshold.is_finite() {
            return Err(Error::argument("init.peak_threshold must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconConfig {
    pub max_iters: usize,
    pub step_depth: StepSize,
    pub step_intensity: StepSize,
    pub step_background: StepSize,
    /// Backtracking factor `beta` in `(0, 1)`.
    pub backtrack: f64,
    pub max_backtracks: usize,
    pub apss: ApssParams,
    pub knn_k: usize,
    /// Neighbour search cap for the intensity filter, metres.
    pub knn_radius: f64,
    pub r_min: f64,
    pub background: BackgroundMode,
    pub init: InitParams,
    /// Stop when the relative nll change of an iteration falls below this.
    pub stop_tol: f64,
    /// Lower bound on every background value.
    pub background_floor: f64,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig {
            max_iters: 20,
            step_depth: StepSize::Auto,
            step_intensity: StepSize::Auto,
            step_background: StepSize::Auto,
            backtrack: 0.5,
            max_backtracks: 8,
            apss: ApssParams {
                projection: Projection::LineOfSight,
                ..ApssParams::default()
            },
            knn_k: 9,
            knn_radius: 0.08,
            r_min: 0.1,
            background: BackgroundMode::Identity,
            init: InitParams::default(),
            stop_tol: 1e-4,
            background_floor: 1e-6,
        }
    }
}

impl ReconConfig {
    pub const KEYS: &'static [&'static str] = &[
        "max_iters",
        "step_depth",
        "step_intensity",
        "step_background",
        "backtrack",
        "max_backtracks",
        "apss.radius",
        "apss.min_neighbors",
        "apss.sphere_degeneracy_eps",
        "apss.projection",
        "knn.k",
        "knn.radius",
        "r_min",
        "background",
        "init.max_returns",
        "init.peak_threshold",
        "init.min_peak_separation",
        "init.pool_radius",
        "stop_tol",
        "background_floor",
    ];

    /// Sets one field from its file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::argument(format!("bad value for {key}: {v:?}")))
        }
        match key {
            "max_iters" => self.max_iters = num(key, value)?,
            "step_depth" => self.step_depth = value.parse()?,
            "step_intensity" => self.step_intensity = value.parse()?,
            "step_background" => self.step_background = value.parse()?,
            "backtrack" => self.backtrack = num(key, value)?,
            "max_backtracks" => self.max_backtracks = num(key, value)?,
            "apss.radius" => self.apss.radius = num(key, value)?,
            "apss.min_neighbors" => self.apss.min_neighbors = num(key, value)?,
            "apss.sphere_degeneracy_eps" => self.apss.sphere_degeneracy_eps = num(key, value)?,
            "apss.projection" => {
                self.apss.projection = match value {
                    "line_of_sight" => Projection::LineOfSight,
                    "closest_point" => Projection::ClosestPoint,
                    _ => {
                        return Err(Error::argument(format!(
                            "apss.projection must be line_of_sight or closest_point, got {value:?}"
                        )))
                    }
                }
            }
            "knn.k" => self.knn_k = num(key, value)?,
            "knn.radius" => self.knn_radius = num(key, value)?,
            "r_min" => self.r_min = num(key, value)?,
            "background" => self.background = value.parse()?,
            "init.max_returns" => self.init.max_returns = num(key, value)?,
            "init.peak_threshold" => self.init.peak_threshold = num(key, value)?,
            "init.min_peak_separation" => self.init.min_peak_separation = num(key, value)?,
            "init.pool_radius" => self.init.pool_radius = num(key, value)?,
            "stop_tol" => self.stop_tol = num(key, value)?,
            "background_floor" => self.background_floor = num(key, value)?,
            _ => return Err(Error::argument(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Defaults overridden by the keys present in `text`.
    pub fn parse(text: &str) -> Result<Self> {
        let doc = KvDoc::parse(text)?;
        if let Some(s) = doc.sections.first() {
            return Err(Error::config(s.line, "reconstruction config takes no sections"));
        }
        let mut cfg = ReconConfig::default();
        for e in &doc.root.entries {
            cfg.set(&e.key, &e.value).map_err(|err| match err {
                Error::Argument(msg) => Error::config(e.line, msg),
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        let projection = match self.apss.projection {
            Projection::LineOfSight => "line_of_sight",
            Projection::ClosestPoint => "closest_point",
        };
        let rows: [(&str, String); 20] = [
            ("max_iters", self.max_iters.to_string()),
            ("step_depth", self.step_depth.to_string()),
            ("step_intensity", self.step_intensity.to_string()),
            ("step_background", self.step_background.to_string()),
            ("backtrack", self.backtrack.to_string()),
            ("max_backtracks", self.max_backtracks.to_string()),
            ("apss.radius", self.apss.radius.to_string()),
            ("apss.min_neighbors", self.apss.min_neighbors.to_string()),
            ("apss.sphere_degeneracy_eps", self.apss.sphere_degeneracy_eps.to_string()),
            ("apss.projection", projection.to_string()),
            ("knn.k", self.knn_k.to_string()),
            ("knn.radius", self.knn_radius.to_string()),
            ("r_min", self.r_min.to_string()),
            ("background", self.background.to_string()),
            ("init.max_returns", self.init.max_returns.to_string()),
            ("init.peak_threshold", self.init.peak_threshold.to_string()),
            ("init.min_peak_separation", self.init.min_peak_separation.to_string()),
            ("init.pool_radius", self.init.pool_radius.to_string()),
            ("stop_tol", self.stop_tol.to_string()),
            ("background_floor", self.background_floor.to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::argument("max_iters must be >= 1"));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::argument("backtrack must be in (0, 1)"));
        }
        if self.knn_k < 1 {
            return Err(Error::argument("knn.k must be >= 1"));
        }
        if !(self.knn_radius > 0.0) {
            return Err(Error::argument("knn.radius must be > 0"));
        }
        if !(self.r_min >= 0.0) {
            return Err(Error::argument("r_min must be >= 0"));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(Error::argument("stop_tol must be >= 0"));
        }
        if !(self.background_floor > 0.0) {
            return Err(Error::argument("background_floor must be > 0"));
        }
        self.apss.validate()?;
        self.init.validate()
    }
}
