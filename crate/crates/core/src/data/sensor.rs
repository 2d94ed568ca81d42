// SPDX-License-Identifier: Apache-2.0

//! Sensor geometry and calibration: the world-to-lidar mapping, per-pixel
//! responses, gains and the dead-pixel mask.
//!
//! World coordinates are metres in an orthographic frame: `x` runs along
//! rows, `y` along columns and `z` is range inside the depth gate. Points
//! live on a fine transverse grid; `superres` fine pixels per axis fold into
//! one detector pixel.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use super::irf::Irf;
use crate::error::{Axis, Error, Result};
use crate::kv::{self, KvDoc, Section};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Round-trip range covered by one timing bin of width `seconds`.
pub fn bin_width_to_metres(seconds: f64) -> f64 {
    0.5 * SPEED_OF_LIGHT * seconds
}

pub fn metres_to_bin_width(metres: f64) -> f64 {
    2.0 * metres / SPEED_OF_LIGHT
}

/// Location of a world point in the data cube.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarCoord {
    /// Fine (point-grid) transverse index.
    pub fine: [usize; 2],
    /// Detector pixel, `fine / superres`.
    pub pixel: [usize; 2],
    /// Real-valued depth in bins.
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    n_rows: usize,
    n_cols: usize,
    n_bins: usize,
    irfs: Vec<Irf>,
    gain: Vec<f64>,
    dead: Vec<bool>,
    superres: usize,
    bin_resolution: f64,
    pixel_pitch: f64,
}

impl SensorModel {
    /// Sensor with a shared response, unit gain and no dead pixels.
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        n_bins: usize,
        irf: Irf,
        bin_resolution: f64,
        pixel_pitch: f64,
    ) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 || n_bins == 0 {
            return Err(Error::argument("sensor dimensions must be positive"));
        }
        if !(bin_resolution > 0.0) || !(pixel_pitch > 0.0) {
            return Err(Error::argument("bin resolution and pixel pitch must be positive"));
        }
        let n = n_rows * n_cols;
        Ok(SensorModel {
            n_rows,
            n_cols,
            n_bins,
            irfs: vec![irf],
            gain: vec![1.0; n],
            dead: vec![false; n],
            superres: 1,
            bin_resolution,
            pixel_pitch,
        })
    }

    pub fn with_superres(mut self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::argument("superres factor must be >= 1"));
        }
        self.superres = factor;
        Ok(self)
    }

    pub fn with_gain_map(mut self, gain: Vec<f64>) -> Result<Self> {
        if gain.len() != self.n_pixels() {
            return Err(Error::argument(format!(
                "gain map has {} entries, expected {}",
                gain.len(),
                self.n_pixels()
            )));
        }
        if gain.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
            return Err(Error::argument("gains must be finite and >= 0"));
        }
        self.gain = gain;
        Ok(self)
    }

    pub fn with_dead_pixels(mut self, dead: &[[usize; 2]]) -> Result<Self> {
        for &[i, j] in dead {
            if i >= self.n_rows || j >= self.n_cols {
                return Err(Error::argument(format!("dead pixel ({i}, {j}) outside sensor")));
            }
            let k = self.index(i, j);
            self.dead[k] = true;
        }
        Ok(self)
    }

    /// One response per pixel, row-major.
    pub fn with_pixel_irfs(mut self, irfs: Vec<Irf>) -> Result<Self> {
        if irfs.len() != self.n_pixels() {
            return Err(Error::argument("need one irf per pixel"));
        }
        self.irfs = irfs;
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }
    pub fn n_bins(&self) -> usize {
        self.n_bins
    }
    pub fn n_pixels(&self) -> usize {
        self.n_rows * self.n_cols
    }
    pub fn superres(&self) -> usize {
        self.superres
    }
    pub fn fine_rows(&self) -> usize {
        self.n_rows * self.superres
    }
    pub fn fine_cols(&self) -> usize {
        self.n_cols * self.superres
    }
    pub fn bin_resolution(&self) -> f64 {
        self.bin_resolution
    }
    pub fn pixel_pitch(&self) -> f64 {
        self.pixel_pitch
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n_cols + j
    }

    #[inline]
    pub fn irf(&self, pixel: usize) -> &Irf {
        if self.irfs.len() == 1 {
            &self.irfs[0]
        } else {
            &self.irfs[pixel]
        }
    }

    pub fn irfs(&self) -> &[Irf] {
        &self.irfs
    }

    pub fn is_dead(&self, pixel: usize) -> bool {
        self.dead[pixel]
    }

    /// Gain used in the likelihood; zero for dead pixels.
    #[inline]
    pub fn gain(&self, pixel: usize) -> f64 {
        if self.dead[pixel] {
            0.0
        } else {
            self.gain[pixel]
        }
    }

    pub fn raw_gains(&self) -> &[f64] {
        &self.gain
    }

    pub fn dead_pixels(&self) -> Vec<[usize; 2]> {
        (0..self.n_pixels())
            .filter(|&k| self.dead[k])
            .map(|k| [k / self.n_cols, k % self.n_cols])
            .collect()
    }

    /// Maps a world point to fine index, detector pixel and real-valued
    /// depth (not rounded).
    pub fn map_world_to_lidar(&self, p: &Vector3<f64>) -> Result<LidarCoord> {
        let fr = self.fine_index(p.x, self.fine_rows(), Axis::Row)?;
        let fc = self.fine_index(p.y, self.fine_cols(), Axis::Col)?;
        let t = p.z / self.bin_resolution;
        if !(t >= 0.0 && t < self.n_bins as f64) {
            return Err(Error::OutOfRange {
                axis: Axis::Depth,
                value: p.z,
                min: 0.0,
                max: self.n_bins as f64 * self.bin_resolution,
            });
        }
        Ok(LidarCoord {
            fine: [fr, fc],
            pixel: [fr / self.superres, fc / self.superres],
            t,
        })
    }

    fn fine_index(&self, v: f64, n: usize, axis: Axis) -> Result<usize> {
        let u = (v / self.pixel_pitch).floor();
        if !(u >= 0.0 && u < n as f64) {
            return Err(Error::OutOfRange {
                axis,
                value: v,
                min: 0.0,
                max: n as f64 * self.pixel_pitch,
            });
        }
        Ok(u as usize)
    }

    /// World position of the centre of fine pixel `fine` at depth `t` bins.
    pub fn world_position(&self, fine: [usize; 2], t: f64) -> Vector3<f64> {
        Vector3::new(
            (fine[0] as f64 + 0.5) * self.pixel_pitch,
            (fine[1] as f64 + 0.5) * self.pixel_pitch,
            t * self.bin_resolution,
        )
    }

    /// Same geometry with a different fold factor and a pitch scaled so the
    /// detector pixels keep their footprint.
    pub fn with_fold(&self, superres: usize) -> Result<Self> {
        if superres == 0 {
            return Err(Error::argument("superres factor must be >= 1"));
        }
        let mut s = self.clone();
        s.pixel_pitch = self.pixel_pitch * self.superres as f64 / superres as f64;
        s.superres = superres;
        Ok(s)
    }

    /// Repeats the detector `reps[0] x reps[1]` times (gains, mask and
    /// responses included).
    pub fn tiled(&self, reps: [usize; 2]) -> Self {
        let rows = self.n_rows * reps[0];
        let cols = self.n_cols * reps[1];
        let src = |i: usize, j: usize| (i % self.n_rows) * self.n_cols + (j % self.n_cols);
        let mut gain = Vec::with_capacity(rows * cols);
        let mut dead = Vec::with_capacity(rows * cols);
        let mut irfs = Vec::new();
        for i in 0..rows {
            for j in 0..cols {
                gain.push(self.gain[src(i, j)]);
                dead.push(self.dead[src(i, j)]);
                if self.irfs.len() > 1 {
                    irfs.push(self.irfs[src(i, j)].clone());
                }
            }
        }
        SensorModel {
            n_rows: rows,
            n_cols: cols,
            irfs: if irfs.is_empty() { self.irfs.clone() } else { irfs },
            gain,
            dead,
            ..self.clone()
        }
    }

    /// Reads a calibration file. `gain_map` paths resolve relative to the
    /// file's directory.
    pub fn read_calibration(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let doc = KvDoc::parse(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_section(&doc.section_or_root("sensor"), base)
    }

    pub const CALIBRATION_KEYS: &'static [&'static str] = &[
        "rows",
        "cols",
        "bins",
        "bin_resolution",
        "bin_width",
        "pixel_pitch",
        "superres",
        "irf_start",
        "irf_step",
        "irf",
        "irf_sigma",
        "gain",
        "gain_map",
        "dead_pixels",
    ];

    pub fn from_section(sec: &Section, base_dir: &Path) -> Result<Self> {
        sec.check_keys(Self::CALIBRATION_KEYS)?;
        let rows: usize = sec.require("rows")?;
        let cols: usize = sec.require("cols")?;
        let bins: usize = sec.require("bins")?;
        let bin_resolution = match (sec.parse::<f64>("bin_resolution")?, sec.parse::<f64>("bin_width")?) {
            (Some(m), _) => m,
            (None, Some(s)) => bin_width_to_metres(s),
            (None, None) => return Err(Error::config(sec.line, "need bin_resolution or bin_width")),
        };
        let pitch: f64 = sec.require("pixel_pitch")?;
        let superres: usize = sec.parse("superres")?.unwrap_or(1);
        let irf = match sec.parse::<f64>("irf_sigma")? {
            Some(sigma) => {
                let step: f64 = sec.parse("irf_step")?.unwrap_or(0.25);
                Irf::gaussian(sigma, step, 4.0)?
            }
            None => {
                let irf_start: f64 = sec.require("irf_start")?;
                let irf_step: f64 = sec.parse("irf_step")?.unwrap_or(1.0);
                let samples: Vec<f64> = sec
                    .parse_list("irf")?
                    .ok_or_else(|| Error::config(sec.line, "missing irf samples"))?;
                Irf::from_samples(irf_start, irf_step, &samples)?
            }
        };
        let mut sensor = SensorModel::new(rows, cols, bins, irf, bin_resolution, pitch)?.with_superres(superres)?;
        if let Some(g) = sec.parse::<f64>("gain")? {
            sensor = sensor.with_gain_map(vec![g; rows * cols])?;
        }
        if let Some(e) = sec.get("gain_map") {
            let text = std::fs::read_to_string(base_dir.join(&e.value))?;
            let gains: Vec<f64> = kv::parse_list(&text)
                .map_err(|_| Error::config(e.line, "gain map must hold numbers"))?;
            sensor = sensor.with_gain_map(gains)?;
        }
        if let Some(e) = sec.get("dead_pixels") {
            let mut dead = Vec::new();
            for item in e.value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let (i, j) = item
                    .split_once(':')
                    .ok_or_else(|| Error::config(e.line, format!("dead pixel {item:?} is not row:col")))?;
                let parse = |s: &str| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::config(e.line, format!("bad dead pixel {item:?}")))
                };
                dead.push([parse(i)?, parse(j)?]);
            }
            sensor = sensor.with_dead_pixels(&dead)?;
        }
        Ok(sensor)
    }

    /// Calibration text for a sensor with a shared response. Gains are
    /// written inline only when uniform; otherwise `gain_map_file` names the
    /// side file the caller must write with [`SensorModel::gain_map_text`].
    pub fn to_calibration_string(&self, gain_map_file: Option<&str>) -> Result<String> {
        if self.irfs.len() != 1 {
            return Err(Error::argument("per-pixel responses cannot be written to a calibration file"));
        }
        let irf = &self.irfs[0];
        let mut out = String::new();
        let _ = writeln!(out, "rows = {}", self.n_rows);
        let _ = writeln!(out, "cols = {}", self.n_cols);
        let _ = writeln!(out, "bins = {}", self.n_bins);
        let _ = writeln!(out, "bin_resolution = {}", self.bin_resolution);
        let _ = writeln!(out, "pixel_pitch = {}", self.pixel_pitch);
        let _ = writeln!(out, "superres = {}", self.superres);
        // drop the zero pads added at construction
        let samples = &irf.samples()[1..irf.samples().len() - 1];
        let _ = writeln!(out, "irf_start = {}", irf.support().0 + irf.step());
        let _ = writeln!(out, "irf_step = {}", irf.step());
        let list: Vec<String> = samples.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "irf = {}", list.join(","));
        let uniform = self.gain.iter().all(|g| *g == self.gain[0]);
        if uniform {
            let _ = writeln!(out, "gain = {}", self.gain[0]);
        } else {
            let file = gain_map_file.ok_or_else(|| Error::argument("non-uniform gains need a gain map file"))?;
            let _ = writeln!(out, "gain_map = {file}");
        }
        let dead = self.dead_pixels();
        if !dead.is_empty() {
            let list: Vec<String> = dead.iter().map(|[i, j]| format!("{i}:{j}")).collect();
            let _ = writeln!(out, "dead_pixels = {}", list.join(","));
        }
        Ok(out)
    }

    pub fn gain_map_text(&self) -> String {
        let mut out = String::new();
        for row in self.gain.chunks(self.n_cols) {
            let line: Vec<String> = row.iter().map(|g| g.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}
