// SPDX-License-Identifier: Apache-2.0

//! Point clouds, background images and ASCII PLY I/O.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::Vector3;

use super::sensor::SensorModel;
use crate::error::{Error, Result};

/// A reconstructed or ground-truth return.
///
/// `fine`, `pixel` and `t` are cached results of the sensor mapping applied
/// to `position`; use the constructors so they stay consistent.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub position: Vector3<f64>,
    pub intensity: f64,
    pub fine: [usize; 2],
    pub pixel: [usize; 2],
    pub t: f64,
}

impl Point {
    pub fn from_world(sensor: &SensorModel, position: Vector3<f64>, intensity: f64) -> Result<Self> {
        let c = sensor.map_world_to_lidar(&position)?;
        Ok(Point {
            position,
            intensity,
            fine: c.fine,
            pixel: c.pixel,
            t: c.t,
        })
    }

    /// Point at the centre of fine pixel `fine`, depth `t` bins.
    pub fn at_fine(sensor: &SensorModel, fine: [usize; 2], t: f64, intensity: f64) -> Self {
        let s = sensor.superres();
        Point {
            position: sensor.world_position(fine, t),
            intensity,
            fine,
            pixel: [fine[0] / s, fine[1] / s],
            t,
        }
    }

    /// Moves the point along the line of sight to depth `t` bins.
    pub fn set_depth(&mut self, sensor: &SensorModel, t: f64) {
        self.t = t;
        self.position.z = t * sensor.bin_resolution();
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
}

impl PointCloud {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_points(points: Vec<Point>) -> Self {
        PointCloud { points }
    }

    pub fn push(&mut self, p: Point) {
        self.points.push(p);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Mutable access for in-place updates. Callers keep the cached lidar
    /// coordinates consistent (see [`Point::set_depth`]).
    pub fn points_mut(&mut self) -> &mut [Point] {
        &mut self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point> {
        self.points.iter()
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    /// Checks nonnegative intensities and that the cached lidar coordinates
    /// agree with the sensor mapping of each position.
    pub fn validate(&self, sensor: &SensorModel) -> Result<()> {
        for (n, p) in self.points.iter().enumerate() {
            if !(p.intensity >= 0.0) {
                return Err(Error::argument(format!("point {n} has intensity {}", p.intensity)));
            }
            let c = sensor.map_world_to_lidar(&p.position)?;
            if c.fine != p.fine || c.pixel != p.pixel || (c.t - p.t).abs() > 1e-9 * c.t.abs().max(1.0) {
                return Err(Error::argument(format!("point {n} cached lidar coordinates are stale")));
            }
        }
        Ok(())
    }

    pub fn total_intensity(&self) -> f64 {
        self.points.iter().map(|p| p.intensity).sum()
    }

    pub fn write_ply(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(self.to_ply_string().as_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn to_ply_string(&self) -> String {
        let mut out = String::with_capacity(160 + self.points.len() * 48);
        out.push_str("ply\nformat ascii 1.0\n");
        let _ = writeln!(out, "element vertex {}", self.points.len());
        out.push_str("property float x\nproperty float y\nproperty float z\nproperty float intensity\nend_header\n");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{} {} {} {}",
                p.position.x, p.position.y, p.position.z, p.intensity
            );
        }
        out
    }

    /// Reads an ASCII PLY and re-derives lidar coordinates with `sensor`.
    pub fn read_ply(path: impl AsRef<Path>, sensor: &SensorModel) -> Result<Self> {
        let rows = read_ply_rows(path)?;
        let points = rows
            .into_iter()
            .map(|(pos, r)| Point::from_world(sensor, pos, r))
            .collect::<Result<Vec<_>>>()?;
        Ok(PointCloud { points })
    }
}

/// Parses an ASCII PLY with `x y z intensity` vertex properties (any float
/// type names, in that order).
pub fn read_ply_rows(path: impl AsRef<Path>) -> Result<Vec<(Vector3<f64>, f64)>> {
    let r = BufReader::new(File::open(path)?);
    let mut lines = r.lines();
    let mut next = || -> Result<Option<String>> { lines.next().transpose().map_err(Error::Io) };
    if next()?.as_deref().map(str::trim) != Some("ply") {
        return Err(Error::format("missing ply magic line"));
    }
    let mut count: Option<usize> = None;
    let mut props = Vec::new();
    loop {
        let line = next()?.ok_or_else(|| Error::format("ply header not terminated"))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", _] => {}
            ["format", ..] => return Err(Error::format("only ascii ply is supported")),
            ["comment", ..] | [] => {}
            ["element", "vertex", n] => {
                count = Some(n.parse().map_err(|_| Error::format("bad vertex count"))?);
            }
            ["property", _, name] => props.push(name.to_string()),
            ["end_header"] => break,
            _ => return Err(Error::format(format!("unexpected ply header line {line:?}"))),
        }
    }
    let count = count.ok_or_else(|| Error::format("ply has no vertex element"))?;
    if props != ["x", "y", "z", "intensity"] {
        return Err(Error::format(format!("expected x y z intensity properties, got {props:?}")));
    }
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let line = next()?.ok_or_else(|| Error::format(format!("ply truncated at vertex {k}")))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format(format!("bad number in vertex {k}")))?;
        if vals.len() != 4 {
            return Err(Error::format(format!("vertex {k} has {} values", vals.len())));
        }
        out.push((Vector3::new(vals[0], vals[1], vals[2]), vals[3]));
    }
    Ok(out)
}

/// Per-pixel background rate (photons per bin, before gain).
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundImage {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
}

impl BackgroundImage {
    pub fn constant(n_rows: usize, n_cols: usize, value: f64) -> Self {
        BackgroundImage {
            n_rows,
            n_cols,
            values: vec![value; n_rows * n_cols],
        }
    }

    pub fn from_values(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(Error::argument("background size does not match dimensions"));
        }
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::argument("background values must be >= 0"));
        }
        Ok(BackgroundImage { n_rows, n_cols, values })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    #[inline]
    pub fn get(&self, pixel: usize) -> f64 {
        self.values[pixel]
    }
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len().max(1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Irf;

    fn sensor() -> SensorModel {
        SensorModel::new(8, 8, 64, Irf::delta(), 1.0, 1.0).unwrap()
    }

    #[test]
    fn empty_ply() {
        let text = PointCloud::new().to_ply_string();
        assert!(text.contains("element vertex 0\n"));
        assert!(text.ends_with("end_header\n"));
    }

    #[test]
    fn one_point_row() {
        let s = sensor();
        let cloud = PointCloud::from_points(vec![Point::from_world(&s, Vector3::new(1.0, 2.0, 3.0), 0.5).unwrap()]);
        let text = cloud.to_ply_string();
        assert!(text.ends_with("end_header\n1 2 3 0.5\n"), "{text}");
    }

    #[test]
    fn reparse_preserves_count_and_order() {
        let s = sensor();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        let pts: Vec<Point> = (0..37)
            .map(|k| Point::at_fine(&s, [k % 8, (k * 3) % 8], 0.37 * k as f64, 0.1 * k as f64))
            .collect();
        let cloud = PointCloud::from_points(pts);
        cloud.write_ply(&path).unwrap();
        let back = PointCloud::read_ply(&path, &s).unwrap();
        assert_eq!(back.len(), 37);
        assert_eq!(back, cloud);
    }

    #[test]
    fn stale_coordinates_detected() {
        let s = sensor();
        let mut p = Point::at_fine(&s, [1, 1], 4.0, 1.0);
        let cloud = PointCloud::from_points(vec![p.clone()]);
        cloud.validate(&s).unwrap();
        p.position.z = 9.0;
        assert!(PointCloud::from_points(vec![p]).validate(&s).is_err());
    }
}
