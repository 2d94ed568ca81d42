// SPDX-License-Identifier: Apache-2.0

//! Parametric ground-truth scenes.
//!
//! A scene is a list of surfaces over the fine pixel grid. Each surface
//! covers a rectangle of fine pixels (minus optional holes) and gives one
//! return per covered fine pixel. Overlapping surfaces all contribute: a
//! partially transmitting layer such as a net is modelled by its
//! reflectivity (fill factor), not by occlusion.

use std::path::Path;

use crate::data::{Point, PointCloud, SensorModel};
use crate::error::{Error, Result};
use crate::kv::{self, KvDoc, Section};

/// Half-open rectangle of fine pixels `[r0, r1) x [c0, c1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub r0: usize,
    pub c0: usize,
    pub r1: usize,
    pub c1: usize,
}

impl Rect {
    pub fn new(r0: usize, c0: usize, r1: usize, c1: usize) -> Self {
        Rect { r0, c0, r1, c1 }
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        r >= self.r0 && r < self.r1 && c >= self.c0 && c < self.c1
    }

    fn parse(text: &str) -> Option<Self> {
        let v: Vec<usize> = kv::parse_list(text).ok()?;
        (v.len() == 4 && v[0] < v[2] && v[1] < v[3]).then(|| Rect::new(v[0], v[1], v[2], v[3]))
    }
}

/// Depth profile of a surface, in metres, as a function of the lateral
/// world position `(x, y)` of a fine pixel centre.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// `z = depth + slope_x * x + slope_y * y`.
    Plane { depth: f64, slope_x: f64, slope_y: f64 },
    /// Front cap of a sphere centred at `(cx, cy, cz)`; empty beyond the radius.
    Dome { cx: f64, cy: f64, cz: f64, radius: f64 },
    /// Explicit depths on the fine grid, row-major over the whole grid.
    HeightMap { depths: Vec<f64> },
}

impl Shape {
    fn depth(&self, x: f64, y: f64, fine: usize) -> Option<f64> {
        match self {
            Shape::Plane { depth, slope_x, slope_y } => Some(depth + slope_x * x + slope_y * y),
            Shape::Dome { cx, cy, cz, radius } => {
                let d2 = (x - cx).powi(2) + (y - cy).powi(2);
                (d2 < radius * radius).then(|| cz - (radius * radius - d2).sqrt())
            }
            Shape::HeightMap { depths } => depths.get(fine).copied().filter(|d| d.is_finite()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reflectivity {
    Constant(f64),
    /// One value per fine pixel, row-major.
    Map(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    pub shape: Shape,
    /// Covered fine pixels; the whole grid when `None`.
    pub region: Option<Rect>,
    pub holes: Vec<Rect>,
    pub reflectivity: Reflectivity,
}

impl Surface {
    pub fn new(shape: Shape, reflectivity: f64) -> Self {
        Surface {
            shape,
            region: None,
            holes: Vec::new(),
            reflectivity: Reflectivity::Constant(reflectivity),
        }
    }

    pub fn with_region(mut self, region: Rect) -> Self {
        self.region = Some(region);
        self
    }

    pub fn with_hole(mut self, hole: Rect) -> Self {
        self.holes.push(hole);
        self
    }

    fn covers(&self, r: usize, c: usize) -> bool {
        self.region.is_none_or(|reg| reg.contains(r, c)) && !self.holes.iter().any(|h| h.contains(r, c))
    }

    fn reflectivity_at(&self, fine: usize) -> f64 {
        match &self.reflectivity {
            Reflectivity::Constant(v) => *v,
            Reflectivity::Map(m) => m[fine],
        }
    }

    fn scale_reflectivity(&mut self, k: f64) {
        match &mut self.reflectivity {
            Reflectivity::Constant(v) => *v *= k,
            Reflectivity::Map(m) => m.iter_mut().for_each(|v| *v *= k),
        }
    }
}

/// Sensor, ambient level and surfaces.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub sensor: SensorModel,
    /// Background photons per bin per detector pixel, before gain.
    pub ambient: f64,
    pub surfaces: Vec<Surface>,
}

impl SceneSpec {
    pub fn new(sensor: SensorModel, ambient: f64, surfaces: Vec<Surface>) -> Result<Self> {
        let spec = SceneSpec {
            sensor,
            ambient,
            surfaces,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ambient >= 0.0) || !self.ambient.is_finite() {
            return Err(Error::argument("ambient must be finite and >= 0"));
        }
        let n_fine = self.sensor.fine_rows() * self.sensor.fine_cols();
        for (k, s) in self.surfaces.iter().enumerate() {
            match &s.reflectivity {
                Reflectivity::Constant(v) if !(*v >= 0.0) => {
                    return Err(Error::argument(format!("surface {k} has negative reflectivity")))
                }
                Reflectivity::Map(m) if m.len() != n_fine || m.iter().any(|v| !(*v >= 0.0)) => {
                    return Err(Error::argument(format!(
                        "surface {k} reflectivity map needs {n_fine} values >= 0"
                    )))
                }
                _ => {}
            }
            if let Shape::HeightMap { depths } = &s.shape {
                if depths.len() != n_fine {
                    return Err(Error::argument(format!("surface {k} height map needs {n_fine} values")));
                }
            }
        }
        // every covered return must fall inside the gate
        self.truth().map(|_| ())
    }

    /// Ground-truth returns, surface by surface in row-major fine order.
    /// Covered pixels with zero reflectivity are still listed.
    pub fn truth(&self) -> Result<PointCloud> {
        let s = &self.sensor;
        let gate = s.n_bins() as f64 * s.bin_resolution();
        let mut points = Vec::new();
        for (k, surf) in self.surfaces.iter().enumerate() {
            for r in 0..s.fine_rows() {
                for c in 0..s.fine_cols() {
                    if !surf.covers(r, c) {
                        continue;
                    }
                    let fine = r * s.fine_cols() + c;
                    let centre = s.world_position([r, c], 0.0);
                    let Some(z) = surf.shape.depth(centre.x, centre.y, fine) else {
                        continue;
                    };
                    if !(z >= 0.0 && z < gate) {
                        return Err(Error::argument(format!(
                            "surface {k} depth {z} m at fine pixel ({r}, {c}) is outside the gate [0, {gate})"
                        )));
                    }
                    points.push(Point::at_fine(s, [r, c], z / s.bin_resolution(), surf.reflectivity_at(fine)));
                }
            }
        }
        Ok(PointCloud::from_points(points))
    }

    pub fn scale_reflectivity(&mut self, k: f64) {
        self.surfaces.iter_mut().for_each(|s| s.scale_reflectivity(k));
    }

    /// Expected signal photons summed over the detector.
    pub fn expected_signal(&self) -> Result<f64> {
        let s = &self.sensor;
        let truth = self.truth()?;
        Ok(truth
            .iter()
            .map(|p| {
                let pix = s.index(p.pixel[0], p.pixel[1]);
                s.gain(pix) * p.intensity * s.irf(pix).mass_in_gate(p.t, s.n_bins())
            })
            .sum())
    }

    /// Expected background photons summed over the detector.
    pub fn expected_background(&self) -> f64 {
        let s = &self.sensor;
        let gains: f64 = (0..s.n_pixels()).map(|p| s.gain(p)).sum();
        gains * self.ambient * s.n_bins() as f64
    }

    /// Rescales reflectivities and ambient so the expected signal photons
    /// per live pixel equal `signal_ppp` and the global signal to
    /// background ratio equals `sbr`.
    pub fn calibrated(&self, signal_ppp: f64, sbr: f64) -> Result<SceneSpec> {
        if !(signal_ppp > 0.0) || !(sbr > 0.0) {
            return Err(Error::argument("calibration targets must be > 0"));
        }
        let s = &self.sensor;
        let live = (0..s.n_pixels()).filter(|&p| s.gain(p) > 0.0).count();
        let signal = self.expected_signal()?;
        if !(signal > 0.0) || live == 0 {
            return Err(Error::argument("scene has no signal to calibrate"));
        }
        let mut out = self.clone();
        let target_total = signal_ppp * live as f64;
        out.scale_reflectivity(target_total / signal);
        let gains: f64 = (0..s.n_pixels()).map(|p| s.gain(p)).sum();
        out.ambient = target_total / sbr / (gains * s.n_bins() as f64);
        Ok(out)
    }

    /// Parses a scene file: root keys (`ambient`), one `[sensor]` section
    /// in calibration form, and repeated `[surface]` sections.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let doc = KvDoc::parse(text)?;
        doc.root.check_keys(&["ambient"])?;
        let ambient: f64 = doc.root.parse("ambient")?.unwrap_or(0.0);
        let mut sensor_sections = doc.sections_named("sensor");
        let sensor_sec = sensor_sections
            .next()
            .ok_or_else(|| Error::config(0, "scene needs a [sensor] section"))?;
        if let Some(extra) = sensor_sections.next() {
            return Err(Error::config(extra.line, "only one [sensor] section allowed"));
        }
        let sensor = SensorModel::from_section(sensor_sec, base_dir)?;
        let n_fine = sensor.fine_rows() * sensor.fine_cols();
        let mut surfaces = Vec::new();
        for sec in &doc.sections {
            match sec.name.as_str() {
                "sensor" => {}
                "surface" => surfaces.push(parse_surface(sec, base_dir, n_fine)?),
                other => return Err(Error::config(sec.line, format!("unknown section [{other}]"))),
            }
        }
        let spec = SceneSpec {
            sensor,
            ambient,
            surfaces,
        };
        spec.validate().map_err(|e| match e {
            Error::Argument(msg) => Error::config(0, msg),
            other => other,
        })?;
        Ok(spec)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or_else(|| Path::new(".")))
    }
}

const SURFACE_KEYS: &[&str] = &[
    "kind",
    "depth",
    "slope_x",
    "slope_y",
    "centre",
    "radius",
    "depth_file",
    "region",
    "holes",
    "reflectivity",
    "reflectivity_file",
];

fn read_numbers(base_dir: &Path, file: &str, line: usize, n: usize) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(base_dir.join(file))?;
    let v: Vec<f64> = kv::parse_list(&text).map_err(|_| Error::config(line, format!("{file} must hold numbers")))?;
    if v.len() != n {
        return Err(Error::config(line, format!("{file} has {} values, expected {n}", v.len())));
    }
    Ok(v)
}

fn parse_surface(sec: &Section, base_dir: &Path, n_fine: usize) -> Result<Surface> {
    sec.check_keys(SURFACE_KEYS)?;
    let kind: String = sec.require("kind")?;
    let shape = match kind.as_str() {
        "plane" => Shape::Plane {
            depth: sec.require("depth")?,
            slope_x: sec.parse("slope_x")?.unwrap_or(0.0),
            slope_y: sec.parse("slope_y")?.unwrap_or(0.0),
        },
        "dome" => {
            let c: Vec<f64> = sec
                .parse_list("centre")?
                .ok_or_else(|| Error::config(sec.line, "dome needs centre = x, y, z"))?;
            if c.len() != 3 {
                return Err(Error::config(sec.line, "dome centre needs three values"));
            }
            Shape::Dome {
                cx: c[0],
                cy: c[1],
                cz: c[2],
                radius: sec.require("radius")?,
            }
        }
        "heightmap" => {
            let e = sec
                .get("depth_file")
                .ok_or_else(|| Error::config(sec.line, "heightmap needs depth_file"))?;
            Shape::HeightMap {
                depths: read_numbers(base_dir, &e.value, e.line, n_fine)?,
            }
        }
        other => return Err(Error::config(sec.line, format!("unknown surface kind {other:?}"))),
    };
    let rect = |key: &str| -> Result<Option<Rect>> {
        match sec.get(key) {
            None => Ok(None),
            Some(e) => Rect::parse(&e.value)
                .map(Some)
                .ok_or_else(|| Error::config(e.line, format!("{key} must be r0, c0, r1, c1 with r0 < r1, c0 < c1"))),
        }
    };
    let region = rect("region")?;
    let mut holes = Vec::new();
    if let Some(e) = sec.get("holes") {
        for item in e.value.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            holes.push(Rect::parse(item).ok_or_else(|| Error::config(e.line, format!("bad hole {item:?}")))?);
        }
    }
    let reflectivity = match (sec.parse::<f64>("reflectivity")?, sec.get("reflectivity_file")) {
        (_, Some(e)) => Reflectivity::Map(read_numbers(base_dir, &e.value, e.line, n_fine)?),
        (Some(v), None) => Reflectivity::Constant(v),
        (None, None) => Reflectivity::Constant(1.0),
    };
    Ok(Surface {
        shape,
        region,
        holes,
        reflectivity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Irf;

    fn sensor() -> SensorModel {
        SensorModel::new(4, 4, 100, Irf::delta(), 0.01, 0.1).unwrap()
    }

    #[test]
    fn plane_truth_covers_region_minus_holes() {
        let surf = Surface::new(Shape::Plane { depth: 0.5, slope_x: 0.0, slope_y: 0.0 }, 2.0)
            .with_region(Rect::new(0, 0, 2, 4))
            .with_hole(Rect::new(0, 0, 1, 1));
        let spec = SceneSpec::new(sensor(), 0.1, vec![surf]).unwrap();
        let truth = spec.truth().unwrap();
        assert_eq!(truth.len(), 7);
        assert!(truth.iter().all(|p| (p.t - 50.0).abs() < 1e-9 && p.intensity == 2.0));
    }

    #[test]
    fn out_of_gate_surface_rejected() {
        let surf = Surface::new(Shape::Plane { depth: 2.0, slope_x: 0.0, slope_y: 0.0 }, 1.0);
        assert!(SceneSpec::new(sensor(), 0.0, vec![surf]).is_err());
    }

    #[test]
    fn calibration_hits_targets() {
        let surf = Surface::new(Shape::Plane { depth: 0.5, slope_x: 0.1, slope_y: 0.0 }, 1.0);
        let spec = SceneSpec::new(sensor(), 0.0, vec![surf]).unwrap();
        let cal = spec.calibrated(3.0, 13.0).unwrap();
        let sig = cal.expected_signal().unwrap() / 16.0;
        assert!((sig - 3.0).abs() < 1e-12);
        assert!((cal.expected_signal().unwrap() / cal.expected_background() - 13.0).abs() < 1e-9);
    }

    #[test]
    fn parses_scene_file() {
        let text = "ambient = 0.01\n[sensor]\nrows = 4\ncols = 4\nbins = 100\nbin_resolution = 0.01\n\
                    pixel_pitch = 0.1\nirf_sigma = 1.5\n[surface]\nkind = plane\ndepth = 0.6\n\
                    holes = 0,0,1,1; 2,2,3,3\n[surface]\nkind = dome\ncentre = 0.2, 0.2, 0.5\nradius = 0.1\n\
                    reflectivity = 0.5\n";
        let spec = SceneSpec::parse(text, Path::new(".")).unwrap();
        assert_eq!(spec.surfaces.len(), 2);
        assert_eq!(spec.surfaces[0].holes.len(), 2);
        assert!(SceneSpec::parse("[sensor]\nrows=1\n", Path::new(".")).is_err());
        assert!(SceneSpec::parse(&text.replace("kind = dome", "kind = cone"), Path::new(".")).is_err());
    }
}
