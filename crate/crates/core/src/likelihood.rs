// SPDX-License-Identifier: Apache-2.0

//! Poisson negative log-likelihood of a photon cube and its block gradients.
//!
//! The rate in pixel `p`, bin `t` is
//!
//! ```text
//! lambda[p, t] = g[p] * (sum_{n in p} r[n] * h(t - t[n]) + b[p])
//! ```
//!
//! and the objective is `sum lambda - z * ln(lambda)` over every bin, with
//! the `ln z!` constant dropped and `0 * ln 0 = 0`. The sum of `lambda` over
//! a pixel has the closed form `g * (sum_n r[n] * M(t[n]) + T * b)` where
//! `M` is the response mass falling inside the gate, so logarithms (and all
//! gradient work) are only needed at active bins. Cost per pixel is
//! proportional to active bins times points plus points times response
//! width.

use rayon::prelude::*;

use crate::data::{BackgroundImage, PhotonCube, PointCloud, SensorModel};
use crate::error::{Error, Result};

/// Point cloud and background paired with the sensor they are expressed in.
#[derive(Debug, Clone)]
pub struct SceneState<'s> {
    pub cloud: PointCloud,
    pub background: BackgroundImage,
    sensor: &'s SensorModel,
    offsets: Vec<usize>,
    members: Vec<u32>,
}

impl<'s> SceneState<'s> {
    pub fn new(cloud: PointCloud, background: BackgroundImage, sensor: &'s SensorModel) -> Result<Self> {
        if background.n_rows() != sensor.n_rows() || background.n_cols() != sensor.n_cols() {
            return Err(Error::argument("background dimensions differ from the sensor"));
        }
        let n_pix = sensor.n_pixels();
        let mut counts = vec![0usize; n_pix + 1];
        for (n, p) in cloud.iter().enumerate() {
            if p.pixel[0] >= sensor.n_rows() || p.pixel[1] >= sensor.n_cols() {
                return Err(Error::argument(format!("point {n} has home pixel outside the sensor")));
            }
            counts[sensor.index(p.pixel[0], p.pixel[1]) + 1] += 1;
        }
        for k in 0..n_pix {
            counts[k + 1] += counts[k];
        }
        let offsets = counts.clone();
        let mut fill = counts;
        let mut members = vec![0u32; cloud.len()];
        for (n, p) in cloud.iter().enumerate() {
            let k = sensor.index(p.pixel[0], p.pixel[1]);
            members[fill[k]] = n as u32;
            fill[k] += 1;
        }
        Ok(SceneState {
            cloud,
            background,
            sensor,
            offsets,
            members,
        })
    }

    pub fn sensor(&self) -> &'s SensorModel {
        self.sensor
    }

    /// Indices of the points whose home pixel is `pixel`, ascending.
    pub fn points_in(&self, pixel: usize) -> &[u32] {
        &self.members[self.offsets[pixel]..self.offsets[pixel + 1]]
    }

    pub fn into_parts(self) -> (PointCloud, BackgroundImage) {
        (self.cloud, self.background)
    }

    fn check_cube(&self, cube: &PhotonCube) {
        assert!(
            cube.n_rows() == self.sensor.n_rows()
                && cube.n_cols() == self.sensor.n_cols()
                && cube.n_bins() == self.sensor.n_bins(),
            "cube dimensions differ from the sensor"
        );
    }
}

/// Checks that a cube matches the sensor's detector and gate.
pub fn check_dimensions(cube: &PhotonCube, sensor: &SensorModel) -> Result<()> {
    if cube.n_rows() != sensor.n_rows() || cube.n_cols() != sensor.n_cols() || cube.n_bins() != sensor.n_bins() {
        return Err(Error::argument(format!(
            "cube is {}x{}x{} but sensor is {}x{}x{}",
            cube.n_rows(),
            cube.n_cols(),
            cube.n_bins(),
            sensor.n_rows(),
            sensor.n_cols(),
            sensor.n_bins()
        )));
    }
    Ok(())
}

/// Expected count in pixel `(i, j)`, bin `t`.
pub fn rate(state: &SceneState<'_>, i: usize, j: usize, t: usize) -> f64 {
    let sensor = state.sensor;
    let p = sensor.index(i, j);
    let g = sensor.gain(p);
    if g == 0.0 {
        return 0.0;
    }
    let irf = sensor.irf(p);
    let pts = state.cloud.points();
    let signal: f64 = state
        .points_in(p)
        .iter()
        .map(|&n| {
            let pt = &pts[n as usize];
            pt.intensity * irf.eval(t as f64 - pt.t)
        })
        .sum();
    g * (signal + state.background.get(p))
}

/// Objective value, gradients and diagonal curvature estimates.
#[derive(Debug, Clone, Default)]
pub struct Evaluation {
    pub nll: f64,
    /// d nll / d t[n], per point.
    pub grad_depth: Vec<f64>,
    /// d nll / d r[n], per point.
    pub grad_intensity: Vec<f64>,
    /// d nll / d b[p], per pixel.
    pub grad_background: Vec<f64>,
    /// Gauss-Newton curvature `sum z * (d lambda / d t[n])^2 / lambda^2`.
    pub curv_depth: Vec<f64>,
    /// Exact second derivative in `r[n]`.
    pub curv_intensity: Vec<f64>,
    /// Exact second derivative in `b[p]`.
    pub curv_background: Vec<f64>,
    /// Points whose response support misses the gate entirely.
    pub outside_gate: Vec<bool>,
}

pub fn nll(state: &SceneState<'_>, cube: &PhotonCube) -> f64 {
    state.check_cube(cube);
    let per_pixel: Vec<f64> = (0..cube.n_pixels())
        .into_par_iter()
        .map(|p| pixel_nll(state, cube, p))
        .collect();
    pairwise_sum(&per_pixel)
}

pub fn grad_depth(state: &SceneState<'_>, cube: &PhotonCube) -> Vec<f64> {
    evaluate(state, cube).grad_depth
}

pub fn grad_intensity(state: &SceneState<'_>, cube: &PhotonCube) -> Vec<f64> {
    evaluate(state, cube).grad_intensity
}

pub fn grad_background(state: &SceneState<'_>, cube: &PhotonCube) -> Vec<f64> {
    evaluate(state, cube).grad_background
}

struct PointTerms {
    index: u32,
    grad_t: f64,
    grad_r: f64,
    curv_t: f64,
    curv_r: f64,
    outside: bool,
}

struct PixelTerms {
    nll: f64,
    grad_b: f64,
    curv_b: f64,
    points: Vec<PointTerms>,
}

/// One pass over every pixel computing the objective and all gradients.
pub fn evaluate(state: &SceneState<'_>, cube: &PhotonCube) -> Evaluation {
    state.check_cube(cube);
    let per_pixel: Vec<PixelTerms> = (0..cube.n_pixels())
        .into_par_iter()
        .map(|p| pixel_terms(state, cube, p))
        .collect();
    let n_points = state.cloud.len();
    let mut out = Evaluation {
        nll: 0.0,
        grad_depth: vec![0.0; n_points],
        grad_intensity: vec![0.0; n_points],
        grad_background: Vec::with_capacity(per_pixel.len()),
        curv_depth: vec![0.0; n_points],
        curv_intensity: vec![0.0; n_points],
        curv_background: Vec::with_capacity(per_pixel.len()),
        outside_gate: vec![false; n_points],
    };
    let nlls: Vec<f64> = per_pixel.iter().map(|t| t.nll).collect();
    out.nll = pairwise_sum(&nlls);
    for terms in per_pixel {
        out.grad_background.push(terms.grad_b);
        out.curv_background.push(terms.curv_b);
        for pt in terms.points {
            let n = pt.index as usize;
            out.grad_depth[n] = pt.grad_t;
            out.grad_intensity[n] = pt.grad_r;
            out.curv_depth[n] = pt.curv_t;
            out.curv_intensity[n] = pt.curv_r;
            out.outside_gate[n] = pt.outside;
        }
    }
    out
}

/// Rates at the pixel's active bins.
fn active_rates(state: &SceneState<'_>, cube: &PhotonCube, p: usize, g: f64) -> Vec<f64> {
    let sensor = state.sensor;
    let irf = sensor.irf(p);
    let hist = cube.histogram(p);
    let mut lam = vec![g * state.background.get(p); hist.len()];
    if hist.is_empty() {
        return lam;
    }
    let pts = state.cloud.points();
    for &n in state.points_in(p) {
        let pt = &pts[n as usize];
        let bins = irf.bin_range(pt.t, sensor.n_bins());
        if bins.is_empty() || pt.intensity == 0.0 {
            continue;
        }
        for k in hist.range(bins.start, bins.end - 1) {
            lam[k] += g * pt.intensity * irf.eval(hist.bins[k] as f64 - pt.t);
        }
    }
    lam
}

fn pixel_nll(state: &SceneState<'_>, cube: &PhotonCube, p: usize) -> f64 {
    let sensor = state.sensor;
    let g = sensor.gain(p);
    if g == 0.0 {
        return 0.0;
    }
    let irf = sensor.irf(p);
    let n_bins = sensor.n_bins();
    let pts = state.cloud.points();
    let mut mass_term = n_bins as f64 * state.background.get(p);
    for &n in state.points_in(p) {
        let pt = &pts[n as usize];
        if pt.intensity != 0.0 {
            mass_term += pt.intensity * irf.mass_in_gate(pt.t, n_bins);
        }
    }
    let hist = cube.histogram(p);
    let lam = active_rates(state, cube, p, g);
    let mut log_term = 0.0;
    for (k, &z) in hist.counts.iter().enumerate() {
        if !(lam[k] > 0.0) {
            return f64::INFINITY;
        }
        log_term += z as f64 * lam[k].ln();
    }
    g * mass_term - log_term
}

fn pixel_terms(state: &SceneState<'_>, cube: &PhotonCube, p: usize) -> PixelTerms {
    let sensor = state.sensor;
    let members = state.points_in(p);
    let g = sensor.gain(p);
    let irf = sensor.irf(p);
    let n_bins = sensor.n_bins();
    let pts = state.cloud.points();
    if g == 0.0 {
        return PixelTerms {
            nll: 0.0,
            grad_b: 0.0,
            curv_b: 0.0,
            points: members
                .iter()
                .map(|&n| PointTerms {
                    index: n,
                    grad_t: 0.0,
                    grad_r: 0.0,
                    curv_t: 0.0,
                    curv_r: 0.0,
                    outside: irf.bin_range(pts[n as usize].t, n_bins).is_empty(),
                })
                .collect(),
        };
    }
    let hist = cube.histogram(p);
    let lam = active_rates(state, cube, p, g);
    let mut log_term = 0.0;
    let mut feasible = true;
    // w = z / lambda, the data-weighted inverse rate
    let mut w = Vec::with_capacity(lam.len());
    for (k, &z) in hist.counts.iter().enumerate() {
        let l = lam[k];
        if l > 0.0 {
            log_term += z as f64 * l.ln();
            w.push(z as f64 / l);
        } else {
            feasible = false;
            w.push(z as f64 / f64::MIN_POSITIVE);
        }
    }
    let sum_w: f64 = w.iter().sum();
    let curv_b: f64 = hist
        .counts
        .iter()
        .zip(&w)
        .map(|(&z, &wk)| wk * wk / z as f64 * g * g)
        .sum();
    let mut mass_term = n_bins as f64 * state.background.get(p);
    let mut points = Vec::with_capacity(members.len());
    for &n in members {
        let pt = &pts[n as usize];
        let bins = irf.bin_range(pt.t, n_bins);
        let (mass, dmass) = irf.mass_in_gate_with_deriv(pt.t, n_bins);
        mass_term += pt.intensity * mass;
        let mut grad_t = g * pt.intensity * dmass;
        let mut grad_r = g * mass;
        let mut curv_t = 0.0;
        let mut curv_r = 0.0;
        if !bins.is_empty() {
            for k in hist.range(bins.start, bins.end - 1) {
                let (h, dh) = irf.eval_with_deriv(hist.bins[k] as f64 - pt.t);
                let z = hist.counts[k] as f64;
                grad_r -= g * h * w[k];
                grad_t += g * pt.intensity * dh * w[k];
                let gh = g * h * w[k];
                curv_r += gh * gh / z;
                let gdh = g * pt.intensity * dh * w[k];
                curv_t += gdh * gdh / z;
            }
        }
        points.push(PointTerms {
            index: n,
            grad_t,
            grad_r,
            curv_t,
            curv_r,
            outside: bins.is_empty(),
        });
    }
    PixelTerms {
        nll: if feasible { g * mass_term - log_term } else { f64::INFINITY },
        grad_b: g * n_bins as f64 - g * sum_w,
        curv_b,
        points,
    }
}

/// Deterministic pairwise summation (the split points depend only on the
/// length, never on thread scheduling).
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}
