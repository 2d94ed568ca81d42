// SPDX-License-Identifier: Apache-2.0

//! Runtime scaling against detector size or histogram density.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::data::{CubeBuilder, PhotonCube, SensorModel};
use crate::error::{Error, Result};
use crate::reconstruct::{init_matched_filter, reconstruct, reconstruct_from, ReconConfig};
use crate::simulate::keyed_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchAxis {
    /// The detector is tiled so the pixel count grows by the level.
    Pixels,
    /// Each pixel gets `(level - 1)` times its own number of extra
    /// single-photon bins; the starting cloud is held fixed.
    ActiveBins,
}

impl FromStr for BenchAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pixels" => Ok(BenchAxis::Pixels),
            "active_bins" => Ok(BenchAxis::ActiveBins),
            _ => Err(Error::argument(format!("axis must be pixels or active_bins, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub level: usize,
    /// Size measure on the benchmarked axis: pixels, or mean active bins per pixel.
    pub size: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub axis: BenchAxis,
    pub rows: Vec<BenchRow>,
    /// Least-squares fit of seconds against size.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl BenchResult {
    /// Timing rows only; the fit is carried by the struct.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,size,seconds\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{}", r.level, r.size, r.seconds);
        }
        out
    }
}

/// Ordinary least squares `y = slope * x + intercept` and its R^2.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    if x.len() < 2 {
        return (0.0, y.first().copied().unwrap_or(0.0), 1.0);
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return (0.0, my, 1.0);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

/// Tiling factors closest to square with `a * b = level`.
fn tile_reps(level: usize) -> [usize; 2] {
    let mut a = (level as f64).sqrt().floor() as usize;
    while a > 1 && level % a != 0 {
        a -= 1;
    }
    [a.max(1), level / a.max(1)]
}

/// Adds `(factor - 1) * active` unit-count events to each pixel at bins
/// that were empty, chosen by a generator keyed on the pixel.
pub fn densify(cube: &PhotonCube, factor: usize) -> Result<PhotonCube> {
    if factor < 1 {
        return Err(Error::argument("density factor must be >= 1"));
    }
    let n_bins = cube.n_bins();
    let mut b = CubeBuilder::new(cube.n_rows(), cube.n_cols(), n_bins, cube.bin_width());
    for p in 0..cube.n_pixels() {
        let h = cube.histogram(p);
        let mut occupied = vec![false; n_bins];
        for &bin in h.bins {
            occupied[bin as usize] = true;
        }
        let want = ((factor - 1) * h.len()).min(n_bins - h.len());
        let mut rng = keyed_rng(&[0x5eed, p as u64, factor as u64]);
        let mut extra = 0;
        while extra < want {
            let t = rng.random_range(0..n_bins);
            if !occupied[t] {
                occupied[t] = true;
                extra += 1;
            }
        }
        let mut events: Vec<(u32, u32)> = h.iter().collect();
        for (t, occ) in occupied.iter().enumerate() {
            if *occ && !h.bins.contains(&(t as u32)) {
                events.push((t as u32, 1));
            }
        }
        events.sort_unstable();
        b.push_pixel(events)?;
    }
    b.finish()
}

/// Times the solver at each level (best of `repeats`). The relative stop
/// tolerance is forced to 0 so every run performs `max_iters` iterations.
pub fn bench_scaling(
    cube: &PhotonCube,
    sensor: &SensorModel,
    config: &ReconConfig,
    axis: BenchAxis,
    levels: &[usize],
    repeats: usize,
) -> Result<BenchResult> {
    if levels.is_empty() || levels.contains(&0) {
        return Err(Error::argument("levels must be non-empty and >= 1"));
    }
    let mut cfg = config.clone();
    cfg.stop_tol = 0.0;
    let repeats = repeats.max(1);
    let mut rows = Vec::new();
    match axis {
        BenchAxis::Pixels => {
            for &level in levels {
                let reps = tile_reps(level);
                let c = cube.tiled(reps);
                let s = sensor.tiled(reps);
                let mut best = f64::INFINITY;
                for _ in 0..repeats {
                    let clock = Instant::now();
                    reconstruct(&c, &s, &cfg)?;
                    best = best.min(clock.elapsed().as_secs_f64());
                }
                rows.push(BenchRow {
                    level,
                    size: c.n_pixels() as f64,
                    seconds: best,
                });
            }
        }
        BenchAxis::ActiveBins => {
            let (cloud, background) = init_matched_filter(cube, sensor, &cfg.init, cfg.background_floor)?;
            for &level in levels {
                let c = densify(cube, level)?;
                let mut best = f64::INFINITY;
                for _ in 0..repeats {
                    let clock = Instant::now();
                    reconstruct_from(&c, sensor, &cfg, cloud.clone(), background.clone())?;
                    best = best.min(clock.elapsed().as_secs_f64());
                }
                rows.push(BenchRow {
                    level,
                    size: c.mean_active_bins(),
                    seconds: best,
                });
            }
        }
    }
    let x: Vec<f64> = rows.iter().map(|r| r.size).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.seconds).collect();
    let (slope, intercept, r_squared) = linear_fit(&x, &y);
    Ok(BenchResult {
        axis,
        rows,
        slope,
        intercept,
        r_squared,
    })
}
