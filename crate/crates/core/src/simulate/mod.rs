// SPDX-License-Identifier: Apache-2.0

//! Forward model: ground-truth scenes to Poisson photon cubes.

mod poisson;
mod scene;
mod sweep;

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{BackgroundImage, CubeBuilder, PhotonCube, PointCloud};
use crate::error::Result;
use crate::likelihood::{rate, SceneState};

pub use poisson::{keyed_rng, ln_factorial, sample_poisson};
pub use scene::{Rect, Reflectivity, SceneSpec, Shape, Surface};
pub use sweep::{sweep_csv, sweep_operating_conditions, SweepRow};

/// Realised photon statistics of a simulated cube.
#[derive(Debug, Clone, Serialize)]
pub struct SimReport {
    pub mean_photons_per_pixel: f64,
    pub mean_signal_per_pixel: f64,
    pub mean_background_per_pixel: f64,
    pub signal_photons: u64,
    pub background_photons: u64,
    /// Total signal photons over total background photons.
    pub sbr: f64,
    #[serde(skip)]
    pub truth: PointCloud,
}

/// Random stream selectors inside one `(seed, i, j, t)` key.
const SIGNAL_STREAM: u64 = 0;
const BACKGROUND_STREAM: u64 = 1;

/// Draws a cube from the scene. Signal and background counts of every bin
/// come from generators keyed by `(seed, i, j, t)`, so the cube does not
/// depend on thread count or visiting order.
pub fn simulate_cube(spec: &SceneSpec, seed: u64) -> Result<(PhotonCube, SimReport)> {
    spec.validate()?;
    let sensor = &spec.sensor;
    let truth = spec.truth()?;
    let state = SceneState::new(
        truth.clone(),
        BackgroundImage::constant(sensor.n_rows(), sensor.n_cols(), 0.0),
        sensor,
    )?;
    let n_bins = sensor.n_bins();
    let per_pixel: Vec<(Vec<(u32, u32)>, u64, u64)> = (0..sensor.n_pixels())
        .into_par_iter()
        .map(|p| {
            let (i, j) = (p / sensor.n_cols(), p % sensor.n_cols());
            let g = sensor.gain(p);
            let mut events = Vec::new();
            let (mut sig, mut bg) = (0u64, 0u64);
            if g == 0.0 {
                return (events, 0, 0);
            }
            let lambda_b = g * spec.ambient;
            for t in 0..n_bins {
                let key = |stream| [seed, i as u64, j as u64, t as u64, stream];
                let lambda_s = rate(&state, i, j, t);
                let zs = if lambda_s > 0.0 {
                    sample_poisson(&mut keyed_rng(&key(SIGNAL_STREAM)), lambda_s)
                } else {
                    0
                };
                let zb = if lambda_b > 0.0 {
                    sample_poisson(&mut keyed_rng(&key(BACKGROUND_STREAM)), lambda_b)
                } else {
                    0
                };
                sig += zs;
                bg += zb;
                if zs + zb > 0 {
                    events.push((t as u32, (zs + zb) as u32));
                }
            }
            (events, sig, bg)
        })
        .collect();
    let mut builder = CubeBuilder::new(sensor.n_rows(), sensor.n_cols(), n_bins, crate::data::metres_to_bin_width(sensor.bin_resolution()));
    let (mut sig, mut bg) = (0u64, 0u64);
    for (events, s, b) in per_pixel {
        builder.push_pixel(events)?;
        sig += s;
        bg += b;
    }
    let cube = builder.finish()?;
    let n = sensor.n_pixels() as f64;
    let report = SimReport {
        mean_photons_per_pixel: (sig + bg) as f64 / n,
        mean_signal_per_pixel: sig as f64 / n,
        mean_background_per_pixel: bg as f64 / n,
        signal_photons: sig,
        background_photons: bg,
        sbr: sig as f64 / bg as f64,
        truth,
    };
    Ok((cube, report))
}

/// Number of acquisition frames summed into each output frame.
pub fn frames_per_output(acquisition_rate_hz: f64, output_rate_hz: f64) -> f64 {
    acquisition_rate_hz / output_rate_hz
}
