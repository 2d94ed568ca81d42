// SPDX-License-Identifier: Apache-2.0

use rayon::prelude::*;

use crate::data::{PhotonCube, PointCloud, SensorModel};
use crate::error::Result;
use crate::likelihood::check_dimensions;
use crate::reconstruct::{detect_peaks, spawn, DetectOptions};

/// Per-pixel cross-correlation with the response: one point at the integer
/// argmax of every nonempty live pixel, intensity from the least-squares
/// peak amplitude. No spatial regularisation.
pub fn baseline_xcorr(cube: &PhotonCube, sensor: &SensorModel) -> Result<PointCloud> {
    check_dimensions(cube, sensor)?;
    let opts = DetectOptions {
        max_returns: 1,
        threshold: f64::NEG_INFINITY,
        separation: 1.0,
        pool_radius: 0,
        subbin: false,
        subtract_background: false,
    };
    let per_pixel: Vec<_> = (0..cube.n_pixels())
        .into_par_iter()
        .map(|p| {
            let g = sensor.gain(p);
            if g == 0.0 {
                return Vec::new();
            }
            let peaks = detect_peaks(cube, sensor, p, &opts);
            spawn(sensor, p, peaks.iter().map(|pk| (pk.t, pk.amplitude / g)))
        })
        .collect();
    Ok(PointCloud::from_points(per_pixel.into_iter().flatten().collect()))
}
