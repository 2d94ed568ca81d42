// SPDX-License-Identifier: Apache-2.0

//! Shared fixtures: random small problems and a dense per-bin objective.

#![allow(dead_code)]

use photon_recon::data::{BackgroundImage, Irf, PhotonCube, Point, PointCloud, SensorModel};
use photon_recon::likelihood::SceneState;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub sensor: SensorModel,
    pub cube: PhotonCube,
    pub cloud: PointCloud,
    pub background: BackgroundImage,
}

impl Instance {
    pub fn state(&self) -> SceneState<'_> {
        SceneState::new(self.cloud.clone(), self.background.clone(), &self.sensor).unwrap()
    }
}

/// Random problem of at most 8x8 pixels, 64 bins and 5 points per pixel,
/// with a few dead pixels and non-unit gains.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = rng.random_range(1..=8);
    let cols = rng.random_range(1..=8);
    let bins = rng.random_range(16..=64);
    let sigma = rng.random_range(0.6..3.0);
    let irf = Irf::gaussian(sigma, 0.25, 4.0).unwrap();
    let gains: Vec<f64> = (0..rows * cols)
        .map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.5..1.5) })
        .collect();
    let sensor = SensorModel::new(rows, cols, bins, irf, 0.01, 0.01)
        .unwrap()
        .with_gain_map(gains)
        .unwrap();
    let mut cloud = PointCloud::new();
    for i in 0..rows {
        for j in 0..cols {
            for _ in 0..rng.random_range(0..=5) {
                let t = rng.random_range(0.0..(bins - 1) as f64);
                let r = rng.random_range(0.2..20.0);
                cloud.push(Point::at_fine(&sensor, [i, j], t, r));
            }
        }
    }
    let bg: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(0.01..0.5)).collect();
    let background = BackgroundImage::from_values(rows, cols, bg).unwrap();
    let dense: Vec<u32> = (0..rows * cols * bins)
        .map(|_| if rng.random_bool(0.2) { rng.random_range(1..6) } else { 0 })
        .collect();
    let cube = PhotonCube::from_dense(rows, cols, bins, 1e-10, &dense).unwrap();
    Instance {
        sensor,
        cube,
        cloud,
        background,
    }
}

/// Objective evaluated bin by bin over the whole gate, without any of the
/// sparse shortcuts.
pub fn dense_nll(inst: &Instance) -> f64 {
    let s = &inst.sensor;
    let mut total = 0.0;
    for i in 0..s.n_rows() {
        for j in 0..s.n_cols() {
            let p = s.index(i, j);
            let g = s.gain(p);
            if g == 0.0 {
                continue;
            }
            let irf = s.irf(p);
            for t in 0..s.n_bins() {
                let mut lam = inst.background.get(p);
                for pt in inst.cloud.iter().filter(|pt| pt.pixel == [i, j]) {
                    lam += pt.intensity * irf.eval(t as f64 - pt.t);
                }
                lam *= g;
                let z = inst.cube.count(p, t) as f64;
                total += lam;
                if z > 0.0 {
                    total -= z * lam.ln();
                }
            }
        }
    }
    total
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
