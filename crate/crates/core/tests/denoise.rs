// SPDX-License-Identifier: Apache-2.0

use nalgebra::Vector3;
use photon_recon::data::{BackgroundImage, Irf, Point, PointCloud, SensorModel};
use photon_recon::denoise::{
    apss_project_positions, fft_background_denoise, fft_lowpass, knn_intensity_filter, prune, raised_cosine_mask,
    ApssParams, SpatialIndex,
};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn fibonacci_sphere(c: Vector3<f64>, r: f64, n: usize) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|k| {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
            let rho = (1.0 - z * z).sqrt();
            let a = golden * k as f64;
            c + Vector3::new(rho * a.cos(), rho * a.sin(), z) * r
        })
        .collect()
}

#[test]
fn noiseless_sphere_projects_onto_itself() {
    let c = Vector3::new(0.0, 0.0, 4.0);
    let pts = fibonacci_sphere(c, 1.0, 500);
    let params = ApssParams {
        radius: 0.4,
        ..ApssParams::default()
    };
    let idx = SpatialIndex::new(pts, params.radius);
    let (out, flags) = apss_project_positions(&idx, &params);
    assert!(flags.iter().all(|f| !f));
    let worst = out.iter().map(|p| ((p - c).norm() - 1.0).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn noisy_plane_gets_flatter() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let plane = |x: f64, y: f64| 1.5 + 0.2 * x + 0.1 * y;
    let mut pts = Vec::new();
    for i in 0..40 {
        for j in 0..40 {
            let (x, y) = (i as f64 * 0.01, j as f64 * 0.01);
            pts.push(Vector3::new(x, y, plane(x, y) + 0.004 * gauss(&mut rng)));
        }
    }
    let rms = |v: &[Vector3<f64>]| (v.iter().map(|p| (p.z - plane(p.x, p.y)).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
    let params = ApssParams {
        radius: 0.06,
        ..ApssParams::default()
    };
    let before = rms(&pts);
    let idx = SpatialIndex::new(pts, params.radius);
    let (out, _) = apss_project_positions(&idx, &params);
    let after = rms(&out);
    assert!(after < 0.5 * before, "{before} -> {after}");
}

#[test]
fn projection_is_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pts: Vec<Vector3<f64>> = (0..300)
        .map(|_| {
            let (x, y): (f64, f64) = (rng.random_range(0.0..0.3), rng.random_range(0.0..0.3));
            Vector3::new(x, y, 2.0 + (x * 4.0).sin() * 0.05 + 0.002 * gauss(&mut rng))
        })
        .collect();
    let params = ApssParams::default();
    let (a, fa) = apss_project_positions(&SpatialIndex::new(pts.clone(), params.radius), &params);
    let perm: Vec<usize> = (0..pts.len()).rev().collect();
    let shuffled: Vec<Vector3<f64>> = perm.iter().map(|&k| pts[k]).collect();
    let (b, fb) = apss_project_positions(&SpatialIndex::new(shuffled, params.radius), &params);
    for (m, &k) in perm.iter().enumerate() {
        assert_eq!(fa[k], fb[m]);
        assert!((a[k] - b[m]).norm() < 1e-12);
    }
}

#[test]
fn knn_keeps_two_planes_apart() {
    // two flat patches 30 cm apart in depth with different albedo; the
    // intensity filter must not blend them
    let sensor = SensorModel::new(20, 20, 400, Irf::delta(), 0.005, 0.01).unwrap();
    let mut pts = Vec::new();
    for i in 0..20 {
        for j in 0..20 {
            pts.push(Point::at_fine(&sensor, [i, j], 200.0, 4.0));
            pts.push(Point::at_fine(&sensor, [i, j], 260.0, 1.0));
        }
    }
    let cloud = PointCloud::from_points(pts);
    let idx = SpatialIndex::from_cloud(&cloud, 0.08);
    let out = knn_intensity_filter(&cloud, 9, 0.08, &idx);
    for p in out.iter() {
        let want = if p.t < 230.0 { 4.0 } else { 1.0 };
        assert!((p.intensity - want).abs() < 1e-12);
    }
}

#[test]
fn knn_averages_an_outlier_down_and_prune_removes_it() {
    let sensor = SensorModel::new(9, 9, 100, Irf::delta(), 0.01, 0.01).unwrap();
    let mut pts = Vec::new();
    for i in 0..9 {
        for j in 0..9 {
            pts.push(Point::at_fine(&sensor, [i, j], 50.0, 2.0));
        }
    }
    // a lone weak return far behind the surface
    pts.push(Point::at_fine(&sensor, [4, 4], 90.0, 0.05));
    let cloud = PointCloud::from_points(pts);
    let idx = SpatialIndex::from_cloud(&cloud, 0.05);
    let out = knn_intensity_filter(&cloud, 5, 0.05, &idx);
    let kept = prune(&out, 0.1);
    assert_eq!(kept.len(), 81);
    assert!(kept.iter().all(|p| p.t == 50.0));
}

/// `x` circularly convolved with the inverse DFT of the mask, both done by
/// direct summation.
fn direct_lowpass(x: &[f64], rows: usize, cols: usize, cutoff: f64) -> Vec<f64> {
    let mask = raised_cosine_mask(rows, cols, cutoff);
    let tau = std::f64::consts::TAU;
    let mut kernel = vec![0.0; rows * cols];
    for a in 0..rows {
        for b in 0..cols {
            let mut acc = 0.0;
            for u in 0..rows {
                for v in 0..cols {
                    let ph = tau * ((u * a) as f64 / rows as f64 + (v * b) as f64 / cols as f64);
                    acc += mask[u * cols + v] * ph.cos();
                }
            }
            kernel[a * cols + b] = acc / (rows * cols) as f64;
        }
    }
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            let mut acc = 0.0;
            for a in 0..rows {
                for b in 0..cols {
                    acc += kernel[a * cols + b] * x[((i + rows - a) % rows) * cols + (j + cols - b) % cols];
                }
            }
            out[i * cols + j] = acc;
        }
    }
    out
}

#[test]
fn lowpass_matches_direct_convolution() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for &(rows, cols, cutoff) in &[(8, 8, 0.3), (7, 10, 0.5), (12, 5, 0.15), (1, 9, 0.4)] {
        let x: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(0.0..3.0)).collect();
        let fast = fft_lowpass(&x, rows, cols, cutoff);
        let slow = direct_lowpass(&x, rows, cols, cutoff);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-10, "{rows}x{cols}: {a} vs {b}");
        }
    }
}

#[test]
fn background_denoiser_output_is_nonnegative() {
    let mut vals = vec![0.0; 64];
    vals[27] = 50.0;
    let b = BackgroundImage::from_values(8, 8, vals).unwrap();
    let out = fft_background_denoise(&b, 0.2);
    assert!(out.values().iter().all(|v| *v >= 0.0));
    let raw = fft_lowpass(b.values(), 8, 8, 0.2);
    assert!(raw.iter().any(|v| *v < 0.0), "test wants ringing to clamp");
}

proptest! {
    #[test]
    fn lowpass_is_linear(
        seed in any::<u64>(),
        rows in 1usize..12,
        cols in 1usize..12,
        cutoff in 0.05f64..1.0,
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mix: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let lhs = fft_lowpass(&mix, rows, cols, cutoff);
        let fx = fft_lowpass(&x, rows, cols, cutoff);
        let fy = fft_lowpass(&y, rows, cols, cutoff);
        for k in 0..rows * cols {
            prop_assert!((lhs[k] - (a * fx[k] + b * fy[k])).abs() < 1e-10);
        }
    }

    #[test]
    fn lowpass_preserves_the_mean(seed in any::<u64>(), rows in 1usize..10, cols in 1usize..10, cutoff in 0.05f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(0.0..1.0)).collect();
        let y = fft_lowpass(&x, rows, cols, cutoff);
        let (mx, my) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
        prop_assert!((mx - my).abs() < 1e-9);
    }

    #[test]
    fn knn_filter_never_leaves_the_input_range(seed in any::<u64>(), k in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sensor = SensorModel::new(6, 6, 50, Irf::delta(), 0.01, 0.01).unwrap();
        let pts: Vec<Point> = (0..60)
            .map(|_| Point::at_fine(&sensor, [rng.random_range(0..6), rng.random_range(0..6)], rng.random_range(0.0..49.0), rng.random_range(0.0..5.0)))
            .collect();
        let cloud = PointCloud::from_points(pts);
        let idx = SpatialIndex::from_cloud(&cloud, 0.05);
        let out = knn_intensity_filter(&cloud, k, 0.05, &idx);
        let lo = cloud.iter().map(|p| p.intensity).fold(f64::INFINITY, f64::min);
        let hi = cloud.iter().map(|p| p.intensity).fold(0.0, f64::max);
        for (a, b) in cloud.iter().zip(out.iter()) {
            prop_assert_eq!(a.t, b.t);
            prop_assert!(b.intensity >= lo - 1e-12 && b.intensity <= hi + 1e-12);
        }
    }
}
