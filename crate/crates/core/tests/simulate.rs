// SPDX-License-Identifier: Apache-2.0

use photon_recon::data::{Irf, SensorModel};
use photon_recon::simulate::{keyed_rng, ln_factorial, sample_poisson, simulate_cube, Rect, SceneSpec, Shape, Surface};

fn moments(lambda: f64, n: usize, key: u64) -> (f64, f64) {
    let mut rng = keyed_rng(&[key, lambda.to_bits()]);
    let xs: Vec<f64> = (0..n).map(|_| sample_poisson(&mut rng, lambda) as f64).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var)
}

#[test]
fn poisson_mean_and_variance_within_three_sigma() {
    let n = 10_000;
    for &lambda in &[0.1, 1.0, 5.0, 50.0, 300.0] {
        let (mean, var) = moments(lambda, n, 42);
        let se_mean = (lambda / n as f64).sqrt();
        // variance of the sample variance: (mu4 - sigma^4 (n-3)/(n-1)) / n,
        // with mu4 = lambda + 3 lambda^2 for a Poisson law
        let se_var = ((lambda + 2.0 * lambda * lambda) / n as f64).sqrt();
        assert!((mean - lambda).abs() < 3.0 * se_mean, "lambda {lambda}: mean {mean}");
        assert!((var - lambda).abs() < 3.0 * se_var, "lambda {lambda}: var {var}");
    }
}

#[test]
fn poisson_pmf_matches_exact_probabilities() {
    // chi-square style check of the small-count frequencies at lambda 2
    let lambda: f64 = 2.0;
    let n = 200_000;
    let mut rng = keyed_rng(&[7]);
    let mut hist = [0usize; 8];
    for _ in 0..n {
        let k = sample_poisson(&mut rng, lambda) as usize;
        hist[k.min(7)] += 1;
    }
    for (k, &count) in hist.iter().enumerate().take(7) {
        let p = (k as f64 * lambda.ln() - lambda - ln_factorial(k as u64)).exp();
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((count as f64 - n as f64 * p).abs() < 4.5 * sd, "k {k}: {count} vs {}", n as f64 * p);
    }
}

#[test]
fn zero_rate_gives_zero() {
    let mut rng = keyed_rng(&[1]);
    assert!((0..1000).all(|_| sample_poisson(&mut rng, 0.0) == 0));
}

#[test]
fn ln_factorial_matches_direct_sum() {
    for k in 0u64..200 {
        let direct: f64 = (1..=k).map(|i| (i as f64).ln()).sum();
        assert!((ln_factorial(k) - direct).abs() < 1e-9 * direct.max(1.0), "{k}");
    }
}

fn scene() -> SceneSpec {
    let sensor = SensorModel::new(16, 16, 200, Irf::gaussian(1.5, 0.25, 4.0).unwrap(), 0.01, 0.01).unwrap();
    let back = Surface::new(
        Shape::Plane {
            depth: 1.5,
            slope_x: 0.1,
            slope_y: 0.0,
        },
        1.0,
    )
    .with_hole(Rect::new(0, 0, 4, 4));
    let front = Surface::new(
        Shape::Dome {
            cx: 0.08,
            cy: 0.08,
            cz: 1.0,
            radius: 0.05,
        },
        0.5,
    );
    SceneSpec::new(sensor, 0.0, vec![back, front]).unwrap()
}

#[test]
fn calibration_hits_the_requested_operating_point() {
    let spec = scene().calibrated(5.0, 2.0).unwrap();
    let live = spec.sensor.n_pixels() as f64;
    assert!((spec.expected_signal().unwrap() / live - 5.0).abs() < 1e-9);
    assert!((spec.expected_signal().unwrap() / spec.expected_background() - 2.0).abs() < 1e-9);
    // realised totals are Poisson around the expectations
    let (es, eb) = (spec.expected_signal().unwrap(), spec.expected_background());
    for seed in 0..5 {
        let (_, rep) = simulate_cube(&spec, seed).unwrap();
        assert!((rep.signal_photons as f64 - es).abs() < 4.0 * es.sqrt(), "{} vs {es}", rep.signal_photons);
        assert!((rep.background_photons as f64 - eb).abs() < 4.0 * eb.sqrt(), "{} vs {eb}", rep.background_photons);
        assert_eq!(rep.sbr, rep.signal_photons as f64 / rep.background_photons as f64);
    }
}

#[test]
fn simulation_is_reproducible_per_seed() {
    let spec = scene().calibrated(3.0, 4.0).unwrap();
    let (a, ra) = simulate_cube(&spec, 9).unwrap();
    let (b, rb) = simulate_cube(&spec, 9).unwrap();
    let (c, _) = simulate_cube(&spec, 10).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra.truth, rb.truth);
    assert_ne!(a, c);
}

#[test]
fn truth_lists_each_covered_fine_pixel_once_per_surface() {
    let spec = scene();
    let truth = spec.truth().unwrap();
    let holes = 16;
    let dome: usize = (0..16)
        .flat_map(|i| (0..16).map(move |j| (i, j)))
        .filter(|&(i, j)| {
            let (x, y) = (i as f64 * 0.01 + 0.005, j as f64 * 0.01 + 0.005);
            (x - 0.08).powi(2) + (y - 0.08).powi(2) < 0.05f64.powi(2)
        })
        .count();
    assert_eq!(truth.len(), 256 - holes + dome);
}

#[test]
fn dead_pixels_record_nothing() {
    let mut spec = scene().calibrated(20.0, 1.0).unwrap();
    spec.sensor = spec.sensor.clone().with_dead_pixels(&[[5, 5], [9, 2]]).unwrap();
    let (cube, _) = simulate_cube(&spec, 1).unwrap();
    assert!(cube.histogram_at(5, 5).is_empty());
    assert!(cube.histogram_at(9, 2).is_empty());
}

#[test]
fn zero_reflectivity_scene_has_only_background() {
    let mut spec = scene();
    spec.scale_reflectivity(0.0);
    spec.ambient = 0.01;
    let (_, rep) = simulate_cube(&spec, 2).unwrap();
    assert_eq!(rep.signal_photons, 0);
    assert!(rep.background_photons > 0);
}

#[test]
fn ambient_only_counts_average_the_ambient_rate() {
    // 2 photons per bin over 100 bins: 200 per pixel
    let sensor = SensorModel::new(32, 32, 100, Irf::delta(), 0.01, 0.01).unwrap();
    let wall = Surface::new(
        Shape::Plane {
            depth: 0.5,
            slope_x: 0.0,
            slope_y: 0.0,
        },
        0.0,
    );
    let spec = SceneSpec::new(sensor, 2.0, vec![wall]).unwrap();
    let (cube, rep) = simulate_cube(&spec, 5).unwrap();
    assert_eq!(rep.signal_photons, 0);
    let mean = cube.total_photons() as f64 / 1024.0;
    assert!((mean - 200.0).abs() < 3.0 * (200.0f64 / 1024.0).sqrt(), "{mean}");
}

#[test]
fn overlapping_surfaces_give_two_modes() {
    let sensor = SensorModel::new(4, 4, 200, Irf::gaussian(1.5, 0.25, 4.0).unwrap(), 0.01, 0.01).unwrap();
    let plane = |depth| {
        Surface::new(
            Shape::Plane {
                depth,
                slope_x: 0.0,
                slope_y: 0.0,
            },
            1.0,
        )
    };
    let spec = SceneSpec::new(sensor, 0.0, vec![plane(0.6), plane(1.4)]).unwrap().calibrated(400.0, 20.0).unwrap();
    let (cube, _) = simulate_cube(&spec, 0).unwrap();
    let window = |h: &photon_recon::data::Histogram, c: u32| -> u64 {
        h.iter().filter(|(b, _)| b.abs_diff(c) <= 5).map(|(_, n)| n as u64).sum()
    };
    for p in 0..16 {
        let h = cube.histogram(p);
        let (near, far, mid) = (window(&h, 60), window(&h, 140), window(&h, 100));
        assert!(near > 100 && far > 100, "pixel {p}: {near} {far}");
        assert!(mid * 10 < near.min(far), "pixel {p}: valley {mid}");
    }
}
