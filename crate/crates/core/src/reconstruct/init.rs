// SPDX-License-Identifier: Apache-2.0

//! Matched-filter initialisation.
//!
//! Each histogram is correlated with the response, `C(tau) = sum_k z_k
//! h(t_k - tau)`, visiting only bins near active events. The expected
//! background contribution `b0 * sum_t h(t - tau)` is subtracted and the
//! result divided by `sum_t h(t - tau)^2`, which turns the score into a
//! least-squares amplitude in photons. Up to `K` separated local maxima
//! above the threshold become points at the sub-bin (parabolic) peak.

use rayon::prelude::*;

use super::config::InitParams;
use crate::data::{BackgroundImage, Irf, PhotonCube, Point, PointCloud, SensorModel};
use crate::likelihood::check_dimensions;
use crate::error::Result;

/// A detected return in one coarse pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    /// Depth in bins.
    pub t: f64,
    /// Estimated signal photons of one pixel (before gain correction).
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DetectOptions {
    pub max_returns: usize,
    pub threshold: f64,
    pub separation: f64,
    pub pool_radius: usize,
    pub subbin: bool,
    pub subtract_background: bool,
}

impl From<&InitParams> for DetectOptions {
    fn from(p: &InitParams) -> Self {
        DetectOptions {
            max_returns: p.max_returns,
            threshold: p.peak_threshold,
            separation: p.min_peak_separation,
            pool_radius: p.pool_radius,
            subbin: true,
            subtract_background: true,
        }
    }
}

/// Initial cloud and background from the cube.
pub fn init_matched_filter(
    cube: &PhotonCube,
    sensor: &SensorModel,
    params: &InitParams,
    background_floor: f64,
) -> Result<(PointCloud, BackgroundImage)> {
    check_dimensions(cube, sensor)?;
    params.validate()?;
    let opts = DetectOptions::from(params);
    let per_pixel: Vec<(Vec<Point>, f64)> = (0..cube.n_pixels())
        .into_par_iter()
        .map(|p| {
            let g = sensor.gain(p);
            if g == 0.0 {
                return (Vec::new(), background_floor);
            }
            let peaks = detect_peaks(cube, sensor, p, &opts);
            let irf = sensor.irf(p);
            let hist = cube.histogram(p);
            let n_bins = sensor.n_bins();
            // own events inside any accepted peak's support count as signal
            let mut claimed = 0u64;
            let (lo, hi) = irf.support();
            for (b, z) in hist.iter() {
                let b = b as f64;
                if peaks.iter().any(|pk| b - pk.t >= lo && b - pk.t <= hi) {
                    claimed += z as u64;
                }
            }
            let unclaimed = hist.total() - claimed;
            let bg = (unclaimed as f64 / n_bins as f64 / g).max(background_floor);
            let points = spawn(sensor, p, peaks.iter().map(|pk| (pk.t, pk.amplitude / g)));
            (points, bg)
        })
        .collect();
    let mut points = Vec::new();
    let mut bg = Vec::with_capacity(per_pixel.len());
    for (pts, b) in per_pixel {
        points.extend(pts);
        bg.push(b);
    }
    Ok((
        PointCloud::from_points(points),
        BackgroundImage::from_values(sensor.n_rows(), sensor.n_cols(), bg)?,
    ))
}

/// Points for coarse pixel `p`, one per fine cell of its window, each
/// carrying an equal share of the intensity.
pub(crate) fn spawn(sensor: &SensorModel, p: usize, returns: impl Iterator<Item = (f64, f64)>) -> Vec<Point> {
    let s = sensor.superres();
    let (i, j) = (p / sensor.n_cols(), p % sensor.n_cols());
    let share = 1.0 / (s * s) as f64;
    let mut out = Vec::new();
    for (t, r) in returns {
        for a in 0..s {
            for b in 0..s {
                out.push(Point::at_fine(sensor, [i * s + a, j * s + b], t, r.max(0.0) * share));
            }
        }
    }
    out
}

/// Response moments `sum_t h(t - tau)` and `sum_t h(t - tau)^2` over the gate.
fn moments(irf: &Irf, tau: f64, n_bins: usize) -> (f64, f64) {
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for t in irf.bin_range(tau, n_bins) {
        let h = irf.eval(t as f64 - tau);
        m1 += h;
        m2 += h * h;
    }
    (m1, m2)
}

/// Peaks of coarse pixel `p`, strongest first.
pub(crate) fn detect_peaks(cube: &PhotonCube, sensor: &SensorModel, p: usize, opts: &DetectOptions) -> Vec<Peak> {
    let n_bins = sensor.n_bins();
    let irf = sensor.irf(p);
    let (lo, hi) = irf.support();
    let (i, j) = (p / sensor.n_cols(), p % sensor.n_cols());
    let rad = opts.pool_radius;
    let mut pooled: Vec<(u32, u32)> = Vec::new();
    let mut live = 0usize;
    for ii in i.saturating_sub(rad)..(i + rad + 1).min(sensor.n_rows()) {
        for jj in j.saturating_sub(rad)..(j + rad + 1).min(sensor.n_cols()) {
            let q = sensor.index(ii, jj);
            if sensor.gain(q) == 0.0 {
                continue;
            }
            live += 1;
            pooled.extend(cube.histogram(q).iter());
        }
    }
    if pooled.is_empty() {
        return Vec::new();
    }
    let total: u64 = pooled.iter().map(|e| e.1 as u64).sum();
    let min_b = pooled.iter().map(|e| e.0).min().unwrap_or(0) as f64;
    let max_b = pooled.iter().map(|e| e.0).max().unwrap_or(0) as f64;
    let first = ((min_b - hi).ceil().max(0.0)) as i64;
    let last = ((max_b - lo).floor().min(n_bins as f64 - 1.0)) as i64;
    if last < first {
        return Vec::new();
    }
    let span = (last - first + 1) as usize;
    let mut corr = vec![0.0; span];
    for &(b, z) in &pooled {
        let b = b as f64;
        let a = ((b - hi).ceil() as i64).max(first);
        let e = ((b - lo).floor() as i64).min(last);
        for tau in a..=e {
            corr[(tau - first) as usize] += z as f64 * irf.eval(b - tau as f64);
        }
    }
    // background per bin from the counts outside the strongest raw peak
    let b0 = if opts.subtract_background {
        let best = corr
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map_or(0.0, |(k, _)| (first + k as i64) as f64);
        let window = irf.bin_range(best, n_bins);
        let inside: u64 = pooled
            .iter()
            .filter(|e| window.contains(&(e.0 as usize)))
            .map(|e| e.1 as u64)
            .sum();
        let rest = (n_bins - window.len()).max(1);
        (total - inside) as f64 / rest as f64
    } else {
        0.0
    };
    // interior moments are the same for every integer tau
    let interior = moments(irf, (n_bins / 2) as f64, n_bins);
    let inside = |tau: i64| tau as f64 + lo >= 0.0 && tau as f64 + hi <= n_bins as f64 - 1.0;
    let score_at = |tau: i64| -> f64 {
        let c = if tau >= first && tau <= last { corr[(tau - first) as usize] } else { 0.0 };
        if tau < 0 || tau >= n_bins as i64 {
            return f64::NEG_INFINITY;
        }
        let (m1, m2) = if inside(tau) { interior } else { moments(irf, tau as f64, n_bins) };
        if !(m2 > 0.0) {
            return f64::NEG_INFINITY;
        }
        (c - b0 * m1) / m2
    };
    let scores: Vec<f64> = (first..=last).map(score_at).collect();
    let mut maxima: Vec<(i64, f64)> = Vec::new();
    for k in 0..span {
        let s = scores[k];
        let left = if k > 0 { scores[k - 1] } else { score_at(first - 1) };
        let right = if k + 1 < span { scores[k + 1] } else { score_at(last + 1) };
        if s > left && s >= right {
            maxima.push((first + k as i64, s));
        }
    }
    maxima.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let norm = live as f64;
    let mut out: Vec<Peak> = Vec::new();
    for (tau, s) in maxima {
        if out.len() >= opts.max_returns {
            break;
        }
        if s / norm < opts.threshold {
            break;
        }
        let mut t = tau as f64;
        if opts.subbin {
            let (sl, sr) = (score_at(tau - 1), score_at(tau + 1));
            let denom = sl - 2.0 * s + sr;
            if sl.is_finite() && sr.is_finite() && denom < 0.0 {
                t += (0.5 * (sl - sr) / denom).clamp(-0.5, 0.5);
            }
        }
        if out.iter().any(|pk| (pk.t - t).abs() < opts.separation) {
            continue;
        }
        let amplitude = if opts.subbin {
            let (m1, m2) = moments(irf, t, n_bins);
            let c: f64 = pooled
                .iter()
                .map(|&(b, z)| z as f64 * irf.eval(b as f64 - t))
                .sum();
            if m2 > 0.0 {
                (c - b0 * m1) / m2
            } else {
                s
            }
        } else {
            s
        };
        out.push(Peak {
            t,
            amplitude: amplitude.max(0.0) / norm,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sensor(n_bins: usize) -> SensorModel {
        SensorModel::new(1, 1, n_bins, Irf::gaussian(2.0, 0.5, 4.0).unwrap(), 0.01, 0.01).unwrap()
    }

    #[test]
    fn empty_pixel_gets_floor() {
        let s = sensor(100);
        let cube = PhotonCube::empty(1, 1, 100, 1.0);
        let (cloud, bg) = init_matched_filter(&cube, &s, &InitParams::default(), 1e-6).unwrap();
        assert!(cloud.is_empty());
        assert_eq!(bg.values(), &[1e-6]);
    }

    #[test]
    fn clean_pulse_is_located() {
        let s = sensor(100);
        let irf = s.irf(0).clone();
        let events: Vec<(u32, u32)> = (30..60)
            .map(|t| (t as u32, (1000.0 * irf.eval(t as f64 - 44.3)).round() as u32))
            .filter(|e| e.1 > 0)
            .collect();
        let n: u32 = events.iter().map(|e| e.1).sum();
        let cube = PhotonCube::from_pixels(1, 1, 100, 1.0, [events]).unwrap();
        let (cloud, _) = init_matched_filter(&cube, &s, &InitParams::default(), 1e-6).unwrap();
        assert_eq!(cloud.len(), 1);
        let p = &cloud.points()[0];
        assert!((p.t - 44.3).abs() < 0.1, "{}", p.t);
        assert!((p.intensity / n as f64 - 1.0).abs() < 0.02, "{}", p.intensity);
    }

    #[test]
    fn two_pulses_two_points() {
        let s = sensor(200);
        let irf = s.irf(0).clone();
        let events: Vec<(u32, u32)> = (0..200)
            .map(|t| {
                let v = 200.0 * irf.eval(t as f64 - 50.0) + 100.0 * irf.eval(t as f64 - 120.0);
                (t as u32, v.round() as u32)
            })
            .filter(|e| e.1 > 0)
            .collect();
        let cube = PhotonCube::from_pixels(1, 1, 200, 1.0, [events]).unwrap();
        let (cloud, _) = init_matched_filter(&cube, &s, &InitParams::default(), 1e-6).unwrap();
        let mut ts: Vec<f64> = cloud.iter().map(|p| p.t).collect();
        ts.sort_by(f64::total_cmp);
        assert_eq!(ts.len(), 2);
        assert!((ts[0] - 50.0).abs() < 0.5 && (ts[1] - 120.0).abs() < 0.5, "{ts:?}");
    }

    #[test]
    fn superres_spawns_window() {
        let s = SensorModel::new(2, 2, 50, Irf::delta(), 0.01, 0.03)
            .unwrap()
            .with_superres(3)
            .unwrap();
        let cube = PhotonCube::from_pixels(2, 2, 50, 1.0, [vec![(20, 9)], vec![], vec![], vec![]]).unwrap();
        let params = InitParams {
            pool_radius: 0,
            ..InitParams::default()
        };
        let (cloud, _) = init_matched_filter(&cube, &s, &params, 1e-6).unwrap();
        assert_eq!(cloud.len(), 9);
        assert!((cloud.total_intensity() - 9.0).abs() < 1e-9);
        assert!(cloud.iter().all(|p| p.pixel == [0, 0]));
    }
}
