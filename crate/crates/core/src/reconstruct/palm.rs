// SPDX-License-Identifier: Apache-2.0

//! Block proximal-gradient iterations with plug-in denoisers.
//!
//! One iteration visits depth, intensity and background in that order.
//! Each block takes a scaled gradient step (backtracked until the nll does
//! not increase) and then hands the result to its denoiser.

use std::time::Instant;

use serde::Serialize;

use super::config::{BackgroundMode, ReconConfig, StepSize};
use super::init::init_matched_filter;
use crate::data::{BackgroundImage, PhotonCube, PointCloud, SensorModel};
use crate::denoise::{apss_project, fft_background_denoise, knn_intensity_filter, prune, SpatialIndex};
use crate::error::Result;
use crate::likelihood::{check_dimensions, evaluate, nll, SceneState};

/// Per-iteration trace. `step_*` is the accepted fraction of the scaled
/// gradient step (0 when every trial was rejected).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub iteration: usize,
    pub nll_start: f64,
    pub nll_depth_step: f64,
    pub nll_depth_denoised: f64,
    pub nll_intensity_step: f64,
    pub nll_intensity_denoised: f64,
    pub nll_background_step: f64,
    pub nll_end: f64,
    pub step_depth: f64,
    pub step_intensity: f64,
    pub step_background: f64,
    pub points: usize,
    pub pruned: usize,
    pub isolated: usize,
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timings {
    pub init_s: f64,
    pub depth_s: f64,
    pub intensity_s: f64,
    pub background_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub iterations: usize,
    pub converged: bool,
    pub initial_nll: f64,
    pub final_nll: f64,
    pub initial_points: usize,
    pub final_points: usize,
    pub history: Vec<Diagnostics>,
    /// Left out of serialised reports unless explicitly kept, so that two
    /// identical runs produce identical files.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub cloud: PointCloud,
    pub background: BackgroundImage,
    pub report: Report,
}

/// Step scale per entry: `1 / curvature` with the curvature floored at a
/// tenth of the median positive curvature, or the fixed value.
fn step_scales(step: StepSize, curv: &[f64]) -> Vec<f64> {
    match step {
        StepSize::Fixed(a) => vec![a; curv.len()],
        StepSize::Auto => {
            let mut pos: Vec<f64> = curv.iter().copied().filter(|c| *c > 0.0 && c.is_finite()).collect();
            let floor = if pos.is_empty() {
                1.0
            } else {
                let mid = pos.len() / 2;
                let (_, m, _) = pos.select_nth_unstable_by(mid, f64::total_cmp);
                0.1 * *m
            };
            curv.iter()
                .map(|c| if c.is_finite() { 1.0 / c.max(floor) } else { 0.0 })
                .collect()
        }
    }
}

/// Tries `theta = 1, beta, beta^2, ...`; returns the first state whose nll
/// does not exceed `nll0`, or `None` after `max_tries` failures.
fn backtrack<'s>(
    nll0: f64,
    beta: f64,
    max_tries: usize,
    cube: &PhotonCube,
    mut propose: impl FnMut(f64) -> SceneState<'s>,
) -> Option<(f64, SceneState<'s>, f64)> {
    let mut theta = 1.0;
    for _ in 0..=max_tries {
        let cand = propose(theta);
        let value = nll(&cand, cube);
        if value <= nll0 || (nll0.is_infinite() && value.is_finite()) {
            return Some((theta, cand, value));
        }
        theta *= beta;
    }
    None
}

struct PhaseTimes {
    depth: f64,
    intensity: f64,
    background: f64,
}

/// One full iteration.
pub fn palm_step<'s>(state: SceneState<'s>, cube: &PhotonCube, config: &ReconConfig) -> (SceneState<'s>, Diagnostics) {
    let (s, d, _) = palm_step_timed(state, cube, config, 0);
    (s, d)
}

fn palm_step_timed<'s>(
    state: SceneState<'s>,
    cube: &PhotonCube,
    config: &ReconConfig,
    iteration: usize,
) -> (SceneState<'s>, Diagnostics, PhaseTimes) {
    let sensor = state.sensor();
    let t_max = sensor.n_bins() as f64 - 1.0;
    let floor = config.background_floor;

    // depth
    let clock = Instant::now();
    let ev = evaluate(&state, cube);
    let nll_start = ev.nll;
    let alpha = step_scales(config.step_depth, &ev.curv_depth);
    let trust: Vec<f64> = state
        .cloud
        .iter()
        .map(|p| {
            let (lo, hi) = sensor.irf(sensor.index(p.pixel[0], p.pixel[1])).support();
            0.5 * (hi - lo)
        })
        .collect();
    let (step_depth, mut state, nll_depth_step) = match backtrack(nll_start, config.backtrack, config.max_backtracks, cube, |theta| {
        let mut cand = state.clone();
        for (n, p) in cand.cloud.points_mut().iter_mut().enumerate() {
            let dt = (theta * alpha[n] * ev.grad_depth[n]).clamp(-trust[n], trust[n]);
            p.set_depth(sensor, (p.t - dt).clamp(0.0, t_max));
        }
        cand
    }) {
        Some(found) => found,
        None => (0.0, state, nll_start),
    };
    let index = SpatialIndex::from_cloud(&state.cloud, config.apss.radius);
    let (projected, isolated) = apss_project(&state.cloud, &config.apss, &index, sensor);
    let isolated = isolated.iter().filter(|f| **f).count();
    let mut projected = projected.into_points();
    for p in &mut projected {
        if !(p.t >= 0.0 && p.t <= t_max) {
            p.set_depth(sensor, p.t.clamp(0.0, t_max));
        }
    }
    for (dst, src) in state.cloud.points_mut().iter_mut().zip(projected) {
        *dst = src;
    }
    let depth_time = clock.elapsed().as_secs_f64();

    // intensity
    let clock = Instant::now();
    let ev = evaluate(&state, cube);
    let nll_depth_denoised = ev.nll;
    let alpha = step_scales(config.step_intensity, &ev.curv_intensity);
    let (step_intensity, state, nll_intensity_step) =
        match backtrack(ev.nll, config.backtrack, config.max_backtracks, cube, |theta| {
            let mut cand = state.clone();
            for (n, p) in cand.cloud.points_mut().iter_mut().enumerate() {
                p.intensity = (p.intensity - theta * alpha[n] * ev.grad_intensity[n]).max(0.0);
            }
            cand
        }) {
            Some(found) => found,
            None => (0.0, state, ev.nll),
        };
    let (cloud, background) = state.into_parts();
    let index = SpatialIndex::from_cloud(&cloud, config.knn_radius);
    let filtered = knn_intensity_filter(&cloud, config.knn_k, config.knn_radius, &index);
    let kept = prune(&filtered, config.r_min);
    let pruned = cloud.len() - kept.len();
    let state = SceneState::new(kept, background, sensor).expect("pruning keeps a consistent state");
    let intensity_time = clock.elapsed().as_secs_f64();

    // background
    let clock = Instant::now();
    let ev = evaluate(&state, cube);
    let nll_intensity_denoised = ev.nll;
    let alpha = step_scales(config.step_background, &ev.curv_background);
    let (step_background, state, nll_background_step) =
        match backtrack(ev.nll, config.backtrack, config.max_backtracks, cube, |theta| {
            let mut cand = state.clone();
            let vals: Vec<f64> = cand
                .background
                .values()
                .iter()
                .enumerate()
                .map(|(p, b)| (b - theta * alpha[p] * ev.grad_background[p]).max(floor))
                .collect();
            cand.background = BackgroundImage::from_values(sensor.n_rows(), sensor.n_cols(), vals).expect("floored values");
            cand
        }) {
            Some(found) => found,
            None => (0.0, state, ev.nll),
        };
    let mut state = state;
    if let BackgroundMode::Fft { cutoff } = config.background {
        let smooth = fft_background_denoise(&state.background, cutoff);
        let vals = smooth.into_values().into_iter().map(|b| b.max(floor)).collect();
        state.background = BackgroundImage::from_values(sensor.n_rows(), sensor.n_cols(), vals).expect("floored values");
    }
    let nll_end = nll(&state, cube);
    let background_time = clock.elapsed().as_secs_f64();

    let diag = Diagnostics {
        iteration,
        nll_start,
        nll_depth_step,
        nll_depth_denoised,
        nll_intensity_step,
        nll_intensity_denoised,
        nll_background_step,
        nll_end,
        step_depth,
        step_intensity,
        step_background,
        points: state.cloud.len(),
        pruned,
        isolated,
    };
    (
        state,
        diag,
        PhaseTimes {
            depth: depth_time,
            intensity: intensity_time,
            background: background_time,
        },
    )
}

/// Matched-filter initialisation followed by the iterations.
pub fn reconstruct(cube: &PhotonCube, sensor: &SensorModel, config: &ReconConfig) -> Result<Reconstruction> {
    config.validate()?;
    check_dimensions(cube, sensor)?;
    let clock = Instant::now();
    let (cloud, background) = init_matched_filter(cube, sensor, &config.init, config.background_floor)?;
    let init_s = clock.elapsed().as_secs_f64();
    let mut out = reconstruct_from(cube, sensor, config, cloud, background)?;
    if let Some(t) = out.report.timings.as_mut() {
        t.init_s = init_s;
        t.total_s += init_s;
    }
    Ok(out)
}

/// Iterations from a given starting cloud and background.
pub fn reconstruct_from(
    cube: &PhotonCube,
    sensor: &SensorModel,
    config: &ReconConfig,
    cloud: PointCloud,
    background: BackgroundImage,
) -> Result<Reconstruction> {
    config.validate()?;
    check_dimensions(cube, sensor)?;
    let clock = Instant::now();
    let mut state = SceneState::new(cloud, background, sensor)?;
    let initial_points = state.cloud.len();
    let initial_nll = nll(&state, cube);
    let mut timings = Timings::default();
    let mut history = Vec::new();
    let mut converged = false;
    let mut prev = initial_nll;
    for it in 0..config.max_iters {
        let (next, diag, times) = palm_step_timed(state, cube, config, it + 1);
        state = next;
        timings.depth_s += times.depth;
        timings.intensity_s += times.intensity;
        timings.background_s += times.background;
        let end = diag.nll_end;
        history.push(diag);
        if (prev - end).abs() <= config.stop_tol * prev.abs().max(1.0) {
            converged = true;
            break;
        }
        prev = end;
    }
    timings.total_s = clock.elapsed().as_secs_f64();
    let final_nll = history.last().map_or(initial_nll, |d| d.nll_end);
    let (cloud, background) = state.into_parts();
    let report = Report {
        iterations: history.len(),
        converged,
        initial_nll,
        final_nll,
        initial_points,
        final_points: cloud.len(),
        history,
        timings: Some(timings),
    };
    Ok(Reconstruction {
        cloud,
        background,
        report,
    })
}
