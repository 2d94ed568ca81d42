// SPDX-License-Identifier: Apache-2.0

//! Recall within a depth tolerance and related point-cloud metrics.
//!
//! Estimated and true points are compared per fine pixel column. Within a
//! column, candidate pairs closer than `tau` in depth are matched greedily
//! by increasing depth error, each point used at most once.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::Serialize;

use crate::data::{Point, PointCloud, SensorModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalResult {
    /// Matched true points over all true points (1 when there are none).
    pub recall: f64,
    /// Unmatched estimated points over all estimated points (0 when there
    /// are none).
    pub false_rate: f64,
    /// Root mean square depth error over matches, metres.
    pub depth_rmse: f64,
    /// Mean absolute intensity error over matches.
    pub intensity_mae: f64,
    pub matched: usize,
    pub n_truth: usize,
    pub n_est: usize,
}

/// A point reduced to its column key, depth (metres) and intensity.
pub type ColumnPoint = ([i64; 2], f64, f64);

fn column_of(p: &Point) -> ColumnPoint {
    ([p.fine[0] as i64, p.fine[1] as i64], p.position.z, p.intensity)
}

pub fn evaluate(est: &PointCloud, truth: &PointCloud, tau: f64) -> Result<EvalResult> {
    let e: Vec<ColumnPoint> = est.iter().map(column_of).collect();
    let t: Vec<ColumnPoint> = truth.iter().map(column_of).collect();
    evaluate_columns(&e, &t, tau)
}

/// Same metric on raw `(position, intensity)` rows, with columns taken as
/// `floor(x / pitch), floor(y / pitch)`.
pub fn evaluate_rows(
    est: &[(Vector3<f64>, f64)],
    truth: &[(Vector3<f64>, f64)],
    pitch: f64,
    tau: f64,
) -> Result<EvalResult> {
    if !(pitch > 0.0) {
        return Err(Error::argument("pitch must be > 0"));
    }
    let key = |(p, r): &(Vector3<f64>, f64)| -> ColumnPoint {
        ([(p.x / pitch).floor() as i64, (p.y / pitch).floor() as i64], p.z, *r)
    };
    let e: Vec<ColumnPoint> = est.iter().map(key).collect();
    let t: Vec<ColumnPoint> = truth.iter().map(key).collect();
    evaluate_columns(&e, &t, tau)
}

pub fn evaluate_columns(est: &[ColumnPoint], truth: &[ColumnPoint], tau: f64) -> Result<EvalResult> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::argument(format!("tau must be > 0, got {tau}")));
    }
    let mut columns: BTreeMap<[i64; 2], (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (k, p) in est.iter().enumerate() {
        columns.entry(p.0).or_default().0.push(k);
    }
    for (k, p) in truth.iter().enumerate() {
        columns.entry(p.0).or_default().1.push(k);
    }
    let mut matched = 0usize;
    let mut sq = 0.0;
    let mut abs_r = 0.0;
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (e_idx, t_idx) in columns.values() {
        if e_idx.is_empty() || t_idx.is_empty() {
            continue;
        }
        pairs.clear();
        for &ti in t_idx {
            for &ei in e_idx {
                let d = (est[ei].1 - truth[ti].1).abs();
                if d <= tau {
                    pairs.push((d, ti, ei));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut used_t = vec![false; t_idx.len()];
        let mut used_e = vec![false; e_idx.len()];
        for &(d, ti, ei) in &pairs {
            let a = t_idx.iter().position(|&k| k == ti).expect("member");
            let b = e_idx.iter().position(|&k| k == ei).expect("member");
            if used_t[a] || used_e[b] {
                continue;
            }
            used_t[a] = true;
            used_e[b] = true;
            matched += 1;
            sq += d * d;
            abs_r += (est[ei].2 - truth[ti].2).abs();
        }
    }
    let n_truth = truth.len();
    let n_est = est.len();
    Ok(EvalResult {
        recall: if n_truth == 0 { 1.0 } else { matched as f64 / n_truth as f64 },
        false_rate: if n_est == 0 { 0.0 } else { (n_est - matched) as f64 / n_est as f64 },
        depth_rmse: if matched == 0 { 0.0 } else { (sq / matched as f64).sqrt() },
        intensity_mae: if matched == 0 { 0.0 } else { abs_r / matched as f64 },
        matched,
        n_truth,
        n_est,
    })
}

/// Spreads each point of a cloud estimated at one point per detector pixel
/// over the `s x s` fine cells of `fine_sensor`, sharing its intensity.
pub fn upsample_to_fine(cloud: &PointCloud, fine_sensor: &SensorModel) -> PointCloud {
    let s = fine_sensor.superres();
    let share = 1.0 / (s * s) as f64;
    let mut out = Vec::with_capacity(cloud.len() * s * s);
    for p in cloud.iter() {
        let t = p.position.z / fine_sensor.bin_resolution();
        for a in 0..s {
            for b in 0..s {
                out.push(Point::at_fine(
                    fine_sensor,
                    [p.pixel[0] * s + a, p.pixel[1] * s + b],
                    t,
                    p.intensity * share,
                ));
            }
        }
    }
    PointCloud::from_points(out)
}
