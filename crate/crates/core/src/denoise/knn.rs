// SPDX-License-Identifier: Apache-2.0

//! Intensity smoothing over nearest neighbours, and threshold pruning.

use rayon::prelude::*;

use super::index::SpatialIndex;
use crate::data::PointCloud;

/// Replaces each intensity by the plain mean over its `k` nearest
/// neighbours (itself included) among points closer than `radius`. Ties in
/// distance are broken by point index. Depths are untouched.
pub fn knn_intensity_filter(cloud: &PointCloud, k: usize, radius: f64, index: &SpatialIndex) -> PointCloud {
    assert!(k >= 1, "k must be >= 1");
    assert_eq!(cloud.len(), index.len(), "index was not built on this cloud");
    let pts = cloud.points();
    let filtered: Vec<f64> = (0..pts.len())
        .into_par_iter()
        .map(|n| {
            let near = index.within(&pts[n].position, radius);
            if near.is_empty() {
                // only possible for radius 0
                return pts[n].intensity;
            }
            let take = near.len().min(k);
            near[..take].iter().map(|(m, _)| pts[*m as usize].intensity).sum::<f64>() / take as f64
        })
        .collect();
    let points = pts
        .iter()
        .zip(filtered)
        .map(|(p, r)| {
            let mut q = p.clone();
            q.intensity = r;
            q
        })
        .collect();
    PointCloud::from_points(points)
}

/// Drops every point with intensity below `r_min`, keeping order.
pub fn prune(cloud: &PointCloud, r_min: f64) -> PointCloud {
    PointCloud::from_points(cloud.iter().filter(|p| !(p.intensity < r_min)).cloned().collect())
}
