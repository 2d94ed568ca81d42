// SPDX-License-Identifier: Apache-2.0

//! Algebraic point set surface projection.
//!
//! Around each point the neighbours inside the kernel radius are fitted
//! with an algebraic sphere `u(x) = u0 + ul . x + uq |x|^2`. The fit
//! minimises the weighted algebraic residual `sum w u(x_i)^2` subject to a
//! unit weighted mean gradient norm, which reduces to a small generalised
//! symmetric eigenproblem. Coordinates are centred on the query point and
//! scaled by the radius so the problem is well conditioned at any scale.
//! A sphere that degenerates (`|uq|` tiny) or is tighter than the kernel
//! is replaced by the weighted least-squares plane.

use nalgebra::{Matrix3, Matrix4, SymmetricEigen, Vector3, Vector4};
use rayon::prelude::*;

use super::index::SpatialIndex;
use crate::data::{PointCloud, SensorModel};
use crate::error::{Error, Result};

/// How a point is moved onto the fitted primitive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    /// Euclidean closest point.
    ClosestPoint,
    /// Intersection with the line of sight through the point (only the
    /// depth changes), so the point keeps its pixel.
    LineOfSight,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApssParams {
    /// Kernel radius in metres.
    pub radius: f64,
    pub min_neighbors: usize,
    /// Below this `|uq|` (radius-scaled units) the sphere is treated as a plane.
    pub sphere_degeneracy_eps: f64,
    pub projection: Projection,
}

impl Default for ApssParams {
    fn default() -> Self {
        ApssParams {
            radius: 0.08,
            min_neighbors: 6,
            sphere_degeneracy_eps: 1e-6,
            projection: Projection::ClosestPoint,
        }
    }
}

impl ApssParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::argument("apss radius must be > 0"));
        }
        if self.min_neighbors < 4 {
            return Err(Error::argument("apss min_neighbors must be >= 4"));
        }
        if !(self.sphere_degeneracy_eps >= 0.0) {
            return Err(Error::argument("apss sphere_degeneracy_eps must be >= 0"));
        }
        Ok(())
    }
}

/// Ratio of middle to largest covariance eigenvalue under which the
/// neighbourhood counts as collinear.
const COLLINEAR_RATIO: f64 = 1e-10;

/// Smallest sphere radius accepted, in kernel radii.
const MIN_SPHERE_RADIUS: f64 = 1.0;

/// Outcome of fitting one neighbourhood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fit {
    Sphere { centre: Vector3<f64>, radius: f64 },
    Plane { normal: Vector3<f64>, offset: f64 },
}

/// Projection of every indexed position. Returns new positions and a flag
/// per point that is set when the point was left unchanged because its
/// neighbourhood was too small or degenerate.
pub fn apss_project_positions(index: &SpatialIndex, params: &ApssParams) -> (Vec<Vector3<f64>>, Vec<bool>) {
    let out: Vec<(Vector3<f64>, bool)> = (0..index.len())
        .into_par_iter()
        .map(|k| {
            let p = index.positions()[k];
            match project_one(index, &p, params) {
                Some(q) => (q, false),
                None => (p, true),
            }
        })
        .collect();
    out.into_iter().unzip()
}

/// Projects every point of `cloud` (which `index` must have been built on)
/// and re-derives lidar coordinates. A point whose projection leaves the
/// sensor volume is kept where it was.
pub fn apss_project(
    cloud: &PointCloud,
    params: &ApssParams,
    index: &SpatialIndex,
    sensor: &SensorModel,
) -> (PointCloud, Vec<bool>) {
    assert_eq!(cloud.len(), index.len(), "index was not built on this cloud");
    let (positions, flags) = apss_project_positions(index, params);
    let points = cloud
        .iter()
        .zip(positions)
        .map(|(p, pos)| {
            let mut q = p.clone();
            match params.projection {
                Projection::LineOfSight => {
                    let t = pos.z / sensor.bin_resolution();
                    q.set_depth(sensor, t);
                }
                Projection::ClosestPoint => {
                    if let Ok(c) = sensor.map_world_to_lidar(&pos) {
                        q.position = pos;
                        q.fine = c.fine;
                        q.pixel = c.pixel;
                        q.t = c.t;
                    }
                }
            }
            q
        })
        .collect();
    (PointCloud::from_points(points), flags)
}

/// Fits the primitive around `p` in radius-scaled coordinates centred on
/// `p`. `None` for too few neighbours or a collinear neighbourhood.
pub fn fit_local(index: &SpatialIndex, p: &Vector3<f64>, params: &ApssParams) -> Option<Fit> {
    let h = params.radius;
    let mut qs: Vec<(Vector3<f64>, f64)> = Vec::new();
    index.for_each_within(p, h, |k, d2| {
        let s = 1.0 - d2 / (h * h);
        let w = s * s * s * s;
        if w > 0.0 {
            qs.push(((index.positions()[k as usize] - p) / h, w));
        }
    });
    if qs.len() < params.min_neighbors {
        return None;
    }
    let sw: f64 = qs.iter().map(|(_, w)| w).sum();
    let mean: Vector3<f64> = qs.iter().map(|(q, w)| q * *w).sum::<Vector3<f64>>() / sw;
    let mut cov = Matrix3::zeros();
    for (q, w) in &qs {
        let d = q - mean;
        cov += d * d.transpose() * *w;
    }
    cov /= sw;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (e1, e2) = (eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
    if !(e2 > 0.0) || e1 <= COLLINEAR_RATIO * e2 {
        return None;
    }
    let mut normal: Vector3<f64> = eig.eigenvectors.column(order[0]).into_owned();
    // face the sensor, which looks along +z
    if normal.z > 0.0 {
        normal = -normal;
    }
    let plane = Fit::Plane {
        normal,
        offset: -normal.dot(&mean),
    };

    // weighted moments of v = [1, q, |q|^2] and of the gradient metric
    let mut a00 = 0.0;
    let mut a0r = Vector4::zeros();
    let mut arr = Matrix4::zeros();
    let mut nm = Matrix4::zeros();
    for (q, w) in &qs {
        let w = *w / sw;
        let q2 = q.norm_squared();
        let v = Vector4::new(q.x, q.y, q.z, q2);
        a00 += w;
        a0r += v * w;
        arr += v * v.transpose() * w;
        let mut g = Matrix4::identity();
        for i in 0..3 {
            g[(i, 3)] = 2.0 * q[i];
            g[(3, i)] = 2.0 * q[i];
        }
        g[(3, 3)] = 4.0 * q2;
        nm += g * w;
    }
    let reduced = arr - a0r * a0r.transpose() / a00;
    let Some(chol) = nm.cholesky() else {
        return Some(plane);
    };
    let Some(linv) = chol.l().try_inverse() else {
        return Some(plane);
    };
    let m = linv * reduced * linv.transpose();
    let m = (m + m.transpose()) * 0.5;
    let eig4 = SymmetricEigen::new(m);
    let imin = eig4.eigenvalues.imin();
    let y: Vector4<f64> = eig4.eigenvectors.column(imin).into_owned();
    let mut u = linv.transpose() * y;
    let mut u0 = -a0r.dot(&u) / a00;
    let ul = Vector3::new(u[0], u[1], u[2]);
    let ul_norm = ul.norm();
    if !(ul_norm > 1e-12) {
        return Some(plane);
    }
    let sign = if ul.dot(&normal) < 0.0 { -1.0 } else { 1.0 };
    u *= sign / ul_norm;
    u0 *= sign / ul_norm;
    let ul = Vector3::new(u[0], u[1], u[2]);
    let uq = u[3];
    if uq.abs() < params.sphere_degeneracy_eps {
        return Some(plane);
    }
    let centre = -ul / (2.0 * uq);
    let r2 = centre.norm_squared() - u0 / uq;
    // a sphere tighter than the kernel is noise being fitted, not surface
    if !(r2 > MIN_SPHERE_RADIUS * MIN_SPHERE_RADIUS) {
        return Some(plane);
    }
    Some(Fit::Sphere {
        centre,
        radius: r2.sqrt(),
    })
}

fn project_one(index: &SpatialIndex, p: &Vector3<f64>, params: &ApssParams) -> Option<Vector3<f64>> {
    let fit = fit_local(index, p, params)?;
    let h = params.radius;
    let local = match params.projection {
        Projection::ClosestPoint => closest_point(&fit)?,
        Projection::LineOfSight => line_of_sight(&fit).or_else(|| closest_point(&fit).map(|c| Vector3::new(0.0, 0.0, c.z)))?,
    };
    Some(p + local * h)
}

/// Closest point of the primitive to the local origin.
fn closest_point(fit: &Fit) -> Option<Vector3<f64>> {
    match *fit {
        Fit::Plane { normal, offset } => Some(-normal * offset),
        Fit::Sphere { centre, radius } => {
            let d = centre.norm();
            if !(d > 0.0) {
                return None;
            }
            Some(centre * (1.0 - radius / d))
        }
    }
}

/// Nearest intersection of the primitive with the local z axis, if it lies
/// within the kernel.
fn line_of_sight(fit: &Fit) -> Option<Vector3<f64>> {
    let s = match *fit {
        Fit::Plane { normal, offset } => {
            if normal.z.abs() < 1e-9 {
                return None;
            }
            -offset / normal.z
        }
        Fit::Sphere { centre, radius } => {
            // |s e_z - c|^2 = R^2
            let b = -2.0 * centre.z;
            let c = centre.norm_squared() - radius * radius;
            let disc = b * b - 4.0 * c;
            if disc < 0.0 {
                return None;
            }
            let sq = disc.sqrt();
            let r1 = (-b + sq) * 0.5;
            let r2 = (-b - sq) * 0.5;
            if r1.abs() < r2.abs() {
                r1
            } else {
                r2
            }
        }
    };
    (s.abs() <= 1.0).then(|| Vector3::new(0.0, 0.0, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_plane(n: usize, spacing: f64, z: impl Fn(f64, f64) -> f64) -> Vec<Vector3<f64>> {
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let (x, y) = (i as f64 * spacing, j as f64 * spacing);
                out.push(Vector3::new(x, y, z(x, y)));
            }
        }
        out
    }

    #[test]
    fn tilted_plane_is_fixed_point() {
        let pts = grid_plane(12, 0.01, |x, y| 2.0 + 0.3 * x - 0.2 * y);
        let params = ApssParams {
            radius: 0.035,
            ..Default::default()
        };
        let idx = SpatialIndex::new(pts.clone(), params.radius);
        let (out, flags) = apss_project_positions(&idx, &params);
        for (k, (a, b)) in pts.iter().zip(&out).enumerate() {
            assert!(!flags[k]);
            assert!((a - b).norm() < 1e-9, "{k}: {}", (a - b).norm());
        }
    }

    #[test]
    fn sphere_samples_stay_on_sphere() {
        let c = Vector3::new(0.3, -0.2, 3.0);
        let n = 500;
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let pts: Vec<Vector3<f64>> = (0..n)
            .map(|k| {
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                let r = (1.0 - z * z).sqrt();
                let a = golden * k as f64;
                c + Vector3::new(r * a.cos(), r * a.sin(), z)
            })
            .collect();
        let params = ApssParams {
            radius: 0.4,
            ..Default::default()
        };
        let idx = SpatialIndex::new(pts, params.radius);
        let (out, flags) = apss_project_positions(&idx, &params);
        assert!(flags.iter().all(|f| !f));
        for q in out {
            assert!(((q - c).norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn line_of_sight_keeps_column() {
        let pts = grid_plane(10, 0.01, |x, y| 1.0 + 0.002 * ((x * 700.0).sin() + (y * 500.0).cos()));
        let params = ApssParams {
            radius: 0.04,
            projection: Projection::LineOfSight,
            ..Default::default()
        };
        let idx = SpatialIndex::new(pts.clone(), params.radius);
        let (out, _) = apss_project_positions(&idx, &params);
        for (a, b) in pts.iter().zip(&out) {
            assert_eq!((a.x, a.y), (b.x, b.y));
            assert!((a.z - b.z).abs() < 0.01);
        }
    }

    #[test]
    fn sparse_points_are_flagged() {
        let pts = vec![Vector3::new(0.0, 0.0, 1.0), Vector3::new(0.01, 0.0, 1.0), Vector3::new(5.0, 5.0, 5.0)];
        let params = ApssParams::default();
        let idx = SpatialIndex::new(pts.clone(), params.radius);
        let (out, flags) = apss_project_positions(&idx, &params);
        assert_eq!(flags, vec![true, true, true]);
        assert_eq!(out, pts);
    }

    #[test]
    fn collinear_points_are_flagged() {
        let pts: Vec<Vector3<f64>> = (0..20).map(|k| Vector3::new(k as f64 * 0.005, 0.0, 1.0)).collect();
        let params = ApssParams::default();
        let idx = SpatialIndex::new(pts.clone(), params.radius);
        let (out, flags) = apss_project_positions(&idx, &params);
        assert!(flags.iter().all(|f| *f));
        assert_eq!(out, pts);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ApssParams { radius: 0.0, ..Default::default() }.validate().is_err());
        assert!(ApssParams { min_neighbors: 3, ..Default::default() }.validate().is_err());
    }
}
