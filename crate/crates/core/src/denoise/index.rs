// SPDX-License-Identifier: Apache-2.0

//! Uniform voxel grid for fixed-radius neighbour queries.

use std::collections::HashMap;

use nalgebra::Vector3;

#[derive(Debug, Clone)]
pub struct SpatialIndex {
    cell: f64,
    positions: Vec<Vector3<f64>>,
    cells: HashMap<[i64; 3], Vec<u32>>,
}

impl SpatialIndex {
    /// Indexes `positions` with cubic cells of side `cell` metres.
    pub fn new(positions: Vec<Vector3<f64>>, cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "cell size must be positive");
        let mut cells: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        for (k, p) in positions.iter().enumerate() {
            cells.entry(key(p, cell)).or_default().push(k as u32);
        }
        SpatialIndex { cell, positions, cells }
    }

    pub fn from_cloud(cloud: &crate::data::PointCloud, cell: f64) -> Self {
        Self::new(cloud.iter().map(|p| p.position).collect(), cell)
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    /// Calls `f(index, squared distance)` for every indexed point strictly
    /// closer than `radius` to `q`. Visiting order is fixed: cells in
    /// lexicographic offset order, then insertion order within a cell.
    pub fn for_each_within(&self, q: &Vector3<f64>, radius: f64, mut f: impl FnMut(u32, f64)) {
        let reach = (radius / self.cell).ceil().max(1.0) as i64;
        let c = key(q, self.cell);
        let r2 = radius * radius;
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -reach..=reach {
                    let Some(list) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) else {
                        continue;
                    };
                    for &k in list {
                        let d2 = (self.positions[k as usize] - q).norm_squared();
                        if d2 < r2 {
                            f(k, d2);
                        }
                    }
                }
            }
        }
    }

    /// Neighbours within `radius` as `(index, squared distance)`, sorted by
    /// distance then index.
    pub fn within(&self, q: &Vector3<f64>, radius: f64) -> Vec<(u32, f64)> {
        let mut out = Vec::new();
        self.for_each_within(q, radius, |k, d2| out.push((k, d2)));
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out
    }
}

fn key(p: &Vector3<f64>, cell: f64) -> [i64; 3] {
    [
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    ]
}
