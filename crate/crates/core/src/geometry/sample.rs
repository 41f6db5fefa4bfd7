use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::voxel::VoxelGrid;
use super::GeometryError;

pub type Point3 = [f64; 3];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// CSV with an `x,y,z` header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,z\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p[0], p[1], p[2]);
        }
        out
    }
}

/// An exposed voxel face: the voxel and the outward axis/direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Face {
    pub voxel: [usize; 3],
    pub axis: usize,
    pub positive: bool,
}

/// Faces of occupied voxels whose neighbor is empty or outside the grid.
pub fn exposed_faces(grid: &VoxelGrid) -> Vec<Face> {
    let r = grid.resolution();
    let mut faces = Vec::new();
    for x in 0..r {
        for y in 0..r {
            for z in 0..r {
                if !grid.get(x, y, z) {
                    continue;
                }
                let v = [x, y, z];
                for axis in 0..3 {
                    for positive in [false, true] {
                        let mut n = v;
                        let open = if positive {
                            n[axis] += 1;
                            n[axis] >= r || !grid.get(n[0], n[1], n[2])
                        } else if v[axis] == 0 {
                            true
                        } else {
                            n[axis] -= 1;
                            !grid.get(n[0], n[1], n[2])
                        };
                        if open {
                            faces.push(Face { voxel: v, axis, positive });
                        }
                    }
                }
            }
        }
    }
    faces
}

/// Draws `n` points uniformly over the exposed surface. All faces have equal
/// area, so a uniform face pick followed by a uniform point in the square is
/// area-weighted.
pub fn sample_surface(grid: &VoxelGrid, n: usize, seed: u64) -> Result<PointCloud, GeometryError> {
    if n == 0 {
        return Ok(PointCloud::default());
    }
    let faces = exposed_faces(grid);
    if faces.is_empty() {
        return Err(GeometryError::EmptySolid);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = grid.pitch();
    let points = (0..n)
        .map(|_| {
            let f = faces[rng.random_range(0..faces.len())];
            let mut p = [0.0; 3];
            for d in 0..3 {
                let lo = -1.0 + f.voxel[d] as f64 * h;
                p[d] = if d == f.axis {
                    if f.positive {
                        lo + h
                    } else {
                        lo
                    }
                } else {
                    lo + rng.random::<f64>() * h
                };
            }
            p
        })
        .collect();
    Ok(PointCloud { points })
}
