//! Validity, uniqueness, coverage, minimum matching distance and
//! occupancy JSD of a generated set against a reference set.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::cad::{parse_sequence, TokenMatrix};
use crate::geometry::{chamfer_distance, realize, sample_surface, GeometryConfig, PointCloud, VoxelGrid};

use super::MetricsError;

pub const JSD_RESOLUTION: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationBlock {
    pub validity: f64,
    pub uniqueness: f64,
    pub cov: f64,
    /// `NaN` when no generated sample is valid.
    pub mmd: f64,
    pub jsd: f64,
}

/// Fraction of elements that do not equal an earlier element.
pub fn uniqueness(gen: &[TokenMatrix]) -> f64 {
    let mut seen = HashSet::new();
    let fresh = gen.iter().filter(|m| seen.insert(*m)).count();
    fresh as f64 / gen.len() as f64
}

/// `cd[g][r]` between generated sample `g` and reference `r`. Coverage is the
/// fraction of references that are the nearest reference of some generated
/// sample; MMD averages, over references, the distance to the nearest
/// generated sample.
pub fn coverage_mmd(cd: &[Vec<f64>], n_ref: usize) -> (f64, f64) {
    if n_ref == 0 {
        return (0.0, f64::NAN);
    }
    let mut covered = vec![false; n_ref];
    for row in cd {
        let mut best = 0;
        for r in 1..n_ref {
            if row[r] < row[best] {
                best = r;
            }
        }
        covered[best] = true;
    }
    let cov = covered.iter().filter(|&&c| c).count() as f64 / n_ref as f64;
    if cd.is_empty() {
        return (cov, f64::NAN);
    }
    let mmd = (0..n_ref)
        .map(|r| cd.iter().map(|row| row[r]).fold(f64::INFINITY, f64::min))
        .sum::<f64>()
        / n_ref as f64;
    (cov, mmd)
}

/// Occupancy summed over `grids` on an `res^3` grid (a coarse cell is
/// occupied when any fine voxel inside it is) and normalized to sum 1.
pub fn occupancy_distribution(grids: &[VoxelGrid], res: usize) -> Vec<f64> {
    let mut hist = vec![0.0; res * res * res];
    for g in grids {
        let fine = g.resolution();
        let mut cell = vec![false; res * res * res];
        for x in 0..fine {
            for y in 0..fine {
                for z in 0..fine {
                    if g.get(x, y, z) {
                        let (cx, cy, cz) = (x * res / fine, y * res / fine, z * res / fine);
                        cell[(cx * res + cy) * res + cz] = true;
                    }
                }
            }
        }
        for (h, c) in hist.iter_mut().zip(cell) {
            if c {
                *h += 1.0;
            }
        }
    }
    let total: f64 = hist.iter().sum();
    if total > 0.0 {
        hist.iter_mut().for_each(|h| *h /= total);
    }
    hist
}

/// Jensen-Shannon divergence in nats between two distributions.
pub fn jsd(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            s += 0.5 * a * (a / m).ln();
        }
        if b > 0.0 {
            s += 0.5 * b * (b / m).ln();
        }
    }
    s.max(0.0)
}

struct Realized {
    grid: VoxelGrid,
    cloud: PointCloud,
}

fn realize_all(set: &[TokenMatrix], geo: &GeometryConfig, seed: u64) -> Vec<Option<Realized>> {
    set.iter()
        .enumerate()
        .map(|(i, m)| {
            let seq = parse_sequence(m).ok()?;
            let grid = realize(&seq, geo).ok()?;
            let cloud = sample_surface(&grid, geo.n_points, seed.wrapping_add(i as u64)).ok()?;
            Some(Realized { grid, cloud })
        })
        .collect()
}

pub fn cd_matrix(gen: &[&PointCloud], refs: &[&PointCloud]) -> Vec<Vec<f64>> {
    gen.iter()
        .map(|g| refs.iter().map(|r| chamfer_distance(g, r).expect("clouds are non-empty")).collect())
        .collect()
}

/// Invalid samples count against validity and are left out of the
/// distance-based metrics; invalid references are dropped likewise.
pub fn generation_metrics(
    gen: &[TokenMatrix],
    refs: &[TokenMatrix],
    geo: &GeometryConfig,
    seed: u64,
) -> Result<GenerationBlock, MetricsError> {
    if gen.is_empty() || refs.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    let g = realize_all(gen, geo, seed);
    let r = realize_all(refs, geo, seed);
    let gv: Vec<&Realized> = g.iter().flatten().collect();
    let rv: Vec<&Realized> = r.iter().flatten().collect();
    let validity = gv.len() as f64 / gen.len() as f64;
    let cd = cd_matrix(
        &gv.iter().map(|x| &x.cloud).collect::<Vec<_>>(),
        &rv.iter().map(|x| &x.cloud).collect::<Vec<_>>(),
    );
    let (cov, mmd) = coverage_mmd(&cd, rv.len());
    let gd = occupancy_distribution(&gv.iter().map(|x| x.grid.clone()).collect::<Vec<_>>(), JSD_RESOLUTION);
    let rd = occupancy_distribution(&rv.iter().map(|x| x.grid.clone()).collect::<Vec<_>>(), JSD_RESOLUTION);
    Ok(GenerationBlock {
        validity,
        uniqueness: uniqueness(gen),
        cov,
        mmd,
        jsd: jsd(&gd, &rd),
    })
}
