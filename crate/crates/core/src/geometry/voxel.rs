use serde::{Deserialize, Serialize};

/// Occupancy grid over the `[-1, 1]^3` model cube. Voxel `(x, y, z)` has flat
/// index `(x * R + y) * R + z`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct VoxelGrid {
    resolution: usize,
    occupancy: Vec<bool>,
}

/// JSON export form: `{"resolution": R, "occupied": [flat indices]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoxelGridJson {
    pub resolution: usize,
    pub occupied: Vec<usize>,
}

impl VoxelGrid {
    pub fn empty(resolution: usize) -> Self {
        assert!(resolution > 0, "voxel resolution must be positive");
        Self {
            resolution,
            occupancy: vec![false; resolution * resolution * resolution],
        }
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Edge length of one voxel.
    pub fn pitch(&self) -> f64 {
        2.0 / self.resolution as f64
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (x * self.resolution + y) * self.resolution + z
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.occupancy[self.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, v: bool) {
        let i = self.index(x, y, z);
        self.occupancy[i] = v;
    }

    /// Voxel center coordinate along one axis.
    pub fn center(&self, i: usize) -> f64 {
        -1.0 + (i as f64 + 0.5) * self.pitch()
    }

    pub fn count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.occupancy.iter().any(|&o| o)
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    fn zip(&self, other: &Self, f: impl Fn(bool, bool) -> bool) -> Self {
        assert_eq!(self.resolution, other.resolution, "grid resolutions differ");
        Self {
            resolution: self.resolution,
            occupancy: self.occupancy.iter().zip(&other.occupancy).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn union(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a || b)
    }

    pub fn difference(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a && !b)
    }

    pub fn intersection(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a && b)
    }

    pub fn to_json(&self) -> VoxelGridJson {
        VoxelGridJson {
            resolution: self.resolution,
            occupied: self
                .occupancy
                .iter()
                .enumerate()
                .filter(|(_, &o)| o)
                .map(|(i, _)| i)
                .collect(),
        }
    }

    pub fn from_json(json: &VoxelGridJson) -> Option<Self> {
        let mut g = Self::empty(json.resolution);
        for &i in &json.occupied {
            *g.occupancy.get_mut(i)? = true;
        }
        Some(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(bits: &[bool]) -> VoxelGrid {
        VoxelGrid {
            resolution: 3,
            occupancy: bits.to_vec(),
        }
    }

    proptest! {
        #[test]
        fn boolean_algebra(a in proptest::collection::vec(any::<bool>(), 27),
                           b in proptest::collection::vec(any::<bool>(), 27),
                           c in proptest::collection::vec(any::<bool>(), 27)) {
            let (a, b, c) = (grid(&a), grid(&b), grid(&c));
            prop_assert_eq!(a.union(&b), b.union(&a));
            prop_assert_eq!(a.union(&b).union(&c), a.union(&b.union(&c)));
            prop_assert!(a.difference(&a).is_empty());
            prop_assert_eq!(a.intersection(&a), a.clone());
            prop_assert!(a.difference(&b).count() <= a.count());
        }

        #[test]
        fn json_round_trip(a in proptest::collection::vec(any::<bool>(), 27)) {
            let g = grid(&a);
            prop_assert_eq!(VoxelGrid::from_json(&g.to_json()).unwrap(), g);
        }
    }

    #[test]
    fn centers_span_the_cube() {
        let g = VoxelGrid::empty(64);
        assert!((g.center(0) + 1.0 - 1.0 / 64.0).abs() < 1e-15);
        assert!((g.center(63) - 1.0 + 1.0 / 64.0).abs() < 1e-15);
        assert_eq!(g.index(1, 0, 0), 64 * 64);
    }
}
