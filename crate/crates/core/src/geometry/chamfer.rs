//! Chamfer distance with an exact k-d tree nearest-neighbor search.

use super::sample::{Point3, PointCloud};
use super::GeometryError;

#[inline]
pub fn squared_distance(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Static 3-d tree over a point set, stored as an implicit balanced tree in
/// a permuted copy of the points.
pub struct KdTree {
    points: Vec<Point3>,
}

impl KdTree {
    pub fn build(points: &[Point3]) -> Self {
        let mut pts = points.to_vec();
        build_rec(&mut pts, 0);
        Self { points: pts }
    }

    /// Smallest squared distance from `q` to the set. The returned value is
    /// bitwise identical to a linear scan with [`squared_distance`].
    pub fn nearest_sq(&self, q: &Point3) -> f64 {
        let mut best = f64::INFINITY;
        nearest_rec(&self.points, 0, q, &mut best);
        best
    }
}

fn build_rec(pts: &mut [Point3], depth: usize) {
    if pts.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = pts.len() / 2;
    pts.select_nth_unstable_by(mid, |a, b| a[axis].total_cmp(&b[axis]));
    let (left, right) = pts.split_at_mut(mid);
    build_rec(left, depth + 1);
    build_rec(&mut right[1..], depth + 1);
}

fn nearest_rec(pts: &[Point3], depth: usize, q: &Point3, best: &mut f64) {
    if pts.is_empty() {
        return;
    }
    let mid = pts.len() / 2;
    let p = &pts[mid];
    let d = squared_distance(p, q);
    if d < *best {
        *best = d;
    }
    let axis = depth % 3;
    let diff = q[axis] - p[axis];
    let (near, far) = if diff < 0.0 {
        (&pts[..mid], &pts[mid + 1..])
    } else {
        (&pts[mid + 1..], &pts[..mid])
    };
    nearest_rec(near, depth + 1, q, best);
    if diff * diff <= *best {
        nearest_rec(far, depth + 1, q, best);
    }
}

/// Mean over `from` of the squared distance to the nearest point of `to`.
pub fn directed_mean_sq(from: &PointCloud, to: &KdTree) -> f64 {
    let sum: f64 = from.points.iter().map(|p| to.nearest_sq(p)).sum();
    sum / from.len() as f64
}

/// `mean_p min_q |p-q|^2 + mean_q min_p |q-p|^2`.
pub fn chamfer_distance(p: &PointCloud, q: &PointCloud) -> Result<f64, GeometryError> {
    if p.is_empty() || q.is_empty() {
        return Err(GeometryError::EmptyCloud);
    }
    let tp = KdTree::build(&p.points);
    let tq = KdTree::build(&q.points);
    Ok(directed_mean_sq(p, &tq) + directed_mean_sq(q, &tp))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_points() {
        let p = PointCloud::new(vec![[0.0, 0.0, 0.0]]);
        let q = PointCloud::new(vec![[1.0, 0.0, 0.0]]);
        assert_eq!(chamfer_distance(&p, &q).unwrap(), 2.0);
        assert_eq!(chamfer_distance(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn empty_cloud() {
        let p = PointCloud::new(vec![[0.0, 0.0, 0.0]]);
        assert_eq!(chamfer_distance(&p, &PointCloud::default()), Err(GeometryError::EmptyCloud));
    }

    #[test]
    fn duplicate_points_and_ties() {
        let pts = vec![[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [1.0, 1.0, 1.0]];
        let t = KdTree::build(&pts);
        assert_eq!(t.nearest_sq(&[0.5, 0.5, 0.5]), 0.75);
        assert_eq!(t.nearest_sq(&[1.0, 1.0, 1.0]), 0.0);
    }
}
