//! Extrusion of sketch profiles into voxel bodies and the boolean fold that
//! realizes a whole sequence.

use crate::cad::command::{BooleanOp, CadCommand, ExtentType};
use crate::cad::{split_pairs, CadSequence, ParamFamily, SketchExtrudePair};

use super::sketch::{discretize_loop, LoopPolyline, Point2};
use super::voxel::VoxelGrid;
use super::{GeometryConfig, GeometryError};

/// Dequantized extrusion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtrudeSpec {
    /// Plane orientation; the sketch frame is the columns of
    /// `Rz(alpha) * Ry(beta) * Rx(gamma)`.
    pub angles: [f64; 3],
    pub origin: [f64; 3],
    pub scale: f64,
    pub d1: f64,
    pub d2: f64,
    pub extent: ExtentType,
    pub op: BooleanOp,
}

impl ExtrudeSpec {
    pub fn from_command(cmd: &CadCommand) -> Option<Self> {
        let p = cmd.extrude_params()?;
        let orient = |b: u8| ParamFamily::Orientation.dequantize(b);
        let spatial = |b: u8| ParamFamily::Spatial.dequantize(b);
        Some(Self {
            angles: [orient(p.alpha), orient(p.beta), orient(p.gamma)],
            origin: p.origin.map(spatial),
            scale: spatial(p.scale),
            d1: ParamFamily::Depth.dequantize(p.d1),
            d2: ParamFamily::Depth.dequantize(p.d2),
            extent: p.extent,
            op: p.op,
        })
    }

    /// Sketch x axis, y axis and plane normal in world coordinates.
    pub fn frame(&self) -> [[f64; 3]; 3] {
        let [a, b, g] = self.angles;
        let (sa, ca) = a.sin_cos();
        let (sb, cb) = b.sin_cos();
        let (sg, cg) = g.sin_cos();
        // columns of Rz(a) Ry(b) Rx(g)
        let e1 = [ca * cb, sa * cb, -sb];
        let e2 = [ca * sb * sg - sa * cg, sa * sb * sg + ca * cg, cb * sg];
        let e3 = [ca * sb * cg + sa * sg, sa * sb * cg - ca * sg, cb * cg];
        [e1, e2, e3]
    }

    /// Signed range swept along the normal.
    pub fn depth_interval(&self) -> (f64, f64) {
        let (a, b) = match self.extent {
            ExtentType::OneSided => (0.0, self.d1),
            ExtentType::Symmetric => (-self.d1.abs() / 2.0, self.d1.abs() / 2.0),
            ExtentType::TwoSided => (-self.d2, self.d1),
        };
        (a.min(b), a.max(b))
    }
}

struct Edge {
    a: Point2,
    b: Point2,
}

fn inside_even_odd(edges: &[Edge], u: f64, v: f64) -> bool {
    let mut inside = false;
    for e in edges {
        if (e.a.y > v) != (e.b.y > v) {
            let x = e.a.x + (v - e.a.y) * (e.b.x - e.a.x) / (e.b.y - e.a.y);
            if u < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Rasterizes the solid swept by `profile` (even-odd fill over all loops).
/// A voxel is occupied when its center lies inside the solid.
pub fn rasterize_body(
    profile: &[LoopPolyline],
    spec: &ExtrudeSpec,
    resolution: usize,
) -> Result<VoxelGrid, GeometryError> {
    let mut grid = VoxelGrid::empty(resolution);
    if profile.is_empty() || spec.scale.abs() < 1e-12 {
        return Err(GeometryError::EmptySolid);
    }
    let [e1, e2, e3] = spec.frame();
    let (t0, t1) = spec.depth_interval();
    let edges: Vec<Edge> = profile
        .iter()
        .flat_map(|l| l.edges().map(|(a, b)| Edge { a, b }))
        .collect();

    // world-space bounds of the body
    let (mut ulo, mut vlo, mut uhi, mut vhi) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for l in profile {
        let (lo, hi) = l.bounds();
        ulo = ulo.min(lo.x);
        vlo = vlo.min(lo.y);
        uhi = uhi.max(hi.x);
        vhi = vhi.max(hi.y);
    }
    let s = spec.scale;
    let mut wlo = [f64::INFINITY; 3];
    let mut whi = [f64::NEG_INFINITY; 3];
    for u in [ulo, uhi] {
        for v in [vlo, vhi] {
            for t in [t0, t1] {
                for d in 0..3 {
                    let w = spec.origin[d] + s * (u * e1[d] + v * e2[d]) + t * e3[d];
                    wlo[d] = wlo[d].min(w);
                    whi[d] = whi[d].max(w);
                }
            }
        }
    }
    if (0..3).any(|d| whi[d] < -1.0 || wlo[d] > 1.0) {
        return Err(GeometryError::OutOfExtent);
    }
    let r = resolution;
    let pitch = grid.pitch();
    let range = |d: usize| {
        let lo = (((wlo[d] + 1.0) / pitch).floor() - 1.0).max(0.0) as usize;
        let hi = (((whi[d] + 1.0) / pitch).ceil() + 1.0).min(r as f64) as usize;
        lo..hi.max(lo)
    };
    let eps = 1e-12;
    for x in range(0) {
        let cx = grid.center(x) - spec.origin[0];
        for y in range(1) {
            let cy = grid.center(y) - spec.origin[1];
            for z in range(2) {
                let cz = grid.center(z) - spec.origin[2];
                let t = cx * e3[0] + cy * e3[1] + cz * e3[2];
                if t < t0 - eps || t > t1 + eps {
                    continue;
                }
                let u = (cx * e1[0] + cy * e1[1] + cz * e1[2]) / s;
                let v = (cx * e2[0] + cy * e2[1] + cz * e2[2]) / s;
                if inside_even_odd(&edges, u, v) {
                    grid.set(x, y, z, true);
                }
            }
        }
    }
    if grid.is_empty() {
        return Err(GeometryError::EmptySolid);
    }
    Ok(grid)
}

/// Boolean merge of `body` into `acc`.
pub fn merge(acc: &VoxelGrid, body: &VoxelGrid, op: BooleanOp) -> VoxelGrid {
    match op {
        BooleanOp::Join => acc.union(body),
        BooleanOp::Cut => acc.difference(body),
        BooleanOp::Intersect => acc.intersection(body),
    }
}

/// Extrudes one pair and merges it into `grid`.
pub fn extrude_pair(
    pair: &SketchExtrudePair,
    grid: &VoxelGrid,
    cfg: &GeometryConfig,
) -> Result<VoxelGrid, GeometryError> {
    let profile = pair
        .loops
        .iter()
        .map(|l| discretize_loop(l, cfg.arc_segments))
        .collect::<Result<Vec<_>, _>>()?;
    let spec = ExtrudeSpec::from_command(&pair.extrude).ok_or(GeometryError::NotACurve(pair.extrude.ctype))?;
    let body = rasterize_body(&profile, &spec, grid.resolution())?;
    Ok(merge(grid, &body, spec.op))
}

/// Folds every pair of `seq` into an initially empty grid. A final empty
/// solid is an error.
pub fn realize(seq: &CadSequence, cfg: &GeometryConfig) -> Result<VoxelGrid, GeometryError> {
    let pairs = split_pairs(seq).map_err(|_| GeometryError::TrailingLoop)?;
    if pairs.is_empty() {
        return Err(GeometryError::EmptySolid);
    }
    let mut grid = VoxelGrid::empty(cfg.resolution);
    for pair in &pairs {
        grid = extrude_pair(pair, &grid, cfg)?;
    }
    if grid.is_empty() {
        return Err(GeometryError::EmptySolid);
    }
    Ok(grid)
}
