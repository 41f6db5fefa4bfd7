//! Sketch loops: dequantized curves and their closed polylines.

use std::f64::consts::PI;

use crate::cad::command::{slot, CadCommand, CommandType};
use crate::cad::ParamFamily;

use super::GeometryError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, o: Point2) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }
}

/// Real-valued sketch curve. Lines and arcs store only their end point; the
/// start is the previous curve's end (the first curve starts at the last
/// curve's end).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Curve {
    Line { end: Point2 },
    Arc { end: Point2, sweep: f64, ccw: bool },
    Circle { center: Point2, radius: f64 },
}

impl Curve {
    pub fn from_command(cmd: &CadCommand) -> Option<Curve> {
        let coord = |s: usize| ParamFamily::SketchCoord.dequantize(cmd.params[s] as u8);
        let p = || Point2::new(coord(slot::X), coord(slot::Y));
        match cmd.ctype {
            CommandType::Line => Some(Curve::Line { end: p() }),
            CommandType::Arc => Some(Curve::Arc {
                end: p(),
                sweep: ParamFamily::Sweep.dequantize(cmd.params[slot::THETA] as u8),
                ccw: cmd.params[slot::CCW] == 1,
            }),
            CommandType::Circle => Some(Curve::Circle {
                center: p(),
                radius: ParamFamily::Radius.dequantize(cmd.params[slot::R] as u8),
            }),
            _ => None,
        }
    }
}

/// Closed polyline; the last point connects back to the first.
#[derive(Clone, Debug, PartialEq)]
pub struct LoopPolyline {
    pub points: Vec<Point2>,
}

impl LoopPolyline {
    /// Shoelace signed area; positive for counter-clockwise loops.
    pub fn signed_area(&self) -> f64 {
        let n = self.points.len();
        (0..n)
            .map(|i| {
                let (a, b) = (self.points[i], self.points[(i + 1) % n]);
                a.x * b.y - b.x * a.y
            })
            .sum::<f64>()
            / 2.0
    }

    pub fn orientation(&self) -> f64 {
        self.signed_area().signum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.points.len();
        (0..n).map(move |i| (self.points[i], self.points[(i + 1) % n]))
    }

    pub fn bounds(&self) -> (Point2, Point2) {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.points {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }
}

/// Discretizes the curves of one loop (the span after its SOL).
pub fn discretize_loop(curves: &[CadCommand], arc_segments: usize) -> Result<LoopPolyline, GeometryError> {
    let mut real = Vec::with_capacity(curves.len());
    for c in curves {
        if c.ctype == CommandType::Arc && c.params[slot::THETA] <= 0 {
            // bin 0 dequantizes to half a step, below one quantization step
            return Err(GeometryError::DegenerateArc);
        }
        real.push(Curve::from_command(c).ok_or(GeometryError::NotACurve(c.ctype))?);
    }
    discretize_curves(&real, arc_segments, ParamFamily::SketchCoord.bin_width() / 2.0)
}

/// Discretizes real-valued curves. Two chained endpoints closer than
/// `closure_tol` collapse the loop and fail with `OpenLoop`.
pub fn discretize_curves(
    curves: &[Curve],
    arc_segments: usize,
    closure_tol: f64,
) -> Result<LoopPolyline, GeometryError> {
    let arc_segments = arc_segments.max(1);
    match curves {
        [] => Err(GeometryError::OpenLoop),
        [Curve::Circle { center, radius }] => {
            if *radius <= 0.0 {
                return Err(GeometryError::OpenLoop);
            }
            let m = arc_segments * 4;
            let points = (0..m)
                .map(|i| {
                    let a = 2.0 * PI * i as f64 / m as f64;
                    Point2::new(center.x + radius * a.cos(), center.y + radius * a.sin())
                })
                .collect();
            Ok(LoopPolyline { points })
        }
        _ if curves.iter().any(|c| matches!(c, Curve::Circle { .. })) => Err(GeometryError::MixedCircleLoop),
        _ => {
            let end = |c: &Curve| match *c {
                Curve::Line { end } | Curve::Arc { end, .. } => end,
                Curve::Circle { center, .. } => center,
            };
            let mut points = Vec::new();
            let mut start = end(curves.last().expect("non-empty"));
            for c in curves {
                let stop = end(c);
                if start.dist(stop) < closure_tol {
                    return Err(GeometryError::OpenLoop);
                }
                points.push(start);
                if let Curve::Arc { sweep, ccw, .. } = *c {
                    if sweep <= 0.0 {
                        return Err(GeometryError::DegenerateArc);
                    }
                    points.extend(arc_interior(start, stop, sweep, ccw, arc_segments));
                }
                start = stop;
            }
            if points.len() < 3 {
                return Err(GeometryError::OpenLoop);
            }
            Ok(LoopPolyline { points })
        }
    }
}

/// Center of the arc from `s` to `e` sweeping `sweep` radians,
/// counter-clockwise about the center when `ccw`.
pub fn arc_center(s: Point2, e: Point2, sweep: f64, ccw: bool) -> Point2 {
    let (dx, dy) = (e.x - s.x, e.y - s.y);
    let chord = dx.hypot(dy);
    // left normal of the chord direction
    let (nx, ny) = (-dy / chord, dx / chord);
    let h = chord / 2.0 / (sweep / 2.0).tan();
    let sign = if ccw { 1.0 } else { -1.0 };
    Point2::new((s.x + e.x) / 2.0 + sign * h * nx, (s.y + e.y) / 2.0 + sign * h * ny)
}

/// Interior vertices of an arc split into `segments` equal pieces.
fn arc_interior(s: Point2, e: Point2, sweep: f64, ccw: bool, segments: usize) -> impl Iterator<Item = Point2> {
    let c = arc_center(s, e, sweep, ccw);
    let r = c.dist(s);
    let a0 = (s.y - c.y).atan2(s.x - c.x);
    let dir = if ccw { 1.0 } else { -1.0 };
    (1..segments).map(move |j| {
        let a = a0 + dir * sweep * j as f64 / segments as f64;
        Point2::new(c.x + r * a.cos(), c.y + r * a.sin())
    })
}
