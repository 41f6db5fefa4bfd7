//! Random valid construction sequences with a line-heavy command mix.

use std::f64::consts::PI;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cad::{
    BooleanOp, CadCommand, CadSequence, ExtentType, ExtrudeParams, ParamFamily, SketchExtrudePair, DEFAULT_SEQ_LEN,
};
use crate::geometry::{check_validity, GeometryConfig};

/// Command mix and shape ranges of the generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Probability that a sequence contains lines.
    pub p_line: f64,
    /// Probability that a sequence contains arcs.
    pub p_arc: f64,
    /// Probability that a sequence with lines or arcs also contains circles
    /// (sequences with neither always use circles).
    pub p_circle: f64,
    pub max_pairs: usize,
    pub min_curves: usize,
    pub max_curves: usize,
    /// Relative weights of one-sided, symmetric and two-sided extrusions.
    pub extent_weights: [f64; 3],
    /// Probability that a pair after the first is a cut (otherwise join).
    pub p_cut: f64,
    /// Probability of an axis-aligned sketch plane.
    pub p_axis_aligned: f64,
    /// Probability that a line loop is one of the four- or six-line templates.
    pub p_template: f64,
    pub seq_len: usize,
    pub geometry: GeometryConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            p_line: 0.7838,
            p_arc: 0.1976,
            p_circle: 0.308,
            max_pairs: 3,
            min_curves: 3,
            max_curves: 8,
            extent_weights: [0.926, 0.09, 0.0171],
            p_cut: 0.2,
            p_axis_aligned: 0.85,
            p_template: 0.6,
            seq_len: DEFAULT_SEQ_LEN,
            geometry: GeometryConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Lines,
    Arcs,
    Circles,
}

fn sketch(v: f64) -> u8 {
    ParamFamily::SketchCoord.quantize(v)
}

/// Quantized polygon vertices, counter-clockwise, no repeated neighbors.
fn polygon(rng: &mut ChaCha8Rng, n: usize) -> Vec<(u8, u8)> {
    loop {
        let r: f64 = rng.random_range(0.45..0.9);
        let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        angles.sort_by(f64::total_cmp);
        let gaps_ok = (0..n).all(|i| {
            let next = if i + 1 == n { angles[0] + 2.0 * PI } else { angles[i + 1] };
            next - angles[i] > 0.35
        });
        if !gaps_ok {
            continue;
        }
        let pts: Vec<(u8, u8)> = angles
            .iter()
            .map(|a| {
                let rr = r * rng.random_range(0.75..1.0);
                (sketch(rr * a.cos()), sketch(rr * a.sin()))
            })
            .collect();
        if (0..n).all(|i| pts[i] != pts[(i + 1) % n]) {
            return pts;
        }
    }
}

/// Axis-aligned rectangle (four lines) or L-shape (six lines), counter-clockwise.
fn template(rng: &mut ChaCha8Rng, six: bool) -> Vec<(u8, u8)> {
    let w = rng.random_range(0.5..0.95);
    let h = rng.random_range(0.5..0.95);
    let (x0, y0, x1, y1) = (-w, -h, w, h);
    if !six {
        return vec![(sketch(x1), sketch(y0)), (sketch(x1), sketch(y1)), (sketch(x0), sketch(y1)), (sketch(x0), sketch(y0))];
    }
    let xm = rng.random_range(-0.3..0.4);
    let ym = rng.random_range(-0.3..0.4);
    vec![
        (sketch(x1), sketch(y0)),
        (sketch(x1), sketch(ym)),
        (sketch(xm), sketch(ym)),
        (sketch(xm), sketch(y1)),
        (sketch(x0), sketch(y1)),
        (sketch(x0), sketch(y0)),
    ]
}

fn line_loop(rng: &mut ChaCha8Rng, cfg: &SynthConfig, arcs: bool, force_arc: bool) -> Vec<CadCommand> {
    let lo = cfg.min_curves.max(3);
    let hi = cfg.max_curves.max(lo);
    let pts = if !arcs && rng.random_bool(cfg.p_template.clamp(0.0, 1.0)) {
        let six = rng.random_bool(0.35);
        template(rng, six)
    } else {
        let n = rng.random_range(lo..=hi);
        polygon(rng, n)
    };
    let n = pts.len();
    let forced = if force_arc { Some(rng.random_range(0..n)) } else { None };
    pts.iter()
        .enumerate()
        .map(|(i, &(x, y))| {
            if arcs && (forced == Some(i) || rng.random_bool(0.3)) {
                // counter-clockwise about a center inside the polygon bulges outward
                CadCommand::arc(x, y, rng.random_range(12..=56), true)
            } else {
                CadCommand::line(x, y)
            }
        })
        .collect()
}

fn arc_loop(rng: &mut ChaCha8Rng) -> Vec<CadCommand> {
    if rng.random_bool(0.5) {
        let r = rng.random_range(0.4..0.9);
        let a: f64 = rng.random_range(0.0..PI);
        let (p, q) = ((sketch(r * a.cos()), sketch(r * a.sin())), (sketch(-r * a.cos()), sketch(-r * a.sin())));
        let theta = 127;
        vec![CadCommand::arc(q.0, q.1, theta, true), CadCommand::arc(p.0, p.1, theta, true)]
    } else {
        let n = rng.random_range(3..=4);
        polygon(rng, n)
            .into_iter()
            .map(|(x, y)| CadCommand::arc(x, y, rng.random_range(12..=48), true))
            .collect()
    }
}

fn circle(cx: f64, cy: f64, r: f64) -> Vec<CadCommand> {
    vec![CadCommand::circle(sketch(cx), sketch(cy), ParamFamily::Radius.quantize(r))]
}

fn circle_loops(rng: &mut ChaCha8Rng) -> Vec<Vec<CadCommand>> {
    match rng.random_range(0..3) {
        0 => {
            let r = rng.random_range(0.3..0.9);
            vec![circle(0.0, 0.0, r)]
        }
        1 => {
            // ring
            let r1 = rng.random_range(0.5..0.95);
            let r2 = r1 * rng.random_range(0.3..0.75);
            let (cx, cy) = (rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
            vec![circle(cx, cy, r1), circle(cx, cy, r2)]
        }
        _ => {
            // two separate disks
            let r = rng.random_range(0.15..0.4);
            let d = rng.random_range(r + 0.1..0.9 - r);
            vec![circle(-d, 0.0, r), circle(d, 0.0, r)]
        }
    }
}

const AXIS_BINS: [u8; 4] = [0, 64, 128, 192];

fn spatial(v: f64) -> u8 {
    ParamFamily::Spatial.quantize(v)
}

fn extrusion(rng: &mut ChaCha8Rng, cfg: &SynthConfig, first: bool) -> CadCommand {
    let ang = |rng: &mut ChaCha8Rng| {
        if rng.random_bool(cfg.p_axis_aligned.clamp(0.0, 1.0)) {
            *AXIS_BINS.choose(rng).expect("non-empty")
        } else {
            rng.random_range(0..=255)
        }
    };
    let (alpha, beta, gamma) = (ang(rng), ang(rng), ang(rng));
    let w = cfg.extent_weights;
    let total: f64 = w.iter().sum();
    let u = rng.random_range(0.0..total.max(f64::MIN_POSITIVE));
    let extent = if u < w[0] {
        ExtentType::OneSided
    } else if u < w[0] + w[1] {
        ExtentType::Symmetric
    } else {
        ExtentType::TwoSided
    };
    let d1 = rng.random_range(20..=100);
    let d2 = if extent == ExtentType::TwoSided { rng.random_range(10..=60) } else { 0 };
    let op = if first || !rng.random_bool(cfg.p_cut.clamp(0.0, 1.0)) {
        BooleanOp::Join
    } else {
        BooleanOp::Cut
    };
    let o = |rng: &mut ChaCha8Rng| spatial(rng.random_range(-0.35..0.35));
    CadCommand::extrude(ExtrudeParams {
        alpha,
        beta,
        gamma,
        origin: [o(rng), o(rng), o(rng)],
        scale: spatial(rng.random_range(0.35..0.7)),
        d1,
        d2,
        op,
        extent,
    })
}

fn pair(rng: &mut ChaCha8Rng, cfg: &SynthConfig, kind: Kind, arcs: bool, force_arc: bool, first: bool) -> SketchExtrudePair {
    let loops = match kind {
        Kind::Lines => {
            let outer = line_loop(rng, cfg, arcs, force_arc);
            vec![outer]
        }
        Kind::Arcs => vec![arc_loop(rng)],
        Kind::Circles => circle_loops(rng),
    };
    SketchExtrudePair {
        loops,
        extrude: extrusion(rng, cfg, first),
    }
}

/// Which curve types a sequence will contain.
fn draw_flags(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> (bool, bool, bool) {
    let line = rng.random_bool(cfg.p_line.clamp(0.0, 1.0));
    let arc = rng.random_bool(cfg.p_arc.clamp(0.0, 1.0));
    let circle = if !line && !arc {
        true
    } else {
        rng.random_bool(cfg.p_circle.clamp(0.0, 1.0))
    };
    (line, arc, circle)
}

fn candidate(rng: &mut ChaCha8Rng, cfg: &SynthConfig, flags: (bool, bool, bool)) -> Option<CadSequence> {
    let (line, arc, circ) = flags;
    let mut required = Vec::new();
    if line {
        required.push(Kind::Lines);
    } else if arc {
        required.push(Kind::Arcs);
    }
    if circ {
        required.push(Kind::Circles);
    }
    required.shuffle(rng);
    let n_pairs = rng.random_range(1..=cfg.max_pairs.max(1)).max(required.len());
    let mut kinds = required.clone();
    while kinds.len() < n_pairs {
        kinds.push(*required.choose(rng).expect("at least one kind"));
    }
    let arc_pair = kinds.iter().position(|&k| k == Kind::Lines);
    let pairs: Vec<SketchExtrudePair> = kinds
        .iter()
        .enumerate()
        .map(|(i, &k)| pair(rng, cfg, k, arc, arc && arc_pair == Some(i), i == 0))
        .collect();
    let seq = CadSequence::from_pairs(&pairs, cfg.seq_len).ok()?;
    check_validity(&seq, &cfg.geometry).valid.then_some(seq)
}

/// One valid sequence. The curve-type flags are drawn first and the shape is
/// resampled until the sequence fits and realizes, so the flag frequencies
/// follow the configured probabilities whenever every combination fits in
/// `seq_len`.
pub fn synth_sequence(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> CadSequence {
    loop {
        let flags = draw_flags(rng, cfg);
        // flags that cannot fit a short sequence are redrawn
        for _ in 0..MAX_ATTEMPTS {
            if let Some(s) = candidate(rng, cfg, flags) {
                return s;
            }
        }
    }
}

const MAX_ATTEMPTS: usize = 200;

/// `count` sequences with ids `synth-00000`, ... from a seeded stream.
pub fn synth_dataset(count: usize, seed: u64, cfg: &SynthConfig) -> Vec<(String, CadSequence)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| (format!("synth-{i:05}"), synth_sequence(&mut rng, cfg)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cad::{emit_matrix, CommandType};

    #[test]
    fn sequences_are_valid_and_fit() {
        let cfg = SynthConfig {
            seq_len: 20,
            max_pairs: 2,
            max_curves: 6,
            ..Default::default()
        };
        for (_, s) in synth_dataset(40, 3, &cfg) {
            assert!(s.logical_len() < 20);
            assert!(check_validity(&s, &cfg.geometry).valid);
        }
    }

    #[test]
    fn deterministic() {
        let cfg = SynthConfig::default();
        let a: Vec<_> = synth_dataset(5, 9, &cfg).into_iter().map(|(_, s)| emit_matrix(&s)).collect();
        let b: Vec<_> = synth_dataset(5, 9, &cfg).into_iter().map(|(_, s)| emit_matrix(&s)).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn flags_drive_content() {
        let cfg = SynthConfig {
            p_line: 0.0,
            p_arc: 1.0,
            p_circle: 0.0,
            ..Default::default()
        };
        for (_, s) in synth_dataset(10, 1, &cfg) {
            assert!(s.contains(CommandType::Arc));
            assert!(!s.contains(CommandType::Line) && !s.contains(CommandType::Circle));
        }
    }

    fn to_sketch(v: u8) -> f64 {
        ParamFamily::SketchCoord.dequantize(v)
    }

    #[test]
    fn to_sketch_inverts_sketch_within_a_bin() {
        for v in [-0.9, -0.2, 0.0, 0.45] {
            assert!((to_sketch(sketch(v)) - v).abs() <= ParamFamily::SketchCoord.bin_width());
        }
    }
}
