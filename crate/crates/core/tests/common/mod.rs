#![allow(dead_code)]

use rand::Rng;

use cadseq::cad::{BooleanOp, CadCommand, CadSequence, ExtentType, ExtrudeParams, SketchExtrudePair};

fn curve(rng: &mut impl Rng, kind: u8) -> CadCommand {
    let (x, y) = (rng.random(), rng.random());
    match kind {
        0 => CadCommand::line(x, y),
        1 => CadCommand::arc(x, y, rng.random_range(1..=255), rng.random()),
        _ => CadCommand::circle(x, y, rng.random()),
    }
}

pub fn random_extrude(rng: &mut impl Rng) -> CadCommand {
    let ops = [BooleanOp::Join, BooleanOp::Cut, BooleanOp::Intersect];
    let extents = [ExtentType::OneSided, ExtentType::Symmetric, ExtentType::TwoSided];
    CadCommand::extrude(ExtrudeParams {
        alpha: rng.random(),
        beta: rng.random(),
        gamma: rng.random(),
        origin: [rng.random(), rng.random(), rng.random()],
        scale: rng.random(),
        d1: rng.random(),
        d2: rng.random(),
        op: ops[rng.random_range(0..3)],
        extent: extents[rng.random_range(0..3)],
    })
}

/// Grammar-valid sequence with random parameters (geometry unchecked).
pub fn random_sequence(rng: &mut impl Rng, seq_len: usize) -> CadSequence {
    loop {
        let mut pairs = Vec::new();
        for _ in 0..rng.random_range(1..=3) {
            let loops = (0..rng.random_range(1..=3))
                .map(|_| {
                    if rng.random_bool(0.3) {
                        vec![curve(rng, 2)]
                    } else {
                        (0..rng.random_range(1..=6)).map(|_| {
                                let kind = rng.random_range(0..2);
                                curve(rng, kind)
                            })
                            .collect()
                    }
                })
                .collect();
            pairs.push(SketchExtrudePair {
                loops,
                extrude: random_extrude(rng),
            });
        }
        if let Ok(s) = CadSequence::from_pairs(&pairs, seq_len) {
            return s;
        }
    }
}
