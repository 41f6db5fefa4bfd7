//! Permutations that reorder commands without changing the geometry.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cad::{split_pairs, CadSequence, CommandType};

use super::MetricsError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pattern {
    /// One loop of four lines.
    P1,
    /// One loop of six lines.
    P2,
    /// Two single-circle loops.
    P3,
}

impl Pattern {
    pub const ALL: [Pattern; 3] = [Pattern::P1, Pattern::P2, Pattern::P3];

    fn matches(self, loops: &[Vec<crate::cad::CadCommand>]) -> bool {
        let lines = |n: usize| loops.len() == 1 && loops[0].len() == n && loops[0].iter().all(|c| c.ctype == CommandType::Line);
        match self {
            Pattern::P1 => lines(4),
            Pattern::P2 => lines(6),
            Pattern::P3 => {
                loops.len() == 2 && loops.iter().all(|l| l.len() == 1 && l[0].ctype == CommandType::Circle) && loops[0][0] != loops[1][0]
            }
        }
    }
}

impl std::str::FromStr for Pattern {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "P1" => Ok(Pattern::P1),
            "P2" => Ok(Pattern::P2),
            "P3" => Ok(Pattern::P3),
            _ => Err(MetricsError::UnknownPattern(s.to_string())),
        }
    }
}

/// Index of the first pair whose sketch is exactly `pattern`.
pub fn find_pattern(seq: &CadSequence, pattern: Pattern) -> Option<usize> {
    split_pairs(seq).ok()?.iter().position(|p| pattern.matches(&p.loops))
}

/// P1/P2 rotate the loop's lines by a shift drawn from `1..len`; P3 swaps the
/// two circles. The first matching pair is permuted.
pub fn permutation_probe(seq: &CadSequence, pattern: Pattern, rng: &mut impl Rng) -> Result<CadSequence, MetricsError> {
    let n = match pattern {
        Pattern::P1 => 4,
        Pattern::P2 => 6,
        Pattern::P3 => 2,
    };
    permute_with_shift(seq, pattern, rng.random_range(1..n))
}

/// Deterministic form of [`permutation_probe`]; for P3 any odd shift swaps.
pub fn permute_with_shift(seq: &CadSequence, pattern: Pattern, shift: usize) -> Result<CadSequence, MetricsError> {
    let mut pairs = split_pairs(seq).map_err(|_| MetricsError::PatternNotFound(pattern))?;
    let i = pairs
        .iter()
        .position(|p| pattern.matches(&p.loops))
        .ok_or(MetricsError::PatternNotFound(pattern))?;
    let loops = &mut pairs[i].loops;
    match pattern {
        Pattern::P1 | Pattern::P2 => {
            let n = loops[0].len();
            loops[0].rotate_left(shift % n);
        }
        Pattern::P3 => loops.rotate_left(shift % 2),
    }
    Ok(CadSequence::from_pairs(&pairs, seq.seq_len()).expect("reordering keeps the grammar"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cad::{BooleanOp, CadCommand, ExtentType, ExtrudeParams};
    use crate::geometry::{realize, GeometryConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ext() -> CadCommand {
        CadCommand::extrude(ExtrudeParams {
            alpha: 128,
            beta: 128,
            gamma: 128,
            origin: [128; 3],
            scale: 180,
            d1: 50,
            d2: 0,
            op: BooleanOp::Join,
            extent: ExtentType::OneSided,
        })
    }

    #[test]
    fn square_shift() {
        let l = [(200, 128), (200, 200), (128, 200), (128, 128)].map(|(x, y)| CadCommand::line(x, y));
        let mut cmds = vec![CadCommand::sol()];
        cmds.extend(l);
        cmds.push(ext());
        let seq = CadSequence::new(cmds, 60).unwrap();
        let shifted = permute_with_shift(&seq, Pattern::P1, 1).unwrap();
        assert_eq!(&shifted.commands()[1..5], &[l[1], l[2], l[3], l[0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let geo = GeometryConfig::default();
        let grid = realize(&seq, &geo).unwrap();
        for _ in 0..10 {
            let out = permutation_probe(&seq, Pattern::P1, &mut rng).unwrap();
            assert_ne!(out, seq);
            assert_eq!(realize(&out, &geo).unwrap(), grid);
        }
        assert_eq!(
            permutation_probe(&seq, Pattern::P2, &mut rng),
            Err(MetricsError::PatternNotFound(Pattern::P2))
        );
    }

    #[test]
    fn ring_swap() {
        let seq = CadSequence::new(
            vec![
                CadCommand::sol(),
                CadCommand::circle(128, 128, 90),
                CadCommand::sol(),
                CadCommand::circle(128, 128, 40),
                ext(),
            ],
            60,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = permutation_probe(&seq, Pattern::P3, &mut rng).unwrap();
        assert_eq!(out.commands()[1], seq.commands()[3]);
        assert_eq!(out.commands()[3], seq.commands()[1]);
        let geo = GeometryConfig::default();
        assert_eq!(realize(&seq, &geo).unwrap(), realize(&out, &geo).unwrap());
    }
}
