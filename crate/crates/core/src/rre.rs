//! Random Replace and Extrude augmentation: line to arc replacement,
//! extrusion randomization, and sketch-extrude pair swapping between
//! sequences.
//!
//! Every operation returns a sequence that passes [`check_validity`]. A draw
//! whose result fails realization (a randomized cut that removes the whole
//! solid, say) is discarded and the input is returned for that step.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cad::{slot, split_pairs, CadCommand, CadSequence, CommandType};
use crate::geometry::{check_validity, GeometryConfig};

#[derive(Debug, Error, PartialEq)]
pub enum RreError {
    #[error("{name} = {value} is not a probability")]
    Probability { name: &'static str, value: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RreConfig {
    pub p_line: f64,
    pub p_ext: f64,
    pub p_swap: f64,
    pub seed: u64,
    /// Used for the realization check; taken from the run config.
    #[serde(skip)]
    pub geometry: GeometryConfig,
}

impl Default for RreConfig {
    fn default() -> Self {
        Self {
            p_line: 0.2,
            p_ext: 0.3,
            p_swap: 0.5,
            seed: 0,
            geometry: GeometryConfig::default(),
        }
    }
}

impl RreConfig {
    pub fn check(&self) -> Result<(), RreError> {
        for (name, value) in [("p_line", self.p_line), ("p_ext", self.p_ext), ("p_swap", self.p_swap)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(RreError::Probability { name, value });
            }
        }
        Ok(())
    }
}

fn guarded(input: &CadSequence, out: CadSequence, cfg: &RreConfig) -> CadSequence {
    if out == *input || check_validity(&out, &cfg.geometry).valid {
        out
    } else {
        input.clone()
    }
}

/// Replaces each Line with probability `p_line` by an Arc ending at the same
/// point, with sweep bin uniform in 1..=255 and a random direction flag.
pub fn replace_lines(seq: &CadSequence, cfg: &RreConfig, rng: &mut impl Rng) -> CadSequence {
    let out = seq.map_commands(|_, c| {
        if c.ctype == CommandType::Line && rng.random_bool(cfg.p_line) {
            let theta = rng.random_range(1..=255u8);
            let ccw = rng.random_bool(0.5);
            CadCommand::arc(c.params[slot::X] as u8, c.params[slot::Y] as u8, theta, ccw)
        } else {
            *c
        }
    });
    guarded(seq, out, cfg)
}

/// With probability `p_ext` per Extrude, redraws the extent type and both
/// depths. Depth draws that are degenerate for the drawn type are redrawn.
pub fn randomize_extrusions(seq: &CadSequence, cfg: &RreConfig, rng: &mut impl Rng) -> CadSequence {
    let out = seq.map_commands(|_, c| {
        if c.ctype != CommandType::Extrude || !rng.random_bool(cfg.p_ext) {
            return *c;
        }
        let w = rng.random_range(0..3i16);
        let (d1, d2) = loop {
            let d1 = rng.random_range(0..=255i16);
            let d2 = rng.random_range(0..=255i16);
            let degenerate = if w == 1 { d1 == 0 } else { d1 + d2 == 0 };
            if !degenerate {
                break (d1, d2);
            }
        };
        let mut c = *c;
        c.params[slot::W] = w;
        c.params[slot::D1] = d1;
        c.params[slot::D2] = d2;
        c
    });
    guarded(seq, out, cfg)
}

/// With probability `p_swap`, exchanges one uniformly chosen pair of `a` with
/// one of `b`. The swap is abandoned when a result would not fit its padded
/// length or would not realize.
pub fn swap_pairs(
    a: &CadSequence,
    b: &CadSequence,
    cfg: &RreConfig,
    rng: &mut impl Rng,
) -> (CadSequence, CadSequence) {
    let unchanged = || (a.clone(), b.clone());
    if !rng.random_bool(cfg.p_swap) {
        return unchanged();
    }
    let (Ok(mut pa), Ok(mut pb)) = (split_pairs(a), split_pairs(b)) else {
        return unchanged();
    };
    if pa.is_empty() || pb.is_empty() {
        return unchanged();
    }
    let i = rng.random_range(0..pa.len());
    let j = rng.random_range(0..pb.len());
    std::mem::swap(&mut pa[i], &mut pb[j]);
    let (Ok(na), Ok(nb)) = (
        CadSequence::from_pairs(&pa, a.seq_len()),
        CadSequence::from_pairs(&pb, b.seq_len()),
    ) else {
        return unchanged();
    };
    if check_validity(&na, &cfg.geometry).valid && check_validity(&nb, &cfg.geometry).valid {
        (na, nb)
    } else {
        unchanged()
    }
}

/// Applies replace, randomize and swap to every element; the swap partner is
/// drawn uniformly from the other elements. Element `k` uses its own stream
/// derived from one draw of `rng`, so the result does not depend on
/// processing order.
pub fn augment_batch(batch: &[CadSequence], cfg: &RreConfig, rng: &mut impl RngCore) -> Vec<CadSequence> {
    let base = rng.next_u64();
    batch
        .iter()
        .enumerate()
        .map(|(k, seq)| {
            let mut r = ChaCha8Rng::seed_from_u64(base);
            r.set_stream(k as u64);
            augment_one(batch, k, seq, cfg, &mut r)
        })
        .collect()
}

fn augment_one(batch: &[CadSequence], k: usize, seq: &CadSequence, cfg: &RreConfig, rng: &mut ChaCha8Rng) -> CadSequence {
    let s = replace_lines(seq, cfg, rng);
    let s = randomize_extrusions(&s, cfg, rng);
    if batch.len() < 2 {
        return s;
    }
    let mut partner = rng.random_range(0..batch.len() - 1);
    if partner >= k {
        partner += 1;
    }
    swap_pairs(&s, &batch[partner], cfg, rng).0
}

/// Augments a whole dataset once with the seed from `cfg`.
pub fn augment_dataset(records: &[(String, CadSequence)], cfg: &RreConfig) -> Vec<(String, CadSequence)> {
    let seqs: Vec<CadSequence> = records.iter().map(|(_, s)| s.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let out = augment_batch(&seqs, cfg, &mut rng);
    records.iter().map(|(id, _)| id.clone()).zip(out).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cad::{BooleanOp, ExtentType, ExtrudeParams};

    fn ext(d1: u8) -> CadCommand {
        CadCommand::extrude(ExtrudeParams {
            alpha: 128,
            beta: 128,
            gamma: 128,
            origin: [128; 3],
            scale: 160,
            d1,
            d2: 0,
            op: BooleanOp::Join,
            extent: ExtentType::OneSided,
        })
    }

    fn square() -> CadSequence {
        CadSequence::new(
            vec![
                CadCommand::sol(),
                CadCommand::line(255, 128),
                CadCommand::line(255, 255),
                CadCommand::line(128, 255),
                CadCommand::line(128, 128),
                ext(60),
            ],
            60,
        )
        .unwrap()
    }

    fn disk(d1: u8) -> CadSequence {
        CadSequence::new(vec![CadCommand::sol(), CadCommand::circle(128, 128, 60), ext(d1)], 60).unwrap()
    }

    #[test]
    fn all_lines_to_arcs() {
        let cfg = RreConfig {
            p_line: 1.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = square();
        let out = replace_lines(&s, &cfg, &mut rng);
        let arcs = out.commands().iter().filter(|c| c.ctype == CommandType::Arc).count();
        assert_eq!(arcs, 4);
        for (a, b) in s.commands().iter().zip(out.commands()) {
            assert_eq!(a.point(), b.point());
        }
        assert!(crate::cad::validate_structure(&out).valid);
    }

    #[test]
    fn zero_probabilities_are_identity() {
        let cfg = RreConfig {
            p_line: 0.0,
            p_ext: 0.0,
            p_swap: 0.0,
            ..Default::default()
        };
        let batch = vec![square(), disk(40), disk(90)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(augment_batch(&batch, &cfg, &mut rng), batch);
    }

    #[test]
    fn no_lines_unchanged() {
        let cfg = RreConfig {
            p_line: 1.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(replace_lines(&disk(40), &cfg, &mut rng), disk(40));
    }

    #[test]
    fn randomized_depths_not_degenerate() {
        let cfg = RreConfig {
            p_ext: 1.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut changed = 0;
        for _ in 0..200 {
            let out = randomize_extrusions(&square(), &cfg, &mut rng);
            assert!(crate::cad::validate_structure(&out).valid);
            changed += usize::from(out != square());
        }
        assert!(changed > 150);
    }

    #[test]
    fn single_pair_swap_exchanges_bodies() {
        let cfg = RreConfig {
            p_swap: 1.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (a, b) = swap_pairs(&square(), &disk(40), &cfg, &mut rng);
        assert_eq!(a, disk(40));
        assert_eq!(b, square());
    }

    #[test]
    fn length_guard() {
        let cfg = RreConfig {
            p_swap: 1.0,
            ..Default::default()
        };
        let short = CadSequence::new(square().commands().to_vec(), 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // a 10-command pair cannot fit a sequence padded to 8
        let mut big = vec![CadCommand::sol()];
        for k in 0..8u8 {
            let t = f64::from(k) * std::f64::consts::TAU / 8.0;
            big.push(CadCommand::line((128.0 + 60.0 * t.cos()) as u8, (128.0 + 60.0 * t.sin()) as u8));
        }
        big.push(ext(40));
        let big = CadSequence::new(big, 60).unwrap();
        let (a, b) = swap_pairs(&short, &big, &cfg, &mut rng);
        assert_eq!((a, b), (short, big));
    }

    #[test]
    fn bad_probability() {
        let cfg = RreConfig {
            p_swap: 1.5,
            ..Default::default()
        };
        assert!(matches!(cfg.check(), Err(RreError::Probability { name: "p_swap", .. })));
    }
}
