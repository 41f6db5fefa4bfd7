use serde::{Deserialize, Serialize};

use super::command::{slot, CommandType, ExtentType};
use super::sequence::{split_pairs, CadSequence};
use crate::geometry::{discretize_loop, GeometryError, DEFAULT_ARC_SEGMENTS};

/// First rule a sequence breaks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidityRule {
    EmptySequence,
    TrailingLoop,
    MixedCircleLoop,
    DegenerateExtrusion,
    OpenLoop,
    DegenerateArc,
    /// Realization produced no solid (geometric half of validity).
    EmptySolid,
    OutOfExtent,
}

/// Pass/fail verdict, serialized as `{"valid": bool, "rule": string|null}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub valid: bool,
    pub rule: Option<ValidityRule>,
}

impl ValidityReport {
    pub fn pass() -> Self {
        Self { valid: true, rule: None }
    }

    pub fn fail(rule: ValidityRule) -> Self {
        Self {
            valid: false,
            rule: Some(rule),
        }
    }
}

/// Structural checks that need no voxelization: non-empty, every loop closed
/// by an Extrude, circle loops hold a single circle, non-degenerate extrude
/// distances, and every loop discretizes to a closed polyline.
pub fn validate_structure(seq: &CadSequence) -> ValidityReport {
    if seq.logical_len() == 0 {
        return ValidityReport::fail(ValidityRule::EmptySequence);
    }
    let pairs = match split_pairs(seq) {
        Ok(p) => p,
        Err(_) => return ValidityReport::fail(ValidityRule::TrailingLoop),
    };
    for pair in &pairs {
        for lp in &pair.loops {
            if lp.len() > 1 && lp.iter().any(|c| c.ctype == CommandType::Circle) {
                return ValidityReport::fail(ValidityRule::MixedCircleLoop);
            }
        }
        let p = &pair.extrude.params;
        let (d1, d2) = (p[slot::D1], p[slot::D2]);
        let degenerate = match ExtentType::from_code(p[slot::W]) {
            Some(ExtentType::Symmetric) => d1 <= 0,
            _ => d1 + d2 <= 0,
        };
        if degenerate {
            return ValidityReport::fail(ValidityRule::DegenerateExtrusion);
        }
        for lp in &pair.loops {
            match discretize_loop(lp, DEFAULT_ARC_SEGMENTS) {
                Ok(_) => {}
                Err(GeometryError::DegenerateArc) => return ValidityReport::fail(ValidityRule::DegenerateArc),
                Err(_) => return ValidityReport::fail(ValidityRule::OpenLoop),
            }
        }
    }
    ValidityReport::pass()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cad::command::{BooleanOp, CadCommand, ExtrudeParams};

    fn ext(d1: u8, d2: u8, extent: ExtentType) -> CadCommand {
        CadCommand::extrude(ExtrudeParams {
            alpha: 128,
            beta: 128,
            gamma: 128,
            origin: [128; 3],
            scale: 255,
            d1,
            d2,
            op: BooleanOp::Join,
            extent,
        })
    }

    fn square(e: CadCommand) -> CadSequence {
        CadSequence::new(
            vec![
                CadCommand::sol(),
                CadCommand::line(255, 128),
                CadCommand::line(255, 255),
                CadCommand::line(128, 255),
                CadCommand::line(128, 128),
                e,
            ],
            60,
        )
        .unwrap()
    }

    #[test]
    fn square_passes() {
        assert_eq!(validate_structure(&square(ext(100, 0, ExtentType::OneSided))), ValidityReport::pass());
    }

    #[test]
    fn zero_depth_fails() {
        let r = validate_structure(&square(ext(0, 0, ExtentType::OneSided)));
        assert_eq!(r, ValidityReport::fail(ValidityRule::DegenerateExtrusion));
        let r = validate_structure(&square(ext(0, 40, ExtentType::Symmetric)));
        assert_eq!(r.rule, Some(ValidityRule::DegenerateExtrusion));
        assert!(validate_structure(&square(ext(0, 40, ExtentType::TwoSided))).valid);
    }

    #[test]
    fn empty_fails() {
        assert_eq!(
            validate_structure(&CadSequence::empty(60)).rule,
            Some(ValidityRule::EmptySequence)
        );
    }

    #[test]
    fn collapsed_loop_is_open() {
        // Moving the second corner onto the first collapses an edge.
        let mut cmds = square(ext(100, 0, ExtentType::OneSided)).commands().to_vec();
        cmds[2] = CadCommand::line(255, 128);
        let seq = CadSequence::new(cmds, 60).unwrap();
        assert_eq!(validate_structure(&seq).rule, Some(ValidityRule::OpenLoop));
    }

    #[test]
    fn circle_mixed_with_lines() {
        let mut cmds = square(ext(100, 0, ExtentType::OneSided)).commands().to_vec();
        cmds.insert(2, CadCommand::circle(128, 128, 40));
        let seq = CadSequence::new(cmds, 60).unwrap();
        assert_eq!(validate_structure(&seq).rule, Some(ValidityRule::MixedCircleLoop));
    }

    #[test]
    fn report_json_shape() {
        let s = serde_json::to_string(&ValidityReport::fail(ValidityRule::OpenLoop)).unwrap();
        assert_eq!(s, r#"{"valid":false,"rule":"open_loop"}"#);
        let s = serde_json::to_string(&ValidityReport::pass()).unwrap();
        assert_eq!(s, r#"{"valid":true,"rule":null}"#);
    }
}
