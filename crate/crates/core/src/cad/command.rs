use serde::{Deserialize, Serialize};

use super::CadError;

/// Number of parameter slots carried by every command.
pub const N_PARAMS: usize = 16;
/// Quantization bins for continuous parameters.
pub const N_BINS: usize = 256;
/// Classifier classes per parameter slot: the unused sentinel plus 256 bins.
pub const N_PARAM_CLASSES: usize = N_BINS + 1;
/// Number of command types.
pub const N_COMMANDS: usize = 6;
/// Marker stored in slots a command does not use.
pub const UNUSED: i16 = -1;

/// Slot indices inside the 16-wide parameter vector.
pub mod slot {
    pub const X: usize = 0;
    pub const Y: usize = 1;
    pub const THETA: usize = 2;
    pub const CCW: usize = 3;
    pub const R: usize = 4;
    pub const ALPHA: usize = 5;
    pub const BETA: usize = 6;
    pub const GAMMA: usize = 7;
    pub const OX: usize = 8;
    pub const OY: usize = 9;
    pub const OZ: usize = 10;
    pub const S: usize = 11;
    pub const D1: usize = 12;
    pub const D2: usize = 13;
    pub const B: usize = 14;
    pub const W: usize = 15;

    pub const NAMES: [&str; 16] = [
        "x", "y", "theta", "c", "r", "alpha", "beta", "gamma", "o_x", "o_y", "o_z", "s", "delta1",
        "delta2", "b", "w",
    ];
}

/// Command tag. The discriminant is the value stored in the type column and
/// follows the vectorized layout of the public DeepCAD release so its files
/// load unchanged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum CommandType {
    Line = 0,
    Arc = 1,
    Circle = 2,
    Eos = 3,
    Sol = 4,
    Extrude = 5,
}

impl CommandType {
    pub const ALL: [CommandType; N_COMMANDS] = [
        CommandType::Line,
        CommandType::Arc,
        CommandType::Circle,
        CommandType::Eos,
        CommandType::Sol,
        CommandType::Extrude,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: i64) -> Option<Self> {
        usize::try_from(index)
            .ok()
            .and_then(|i| Self::ALL.get(i).copied())
    }

    pub fn is_curve(self) -> bool {
        matches!(self, CommandType::Line | CommandType::Arc | CommandType::Circle)
    }

    /// Which of the 16 slots carry a value for this command.
    pub fn used_mask(self) -> [bool; N_PARAMS] {
        let mut mask = [false; N_PARAMS];
        let used: &[usize] = match self {
            CommandType::Line => &[slot::X, slot::Y],
            CommandType::Arc => &[slot::X, slot::Y, slot::THETA, slot::CCW],
            CommandType::Circle => &[slot::X, slot::Y, slot::R],
            CommandType::Extrude => &[
                slot::ALPHA,
                slot::BETA,
                slot::GAMMA,
                slot::OX,
                slot::OY,
                slot::OZ,
                slot::S,
                slot::D1,
                slot::D2,
                slot::B,
                slot::W,
            ],
            CommandType::Sol | CommandType::Eos => &[],
        };
        for &s in used {
            mask[s] = true;
        }
        mask
    }

    pub fn n_used(self) -> usize {
        self.used_mask().iter().filter(|&&u| u).count()
    }

    pub fn short_name(self) -> &'static str {
        match self {
            CommandType::Line => "L",
            CommandType::Arc => "A",
            CommandType::Circle => "C",
            CommandType::Eos => "EOS",
            CommandType::Sol => "SOL",
            CommandType::Extrude => "E",
        }
    }
}

/// Largest admissible value of a used slot (inclusive).
pub fn slot_max(index: usize) -> i16 {
    match index {
        slot::CCW => 1,
        slot::B | slot::W => 2,
        _ => (N_BINS - 1) as i16,
    }
}

/// Extrusion sweep type `w`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExtentType {
    OneSided = 0,
    Symmetric = 1,
    TwoSided = 2,
}

impl ExtentType {
    pub fn from_code(code: i16) -> Option<Self> {
        match code {
            0 => Some(Self::OneSided),
            1 => Some(Self::Symmetric),
            2 => Some(Self::TwoSided),
            _ => None,
        }
    }
}

/// Boolean merge `b` of a new body with the accumulated solid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BooleanOp {
    Join = 0,
    Cut = 1,
    Intersect = 2,
}

impl BooleanOp {
    pub fn from_code(code: i16) -> Option<Self> {
        match code {
            0 => Some(Self::Join),
            1 => Some(Self::Cut),
            2 => Some(Self::Intersect),
            _ => None,
        }
    }
}

/// Quantized extrusion parameters, in slot order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ExtrudeParams {
    pub alpha: u8,
    pub beta: u8,
    pub gamma: u8,
    pub origin: [u8; 3],
    pub scale: u8,
    pub d1: u8,
    pub d2: u8,
    pub op: BooleanOp,
    pub extent: ExtentType,
}

/// One construction command with its 16-slot quantized parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CadCommand {
    pub ctype: CommandType,
    pub params: [i16; N_PARAMS],
}

impl CadCommand {
    fn blank(ctype: CommandType) -> Self {
        Self {
            ctype,
            params: [UNUSED; N_PARAMS],
        }
    }

    pub fn sol() -> Self {
        Self::blank(CommandType::Sol)
    }

    pub fn eos() -> Self {
        Self::blank(CommandType::Eos)
    }

    pub fn line(x: u8, y: u8) -> Self {
        let mut c = Self::blank(CommandType::Line);
        c.params[slot::X] = x.into();
        c.params[slot::Y] = y.into();
        c
    }

    pub fn arc(x: u8, y: u8, theta: u8, ccw: bool) -> Self {
        let mut c = Self::blank(CommandType::Arc);
        c.params[slot::X] = x.into();
        c.params[slot::Y] = y.into();
        c.params[slot::THETA] = theta.into();
        c.params[slot::CCW] = ccw as i16;
        c
    }

    pub fn circle(x: u8, y: u8, r: u8) -> Self {
        let mut c = Self::blank(CommandType::Circle);
        c.params[slot::X] = x.into();
        c.params[slot::Y] = y.into();
        c.params[slot::R] = r.into();
        c
    }

    pub fn extrude(p: ExtrudeParams) -> Self {
        let mut c = Self::blank(CommandType::Extrude);
        c.params[slot::ALPHA] = p.alpha.into();
        c.params[slot::BETA] = p.beta.into();
        c.params[slot::GAMMA] = p.gamma.into();
        c.params[slot::OX] = p.origin[0].into();
        c.params[slot::OY] = p.origin[1].into();
        c.params[slot::OZ] = p.origin[2].into();
        c.params[slot::S] = p.scale.into();
        c.params[slot::D1] = p.d1.into();
        c.params[slot::D2] = p.d2.into();
        c.params[slot::B] = p.op as i16;
        c.params[slot::W] = p.extent as i16;
        c
    }

    /// Typed view of an Extrude; `None` for other commands or malformed slots.
    pub fn extrude_params(&self) -> Option<ExtrudeParams> {
        if self.ctype != CommandType::Extrude {
            return None;
        }
        let p = &self.params;
        let u = |i: usize| u8::try_from(p[i]).ok();
        Some(ExtrudeParams {
            alpha: u(slot::ALPHA)?,
            beta: u(slot::BETA)?,
            gamma: u(slot::GAMMA)?,
            origin: [u(slot::OX)?, u(slot::OY)?, u(slot::OZ)?],
            scale: u(slot::S)?,
            d1: u(slot::D1)?,
            d2: u(slot::D2)?,
            op: BooleanOp::from_code(p[slot::B])?,
            extent: ExtentType::from_code(p[slot::W])?,
        })
    }

    /// End point (or center, for circles) of a curve command.
    pub fn point(&self) -> (i16, i16) {
        (self.params[slot::X], self.params[slot::Y])
    }

    /// 17-wide row: type column followed by the parameters.
    pub fn to_row(&self) -> [i16; N_PARAMS + 1] {
        let mut row = [0i16; N_PARAMS + 1];
        row[0] = self.ctype as i16;
        row[1..].copy_from_slice(&self.params);
        row
    }

    /// Checks value ranges and the used/unused slot pattern of one row.
    pub fn from_row(row_index: usize, row: &[i64]) -> Result<Self, CadError> {
        if row.len() != N_PARAMS + 1 {
            return Err(CadError::MalformedRow {
                row: row_index,
                reason: format!("expected {} columns, found {}", N_PARAMS + 1, row.len()),
            });
        }
        for (col, &v) in row.iter().enumerate() {
            if !(-1..=255).contains(&v) {
                return Err(CadError::OutOfRange {
                    row: row_index,
                    col,
                    value: v,
                });
            }
        }
        let ctype = CommandType::from_index(row[0]).ok_or(CadError::OutOfRange {
            row: row_index,
            col: 0,
            value: row[0],
        })?;
        let mut params = [UNUSED; N_PARAMS];
        for (p, &v) in params.iter_mut().zip(&row[1..]) {
            *p = v as i16;
        }
        let cmd = Self { ctype, params };
        cmd.check_slots(row_index)?;
        Ok(cmd)
    }

    pub(crate) fn check_slots(&self, row_index: usize) -> Result<(), CadError> {
        let mask = self.ctype.used_mask();
        for (i, (&used, &v)) in mask.iter().zip(&self.params).enumerate() {
            let bad = if used {
                !(0..=slot_max(i)).contains(&v)
            } else {
                v != UNUSED
            };
            if bad {
                let reason = if used {
                    format!(
                        "{:?} slot {} = {} outside 0..={}",
                        self.ctype,
                        slot::NAMES[i],
                        v,
                        slot_max(i)
                    )
                } else {
                    format!("{:?} does not use slot {} but it holds {}", self.ctype, slot::NAMES[i], v)
                };
                return Err(CadError::MalformedRow {
                    row: row_index,
                    reason,
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_tags_with_stable_indices() {
        for (i, t) in CommandType::ALL.iter().enumerate() {
            assert_eq!(t.index(), i);
            assert_eq!(CommandType::from_index(i as i64), Some(*t));
        }
        assert_eq!(CommandType::from_index(6), None);
        assert_eq!(CommandType::from_index(-1), None);
    }

    #[test]
    fn slot_patterns_match_grammar_table() {
        let used = |t: CommandType| -> Vec<usize> {
            t.used_mask()
                .iter()
                .enumerate()
                .filter(|(_, &u)| u)
                .map(|(i, _)| i)
                .collect()
        };
        assert_eq!(used(CommandType::Sol), Vec::<usize>::new());
        assert_eq!(used(CommandType::Eos), Vec::<usize>::new());
        assert_eq!(used(CommandType::Line), vec![0, 1]);
        assert_eq!(used(CommandType::Arc), vec![0, 1, 2, 3]);
        assert_eq!(used(CommandType::Circle), vec![0, 1, 4]);
        assert_eq!(used(CommandType::Extrude), (5..16).collect::<Vec<_>>());
    }

    #[test]
    fn every_type_rejects_a_stray_value_in_each_unused_slot() {
        for t in CommandType::ALL {
            let mask = t.used_mask();
            for s in 0..N_PARAMS {
                let mut row = vec![t as i64];
                row.extend(mask.iter().map(|&u| if u { 1 } else { -1 }));
                assert!(CadCommand::from_row(0, &row).is_ok(), "{t:?} baseline");
                row[1 + s] = if mask[s] { -1 } else { 40 };
                assert!(
                    matches!(CadCommand::from_row(0, &row), Err(CadError::MalformedRow { .. })),
                    "{t:?} slot {s}"
                );
            }
        }
    }

    #[test]
    fn flag_ranges() {
        let mut arc = CadCommand::arc(1, 2, 3, true).to_row().map(i64::from).to_vec();
        arc[1 + slot::CCW] = 2;
        assert!(CadCommand::from_row(0, &arc).is_err());
        let ext = CadCommand::extrude(ExtrudeParams {
            alpha: 128,
            beta: 128,
            gamma: 128,
            origin: [128; 3],
            scale: 200,
            d1: 160,
            d2: 0,
            op: BooleanOp::Intersect,
            extent: ExtentType::TwoSided,
        });
        let mut row = ext.to_row().map(i64::from).to_vec();
        assert!(CadCommand::from_row(0, &row).is_ok());
        row[1 + slot::W] = 3;
        assert!(CadCommand::from_row(0, &row).is_err());
        assert_eq!(ext.extrude_params().unwrap().op, BooleanOp::Intersect);
    }

    #[test]
    fn out_of_range_entry() {
        let row = [0i64, 256, 3, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1];
        assert!(matches!(
            CadCommand::from_row(7, &row),
            Err(CadError::OutOfRange { row: 7, col: 1, value: 256 })
        ));
    }
}
