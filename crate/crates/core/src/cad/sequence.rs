use serde::{Deserialize, Serialize};

use super::command::{CadCommand, CommandType, N_PARAMS};
use super::CadError;

/// Padded sequence length used throughout training.
pub const DEFAULT_SEQ_LEN: usize = 60;

/// One matrix row: command index followed by 16 parameter slots.
pub type TokenRow = [i16; N_PARAMS + 1];

/// `N x 17` integer matrix, the persisted and trained form of a sequence.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenMatrix {
    rows: Vec<TokenRow>,
}

impl TokenMatrix {
    pub fn from_rows(rows: Vec<TokenRow>) -> Self {
        Self { rows }
    }

    /// Pads `rows` with EOS rows up to `n`. Rows beyond `n` are kept so that
    /// parsing reports the overflow instead of silently truncating.
    pub fn padded(mut rows: Vec<TokenRow>, n: usize) -> Self {
        while rows.len() < n {
            rows.push(CadCommand::eos().to_row());
        }
        Self { rows }
    }

    pub fn rows(&self) -> &[TokenRow] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Rows up to and including the first EOS.
    pub fn trimmed(&self) -> &[TokenRow] {
        let end = self
            .rows
            .iter()
            .position(|r| r[0] == CommandType::Eos as i16)
            .map_or(self.rows.len(), |i| i + 1);
        &self.rows[..end]
    }

    /// Index of the first EOS row, i.e. the logical length.
    pub fn first_eos(&self) -> Option<usize> {
        self.rows.iter().position(|r| r[0] == CommandType::Eos as i16)
    }
}

/// A grammatical construction sequence. Stores the logical (pre-EOS)
/// commands; EOS padding up to `seq_len` is implied.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CadSequence {
    commands: Vec<CadCommand>,
    seq_len: usize,
}

/// A run of loops (each opened by SOL) closed by one Extrude.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SketchExtrudePair {
    /// Curves of each loop, without the opening SOL.
    pub loops: Vec<Vec<CadCommand>>,
    pub extrude: CadCommand,
}

impl SketchExtrudePair {
    pub fn n_commands(&self) -> usize {
        self.loops.iter().map(|l| l.len() + 1).sum::<usize>() + 1
    }

    pub fn commands(&self) -> impl Iterator<Item = CadCommand> + '_ {
        self.loops
            .iter()
            .flat_map(|l| std::iter::once(CadCommand::sol()).chain(l.iter().copied()))
            .chain(std::iter::once(self.extrude))
    }
}

impl CadSequence {
    /// Builds a sequence from logical commands, checking the grammar.
    pub fn new(commands: Vec<CadCommand>, seq_len: usize) -> Result<Self, CadError> {
        if commands.len() >= seq_len {
            return Err(CadError::GrammarViolation(format!(
                "{} commands leave no room for EOS in a length-{} sequence",
                commands.len(),
                seq_len
            )));
        }
        for (i, c) in commands.iter().enumerate() {
            if c.ctype == CommandType::Eos {
                return Err(CadError::GrammarViolation(format!("EOS at row {i} inside the logical prefix")));
            }
            c.check_slots(i)?;
        }
        check_grammar(&commands)?;
        Ok(Self { commands, seq_len })
    }

    pub fn empty(seq_len: usize) -> Self {
        Self {
            commands: Vec::new(),
            seq_len,
        }
    }

    /// Reassembles a sequence from pairs (inverse of [`split_pairs`]).
    pub fn from_pairs(pairs: &[SketchExtrudePair], seq_len: usize) -> Result<Self, CadError> {
        Self::new(pairs.iter().flat_map(|p| p.commands()).collect(), seq_len)
    }

    pub fn commands(&self) -> &[CadCommand] {
        &self.commands
    }

    pub fn logical_len(&self) -> usize {
        self.commands.len()
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    /// Padded command at position `k`.
    pub fn command(&self, k: usize) -> CadCommand {
        self.commands.get(k).copied().unwrap_or_else(CadCommand::eos)
    }

    pub fn contains(&self, t: CommandType) -> bool {
        self.commands.iter().any(|c| c.ctype == t)
    }

    /// Replaces command `k` keeping the grammar valid only if the caller
    /// preserves the command type class; used by augmentation.
    pub(crate) fn map_commands(&self, mut f: impl FnMut(usize, &CadCommand) -> CadCommand) -> Self {
        Self {
            commands: self.commands.iter().enumerate().map(|(i, c)| f(i, c)).collect(),
            seq_len: self.seq_len,
        }
    }
}

fn check_grammar(commands: &[CadCommand]) -> Result<(), CadError> {
    #[derive(PartialEq)]
    enum State {
        Outside,
        OpenLoop,
        InLoop,
    }
    let mut state = State::Outside;
    for (i, c) in commands.iter().enumerate() {
        state = match (c.ctype, &state) {
            (CommandType::Sol, State::OpenLoop) => {
                return Err(CadError::GrammarViolation(format!("empty loop closed by SOL at row {i}")))
            }
            (CommandType::Sol, _) => State::OpenLoop,
            (t, State::Outside) if t.is_curve() => {
                return Err(CadError::GrammarViolation(format!("{t:?} at row {i} is not inside a loop (missing SOL)")))
            }
            (t, _) if t.is_curve() => State::InLoop,
            (CommandType::Extrude, State::InLoop) => State::Outside,
            (CommandType::Extrude, State::OpenLoop) => {
                return Err(CadError::GrammarViolation(format!("Extrude at row {i} follows an empty loop")))
            }
            (CommandType::Extrude, State::Outside) => {
                return Err(CadError::GrammarViolation(format!("Extrude at row {i} has no preceding loop")))
            }
            (t, _) => return Err(CadError::GrammarViolation(format!("unexpected {t:?} at row {i}"))),
        };
    }
    if state == State::OpenLoop {
        return Err(CadError::GrammarViolation("sequence ends with an empty loop".into()));
    }
    Ok(())
}

/// Parses and validates an `N x 17` matrix.
///
/// Trailing loops without an Extrude are accepted here and reported by
/// [`split_pairs`] and structural validation.
pub fn parse_sequence(matrix: &TokenMatrix) -> Result<CadSequence, CadError> {
    parse_rows(matrix.rows().iter().map(|r| r.map(i64::from)), matrix.n_rows())
}

/// Parses untyped rows (as read from JSON) padded to `seq_len`.
pub fn parse_rows<I>(rows: I, seq_len: usize) -> Result<CadSequence, CadError>
where
    I: IntoIterator<Item = [i64; N_PARAMS + 1]>,
{
    let mut commands = Vec::new();
    let mut n_rows = 0;
    let mut seen_eos = false;
    for (i, row) in rows.into_iter().enumerate() {
        n_rows += 1;
        let cmd = CadCommand::from_row(i, &row)?;
        if seen_eos {
            if cmd.ctype != CommandType::Eos {
                return Err(CadError::GrammarViolation(format!(
                    "{:?} at row {i} after EOS (padding must be EOS)",
                    cmd.ctype
                )));
            }
        } else if cmd.ctype == CommandType::Eos {
            seen_eos = true;
        } else {
            commands.push(cmd);
        }
    }
    if n_rows != seq_len {
        return Err(CadError::Shape {
            expected: seq_len,
            found: n_rows,
        });
    }
    if !seen_eos {
        return Err(CadError::GrammarViolation("missing EOS".into()));
    }
    check_grammar(&commands)?;
    Ok(CadSequence { commands, seq_len })
}

/// Emits the padded matrix of a sequence.
pub fn emit_matrix(seq: &CadSequence) -> TokenMatrix {
    TokenMatrix::padded(seq.commands.iter().map(CadCommand::to_row).collect(), seq.seq_len)
}

/// Partitions the logical prefix into sketch-extrude pairs.
pub fn split_pairs(seq: &CadSequence) -> Result<Vec<SketchExtrudePair>, CadError> {
    let mut pairs = Vec::new();
    let mut loops: Vec<Vec<CadCommand>> = Vec::new();
    for c in &seq.commands {
        match c.ctype {
            CommandType::Sol => loops.push(Vec::new()),
            CommandType::Extrude => pairs.push(SketchExtrudePair {
                loops: std::mem::take(&mut loops),
                extrude: *c,
            }),
            _ => loops
                .last_mut()
                .expect("grammar guarantees an open loop")
                .push(*c),
        }
    }
    if !loops.is_empty() {
        return Err(CadError::GrammarViolation("trailing loop has no Extrude".into()));
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cad::command::{BooleanOp, ExtentType, ExtrudeParams};

    fn ext() -> CadCommand {
        CadCommand::extrude(ExtrudeParams {
            alpha: 128,
            beta: 128,
            gamma: 128,
            origin: [128; 3],
            scale: 255,
            d1: 192,
            d2: 128,
            op: BooleanOp::Join,
            extent: ExtentType::OneSided,
        })
    }

    fn square() -> Vec<CadCommand> {
        vec![
            CadCommand::sol(),
            CadCommand::line(255, 128),
            CadCommand::line(255, 255),
            CadCommand::line(128, 255),
            CadCommand::line(128, 128),
            ext(),
        ]
    }

    fn matrix(cmds: &[CadCommand]) -> TokenMatrix {
        TokenMatrix::padded(cmds.iter().map(CadCommand::to_row).collect(), DEFAULT_SEQ_LEN)
    }

    #[test]
    fn minimal_square_parses() {
        let m = matrix(&square());
        let seq = parse_sequence(&m).unwrap();
        assert_eq!(seq.logical_len(), 6);
        assert_eq!(split_pairs(&seq).unwrap().len(), 1);
        assert_eq!(emit_matrix(&seq), m);
    }

    #[test]
    fn extrude_first_is_grammar_violation() {
        let m = matrix(&[ext()]);
        assert!(matches!(parse_sequence(&m), Err(CadError::GrammarViolation(_))));
    }

    #[test]
    fn line_with_theta_is_malformed() {
        let mut rows: Vec<TokenRow> = square().iter().map(CadCommand::to_row).collect();
        rows[1][1 + crate::cad::command::slot::THETA] = 40;
        let m = TokenMatrix::padded(rows, DEFAULT_SEQ_LEN);
        assert!(matches!(parse_sequence(&m), Err(CadError::MalformedRow { row: 1, .. })));
    }

    #[test]
    fn missing_eos_and_bad_padding() {
        let mut cmds = Vec::new();
        while cmds.len() + 6 <= DEFAULT_SEQ_LEN {
            cmds.extend(square());
        }
        // 60 rows with no EOS at all
        let rows: Vec<TokenRow> = cmds.iter().map(CadCommand::to_row).collect();
        assert_eq!(rows.len(), 60);
        assert!(matches!(
            parse_sequence(&TokenMatrix::from_rows(rows)),
            Err(CadError::GrammarViolation(_))
        ));
        let mut rows: Vec<TokenRow> = square().iter().map(CadCommand::to_row).collect();
        rows.push(CadCommand::eos().to_row());
        rows.push(CadCommand::sol().to_row());
        assert!(parse_sequence(&TokenMatrix::padded(rows, DEFAULT_SEQ_LEN)).is_err());
    }

    #[test]
    fn curve_without_sol() {
        let mut cmds = square();
        cmds.remove(0);
        assert!(parse_sequence(&matrix(&cmds)).is_err());
        let mut cmds = square();
        cmds.extend([CadCommand::line(1, 1), ext()]);
        assert!(parse_sequence(&matrix(&cmds)).is_err());
    }

    #[test]
    fn empty_sequence_is_sixty_eos_rows() {
        let seq = CadSequence::empty(DEFAULT_SEQ_LEN);
        let m = emit_matrix(&seq);
        assert_eq!(m.n_rows(), 60);
        assert!(m.rows().iter().all(|r| r[0] == CommandType::Eos as i16));
        assert_eq!(parse_sequence(&m).unwrap().logical_len(), 0);
    }

    #[test]
    fn longest_sequence_keeps_one_eos() {
        let mut cmds = Vec::new();
        while cmds.len() + 6 <= 59 {
            cmds.extend(square());
        }
        while cmds.len() < 59 {
            let at = cmds.len() - 1;
            cmds.insert(at, CadCommand::line(10, 10));
        }
        let seq = CadSequence::new(cmds.clone(), 60).unwrap();
        assert_eq!(emit_matrix(&seq).rows()[59][0], CommandType::Eos as i16);
        cmds.insert(1, CadCommand::line(20, 20));
        assert!(CadSequence::new(cmds, 60).is_err());
    }

    #[test]
    fn figure_two_sequence_has_two_pairs() {
        // SOL A L L L E SOL C SOL C E
        let cmds = vec![
            CadCommand::sol(),
            CadCommand::arc(200, 60, 64, true),
            CadCommand::line(200, 200),
            CadCommand::line(60, 200),
            CadCommand::line(60, 60),
            ext(),
            CadCommand::sol(),
            CadCommand::circle(128, 128, 100),
            CadCommand::sol(),
            CadCommand::circle(128, 128, 50),
            ext(),
        ];
        let seq = CadSequence::new(cmds.clone(), 60).unwrap();
        let pairs = split_pairs(&seq).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].loops.len(), 1);
        assert_eq!(pairs[0].loops[0].len(), 4);
        assert_eq!(pairs[1].loops.len(), 2);
        assert!(pairs[1].loops.iter().all(|l| l.len() == 1));
        let flat: Vec<_> = pairs.iter().flat_map(|p| p.commands()).collect();
        assert_eq!(flat, cmds);
    }

    #[test]
    fn concatenated_blocks_split_in_two() {
        let mut cmds = square();
        cmds.extend(square());
        let seq = CadSequence::new(cmds, 60).unwrap();
        let pairs = split_pairs(&seq).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(CadSequence::from_pairs(&pairs, 60).unwrap(), seq);
    }

    #[test]
    fn trailing_loop_without_extrude() {
        let mut cmds = square();
        cmds.extend([CadCommand::sol(), CadCommand::circle(128, 128, 30)]);
        let seq = parse_sequence(&matrix(&cmds)).unwrap();
        assert!(matches!(split_pairs(&seq), Err(CadError::GrammarViolation(_))));
    }
}
