//! JSON dataset file: `[{"id": "...", "vec": [[int; 17], ...]}, ...]`.
//! Stored rows stop at the logical length; loading pads with EOS rows.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::command::{slot, CadCommand, CommandType, N_PARAMS};
use super::sequence::{parse_rows, CadSequence};
use super::CadError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub vec: Vec<Vec<i64>>,
}

impl DatasetRecord {
    pub fn from_sequence(id: impl Into<String>, seq: &CadSequence) -> Self {
        Self {
            id: id.into(),
            vec: seq
                .commands()
                .iter()
                .map(|c| c.to_row().iter().map(|&v| i64::from(v)).collect())
                .collect(),
        }
    }

    pub fn to_sequence(&self, seq_len: usize) -> Result<CadSequence, CadError> {
        if self.vec.len() > seq_len {
            return Err(CadError::Shape {
                expected: seq_len,
                found: self.vec.len(),
            });
        }
        let mut rows = Vec::with_capacity(seq_len);
        for (i, r) in self.vec.iter().enumerate() {
            let row: [i64; N_PARAMS + 1] = r.as_slice().try_into().map_err(|_| CadError::MalformedRow {
                row: i,
                reason: format!("expected {} columns, found {}", N_PARAMS + 1, r.len()),
            })?;
            rows.push(row);
        }
        let eos = CadCommand::eos().to_row().map(i64::from);
        rows.resize(seq_len, eos);
        parse_rows(rows, seq_len)
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed dataset JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("record {id}: {source}")]
    Record {
        id: String,
        #[source]
        source: CadError,
    },
    #[error("dataset is empty")]
    Empty,
}

pub fn parse_dataset(text: &str, seq_len: usize) -> Result<Vec<(String, CadSequence)>, DatasetError> {
    let records: Vec<DatasetRecord> = serde_json::from_str(text)?;
    if records.is_empty() {
        return Err(DatasetError::Empty);
    }
    records
        .into_iter()
        .map(|r| match r.to_sequence(seq_len) {
            Ok(s) => Ok((r.id, s)),
            Err(source) => Err(DatasetError::Record { id: r.id, source }),
        })
        .collect()
}

pub fn load_dataset(path: &Path, seq_len: usize) -> Result<Vec<(String, CadSequence)>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&text, seq_len)
}

/// One record per line so diffs and `head` stay readable.
pub fn dataset_to_string(records: &[(String, CadSequence)]) -> String {
    let mut out = String::from("[\n");
    for (i, (id, seq)) in records.iter().enumerate() {
        let rec = DatasetRecord::from_sequence(id.clone(), seq);
        out.push_str(&serde_json::to_string(&rec).expect("records serialize"));
        out.push_str(if i + 1 < records.len() { ",\n" } else { "\n" });
    }
    out.push_str("]\n");
    out
}

pub fn save_dataset(path: &Path, records: &[(String, CadSequence)]) -> Result<(), DatasetError> {
    fs::write(path, dataset_to_string(records)).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Shares of sequences containing each curve type, and of extrusions by
/// extent type.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub sequences: usize,
    pub with_line: f64,
    pub with_arc: f64,
    pub with_circle: f64,
    pub extrusions: usize,
    pub one_sided: f64,
    pub symmetric: f64,
    pub two_sided: f64,
}

pub fn corpus_stats<'a>(seqs: impl IntoIterator<Item = &'a CadSequence>) -> CorpusStats {
    let mut st = CorpusStats::default();
    let (mut line, mut arc, mut circle) = (0usize, 0usize, 0usize);
    let mut extent = [0usize; 3];
    for s in seqs {
        st.sequences += 1;
        line += usize::from(s.contains(CommandType::Line));
        arc += usize::from(s.contains(CommandType::Arc));
        circle += usize::from(s.contains(CommandType::Circle));
        for c in s.commands().iter().filter(|c| c.ctype == CommandType::Extrude) {
            st.extrusions += 1;
            if let Some(w) = usize::try_from(c.params[slot::W]).ok().filter(|&w| w < 3) {
                extent[w] += 1;
            }
        }
    }
    let frac = |k: usize, n: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    st.with_line = frac(line, st.sequences);
    st.with_arc = frac(arc, st.sequences);
    st.with_circle = frac(circle, st.sequences);
    st.one_sided = frac(extent[0], st.extrusions);
    st.symmetric = frac(extent[1], st.extrusions);
    st.two_sided = frac(extent[2], st.extrusions);
    st
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// 90/5/5 assignment from the FNV-1a hash of the id.
pub fn split_of(id: &str) -> Split {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    match h % 100 {
        0..=89 => Split::Train,
        90..=94 => Split::Validation,
        _ => Split::Test,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_records_are_padded() {
        let text = r#"[{"id":"a","vec":[[4,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1],
            [2,128,128,-1,-1,60,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1,-1],
            [5,-1,-1,-1,-1,-1,128,128,128,128,128,128,255,200,128,0,0]]}]"#;
        let ds = parse_dataset(text, 60).unwrap();
        assert_eq!(ds[0].1.logical_len(), 3);
        let back = parse_dataset(&dataset_to_string(&ds), 60).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn bad_record_names_its_id() {
        let text = r#"[{"id":"broken-7","vec":[[5,-1,-1,-1,-1,-1,128,128,128,128,128,128,255,200,128,0,0]]}]"#;
        match parse_dataset(text, 60) {
            Err(DatasetError::Record { id, .. }) => assert_eq!(id, "broken-7"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn split_is_stable_and_roughly_90_5_5() {
        let ids: Vec<String> = (0..10_000).map(|i| format!("{i:08}")).collect();
        let train = ids.iter().filter(|i| split_of(i) == Split::Train).count();
        let test = ids.iter().filter(|i| split_of(i) == Split::Test).count();
        assert!((8800..=9200).contains(&train), "{train}");
        assert!((350..=650).contains(&test), "{test}");
        assert_eq!(split_of("00000042"), split_of("00000042"));
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(parse_dataset("[]", 60), Err(DatasetError::Empty)));
        assert!(parse_dataset("", 60).is_err());
    }
}
