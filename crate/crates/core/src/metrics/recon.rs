//! Reconstruction accuracy, invalid rate and Chamfer distance.

use serde::{Deserialize, Serialize};

use crate::cad::{parse_sequence, CommandType, TokenMatrix};
use crate::geometry::{chamfer_distance, realize_and_sample, GeometryConfig, PointCloud};

use super::MetricsError;

/// Hit counts behind the two accuracies; corpus figures pool these over
/// all samples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccCounts {
    pub cmd_hits: usize,
    pub positions: usize,
    pub param_hits: usize,
    pub param_total: usize,
}

impl AccCounts {
    pub fn add(&mut self, o: &AccCounts) {
        self.cmd_hits += o.cmd_hits;
        self.positions += o.positions;
        self.param_hits += o.param_hits;
        self.param_total += o.param_total;
    }

    pub fn acc_cmd(&self) -> f64 {
        self.cmd_hits as f64 / self.positions as f64
    }

    /// `NaN` when no command matched.
    pub fn acc_param(&self) -> f64 {
        if self.param_total == 0 {
            f64::NAN
        } else {
            self.param_hits as f64 / self.param_total as f64
        }
    }
}

/// Counts over all rows, or only over the rows up to and including the
/// first ground-truth EOS when `masked`.
pub fn accuracy_counts(gt: &TokenMatrix, pred: &TokenMatrix, eta: i16, masked: bool) -> Result<AccCounts, MetricsError> {
    if gt.n_rows() != pred.n_rows() {
        return Err(MetricsError::LengthMismatch {
            gt: gt.n_rows(),
            pred: pred.n_rows(),
        });
    }
    let n = if masked { gt.trimmed().len() } else { gt.n_rows() };
    let mut c = AccCounts::default();
    for (g, p) in gt.rows()[..n].iter().zip(&pred.rows()[..n]) {
        c.positions += 1;
        if g[0] != p[0] {
            continue;
        }
        c.cmd_hits += 1;
        let Some(t) = CommandType::from_index(i64::from(g[0])) else {
            continue;
        };
        for (s, used) in t.used_mask().into_iter().enumerate() {
            if used && g[s + 1] >= 0 {
                c.param_total += 1;
                if (g[s + 1] - p[s + 1]).abs() < eta {
                    c.param_hits += 1;
                }
            }
        }
    }
    Ok(c)
}

pub fn acc_cmd(gt: &TokenMatrix, pred: &TokenMatrix) -> Result<f64, MetricsError> {
    Ok(accuracy_counts(gt, pred, 0, false)?.acc_cmd())
}

pub fn acc_param(gt: &TokenMatrix, pred: &TokenMatrix, eta: i16) -> Result<f64, MetricsError> {
    let c = accuracy_counts(gt, pred, eta, false)?;
    if c.param_total == 0 {
        return Err(MetricsError::NoMatchedCommands);
    }
    Ok(c.acc_param())
}

/// Pooled accuracies over a corpus.
pub fn corpus_accuracy(gt: &[TokenMatrix], pred: &[TokenMatrix], eta: i16, masked: bool) -> Result<AccCounts, MetricsError> {
    if gt.len() != pred.len() {
        return Err(MetricsError::LengthMismatch {
            gt: gt.len(),
            pred: pred.len(),
        });
    }
    let mut total = AccCounts::default();
    for (g, p) in gt.iter().zip(pred) {
        total.add(&accuracy_counts(g, p, eta, masked)?);
    }
    Ok(total)
}

/// Parses, realizes and samples; `None` when any stage fails.
pub fn sample_matrix(m: &TokenMatrix, geo: &GeometryConfig, seed: u64) -> Option<PointCloud> {
    let seq = parse_sequence(m).ok()?;
    realize_and_sample(&seq, geo, seed).ok()
}

pub fn is_valid_matrix(m: &TokenMatrix, geo: &GeometryConfig) -> bool {
    sample_matrix(m, geo, 0).is_some()
}

pub fn invalid_rate(seqs: &[TokenMatrix], geo: &GeometryConfig) -> f64 {
    if seqs.is_empty() {
        return 0.0;
    }
    let bad = seqs.iter().filter(|m| !is_valid_matrix(m, geo)).count();
    bad as f64 / seqs.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdSummary {
    pub median: f64,
    pub n_valid: usize,
    pub n_invalid: usize,
    /// Per-pair distance, `None` where either side failed to realize.
    pub per_pair: Vec<Option<f64>>,
}

/// Median of the finite values; mean of the two middle ones for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

/// Both sides of pair `i` are sampled with seed `seed + i`, so identical
/// geometry gives distance 0.
pub fn pair_chamfer(gt: &TokenMatrix, pred: &TokenMatrix, geo: &GeometryConfig, seed: u64) -> Option<f64> {
    let a = sample_matrix(gt, geo, seed)?;
    let b = sample_matrix(pred, geo, seed)?;
    chamfer_distance(&a, &b).ok()
}

pub fn median_cd(pairs: &[(TokenMatrix, TokenMatrix)], geo: &GeometryConfig, seed: u64) -> Result<CdSummary, MetricsError> {
    let per_pair: Vec<Option<f64>> = pairs
        .iter()
        .enumerate()
        .map(|(i, (g, p))| pair_chamfer(g, p, geo, seed.wrapping_add(i as u64)))
        .collect();
    let valid: Vec<f64> = per_pair.iter().flatten().copied().collect();
    let median = median(&valid).ok_or(MetricsError::AllInvalid)?;
    Ok(CdSummary {
        median,
        n_valid: valid.len(),
        n_invalid: pairs.len() - valid.len(),
        per_pair,
    })
}

/// One row of the accuracy-by-length table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthRow {
    pub length: usize,
    pub acc_cmd: f64,
    pub acc_param: f64,
    pub median_cd: f64,
    pub count: usize,
}

/// Groups samples by ground-truth logical length. `cds` holds the per-pair
/// distances (as in [`CdSummary::per_pair`]) or is empty.
pub fn per_length(
    gt: &[TokenMatrix],
    pred: &[TokenMatrix],
    cds: &[Option<f64>],
    eta: i16,
) -> Result<Vec<LengthRow>, MetricsError> {
    let mut groups: std::collections::BTreeMap<usize, (AccCounts, Vec<f64>, usize)> = Default::default();
    for (i, (g, p)) in gt.iter().zip(pred).enumerate() {
        let len = g.first_eos().unwrap_or(g.n_rows());
        let e = groups.entry(len).or_default();
        e.0.add(&accuracy_counts(g, p, eta, false)?);
        if let Some(Some(cd)) = cds.get(i) {
            e.1.push(*cd);
        }
        e.2 += 1;
    }
    Ok(groups
        .into_iter()
        .map(|(length, (c, cd, count))| LengthRow {
            length,
            acc_cmd: c.acc_cmd(),
            acc_param: c.acc_param(),
            median_cd: median(&cd).unwrap_or(f64::NAN),
            count,
        })
        .collect())
}

pub fn per_length_csv(rows: &[LengthRow]) -> String {
    let mut s = String::from("length,acc_cmd,acc_param,median_cd,count\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{}\n", r.length, r.acc_cmd, r.acc_param, r.median_cd, r.count));
    }
    s
}
