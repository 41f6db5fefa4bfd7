//! Experiment-level evaluations built on a trained model: reconstruction
//! report, clustering sweep, permutation study and contrastive separation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cad::{emit_matrix, CadSequence, TokenMatrix};
use crate::geometry::GeometryConfig;
use crate::metrics::{
    cluster_quality, corpus_accuracy, euclidean, find_pattern, invalid_rate, median_cd, per_length, permutation_probe,
    MetricsError, MetricsReport, Pattern,
};
use crate::nn::layers::dropout_mask;
use crate::nn::{cosine_similarity, CadModel, ModelError};
use crate::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("no sequence contains any of the permutation patterns")]
    NoPatterns,
}

/// Accuracy, invalid rate, median CD and the per-length table of predictions
/// against ground truth.
pub fn recon_report(
    gt: &[TokenMatrix],
    pred: &[TokenMatrix],
    geo: &GeometryConfig,
    eta: i64,
    seed: u64,
) -> Result<MetricsReport, EvalError> {
    if gt.is_empty() {
        return Err(MetricsError::EmptySet.into());
    }
    let counts = corpus_accuracy(gt, pred, eta as i16, false)?;
    let pairs: Vec<(TokenMatrix, TokenMatrix)> = gt.iter().cloned().zip(pred.iter().cloned()).collect();
    let (median, n_invalid, per_pair) = match median_cd(&pairs, geo, seed) {
        Ok(s) => (s.median, s.n_invalid, s.per_pair),
        Err(MetricsError::AllInvalid) => (f64::NAN, pairs.len(), Vec::new()),
        Err(e) => return Err(e.into()),
    };
    Ok(MetricsReport {
        acc_cmd: counts.acc_cmd(),
        acc_param: counts.acc_param(),
        invalid_rate: invalid_rate(pred, geo),
        median_cd: median,
        n_cd_invalid: n_invalid,
        per_length: per_length(gt, pred, &per_pair, eta as i16)?,
        generation: None,
        clustering: None,
    })
}

pub fn to_f64<T: Scalar>(zs: &[Vec<T>]) -> Vec<Vec<f64>> {
    zs.iter().map(|z| z.iter().map(|v| v.as_f64()).collect()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub ratio: f64,
    pub k: usize,
    pub sc: f64,
    pub sse: f64,
}

/// The ratios 0.05, 0.10, ..., 0.50 of clusters per sample.
pub fn default_ratios() -> Vec<f64> {
    (1..=10).map(|i| i as f64 * 0.05).collect()
}

/// K-means at `K = round(ratio * |z|)` (at least 2) for each ratio; ratios
/// that collapse onto an already evaluated K are skipped.
pub fn cluster_sweep(z: &[Vec<f64>], ratios: &[f64], seed: u64) -> Result<Vec<SweepRow>, EvalError> {
    let mut rows: Vec<SweepRow> = Vec::new();
    for &ratio in ratios {
        let k = ((ratio * z.len() as f64).round() as usize).max(2);
        if rows.iter().any(|r| r.k == k) {
            continue;
        }
        let (_, block) = cluster_quality(z, k, seed)?;
        rows.push(SweepRow {
            ratio,
            k,
            sc: block.sc,
            sse: block.sse,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermRow {
    pub pattern: Pattern,
    pub count: usize,
    pub mean_sim: f64,
    pub mean_ed: f64,
    pub sims: Vec<f64>,
    pub eds: Vec<f64>,
}

/// Encodes every sequence containing a pattern together with a random
/// geometry-preserving permutation of it. Patterns with no instance are
/// omitted; no instance at all is an error.
pub fn perm_study<T: Scalar>(model: &CadModel<T>, seqs: &[CadSequence], seed: u64) -> Result<Vec<PermRow>, EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for pattern in Pattern::ALL {
        let mut orig = Vec::new();
        let mut perm = Vec::new();
        for s in seqs.iter().filter(|s| find_pattern(s, pattern).is_some()) {
            orig.push(emit_matrix(s));
            perm.push(emit_matrix(&permutation_probe(s, pattern, &mut rng)?));
        }
        if orig.is_empty() {
            continue;
        }
        let za = model.encode_batch(&orig)?;
        let zb = model.encode_batch(&perm)?;
        let mut sims = Vec::with_capacity(za.len());
        let mut eds = Vec::with_capacity(za.len());
        for (a, b) in za.iter().zip(&zb) {
            sims.push(cosine_similarity(a, b)?);
            let (a, b) = (to_f64(std::slice::from_ref(a)), to_f64(std::slice::from_ref(b)));
            eds.push(euclidean(&a[0], &b[0]));
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        out.push(PermRow {
            pattern,
            count: sims.len(),
            mean_sim: mean(&sims),
            mean_ed: mean(&eds),
            sims,
            eds,
        });
    }
    if out.is_empty() {
        return Err(EvalError::NoPatterns);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimGap {
    pub positive: f64,
    pub negative: f64,
}

impl SimGap {
    pub fn gap(&self) -> f64 {
        self.positive - self.negative
    }
}

/// Two dropout views of each projected latent: mean cosine similarity of the
/// views of the same sample against the mean over views of different samples.
pub fn contrastive_gap<T: Scalar>(
    model: &CadModel<T>,
    tokens: &[TokenMatrix],
    p: f64,
    seed: u64,
) -> Result<SimGap, EvalError> {
    if tokens.len() < 2 {
        return Err(MetricsError::EmptySet.into());
    }
    let zp = model.project_batch(&model.encode_batch(tokens)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut view = |z: &Vec<T>| -> Vec<T> {
        let m: Vec<T> = dropout_mask(z.len(), p, &mut rng);
        z.iter().zip(m).map(|(&a, b)| a * b).collect()
    };
    let a: Vec<Vec<T>> = zp.iter().map(&mut view).collect();
    let b: Vec<Vec<T>> = zp.iter().map(&mut view).collect();
    let (mut pos, mut neg) = (0.0, 0.0);
    for i in 0..a.len() {
        for j in 0..b.len() {
            let s = cosine_similarity(&a[i], &b[j])?;
            if i == j {
                pos += s;
            } else {
                neg += s;
            }
        }
    }
    let n = a.len() as f64;
    Ok(SimGap {
        positive: pos / n,
        negative: neg / (n * (n - 1.0)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ModelConfig;
    use crate::synth::{synth_dataset, SynthConfig};

    fn tiny() -> CadModel<f64> {
        CadModel::new(
            ModelConfig {
                d_model: 16,
                layers: 1,
                heads: 2,
                d_ff: 16,
                seq_len: 24,
                ..Default::default()
            },
            0,
        )
        .unwrap()
    }

    fn corpus() -> Vec<CadSequence> {
        let cfg = SynthConfig {
            seq_len: 24,
            max_pairs: 2,
            ..Default::default()
        };
        synth_dataset(40, 2, &cfg).into_iter().map(|(_, s)| s).collect()
    }

    #[test]
    fn identity_prediction_report() {
        let gt: Vec<TokenMatrix> = corpus().iter().take(6).map(emit_matrix).collect();
        let r = recon_report(&gt, &gt, &GeometryConfig::default(), 3, 0).unwrap();
        assert_eq!(r.acc_cmd, 1.0);
        assert_eq!(r.acc_param, 1.0);
        assert_eq!(r.median_cd, 0.0);
        assert_eq!(r.invalid_rate, 0.0);
        assert_eq!(r.per_length.iter().map(|l| l.count).sum::<usize>(), 6);
    }

    #[test]
    fn random_encoder_perm_ranges() {
        let rows = perm_study(&tiny(), &corpus(), 1).unwrap();
        for r in rows {
            assert!(r.sims.iter().all(|s| (-1.0..=1.0).contains(s)));
            assert!(r.eds.iter().all(|&e| e >= 0.0));
        }
        let none = vec![CadSequence::empty(24)];
        assert_eq!(perm_study(&tiny(), &none, 1), Err(EvalError::NoPatterns));
    }

    #[test]
    fn sweep_skips_repeated_k() {
        let z: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let rows = cluster_sweep(&z, &default_ratios(), 0).unwrap();
        let ks: Vec<usize> = rows.iter().map(|r| r.k).collect();
        assert_eq!(ks, [2, 3, 4, 5]);
    }

    #[test]
    fn gap_without_dropout_is_one_minus_negatives() {
        let tokens: Vec<TokenMatrix> = corpus().iter().take(5).map(emit_matrix).collect();
        let g = contrastive_gap(&tiny(), &tokens, 0.0, 0).unwrap();
        assert!((g.positive - 1.0).abs() < 1e-12);
        assert!(g.negative < 1.0);
    }
}
