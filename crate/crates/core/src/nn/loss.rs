use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, Var};
use crate::cad::{TokenMatrix, N_PARAMS};
use crate::Scalar;

use super::layers::dropout_mask;
use super::ModelError;

/// Cross-entropy targets for a batch. Positions up to and including the
/// first EOS are counted; later padding rows are excluded.
#[derive(Clone, Debug)]
pub struct RecTargets<T> {
    pub cmd: Vec<usize>,
    pub cmd_weights: Vec<T>,
    /// Flat `B*N` indices of the counted rows.
    pub rows: Vec<usize>,
    /// One class per counted row and slot (value + 1, so the sentinel is class 0).
    pub param: Vec<usize>,
    pub param_weights: Vec<T>,
}

impl<T: Scalar> RecTargets<T> {
    pub fn new(tokens: &[TokenMatrix]) -> Self {
        let mut cmd = Vec::new();
        let mut counted = Vec::new();
        let mut rows = Vec::new();
        let mut param = Vec::new();
        let mut offset = 0;
        for t in tokens {
            let n = t.n_rows();
            let len = t.first_eos().map_or(n, |e| e + 1);
            for (k, row) in t.rows().iter().enumerate() {
                cmd.push(row[0] as usize);
                counted.push(k < len);
                if k < len {
                    rows.push(offset + k);
                    param.extend(row[1..].iter().map(|&v| (v + 1) as usize));
                }
            }
            offset += n;
        }
        let wc = T::lit(1.0 / rows.len().max(1) as f64);
        let wp = T::lit(1.0 / param.len().max(1) as f64);
        Self {
            cmd,
            cmd_weights: counted.iter().map(|&c| if c { wc } else { T::zero() }).collect(),
            rows,
            param_weights: vec![wp; param.len()],
            param,
        }
    }
}

/// Returns `(l_rec, ce_cmd, ce_param)` with `l_rec = ce_cmd + lambda * ce_param`.
/// `param_logits` must hold exactly the rows of `targets.rows`.
pub fn reconstruction_loss<T: Scalar>(
    g: &mut Graph<T>,
    cmd_logits: Var,
    param_logits: Var,
    targets: &RecTargets<T>,
    lambda: f64,
) -> Result<(Var, Var, Var), ModelError> {
    let (cr, pr) = (g.value(cmd_logits).rows(), g.value(param_logits).rows());
    if cr != targets.cmd.len() {
        return Err(ModelError::Shape {
            expected: targets.cmd.len(),
            found: cr,
        });
    }
    if pr != targets.rows.len() * N_PARAMS {
        return Err(ModelError::Shape {
            expected: targets.rows.len() * N_PARAMS,
            found: pr,
        });
    }
    let lc = g.softmax_cross_entropy(cmd_logits, targets.cmd.clone(), targets.cmd_weights.clone());
    let lp = g.softmax_cross_entropy(param_logits, targets.param.clone(), targets.param_weights.clone());
    let lps = g.scale(lp, T::lit(lambda));
    Ok((g.add(lc, lps), lc, lp))
}

/// Stacks two independently masked copies of `zp [B, D]` into `[2B, D]`
/// (rows `i` and `i + B` are the positive pair).
pub fn project_and_mask<T: Scalar>(g: &mut Graph<T>, zp: Var, p: f64, rng: &mut ChaCha8Rng) -> Var {
    let b = g.value(zp).rows();
    let idx = (0..2 * b).map(|i| i % b).collect();
    let both = g.gather(zp, idx);
    if p == 0.0 {
        return both;
    }
    let mask = dropout_mask(g.value(both).numel(), p, rng);
    g.mul_const(both, mask)
}

pub fn contrastive_loss<T: Scalar>(g: &mut Graph<T>, d: Var, tau: f64) -> Var {
    g.info_nce(d, T::lit(tau))
}

pub fn total_loss<T: Scalar>(g: &mut Graph<T>, l_rec: Var, l_cont: Var, kappa: f64) -> Var {
    let c = g.scale(l_cont, T::lit(kappa));
    g.add(l_rec, c)
}

pub fn cosine_similarity<T: Scalar>(u: &[T], v: &[T]) -> Result<f64, ModelError> {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a.as_f64() * b.as_f64()).sum();
    let nu = u.iter().map(|a| a.as_f64().powi(2)).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a.as_f64().powi(2)).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(ModelError::ZeroVector);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}
