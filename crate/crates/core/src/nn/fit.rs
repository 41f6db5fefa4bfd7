//! Epoch driver: shuffled mini-batches, optional online augmentation and a
//! validation pass.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cad::{emit_matrix, CadSequence, TokenMatrix};
use crate::metrics::{corpus_accuracy, AccCounts};
use crate::rre::{augment_batch, RreConfig};
use crate::Scalar;

use super::{CadModel, ModelError, TrainState};

/// Means over the optimizer steps of one epoch plus validation accuracy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub step: u64,
    pub l_rec: f64,
    pub l_cont: Option<f64>,
    pub val_acc_cmd: Option<f64>,
    pub val_acc_param: Option<f64>,
}

/// Pooled accuracy of `model` reconstructing `data`.
pub fn reconstruction_accuracy<T: Scalar>(
    model: &CadModel<T>,
    data: &[TokenMatrix],
    eta: i64,
    batch: usize,
) -> Result<AccCounts, ModelError> {
    let mut total = AccCounts::default();
    for chunk in data.chunks(batch.max(1)) {
        let pred = model.reconstruct(chunk)?;
        let c = corpus_accuracy(chunk, &pred, eta as i16, false).map_err(|e| ModelError::Config(e.to_string()))?;
        total.add(&c);
    }
    Ok(total)
}

impl<T: Scalar> TrainState<T> {
    pub fn batches_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.train.batch_size)
    }

    /// Epoch index implied by the step counter.
    pub fn epoch_index(&self, n: usize) -> usize {
        (self.step / self.batches_per_epoch(n).max(1) as u64) as usize
    }

    fn finished(&self) -> bool {
        self.train.max_steps.is_some_and(|m| self.step >= m)
    }

    /// One pass over `data` in an order fixed by the run seed and the epoch
    /// index. With `rre`, every batch is augmented from its own stream.
    /// Stops early when `max_steps` is reached.
    pub fn run_epoch(
        &mut self,
        data: &[CadSequence],
        rre: Option<&RreConfig>,
        val: &[TokenMatrix],
    ) -> Result<EpochStats, ModelError> {
        if data.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let epoch = self.epoch_index(data.len());
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x0e90_c400_0000_0001);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        let (mut rec, mut cont, mut n) = (0.0, 0.0, 0usize);
        let mut any_cont = false;
        for idx in order.chunks(self.train.batch_size) {
            if self.finished() {
                break;
            }
            let seqs: Vec<CadSequence> = idx.iter().map(|&i| data[i].clone()).collect();
            let seqs = match rre {
                Some(cfg) => {
                    let mut arng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x44e0_0000_0000_0001);
                    arng.set_stream(self.step);
                    augment_batch(&seqs, cfg, &mut arng)
                }
                None => seqs,
            };
            let batch: Vec<TokenMatrix> = seqs.iter().map(emit_matrix).collect();
            let s = self.train_step(&batch)?;
            rec += s.l_rec;
            if let Some(c) = s.l_cont {
                cont += c;
                any_cont = true;
            }
            n += 1;
        }
        let n = n.max(1) as f64;
        let (val_acc_cmd, val_acc_param) = if val.is_empty() {
            (None, None)
        } else {
            let c = reconstruction_accuracy(&self.model, val, self.train.eta, self.train.batch_size)?;
            (Some(c.acc_cmd()), Some(c.acc_param()))
        };
        Ok(EpochStats {
            epoch,
            step: self.step,
            l_rec: rec / n,
            l_cont: any_cont.then_some(cont / n),
            val_acc_cmd,
            val_acc_param,
        })
    }

    /// Epochs until `train.epochs` or `max_steps`, calling `on_epoch` after
    /// each one.
    pub fn fit(
        &mut self,
        data: &[CadSequence],
        rre: Option<&RreConfig>,
        val: &[TokenMatrix],
        mut on_epoch: impl FnMut(&Self, &EpochStats) -> Result<(), ModelError>,
    ) -> Result<Vec<EpochStats>, ModelError> {
        let mut log = Vec::new();
        while self.epoch_index(data.len()) < self.train.epochs && !self.finished() {
            let s = self.run_epoch(data, rre, val)?;
            on_epoch(self, &s)?;
            log.push(s);
        }
        Ok(log)
    }
}

/// CSV of an epoch log; the `l_cont` column is present only when some epoch
/// has a contrastive loss.
pub fn epoch_log_csv(log: &[EpochStats], with_cont: bool) -> String {
    let mut out = String::from(if with_cont {
        "epoch,step,l_rec,l_cont,val_acc_cmd,val_acc_param\n"
    } else {
        "epoch,step,l_rec,val_acc_cmd,val_acc_param\n"
    });
    for s in log {
        out.push_str(&epoch_log_row(s, with_cont));
    }
    out
}

pub fn epoch_log_row(s: &EpochStats, with_cont: bool) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    if with_cont {
        format!(
            "{},{},{},{},{},{}\n",
            s.epoch,
            s.step,
            s.l_rec,
            opt(s.l_cont),
            opt(s.val_acc_cmd),
            opt(s.val_acc_param)
        )
    } else {
        format!(
            "{},{},{},{},{}\n",
            s.epoch,
            s.step,
            s.l_rec,
            opt(s.val_acc_cmd),
            opt(s.val_acc_param)
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ModelConfig, TrainConfig};
    use crate::synth::{synth_dataset, SynthConfig};

    fn setup(max_steps: Option<u64>) -> (TrainState<f32>, Vec<CadSequence>) {
        let scfg = SynthConfig {
            seq_len: 12,
            max_pairs: 1,
            max_curves: 4,
            ..Default::default()
        };
        let data: Vec<CadSequence> = synth_dataset(10, 3, &scfg).into_iter().map(|(_, s)| s).collect();
        let mcfg = ModelConfig {
            d_model: 16,
            layers: 1,
            heads: 2,
            d_ff: 16,
            seq_len: 12,
            ..Default::default()
        };
        let tcfg = TrainConfig {
            batch_size: 4,
            epochs: 2,
            warmup_steps: 2,
            max_steps,
            ..Default::default()
        };
        (TrainState::new(mcfg, tcfg, 5).unwrap(), data)
    }

    #[test]
    fn fit_counts_steps_and_epochs() {
        let (mut st, data) = setup(None);
        let val: Vec<TokenMatrix> = data.iter().take(3).map(emit_matrix).collect();
        let log = st.fit(&data, None, &val, |_, _| Ok(())).unwrap();
        assert_eq!(log.len(), 2);
        assert_eq!(st.step, 6);
        assert_eq!(log[1].epoch, 1);
        assert!(log[0].l_cont.is_some());
        assert!(log[0].val_acc_cmd.is_some_and(|a| (0.0..=1.0).contains(&a)));
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let (mut a, data) = setup(None);
        a.fit(&data, None, &[], |_, _| Ok(())).unwrap();
        let (mut b, _) = setup(None);
        b.run_epoch(&data, None, &[]).unwrap();
        let mut b = TrainState::<f32>::from_checkpoint(&b.to_checkpoint()).unwrap();
        b.fit(&data, None, &[], |_, _| Ok(())).unwrap();
        assert_eq!(a.step, b.step);
        assert_eq!(a.model.params.checksum(), b.model.params.checksum());
    }

    #[test]
    fn max_steps_stops_mid_epoch() {
        let (mut st, data) = setup(Some(4));
        let log = st.fit(&data, Some(&RreConfig::default()), &[], |_, _| Ok(())).unwrap();
        assert_eq!(st.step, 4);
        assert_eq!(log.len(), 2);
    }

    #[test]
    fn csv_columns() {
        let s = EpochStats {
            epoch: 0,
            step: 3,
            l_rec: 1.5,
            l_cont: None,
            val_acc_cmd: Some(0.5),
            val_acc_param: None,
        };
        let csv = epoch_log_csv(&[s], false);
        assert_eq!(csv, "epoch,step,l_rec,val_acc_cmd,val_acc_param\n0,3,1.5,0.5,\n");
    }
}
