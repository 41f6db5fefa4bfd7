use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::autograd::{clip_global_norm, warmup_factor, Adam, Graph, Tensor};
use crate::cad::TokenMatrix;
use crate::Scalar;

use super::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError};
use super::layers::Mode;
use super::loss::{contrastive_loss, project_and_mask, reconstruction_loss, total_loss, RecTargets};
use super::{CadModel, ModelConfig, ModelError, TrainConfig};

pub const AE_KIND: &str = "autoencoder";

/// Losses and diagnostics of one optimizer step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub step: u64,
    pub loss: f64,
    pub l_rec: f64,
    pub ce_cmd: f64,
    pub ce_param: f64,
    pub l_cont: Option<f64>,
    pub grad_norm: f64,
    pub lr: f64,
}

/// Model weights, optimizer moments and the step counter.
#[derive(Clone, Debug)]
pub struct TrainState<T> {
    pub model: CadModel<T>,
    pub train: TrainConfig,
    pub adam: Adam<T>,
    pub step: u64,
    pub seed: u64,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(model_cfg: ModelConfig, train: TrainConfig, seed: u64) -> Result<Self, ModelError> {
        train.check()?;
        let model = CadModel::new(model_cfg, seed)?;
        let adam = Adam::new(&model.params, train.adam);
        Ok(Self {
            model,
            train,
            adam,
            step: 0,
            seed,
        })
    }

    /// Dropout masks of step `s` come from stream `s` of the run seed, so a
    /// resumed run replays the same randomness.
    fn step_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_0000_0000_0001);
        rng.set_stream(self.step);
        rng
    }

    pub fn train_step(&mut self, batch: &[TokenMatrix]) -> Result<StepStats, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let mut rng = self.step_rng();
        let model = &self.model;
        let cfg = &self.train;
        let mut g = Graph::new();
        let p = model.params.bind(&mut g, true);
        let mut mode = Mode::Train {
            dropout: model.cfg.dropout,
            rng: &mut rng,
        };
        let enc = model.encode(&mut g, &p, batch, &mut mode)?;
        let targets = RecTargets::new(batch);
        let dec = model.decode(&mut g, &p, enc.z, Some(&targets.rows), &mut mode);
        let (l_rec, lc, lp) = reconstruction_loss(&mut g, dec.cmd_logits, dec.param_logits, &targets, cfg.lambda)?;
        let (loss, l_cont) = if cfg.kappa > 0.0 {
            let zp = model.project(&mut g, &p, enc.z);
            let d = project_and_mask(&mut g, zp, cfg.mask_dropout, &mut rng);
            let lcont = contrastive_loss(&mut g, d, cfg.tau);
            (total_loss(&mut g, l_rec, lcont, cfg.kappa), Some(lcont))
        } else {
            (l_rec, None)
        };
        let scalar = |v| g.value(v).data()[0].as_f64();
        let loss_v = scalar(loss);
        if !loss_v.is_finite() {
            return Err(ModelError::NonFinite(format!(
                "loss at step {} (l_rec {}, ce_cmd {}, ce_param {})",
                self.step + 1,
                scalar(l_rec),
                scalar(lc),
                scalar(lp)
            )));
        }
        let mut grads = g.backward(loss);
        let mut gv = p.grads(&g, &mut grads);
        let grad_norm = clip_global_norm(&mut gv, cfg.grad_clip);
        if !grad_norm.is_finite() {
            return Err(ModelError::NonFinite(format!("gradient at step {}", self.step + 1)));
        }
        let stats = StepStats {
            step: self.step + 1,
            loss: loss_v,
            l_rec: scalar(l_rec),
            ce_cmd: scalar(lc),
            ce_param: scalar(lp),
            l_cont: l_cont.map(scalar),
            grad_norm,
            lr: cfg.lr * warmup_factor(self.step + 1, cfg.warmup_steps),
        };
        self.adam.step(&mut self.model.params, &gv, stats.lr);
        self.step += 1;
        Ok(stats)
    }

    pub fn to_checkpoint(&self) -> Checkpoint<T> {
        let meta = json!({
            "model": self.model.cfg,
            "train": self.train,
            "step": self.step,
            "seed": self.seed,
            "adam_t": self.adam.t,
        });
        let mut ck = Checkpoint::new(AE_KIND, meta);
        ck.push_store("", &self.model.params);
        for (i, (name, _)) in self.model.params.iter().enumerate() {
            ck.tensors.push((format!("adam.m.{name}"), self.adam.m[i].clone()));
            ck.tensors.push((format!("adam.v.{name}"), self.adam.v[i].clone()));
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint<T>) -> Result<Self, CheckpointError> {
        ck.expect_kind(AE_KIND)?;
        let meta = |k: &str| {
            ck.meta
                .get(k)
                .cloned()
                .ok_or_else(|| CheckpointError::Missing(format!("meta.{k}")))
        };
        let model_cfg: ModelConfig = serde_json::from_value(meta("model")?)?;
        let train: TrainConfig = serde_json::from_value(meta("train")?)?;
        let step: u64 = serde_json::from_value(meta("step")?)?;
        let seed: u64 = serde_json::from_value(meta("seed")?)?;
        let adam_t: u64 = serde_json::from_value(meta("adam_t")?)?;
        let mut st = Self::new(model_cfg, train, seed).map_err(|e| CheckpointError::Tensor {
            name: "config".into(),
            reason: e.to_string(),
        })?;
        ck.fill_store("", &mut st.model.params)?;
        let names: Vec<String> = st.model.params.iter().map(|(n, _)| n.to_string()).collect();
        for (i, name) in names.iter().enumerate() {
            for (prefix, slot) in [("adam.m.", &mut st.adam.m[i]), ("adam.v.", &mut st.adam.v[i])] {
                let key = format!("{prefix}{name}");
                let t: &Tensor<T> = ck.get(&key).ok_or(CheckpointError::Missing(key))?;
                *slot = t.clone();
            }
        }
        st.adam.t = adam_t;
        st.step = step;
        Ok(st)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        save_checkpoint(path, &self.to_checkpoint())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_checkpoint(&load_checkpoint(path)?)
    }
}

impl<T: Scalar> CadModel<T> {
    /// Weights only, from an autoencoder checkpoint.
    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Ok(TrainState::<T>::load(path)?.model)
    }
}
