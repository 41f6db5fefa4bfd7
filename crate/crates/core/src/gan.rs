//! Latent GAN: MLP generator and critic over autoencoder latents, trained
//! with the Wasserstein objective and a gradient penalty.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::autograd::{Adam, AdamConfig, Bound, Graph, ParamStore, Tensor, Var};
use crate::cad::{parse_sequence, TokenMatrix, ValidityReport, ValidityRule};
use crate::geometry::{check_validity, GeometryConfig};
use crate::nn::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError};
use crate::nn::layers::Linear;
use crate::nn::{CadModel, ModelError};
use crate::Scalar;

pub const GAN_KIND: &str = "latent_gan";

#[derive(Debug, Error)]
pub enum GanError {
    #[error("invalid GAN config: {0}")]
    Config(String),
    #[error("latent dimension {gan} does not match the decoder's {model}")]
    IncompatibleCheckpoints { gan: usize, model: usize },
    #[error("non-finite loss at iteration {0}")]
    NonFiniteLoss(u64),
    #[error("no latents to train on")]
    EmptyLatents,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanConfig {
    pub noise_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub gp_coeff: f64,
    pub critic_steps: usize,
    pub lr: f64,
    pub batch: usize,
    /// Generator updates.
    pub iterations: u64,
    pub leaky_slope: f64,
    pub adam: AdamConfig,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            noise_dim: 64,
            hidden_dim: 512,
            layers: 4,
            gp_coeff: 10.0,
            critic_steps: 5,
            lr: 1e-4,
            batch: 64,
            iterations: 2000,
            leaky_slope: 0.2,
            adam: AdamConfig {
                beta1: 0.5,
                beta2: 0.9,
                eps: 1e-8,
            },
        }
    }
}

impl GanConfig {
    pub fn check(&self) -> Result<(), GanError> {
        let bad = |m: &str| Err(GanError::Config(m.into()));
        if self.layers != 4 {
            return bad("layers must be 4");
        }
        if self.noise_dim == 0 || self.hidden_dim == 0 || self.batch == 0 || self.critic_steps == 0 {
            return bad("dimensions, batch and critic_steps must be positive");
        }
        if !(self.gp_coeff >= 0.0) || !(self.lr > 0.0) {
            return bad("gp_coeff must be >= 0 and lr > 0");
        }
        Ok(())
    }
}

/// Linear layers with leaky-ReLU between them and a linear output.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Forward values needed by the explicit input gradient.
pub struct MlpTrace {
    pub out: Var,
    pub pre: Vec<Var>,
}

impl Mlp {
    pub fn new<T: Scalar>(ps: &mut ParamStore<T>, prefix: &str, dims: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(ps, &format!("{prefix}.{i}"), w[0], w[1], rng))
            .collect();
        Self { layers }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var, slope: T) -> MlpTrace {
        let mut h = x;
        let mut pre = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let a = l.forward(g, p, h);
            if i + 1 < self.layers.len() {
                pre.push(a);
                h = g.leaky_relu(a, slope);
            } else {
                h = a;
            }
        }
        MlpTrace { out: h, pre }
    }

    /// Gradient of `sum(out)` with respect to the input, as a differentiable
    /// function of the weights. The leaky-ReLU slopes are piecewise constant,
    /// so they enter as fixed masks.
    pub fn input_grad<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, trace: &MlpTrace, slope: T) -> Var {
        let rows = g.value(trace.out).shape()[0];
        let ones = g.input(Tensor::new(vec![rows, 1], vec![T::one(); rows]));
        let mut d = ones;
        for (i, l) in self.layers.iter().enumerate().rev() {
            d = g.matmul_bt(d, p.var(l.w));
            if i > 0 {
                let mask = g
                    .value(trace.pre[i - 1])
                    .data()
                    .iter()
                    .map(|&v| if v > T::zero() { T::one() } else { slope })
                    .collect();
                d = g.mul_const(d, mask);
            }
        }
        d
    }
}

#[derive(Clone, Debug)]
pub struct LatentGan<T> {
    pub cfg: GanConfig,
    pub latent_dim: usize,
    pub g_params: ParamStore<T>,
    pub d_params: ParamStore<T>,
    pub generator: Mlp,
    pub critic: Mlp,
}

/// Losses of one generator iteration (the last critic step's values).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanStepStats {
    pub iter: u64,
    pub l_d: f64,
    pub l_g: f64,
    pub gp: f64,
    /// `mean D(z) - mean D(G(eps))`.
    pub wasserstein: f64,
}

fn gaussian<T: Scalar>(rng: &mut impl Rng, n: usize) -> Vec<T> {
    (0..n).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))).collect()
}

impl<T: Scalar> LatentGan<T> {
    pub fn new(cfg: GanConfig, latent_dim: usize, seed: u64) -> Result<Self, GanError> {
        cfg.check()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = cfg.hidden_dim;
        let mut g_params = ParamStore::new();
        let mut d_params = ParamStore::new();
        let generator = Mlp::new(&mut g_params, "g", &[cfg.noise_dim, h, h, h, latent_dim], &mut rng);
        let critic = Mlp::new(&mut d_params, "d", &[latent_dim, h, h, h, 1], &mut rng);
        Ok(Self {
            cfg,
            latent_dim,
            g_params,
            d_params,
            generator,
            critic,
        })
    }

    fn slope(&self) -> T {
        T::lit(self.cfg.leaky_slope)
    }

    /// `G(eps)` for `eps [B, noise_dim]`.
    pub fn generate_latent(&self, eps: &[T]) -> Vec<T> {
        let mut g = Graph::new();
        let p = self.g_params.bind(&mut g, false);
        let b = eps.len() / self.cfg.noise_dim;
        let x = g.input(Tensor::new(vec![b, self.cfg.noise_dim], eps.to_vec()));
        let out = self.generator.forward(&mut g, &p, x, self.slope()).out;
        g.value(out).data().to_vec()
    }

    pub fn critic_scores(&self, x: &[T]) -> Vec<T> {
        let mut g = Graph::new();
        let p = self.d_params.bind(&mut g, false);
        let b = x.len() / self.latent_dim;
        let x = g.input(Tensor::new(vec![b, self.latent_dim], x.to_vec()));
        let out = self.critic.forward(&mut g, &p, x, self.slope()).out;
        g.value(out).data().to_vec()
    }

    /// `mean D(G(eps))`; the generator minimizes its negation.
    pub fn generator_loss(&self, g: &mut Graph<T>, gp: &Bound, dp: &Bound, eps: &[T]) -> Var {
        let b = eps.len() / self.cfg.noise_dim;
        let x = g.input(Tensor::new(vec![b, self.cfg.noise_dim], eps.to_vec()));
        let fake = self.generator.forward(g, gp, x, self.slope()).out;
        let score = self.critic.forward(g, dp, fake, self.slope()).out;
        g.mean(score)
    }

    /// `gp_coeff * mean_i (|grad D(x_i)| - 1)^2` over the rows of `x`.
    pub fn gradient_penalty(&self, g: &mut Graph<T>, dp: &Bound, x: &[T], gp_coeff: f64) -> Var {
        let b = x.len() / self.latent_dim;
        let xv = g.input(Tensor::new(vec![b, self.latent_dim], x.to_vec()));
        let trace = self.critic.forward(g, dp, xv, self.slope());
        let grad = self.critic.input_grad(g, dp, &trace, self.slope());
        let n = g.row_norm(grad);
        let n = g.add_scalar(n, -T::one());
        let sq = g.square(n);
        let m = g.mean(sq);
        g.scale(m, T::lit(gp_coeff))
    }

    /// Critic loss on real latents `z`, fake latents `fake` and per-row
    /// interpolation weights `u`. Returns `(l_d, penalty, wasserstein)`.
    pub fn discriminator_loss(
        &self,
        g: &mut Graph<T>,
        dp: &Bound,
        z: &[T],
        fake: &[T],
        u: &[T],
        gp_coeff: f64,
    ) -> (Var, Var, Var) {
        let d = self.latent_dim;
        let b = z.len() / d;
        let zr = g.input(Tensor::new(vec![b, d], z.to_vec()));
        let zf = g.input(Tensor::new(vec![b, d], fake.to_vec()));
        let real = self.critic.forward(g, dp, zr, self.slope()).out;
        let fake_s = self.critic.forward(g, dp, zf, self.slope()).out;
        let mr = g.mean(real);
        let mf = g.mean(fake_s);
        let w = g.sub(mr, mf);
        let mut xhat = Vec::with_capacity(z.len());
        for r in 0..b {
            for k in 0..d {
                xhat.push(u[r] * z[r * d + k] + (T::one() - u[r]) * fake[r * d + k]);
            }
        }
        let pen = self.gradient_penalty(g, dp, &xhat, gp_coeff);
        let plain = g.sub(mf, mr);
        let l = g.add(plain, pen);
        (l, pen, w)
    }

    pub fn to_checkpoint(&self, iter: u64) -> Checkpoint<T> {
        let meta = json!({"gan": self.cfg, "latent_dim": self.latent_dim, "iter": iter});
        let mut ck = Checkpoint::new(GAN_KIND, meta);
        ck.push_store("", &self.g_params);
        ck.push_store("", &self.d_params);
        ck
    }

    pub fn save(&self, path: &Path, iter: u64) -> Result<(), GanError> {
        Ok(save_checkpoint(path, &self.to_checkpoint(iter))?)
    }

    pub fn load(path: &Path) -> Result<Self, GanError> {
        let ck = load_checkpoint::<T>(path)?;
        ck.expect_kind(GAN_KIND)?;
        let cfg: GanConfig = serde_json::from_value(ck.meta["gan"].clone()).map_err(CheckpointError::from)?;
        let latent_dim = ck.meta["latent_dim"]
            .as_u64()
            .ok_or_else(|| CheckpointError::Missing("latent_dim".into()))? as usize;
        let mut gan = Self::new(cfg, latent_dim, 0)?;
        ck.fill_store("", &mut gan.g_params)?;
        ck.fill_store("", &mut gan.d_params)?;
        Ok(gan)
    }
}

/// Alternating optimizer state.
pub struct GanTrainer<T> {
    pub gan: LatentGan<T>,
    pub adam_g: Adam<T>,
    pub adam_d: Adam<T>,
    pub iter: u64,
    rng: ChaCha8Rng,
}

impl<T: Scalar> GanTrainer<T> {
    pub fn new(gan: LatentGan<T>, seed: u64) -> Self {
        let adam_g = Adam::new(&gan.g_params, gan.cfg.adam);
        let adam_d = Adam::new(&gan.d_params, gan.cfg.adam);
        Self {
            gan,
            adam_g,
            adam_d,
            iter: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn real_batch(&mut self, latents: &[Vec<T>]) -> Vec<T> {
        (0..self.gan.cfg.batch)
            .flat_map(|_| latents[self.rng.random_range(0..latents.len())].clone())
            .collect()
    }

    /// `critic_steps` critic updates then one generator update.
    pub fn step(&mut self, latents: &[Vec<T>]) -> Result<GanStepStats, GanError> {
        if latents.is_empty() {
            return Err(GanError::EmptyLatents);
        }
        let cfg = self.gan.cfg.clone();
        let (mut l_d, mut pen_v, mut w_v) = (0.0, 0.0, 0.0);
        for _ in 0..cfg.critic_steps {
            let z = self.real_batch(latents);
            let eps = gaussian::<T>(&mut self.rng, cfg.batch * cfg.noise_dim);
            let fake = self.gan.generate_latent(&eps);
            let u: Vec<T> = (0..cfg.batch).map(|_| T::lit(self.rng.random::<f64>())).collect();
            let mut g = Graph::new();
            let dp = self.gan.d_params.bind(&mut g, true);
            let (l, pen, w) = self.gan.discriminator_loss(&mut g, &dp, &z, &fake, &u, cfg.gp_coeff);
            l_d = g.value(l).data()[0].as_f64();
            pen_v = g.value(pen).data()[0].as_f64();
            w_v = g.value(w).data()[0].as_f64();
            if !l_d.is_finite() {
                return Err(GanError::NonFiniteLoss(self.iter));
            }
            let mut grads = g.backward(l);
            let gd = dp.grads(&g, &mut grads);
            self.adam_d.step(&mut self.gan.d_params, &gd, cfg.lr);
        }
        let eps = gaussian::<T>(&mut self.rng, cfg.batch * cfg.noise_dim);
        let mut g = Graph::new();
        let gp = self.gan.g_params.bind(&mut g, true);
        let dp = self.gan.d_params.bind(&mut g, false);
        let lg = self.gan.generator_loss(&mut g, &gp, &dp, &eps);
        let l_g = g.value(lg).data()[0].as_f64();
        if !l_g.is_finite() {
            return Err(GanError::NonFiniteLoss(self.iter));
        }
        let neg = g.scale(lg, -T::one());
        let mut grads = g.backward(neg);
        let gg = gp.grads(&g, &mut grads);
        self.adam_g.step(&mut self.gan.g_params, &gg, cfg.lr);
        self.iter += 1;
        Ok(GanStepStats {
            iter: self.iter,
            l_d,
            l_g,
            gp: pen_v,
            wasserstein: w_v,
        })
    }
}

/// Runs `cfg.iterations` generator updates and returns the model with the
/// per-iteration statistics.
pub fn train_gan<T: Scalar>(
    latents: &[Vec<T>],
    cfg: GanConfig,
    seed: u64,
) -> Result<(LatentGan<T>, Vec<GanStepStats>), GanError> {
    let d = latents.first().ok_or(GanError::EmptyLatents)?.len();
    let iterations = cfg.iterations;
    let mut tr = GanTrainer::new(LatentGan::new(cfg, d, seed)?, seed ^ 0x6a4e_0000_0000_0001);
    let mut log = Vec::with_capacity(iterations as usize);
    for _ in 0..iterations {
        log.push(tr.step(latents)?);
    }
    Ok((tr.gan, log))
}

/// Decodes `n` sampled latents; each sequence comes with its validity verdict.
pub fn generate_sequences<T: Scalar>(
    n: usize,
    gan: &LatentGan<T>,
    model: &CadModel<T>,
    geo: &GeometryConfig,
    seed: u64,
) -> Result<Vec<(TokenMatrix, ValidityReport)>, GanError> {
    if gan.latent_dim != model.d_model() {
        return Err(GanError::IncompatibleCheckpoints {
            gan: gan.latent_dim,
            model: model.d_model(),
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = gaussian::<T>(&mut rng, n * gan.cfg.noise_dim);
    let flat = gan.generate_latent(&eps);
    let zs: Vec<Vec<T>> = flat.chunks(gan.latent_dim).map(<[T]>::to_vec).collect();
    let decoded = model.decode_batch(&zs)?;
    Ok(decoded
        .into_iter()
        .map(|m| {
            let verdict = match parse_sequence(&m) {
                Ok(seq) => check_validity(&seq, geo),
                Err(_) => ValidityReport::fail(ValidityRule::TrailingLoop),
            };
            (m, verdict)
        })
        .collect())
}
