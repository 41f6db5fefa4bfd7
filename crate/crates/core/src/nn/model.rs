use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Bound, Graph, ParamId, ParamStore, Tensor, Var};
use crate::cad::{slot_max, CommandType, TokenMatrix, TokenRow, N_COMMANDS, N_PARAMS, N_PARAM_CLASSES, UNUSED};
use crate::Scalar;

use super::layers::{dropout, normal, DecoderBlock, EncoderBlock, LayerNorm, Linear, Mode};
use super::{ModelConfig, ModelError};

/// Parameter handles of the autoencoder, laid out deterministically from a
/// [`ModelConfig`].
#[derive(Clone, Debug)]
pub struct Arch {
    pub cmd_embed: ParamId,
    pub param_embed: ParamId,
    pub param_mix: Linear,
    pub pos: ParamId,
    pub encoder: Vec<EncoderBlock>,
    pub enc_ln: LayerNorm,
    pub queries: ParamId,
    pub decoder: Vec<DecoderBlock>,
    pub dec_ln: LayerNorm,
    pub cmd_head: Linear,
    pub param_head: Linear,
    pub proj: Linear,
}

/// Transformer autoencoder over token matrices with a projection head for
/// the contrastive branch.
#[derive(Clone, Debug)]
pub struct CadModel<T> {
    pub cfg: ModelConfig,
    pub params: ParamStore<T>,
    pub arch: Arch,
}

/// Handles produced by [`CadModel::encode`].
pub struct Encoded {
    pub z: Var,
    /// Attention nodes of the encoder blocks, in order.
    pub attn: Vec<Var>,
}

/// Handles produced by [`CadModel::decode`].
pub struct Decoded {
    /// `[B*N, 6]`.
    pub cmd_logits: Var,
    /// `[R*16, 257]` for the `R` selected rows.
    pub param_logits: Var,
}

impl<T: Scalar> CadModel<T> {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        cfg.check()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rng = &mut rng;
        let d = cfg.d_model;
        let (h, f, n) = (cfg.heads, cfg.d_ff, cfg.seq_len);
        let mut ps = ParamStore::new();
        let emb_std = 1.0 / (d as f64).sqrt();
        let cmd_embed = ps.add("embed.cmd", normal(rng, vec![N_COMMANDS, d], emb_std));
        let param_embed = ps.add(
            "embed.param",
            normal(rng, vec![N_PARAMS * N_PARAM_CLASSES, d / N_PARAMS], emb_std),
        );
        let param_mix = Linear::new(&mut ps, "embed.mix", d, d, rng);
        let pos = ps.add("embed.pos", normal(rng, vec![n, d], emb_std));
        let encoder = (0..cfg.layers)
            .map(|l| EncoderBlock::new(&mut ps, &format!("enc{l}"), d, h, f, rng))
            .collect();
        let enc_ln = LayerNorm::new(&mut ps, "enc.ln", d);
        let queries = ps.add("dec.queries", normal(rng, vec![n, d], emb_std));
        let decoder = (0..cfg.layers)
            .map(|l| DecoderBlock::new(&mut ps, &format!("dec{l}"), d, h, f, rng))
            .collect();
        let dec_ln = LayerNorm::new(&mut ps, "dec.ln", d);
        let cmd_head = Linear::new(&mut ps, "head.cmd", d, N_COMMANDS, rng);
        let param_head = Linear::new(&mut ps, "head.param", d, N_PARAMS * N_PARAM_CLASSES, rng);
        let proj = Linear::new(&mut ps, "proj", d, d, rng);
        Ok(Self {
            cfg,
            params: ps,
            arch: Arch {
                cmd_embed,
                param_embed,
                param_mix,
                pos,
                encoder,
                enc_ln,
                queries,
                decoder,
                dec_ln,
                cmd_head,
                param_head,
                proj,
            },
        })
    }

    pub fn d_model(&self) -> usize {
        self.cfg.d_model
    }

    fn check_tokens(&self, tokens: &[TokenMatrix]) -> Result<(), ModelError> {
        for (b, t) in tokens.iter().enumerate() {
            if t.n_rows() != self.cfg.seq_len {
                return Err(ModelError::Shape {
                    expected: self.cfg.seq_len,
                    found: t.n_rows(),
                });
            }
            for (k, row) in t.rows().iter().enumerate() {
                let bad = row[0] < 0
                    || row[0] as usize >= N_COMMANDS
                    || row[1..].iter().any(|&v| !(UNUSED..=255).contains(&v));
                if bad {
                    return Err(ModelError::IndexOutOfRange { item: b, row: k });
                }
            }
        }
        Ok(())
    }

    /// `e_k = W_cmd[t_k] + mix(concat_s W_param[s, p_k,s]) + pos_k`, `[B*N, D]`.
    pub fn embed(&self, g: &mut Graph<T>, p: &Bound, tokens: &[TokenMatrix]) -> Result<Var, ModelError> {
        self.check_tokens(tokens)?;
        let n = self.cfg.seq_len;
        let rows = tokens.len() * n;
        let mut cmd_idx = Vec::with_capacity(rows);
        let mut param_idx = Vec::with_capacity(rows * N_PARAMS);
        for t in tokens {
            for row in t.rows() {
                cmd_idx.push(row[0] as usize);
                for s in 0..N_PARAMS {
                    param_idx.push(s * N_PARAM_CLASSES + (row[s + 1] + 1) as usize);
                }
            }
        }
        let pos_idx = (0..rows).map(|r| r % n).collect();
        let a = &self.arch;
        let ec = g.gather(p.var(a.cmd_embed), cmd_idx);
        let ep = g.gather(p.var(a.param_embed), param_idx);
        let ep = g.reshape(ep, vec![rows, self.cfg.d_model]);
        let ep = a.param_mix.forward(g, p, ep);
        let epos = g.gather(p.var(a.pos), pos_idx);
        let e = g.add(ec, ep);
        Ok(g.add(e, epos))
    }

    /// Embedding, encoder blocks and average pooling to `z [B, D]`.
    pub fn encode(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        tokens: &[TokenMatrix],
        mode: &mut Mode<'_>,
    ) -> Result<Encoded, ModelError> {
        let (b, n) = (tokens.len(), self.cfg.seq_len);
        let x = self.embed(g, p, tokens)?;
        let mut x = dropout(g, x, mode);
        let mut attn = Vec::with_capacity(self.arch.encoder.len());
        for blk in &self.arch.encoder {
            let (y, a) = blk.forward(g, p, x, b, n, mode);
            x = y;
            attn.push(a);
        }
        let h = self.arch.enc_ln.forward(g, p, x);
        let weights = self.pool_weights(tokens);
        let z = g.group_sum(h, n, weights);
        Ok(Encoded { z, attn })
    }

    fn pool_weights(&self, tokens: &[TokenMatrix]) -> Vec<T> {
        let n = self.cfg.seq_len;
        let mut w = Vec::with_capacity(tokens.len() * n);
        for t in tokens {
            let len = if self.cfg.masked_pooling {
                t.first_eos().map_or(n, |e| e + 1)
            } else {
                n
            };
            let v = T::lit(1.0 / len as f64);
            w.extend((0..n).map(|k| if k < len { v } else { T::zero() }));
        }
        w
    }

    /// Constant queries attend to themselves and cross-attend to the
    /// one-element memory `[z]`. Parameter logits are produced only for the
    /// flat `B*N` row indices in `param_rows` (all rows when `None`).
    pub fn decode(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        z: Var,
        param_rows: Option<&[usize]>,
        mode: &mut Mode<'_>,
    ) -> Decoded {
        let n = self.cfg.seq_len;
        let b = g.value(z).rows();
        let q_idx = (0..b * n).map(|r| r % n).collect();
        let x = g.gather(p.var(self.arch.queries), q_idx);
        let mut x = dropout(g, x, mode);
        for blk in &self.arch.decoder {
            x = blk.forward(g, p, x, z, b, n, 1, mode);
        }
        let h = self.arch.dec_ln.forward(g, p, x);
        let cmd_logits = self.arch.cmd_head.forward(g, p, h);
        let (hp, r) = match param_rows {
            Some(rows) => (g.gather(h, rows.to_vec()), rows.len()),
            None => (h, b * n),
        };
        let pl = self.arch.param_head.forward(g, p, hp);
        let param_logits = g.reshape(pl, vec![r * N_PARAMS, N_PARAM_CLASSES]);
        Decoded { cmd_logits, param_logits }
    }

    /// Linear projection of the latent for the contrastive branch.
    pub fn project(&self, g: &mut Graph<T>, p: &Bound, z: Var) -> Var {
        self.arch.proj.forward(g, p, z)
    }

    /// Eval-mode latents, one `D`-vector per input.
    pub fn encode_batch(&self, tokens: &[TokenMatrix]) -> Result<Vec<Vec<T>>, ModelError> {
        let mut out = Vec::with_capacity(tokens.len());
        for chunk in tokens.chunks(EVAL_CHUNK) {
            let mut g = Graph::new();
            let p = self.params.bind(&mut g, false);
            let enc = self.encode(&mut g, &p, chunk, &mut Mode::Eval)?;
            let zt = g.value(enc.z);
            if !zt.is_finite() {
                return Err(ModelError::NonFinite("latent".into()));
            }
            out.extend((0..zt.rows()).map(|r| zt.row(r).to_vec()));
        }
        Ok(out)
    }

    /// Eval-mode projected latents.
    pub fn project_batch(&self, zs: &[Vec<T>]) -> Result<Vec<Vec<T>>, ModelError> {
        if zs.is_empty() {
            return Ok(Vec::new());
        }
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let z = g.input(self.latent_tensor(zs)?);
        let y = self.project(&mut g, &p, z);
        let t = g.value(y);
        Ok((0..t.rows()).map(|r| t.row(r).to_vec()).collect())
    }

    fn latent_tensor(&self, zs: &[Vec<T>]) -> Result<Tensor<T>, ModelError> {
        let d = self.cfg.d_model;
        if let Some(bad) = zs.iter().find(|z| z.len() != d) {
            return Err(ModelError::Shape {
                expected: d,
                found: bad.len(),
            });
        }
        if zs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("input latent".into()));
        }
        Ok(Tensor::new(vec![zs.len(), d], zs.concat()))
    }

    /// Greedy decoding, cut after the first predicted EOS.
    pub fn decode_batch(&self, zs: &[Vec<T>]) -> Result<Vec<TokenMatrix>, ModelError> {
        Ok(self.decode_batch_raw(zs)?.iter().map(truncate_at_eos).collect())
    }

    /// Greedy decoding of latents into raw `N x 17` predictions.
    pub fn decode_batch_raw(&self, zs: &[Vec<T>]) -> Result<Vec<TokenMatrix>, ModelError> {
        let mut out = Vec::with_capacity(zs.len());
        for chunk in zs.chunks(EVAL_CHUNK) {
            let mut g = Graph::new();
            let p = self.params.bind(&mut g, false);
            let z = g.input(self.latent_tensor(chunk)?);
            let dec = self.decode(&mut g, &p, z, None, &mut Mode::Eval);
            let (cl, pl) = (g.value(dec.cmd_logits), g.value(dec.param_logits));
            if !cl.is_finite() || !pl.is_finite() {
                return Err(ModelError::NonFinite("logits".into()));
            }
            let n = self.cfg.seq_len;
            for b in 0..chunk.len() {
                let cmd = &cl.data()[b * n * N_COMMANDS..(b + 1) * n * N_COMMANDS];
                let par = &pl.data()[b * n * N_PARAMS * N_PARAM_CLASSES..(b + 1) * n * N_PARAMS * N_PARAM_CLASSES];
                out.push(logits_to_tokens(cmd, par, n));
            }
        }
        Ok(out)
    }

    /// Encode then decode, eval mode.
    pub fn reconstruct(&self, tokens: &[TokenMatrix]) -> Result<Vec<TokenMatrix>, ModelError> {
        let z = self.encode_batch(tokens)?;
        self.decode_batch(&z)
    }
}

const EVAL_CHUNK: usize = 64;

fn argmax<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Per row: argmax command, then for each slot the command uses the argmax
/// over that slot's legal values. Unused slots get the sentinel.
pub fn logits_to_tokens<T: Scalar>(cmd_logits: &[T], param_logits: &[T], n: usize) -> TokenMatrix {
    let mut rows = Vec::with_capacity(n);
    for k in 0..n {
        let t = argmax(&cmd_logits[k * N_COMMANDS..(k + 1) * N_COMMANDS]);
        let ctype = CommandType::from_index(t as i64).expect("argmax within command classes");
        let mask = ctype.used_mask();
        let mut row: TokenRow = [UNUSED; N_PARAMS + 1];
        row[0] = t as i16;
        for s in 0..N_PARAMS {
            if mask[s] {
                let base = (k * N_PARAMS + s) * N_PARAM_CLASSES;
                // class c encodes value c-1, so legal values 0..=max are classes 1..=max+1
                let legal = &param_logits[base + 1..base + 2 + slot_max(s) as usize];
                row[s + 1] = argmax(legal) as i16;
            }
        }
        rows.push(row);
    }
    TokenMatrix::from_rows(rows)
}

/// Truncates a raw prediction after its first EOS and pads with EOS, so
/// that rows predicted past the stop symbol are dropped.
pub fn truncate_at_eos(m: &TokenMatrix) -> TokenMatrix {
    TokenMatrix::padded(m.trimmed().to_vec(), m.n_rows())
}
