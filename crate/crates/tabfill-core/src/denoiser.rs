//! The reverse-process MLP.
//!
//! Input per row, concatenated in this order: noisy target block
//! `(num ++ one-hot cat)`, condition block `(num ++ one-hot cat)`, mask
//! indicator bits (one per numerical column, one per categorical column,
//! 1 = observed), and the timestep embedding. Output: one noise
//! prediction per numerical column followed by one logit per one-hot
//! position. Outputs at observed positions are produced but ignored by
//! callers.
//!
//! Parameters live in a single flat vector so the optimizer and the
//! finite-difference tests can treat the model as `R^n -> loss`.
//! Gradients are accumulated in a fixed order, keeping training runs
//! bit-reproducible.

use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::math::{silu, silu_grad};
use crate::schema::TableSchema;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub hidden_dims: Vec<usize>,
    /// Sinusoidal embedding width; must be even.
    pub t_embed_dim: usize,
    /// Dropout rate on hidden activations during training.
    pub dropout: f64,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            hidden_dims: alloc::vec![256, 512, 512, 512, 512, 256],
            t_embed_dim: 128,
            dropout: 0.0,
        }
    }
}

/// Offsets of one affine layer inside the flat parameter vector.
/// Weights are row-major `[n_in][n_out]`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct LinearSpec {
    w: usize,
    b: usize,
    n_in: usize,
    n_out: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Denoiser {
    config: DenoiserConfig,
    n_num: usize,
    cat_widths: Vec<usize>,
    /// Timestep-embedding affine followed by the MLP layers.
    specs: Vec<LinearSpec>,
    params: Vec<f64>,
}

/// Intermediate activations kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    sin_embed: Vec<f64>,
    embed_pre: Vec<f64>,
    input: Vec<f64>,
    /// Pre-activations of every MLP layer.
    pre: Vec<Vec<f64>>,
    /// Post-activation outputs of the hidden layers.
    act: Vec<Vec<f64>>,
    /// Inverted-dropout multipliers per hidden layer; empty when dropout
    /// was not applied.
    drop: Vec<Vec<f64>>,
}

impl Denoiser {
    /// Initializes weights uniformly in `(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    /// with zero biases, deterministically for a given seed.
    pub fn init(schema: &TableSchema, config: DenoiserConfig, seed: u64) -> Self {
        assert!(config.t_embed_dim >= 2 && config.t_embed_dim % 2 == 0);
        assert!(!config.hidden_dims.is_empty());
        assert!((0.0..1.0).contains(&config.dropout));

        let n_num = schema.n_num();
        let cat_widths = schema.cat_widths().to_vec();
        let onehot: usize = cat_widths.iter().sum();
        let d_emb = config.t_embed_dim;
        let d_in = 2 * (n_num + onehot) + (n_num + cat_widths.len()) + d_emb;
        let d_out = n_num + onehot;

        let mut dims = Vec::with_capacity(config.hidden_dims.len() + 2);
        dims.push(d_in);
        dims.extend_from_slice(&config.hidden_dims);
        dims.push(d_out);

        let mut specs = Vec::new();
        let mut off = 0usize;
        let push_spec = |n_in: usize, n_out: usize, off: &mut usize| {
            let spec = LinearSpec { w: *off, b: *off + n_in * n_out, n_in, n_out };
            *off += n_in * n_out + n_out;
            spec
        };
        specs.push(push_spec(d_emb, d_emb, &mut off));
        for w in dims.windows(2) {
            specs.push(push_spec(w[0], w[1], &mut off));
        }

        let mut params = alloc::vec![0.0; off];
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        for spec in &specs {
            let bound = 1.0 / libm::sqrt(spec.n_in as f64);
            for w in &mut params[spec.w..spec.w + spec.n_in * spec.n_out] {
                *w = (2.0 * rng.gen::<f64>() - 1.0) * bound;
            }
            // Biases stay zero.
        }

        Denoiser { config, n_num, cat_widths, specs, params }
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn n_num(&self) -> usize {
        self.n_num
    }

    pub fn cat_widths(&self) -> &[usize] {
        &self.cat_widths
    }

    pub fn onehot_width(&self) -> usize {
        self.cat_widths.iter().sum()
    }

    pub fn input_width(&self) -> usize {
        let onehot = self.onehot_width();
        2 * (self.n_num + onehot) + (self.n_num + self.cat_widths.len()) + self.config.t_embed_dim
    }

    pub fn output_width(&self) -> usize {
        self.n_num + self.onehot_width()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Splits a raw output row into `(eps_pred, logits)`.
    pub fn split_output<'a>(&self, out: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        out.split_at(self.n_num)
    }

    /// Sinusoidal timestep features: `d/2` sines then `d/2` cosines at
    /// geometrically spaced frequencies. Distinct for distinct `t` well
    /// past 10^4 steps.
    fn sinusoid(&self, t: usize, out: &mut [f64]) {
        let half = self.config.t_embed_dim / 2;
        let scale = libm::log(10_000.0) / half as f64;
        for j in 0..half {
            let freq = libm::exp(-(j as f64) * scale);
            let arg = t as f64 * freq;
            out[j] = libm::sin(arg);
            out[half + j] = libm::cos(arg);
        }
    }

    fn affine(&self, spec: &LinearSpec, input: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.params[spec.b..spec.b + spec.n_out]);
        for (i, &a) in input.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let row = &self.params[spec.w + i * spec.n_out..spec.w + (i + 1) * spec.n_out];
            for (o, &w) in out.iter_mut().zip(row) {
                *o += a * w;
            }
        }
    }

    /// Learned timestep embedding: affine over the sinusoid, then SiLU.
    pub fn embed_timestep(&self, t: usize) -> Vec<f64> {
        let d = self.config.t_embed_dim;
        let mut sin = alloc::vec![0.0; d];
        self.sinusoid(t, &mut sin);
        let mut pre = alloc::vec![0.0; d];
        self.affine(&self.specs[0], &sin, &mut pre);
        pre.iter().map(|&z| silu(z)).collect()
    }

    /// Runs the MLP on a fully assembled input vector.
    pub fn forward_input(&self, input: &[f64]) -> Vec<f64> {
        assert_eq!(input.len(), self.input_width());
        let mut a = input.to_vec();
        let n_layers = self.specs.len() - 1;
        for (l, spec) in self.specs[1..].iter().enumerate() {
            let mut z = alloc::vec![0.0; spec.n_out];
            self.affine(spec, &a, &mut z);
            if l + 1 < n_layers {
                for v in z.iter_mut() {
                    *v = silu(*v);
                }
            }
            a = z;
        }
        a
    }

    fn assemble_input(&self, x_target: &[f64], x_cond: &[f64], mask_bits: &[f64], emb: &[f64])
        -> Vec<f64>
    {
        let block = self.n_num + self.onehot_width();
        assert_eq!(x_target.len(), block);
        assert_eq!(x_cond.len(), block);
        assert_eq!(mask_bits.len(), self.n_num + self.cat_widths.len());
        let mut input = Vec::with_capacity(self.input_width());
        input.extend_from_slice(x_target);
        input.extend_from_slice(x_cond);
        input.extend_from_slice(mask_bits);
        input.extend_from_slice(emb);
        input
    }

    /// Inference forward pass (dropout disabled).
    pub fn forward(&self, x_target: &[f64], x_cond: &[f64], mask_bits: &[f64], t: usize)
        -> Vec<f64>
    {
        let emb = self.embed_timestep(t);
        let input = self.assemble_input(x_target, x_cond, mask_bits, &emb);
        self.forward_input(&input)
    }

    /// Training forward pass; caches activations for [`backward`](Self::backward).
    /// Dropout is applied only when `dropout_rng` is provided and the
    /// configured rate is positive.
    pub fn forward_cached(
        &self,
        x_target: &[f64],
        x_cond: &[f64],
        mask_bits: &[f64],
        t: usize,
        mut dropout_rng: Option<&mut ChaCha12Rng>,
    ) -> (Vec<f64>, ForwardCache) {
        let d = self.config.t_embed_dim;
        let mut sin_embed = alloc::vec![0.0; d];
        self.sinusoid(t, &mut sin_embed);
        let mut embed_pre = alloc::vec![0.0; d];
        self.affine(&self.specs[0], &sin_embed, &mut embed_pre);
        let emb: Vec<f64> = embed_pre.iter().map(|&z| silu(z)).collect();

        let input = self.assemble_input(x_target, x_cond, mask_bits, &emb);
        let n_layers = self.specs.len() - 1;
        let mut pre = Vec::with_capacity(n_layers);
        let mut act = Vec::with_capacity(n_layers.saturating_sub(1));
        let mut drop = Vec::new();

        let mut a = input.clone();
        for (l, spec) in self.specs[1..].iter().enumerate() {
            let mut z = alloc::vec![0.0; spec.n_out];
            self.affine(spec, &a, &mut z);
            pre.push(z.clone());
            if l + 1 < n_layers {
                let mut h: Vec<f64> = z.iter().map(|&v| silu(v)).collect();
                if self.config.dropout > 0.0 {
                    if let Some(rng) = dropout_rng.as_deref_mut() {
                        let keep = 1.0 - self.config.dropout;
                        let mask: Vec<f64> = (0..h.len())
                            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                            .collect();
                        for (v, &m) in h.iter_mut().zip(&mask) {
                            *v *= m;
                        }
                        drop.push(mask);
                    }
                }
                act.push(h.clone());
                a = h;
            } else {
                a = z;
            }
        }
        (a, ForwardCache { sin_embed, embed_pre, input, pre, act, drop })
    }

    /// Accumulates `dL/dparams` into `grads` (same length as the flat
    /// parameter vector) given `dL/doutput` for one cached row.
    pub fn backward(&self, cache: &ForwardCache, d_out: &[f64], grads: &mut [f64]) {
        assert_eq!(grads.len(), self.params.len());
        assert_eq!(d_out.len(), self.output_width());
        let n_layers = self.specs.len() - 1;

        let mut d = d_out.to_vec();
        let mut d_input = alloc::vec![0.0; 0];
        for l in (0..n_layers).rev() {
            let spec = &self.specs[l + 1];
            let a_in: &[f64] = if l == 0 { &cache.input } else { &cache.act[l - 1] };

            for (j, &dj) in d.iter().enumerate() {
                grads[spec.b + j] += dj;
            }
            let mut d_in = alloc::vec![0.0; spec.n_in];
            for (i, &ai) in a_in.iter().enumerate() {
                let row = spec.w + i * spec.n_out;
                let wrow = &self.params[row..row + spec.n_out];
                let grow = &mut grads[row..row + spec.n_out];
                let mut acc = 0.0;
                for j in 0..spec.n_out {
                    grow[j] += ai * d[j];
                    acc += wrow[j] * d[j];
                }
                d_in[i] = acc;
            }
            if l == 0 {
                d_input = d_in;
            } else {
                if !cache.drop.is_empty() {
                    for (v, &m) in d_in.iter_mut().zip(&cache.drop[l - 1]) {
                        *v *= m;
                    }
                }
                d = d_in
                    .iter()
                    .zip(&cache.pre[l - 1])
                    .map(|(&g, &z)| g * silu_grad(z))
                    .collect();
            }
        }

        // Timestep-embedding affine: its SiLU output is the tail of the
        // assembled input.
        let spec = &self.specs[0];
        let emb_off = self.input_width() - self.config.t_embed_dim;
        let d_emb = &d_input[emb_off..];
        let d_pre: Vec<f64> = d_emb
            .iter()
            .zip(&cache.embed_pre)
            .map(|(&g, &z)| g * silu_grad(z))
            .collect();
        for (j, &dj) in d_pre.iter().enumerate() {
            grads[spec.b + j] += dj;
        }
        for (i, &ai) in cache.sin_embed.iter().enumerate() {
            let row = spec.w + i * spec.n_out;
            for j in 0..spec.n_out {
                grads[row + j] += ai * d_pre[j];
            }
        }
    }
}
