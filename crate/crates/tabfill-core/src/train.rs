//! Training: the weighted hybrid loss over masked target variables and
//! the optimization loop with periodic validation-based checkpointing.
//!
//! Per step: a batch of rows is drawn with replacement, a dynamic mask is
//! drawn, each row gets its own uniform timestep, masked numerical values
//! are noised with the Gaussian forward process and masked categorical
//! values with the multinomial one, and the denoiser is trained on
//!
//! `L = lambda_num * MSE(target noise) + lambda_cat * mean_i L_i(target)`
//!
//! where `L_i` is the per-categorical-feature variational term: the KL
//! between the true and predicted reverse posteriors for `t >= 2` and the
//! decoder negative log-likelihood at `t == 1`, each averaged over the
//! rows where feature `i` was masked. `lambda_num` is fixed to 1.
//!
//! Everything is seeded: step `s` derives its RNG from `(seed, s)`, so a
//! run is bit-reproducible and any step can be replayed in isolation.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::denoiser::{Denoiser, DenoiserConfig};
use crate::diffusion::{
    categorical_kl, gaussian_forward, make_schedule, mix_with_uniform, multinomial_posterior,
    DiffusionSchedule, MaskedMse, ScheduleError, ScheduleKind, KL_PROB_FLOOR,
};
use crate::masking::{draw_masks, MaskError, MaskPair};
use crate::math::{derive_seed, sample_categorical, softmax_in_place};
use crate::preprocess::{EncodedBatch, PreprocessError, Preprocessor};
use crate::sample::{ConditionalSampler, SampleError, Sampler};
use crate::schema::{DataTable, SchemaError};

/// Stream ids for deriving independent RNG seeds from the master seed.
const STREAM_INIT: u64 = 0x7001;
const STREAM_VAL_FIXTURE: u64 = 0x7002;
const STREAM_VAL_SAMPLER: u64 = 0x7003;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaCat {
    Constant1,
    LinearDecayFrom1,
}

/// How the sampler decodes a categorical target at the final step:
/// sample from the predicted `x0` probabilities or take their argmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum T1Decode {
    Sample,
    Argmax,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: u64,
    /// Shared diffusion timestep count for both processes.
    pub t_count: usize,
    pub num_schedule_kind: ScheduleKind,
    pub num_beta_min: f64,
    pub num_beta_max: f64,
    pub cat_schedule_kind: ScheduleKind,
    /// Beta range for the categorical process; ignored by the cosine kind.
    pub cat_beta_min: f64,
    pub cat_beta_max: f64,
    /// Cap on the fraction of maskable numerical features masked per batch.
    pub f_mask_num: f64,
    /// Cap on the fraction of maskable categorical features masked per batch.
    pub f_mask_cat: f64,
    pub lambda_cat: LambdaCat,
    /// Final value of the linear lambda decay.
    pub lambda_cat_floor: f64,
    pub seed: u64,
    /// Validation / checkpoint cadence in steps.
    pub checkpoint_every: u64,
    /// Number of validation rows scored at each checkpoint.
    pub val_rows: usize,
    pub denoiser: DenoiserConfig,
    pub t1_decode: T1Decode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-4,
            batch_size: 4096,
            steps: 30_000,
            t_count: 1000,
            num_schedule_kind: ScheduleKind::Linear,
            num_beta_min: 1e-4,
            num_beta_max: 0.02,
            cat_schedule_kind: ScheduleKind::Cosine,
            cat_beta_min: 1e-4,
            cat_beta_max: 0.02,
            f_mask_num: 0.5,
            f_mask_cat: 0.2,
            lambda_cat: LambdaCat::LinearDecayFrom1,
            lambda_cat_floor: 0.1,
            seed: 0,
            checkpoint_every: 1000,
            val_rows: 512,
            denoiser: DenoiserConfig::default(),
            t1_decode: T1Decode::Sample,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let ok = self.learning_rate > 0.0
            && self.batch_size > 0
            && self.steps > 0
            && self.t_count > 0
            && (0.0..=1.0).contains(&self.f_mask_num)
            && (0.0..=1.0).contains(&self.f_mask_cat)
            && (self.f_mask_num > 0.0 || self.f_mask_cat > 0.0)
            && (0.0..=1.0).contains(&self.lambda_cat_floor)
            && self.checkpoint_every > 0
            && self.val_rows > 0;
        if ok {
            Ok(())
        } else {
            Err(TrainError::BadConfig)
        }
    }

    pub fn num_schedule(&self) -> Result<DiffusionSchedule, ScheduleError> {
        make_schedule(self.t_count, self.num_schedule_kind, self.num_beta_min, self.num_beta_max)
    }

    pub fn cat_schedule(&self) -> Result<DiffusionSchedule, ScheduleError> {
        make_schedule(self.t_count, self.cat_schedule_kind, self.cat_beta_min, self.cat_beta_max)
    }

    /// Categorical loss weight at a 0-based step. Decays linearly from 1
    /// to the floor over the run; `lambda_num` is fixed to 1.
    pub fn lambda_cat_at(&self, step: u64) -> f64 {
        match self.lambda_cat {
            LambdaCat::Constant1 => 1.0,
            LambdaCat::LinearDecayFrom1 => {
                if self.steps <= 1 {
                    1.0
                } else {
                    let frac = step as f64 / (self.steps - 1) as f64;
                    (1.0 - (1.0 - self.lambda_cat_floor) * frac).max(self.lambda_cat_floor)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    BadConfig,
    Schema(SchemaError),
    Schedule(ScheduleError),
    Preprocess(PreprocessError),
    Mask(MaskError),
    Sample(SampleError),
    /// Training aborted; the message carries step, timestep histogram,
    /// and gradient norm diagnostics.
    NonFiniteLoss { step: u64, diagnostics: String },
    NonFiniteValidation { step: u64 },
}

impl core::fmt::Display for TrainError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TrainError::BadConfig => write!(f, "invalid training configuration"),
            TrainError::Schema(e) => write!(f, "schema error: {e}"),
            TrainError::Schedule(e) => write!(f, "schedule error: {e}"),
            TrainError::Preprocess(e) => write!(f, "preprocess error: {e}"),
            TrainError::Mask(e) => write!(f, "mask error: {e}"),
            TrainError::Sample(e) => write!(f, "sampler error: {e}"),
            TrainError::NonFiniteLoss { step, diagnostics } => {
                write!(f, "non-finite loss at step {step}: {diagnostics}")
            }
            TrainError::NonFiniteValidation { step } => {
                write!(f, "non-finite validation metric at step {step}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for TrainError {}

impl From<ScheduleError> for TrainError {
    fn from(e: ScheduleError) -> Self {
        TrainError::Schedule(e)
    }
}
impl From<PreprocessError> for TrainError {
    fn from(e: PreprocessError) -> Self {
        TrainError::Preprocess(e)
    }
}
impl From<MaskError> for TrainError {
    fn from(e: MaskError) -> Self {
        TrainError::Mask(e)
    }
}
impl From<SchemaError> for TrainError {
    fn from(e: SchemaError) -> Self {
        TrainError::Schema(e)
    }
}
impl From<SampleError> for TrainError {
    fn from(e: SampleError) -> Self {
        TrainError::Sample(e)
    }
}

/// Adam with the standard moment parameters and bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(learning_rate: f64, n_params: usize) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            m: alloc::vec![0.0; n_params],
            v: alloc::vec![0.0; n_params],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len());
        self.t += 1;
        let b1t = 1.0 - libm::pow(self.beta1, self.t as f64);
        let b2t = 1.0 - libm::pow(self.beta2, self.t as f64);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / b1t;
            let vhat = self.v[i] / b2t;
            params[i] -= self.learning_rate * mhat / (libm::sqrt(vhat) + self.epsilon);
        }
    }
}

/// One categorical supervision target: feature `slot` was masked, its
/// clean ordinal is `x0` and its sampled noisy state at timestep `t` is
/// `xt`.
#[derive(Debug, Clone, Copy)]
pub struct CatTarget {
    pub slot: usize,
    pub x0: u32,
    pub xt: u32,
}

/// One row of a training batch with all noise frozen, so the loss is a
/// deterministic function of the parameters.
#[derive(Debug, Clone)]
pub struct PreparedRow {
    pub t: usize,
    pub target_state: Vec<f64>,
    pub cond: Vec<f64>,
    pub mask_bits: Vec<f64>,
    pub num_target: Vec<bool>,
    pub eps_true: Vec<f64>,
    pub cat_targets: Vec<CatTarget>,
}

#[derive(Debug, Clone)]
pub struct PreparedBatch {
    pub rows: Vec<PreparedRow>,
    /// Total masked numerical cells across the batch.
    pub n_num_targets: usize,
    /// Rows in which each categorical feature is masked.
    pub cat_counts: Vec<usize>,
}

/// Applies the forward processes to a clean encoded batch under a mask:
/// draws one timestep per row, Gaussian-noises masked numerical entries,
/// and multinomial-noises masked categorical features.
pub fn prepare_batch(
    batch: &EncodedBatch,
    masks: &MaskPair,
    cat_widths: &[usize],
    num_sched: &DiffusionSchedule,
    cat_sched: &DiffusionSchedule,
    rng: &mut ChaCha12Rng,
) -> PreparedBatch {
    use rand_distr::StandardNormal;
    let t_count = num_sched.t_count();
    let n_num = batch.n_num;
    let n_cat = cat_widths.len();
    let onehot: usize = cat_widths.iter().sum();

    let mut rows = Vec::with_capacity(batch.n_rows);
    let mut n_num_targets = 0usize;
    let mut cat_counts = alloc::vec![0usize; n_cat];

    for r in 0..batch.n_rows {
        let t = rng.gen_range(1..=t_count);
        let mut target_state = alloc::vec![0.0; n_num + onehot];
        let mut cond = alloc::vec![0.0; n_num + onehot];
        let mut mask_bits = alloc::vec![0.0; n_num + n_cat];
        let mut num_target = alloc::vec![false; n_num];
        let mut eps_true = alloc::vec![0.0; n_num];
        let mut cat_targets = Vec::new();

        for i in 0..n_num {
            let x0 = batch.num_row(r)[i];
            if masks.num_row(r)[i] {
                cond[i] = x0;
                mask_bits[i] = 1.0;
            } else {
                let eps: f64 = rng.sample(StandardNormal);
                let xt = gaussian_forward(&[x0], t, &[eps], num_sched);
                target_state[i] = xt[0];
                eps_true[i] = eps;
                num_target[i] = true;
                n_num_targets += 1;
            }
        }
        let mut off = 0usize;
        for (c, &w) in cat_widths.iter().enumerate() {
            let block = &batch.cat_row(r)[off..off + w];
            if masks.cat_row(r)[c] {
                cond[n_num + off..n_num + off + w].copy_from_slice(block);
                mask_bits[n_num + c] = 1.0;
            } else {
                let x0 = block.iter().position(|&v| v == 1.0).expect("one-hot input") as u32;
                let probs = mix_with_uniform(block, cat_sched.alpha_bar(t));
                let xt = sample_categorical(&probs, rng.gen::<f64>()) as u32;
                target_state[n_num + off + xt as usize] = 1.0;
                cat_targets.push(CatTarget { slot: c, x0, xt });
                cat_counts[c] += 1;
            }
            off += w;
        }
        rows.push(PreparedRow {
            t,
            target_state,
            cond,
            mask_bits,
            num_target,
            eps_true,
            cat_targets,
        });
    }
    PreparedBatch { rows, n_num_targets, cat_counts }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    /// Masked-MSE term over numerical targets.
    pub num_term: f64,
    /// Mean over categorical features of the per-feature variational term.
    pub cat_term: f64,
    pub lambda_cat: f64,
    pub n_num_targets: usize,
    pub n_cat_targets: usize,
}

fn onehot(ord: u32, k: usize) -> Vec<f64> {
    let mut v = alloc::vec![0.0; k];
    v[ord as usize] = 1.0;
    v
}

/// Variational term for one masked categorical cell, plus the gradient
/// with respect to its logit block (unscaled) when requested.
fn cat_cell_loss(
    logits: &[f64],
    target: &CatTarget,
    t: usize,
    cat_sched: &DiffusionSchedule,
    grad_out: Option<&mut [f64]>,
) -> f64 {
    let k = logits.len();
    let mut x0_hat = logits.to_vec();
    softmax_in_place(&mut x0_hat);

    if t == 1 {
        // Decoder term: -ln p(x0) under the predicted x0 distribution.
        let p = x0_hat[target.x0 as usize];
        let loss = -libm::log(p.max(KL_PROB_FLOOR));
        if let Some(g) = grad_out {
            if p >= KL_PROB_FLOOR {
                for j in 0..k {
                    g[j] = x0_hat[j] - if j == target.x0 as usize { 1.0 } else { 0.0 };
                }
            }
        }
        return loss;
    }

    let xt = onehot(target.xt, k);
    let x0 = onehot(target.x0, k);
    let q_true = multinomial_posterior(&xt, &x0, t, cat_sched);

    let alpha = cat_sched.alpha(t);
    let abar_prev = cat_sched.alpha_bar_prev(t);
    let kf = k as f64;
    let a: Vec<f64> = xt.iter().map(|&x| alpha * x + (1.0 - alpha) / kf).collect();
    let b: Vec<f64> = x0_hat.iter().map(|&x| abar_prev * x + (1.0 - abar_prev) / kf).collect();
    let s: f64 = a.iter().zip(&b).map(|(&ai, &bi)| ai * bi).sum();
    let p_pred: Vec<f64> = a.iter().zip(&b).map(|(&ai, &bi)| ai * bi / s).collect();
    let loss = categorical_kl(&q_true, &p_pred);

    if let Some(g) = grad_out {
        // d loss / d b_m, honoring the probability floor inside the KL.
        let mut q_seen = 0.0;
        for m in 0..k {
            if p_pred[m] >= KL_PROB_FLOOR {
                q_seen += q_true[m];
            }
        }
        let mut g_x0 = alloc::vec![0.0; k];
        for m in 0..k {
            let direct = if p_pred[m] >= KL_PROB_FLOOR { -q_true[m] / b[m] } else { 0.0 };
            g_x0[m] = abar_prev * (direct + q_seen * a[m] / s);
        }
        // Softmax backprop.
        let dot: f64 = g_x0.iter().zip(&x0_hat).map(|(&gi, &xi)| gi * xi).sum();
        for j in 0..k {
            g[j] = x0_hat[j] * (g_x0[j] - dot);
        }
    }
    loss
}

fn breakdown(
    num_mse: MaskedMse,
    cat_sums: &[f64],
    cat_counts: &[usize],
    lambda_cat: f64,
) -> LossBreakdown {
    let n_cat_features = cat_counts.len();
    let mut cat_term = 0.0;
    let mut n_cat_targets = 0usize;
    for (i, &count) in cat_counts.iter().enumerate() {
        if count > 0 {
            cat_term += cat_sums[i] / count as f64;
            n_cat_targets += count;
        }
    }
    if n_cat_features > 0 {
        cat_term /= n_cat_features as f64;
    }
    let num_term = num_mse.mean();
    LossBreakdown {
        total: num_term + lambda_cat * cat_term,
        num_term,
        cat_term,
        lambda_cat,
        n_num_targets: num_mse.count,
        n_cat_targets,
    }
}

/// Loss of a prepared batch under the current parameters.
pub fn hybrid_loss(
    denoiser: &Denoiser,
    batch: &PreparedBatch,
    cat_sched: &DiffusionSchedule,
    lambda_cat: f64,
) -> LossBreakdown {
    let n_num = denoiser.n_num();
    let widths = denoiser.cat_widths().to_vec();
    let mut num_mse = MaskedMse::EMPTY;
    let mut cat_sums = alloc::vec![0.0; widths.len()];

    for row in &batch.rows {
        let out = denoiser.forward(&row.target_state, &row.cond, &row.mask_bits, row.t);
        let (eps_pred, logits) = denoiser.split_output(&out);
        for i in 0..n_num {
            if row.num_target[i] {
                num_mse.accumulate(eps_pred[i] - row.eps_true[i]);
            }
        }
        for target in &row.cat_targets {
            let off: usize = widths[..target.slot].iter().sum();
            let w = widths[target.slot];
            cat_sums[target.slot] +=
                cat_cell_loss(&logits[off..off + w], target, row.t, cat_sched, None);
        }
    }
    breakdown(num_mse, &cat_sums, &batch.cat_counts, lambda_cat)
}

/// Loss plus exact parameter gradients, accumulated in fixed row order.
pub fn hybrid_loss_and_grads(
    denoiser: &Denoiser,
    batch: &PreparedBatch,
    cat_sched: &DiffusionSchedule,
    lambda_cat: f64,
    grads: &mut [f64],
) -> LossBreakdown {
    let n_num = denoiser.n_num();
    let widths = denoiser.cat_widths().to_vec();
    let out_width = denoiser.output_width();
    let n_cat_features = widths.len() as f64;
    let mut num_mse = MaskedMse::EMPTY;
    let mut cat_sums = alloc::vec![0.0; widths.len()];
    grads.fill(0.0);

    for row in &batch.rows {
        let (out, cache) =
            denoiser.forward_cached(&row.target_state, &row.cond, &row.mask_bits, row.t, None);
        let (eps_pred, logits) = out.split_at(n_num);
        let mut d_out = alloc::vec![0.0; out_width];

        for i in 0..n_num {
            if row.num_target[i] {
                let diff = eps_pred[i] - row.eps_true[i];
                num_mse.accumulate(diff);
                d_out[i] = 2.0 * diff / batch.n_num_targets as f64;
            }
        }
        for target in &row.cat_targets {
            let off: usize = widths[..target.slot].iter().sum();
            let w = widths[target.slot];
            let mut g = alloc::vec![0.0; w];
            cat_sums[target.slot] +=
                cat_cell_loss(&logits[off..off + w], target, row.t, cat_sched, Some(&mut g));
            let scale = lambda_cat / (n_cat_features * batch.cat_counts[target.slot] as f64);
            for j in 0..w {
                d_out[n_num + off + j] = scale * g[j];
            }
        }
        denoiser.backward(&cache, &d_out, grads);
    }
    breakdown(num_mse, &cat_sums, &batch.cat_counts, lambda_cat)
}

/// One optimizer update on a prepared batch. Aborts with diagnostics if
/// the loss or any gradient is non-finite.
pub fn training_step(
    denoiser: &mut Denoiser,
    opt: &mut Adam,
    batch: &PreparedBatch,
    cat_sched: &DiffusionSchedule,
    lambda_cat: f64,
    step: u64,
    grads: &mut Vec<f64>,
) -> Result<LossBreakdown, TrainError> {
    grads.resize(denoiser.n_params(), 0.0);
    let loss = hybrid_loss_and_grads(denoiser, batch, cat_sched, lambda_cat, grads);
    let grad_norm = libm::sqrt(grads.iter().map(|g| g * g).sum::<f64>());
    if !loss.total.is_finite() || !grad_norm.is_finite() {
        let mut hist = alloc::vec![0usize; 10];
        let t_count = cat_sched.t_count();
        for row in &batch.rows {
            hist[(row.t - 1) * 10 / t_count] += 1;
        }
        return Err(TrainError::NonFiniteLoss {
            step,
            diagnostics: alloc::format!(
                "loss={} grad_norm={grad_norm} t_decile_histogram={hist:?}",
                loss.total
            ),
        });
    }
    opt.step(denoiser.params_mut(), grads);
    Ok(loss)
}

/// Validation score: range-normalized reconstruction RMSE over numerical
/// targets plus (1 - accuracy) over categorical targets. Lower is better.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValScore {
    pub step: u64,
    pub rmse_norm: f64,
    pub accuracy: f64,
    pub score: f64,
}

/// Progress callbacks emitted by [`train`]; the caller decides what to log.
#[derive(Debug, Clone)]
pub enum TrainEvent {
    Step { step: u64, loss: LossBreakdown },
    Validation { score: ValScore, best: bool },
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<ValScore>,
    pub final_loss: LossBreakdown,
}

struct ValFixture {
    table: DataTable,
    masks: MaskPair,
    /// Per numerical slot: value range over the validation rows.
    num_ranges: Vec<f64>,
}

fn build_val_fixture(
    val: &DataTable,
    config: &TrainConfig,
    master_seed: u64,
) -> Result<ValFixture, TrainError> {
    let schema = val.schema();
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(master_seed, STREAM_VAL_FIXTURE));
    let n = val.n_rows().min(config.val_rows);
    let chosen = rand::seq::index::sample(&mut rng, val.n_rows(), n).into_vec();
    let table = val.select(&chosen);
    let masks = draw_masks(n, schema, config.f_mask_num, config.f_mask_cat, &mut rng)?;

    let mut num_ranges = Vec::with_capacity(schema.n_num());
    for slot in 0..schema.n_num() {
        let col = schema.numerical_column(slot);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for row in table.rows() {
            let v = row[col].as_num().unwrap_or(f64::NAN);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        num_ranges.push((hi - lo).max(1e-12));
    }
    Ok(ValFixture { table, masks, num_ranges })
}

fn validate_reconstruction(
    sampler: &Sampler<'_>,
    fixture: &ValFixture,
    step: u64,
    seed: u64,
) -> Result<ValScore, TrainError> {
    let schema = fixture.table.schema();
    let completed = sampler.impute_masked(&fixture.table, &fixture.masks, seed)?;

    let mut sq_err = alloc::vec![0.0; schema.n_num()];
    let mut sq_n = alloc::vec![0usize; schema.n_num()];
    let mut cat_hits = 0usize;
    let mut cat_total = 0usize;
    for (r, row) in completed.iter().enumerate() {
        for slot in 0..schema.n_num() {
            if !fixture.masks.num_row(r)[slot] {
                let col = schema.numerical_column(slot);
                let truth = fixture.table.row(r)[col].as_num().unwrap();
                let pred = row[col].as_num().unwrap();
                sq_err[slot] += (pred - truth) * (pred - truth);
                sq_n[slot] += 1;
            }
        }
        for slot in 0..schema.n_cat() {
            if !fixture.masks.cat_row(r)[slot] {
                let col = schema.categorical_column(slot);
                cat_total += 1;
                if fixture.table.row(r)[col] == row[col] {
                    cat_hits += 1;
                }
            }
        }
    }

    let mut rmse_sum = 0.0;
    let mut rmse_features = 0usize;
    for slot in 0..schema.n_num() {
        if sq_n[slot] > 0 {
            rmse_sum += libm::sqrt(sq_err[slot] / sq_n[slot] as f64) / fixture.num_ranges[slot];
            rmse_features += 1;
        }
    }
    let rmse_norm = if rmse_features > 0 { rmse_sum / rmse_features as f64 } else { 0.0 };
    let accuracy = if cat_total > 0 { cat_hits as f64 / cat_total as f64 } else { 1.0 };
    let score = rmse_norm + (1.0 - accuracy);
    if !score.is_finite() {
        return Err(TrainError::NonFiniteValidation { step });
    }
    Ok(ValScore { step, rmse_norm, accuracy, score })
}

/// Runs the full training loop and returns the checkpoint whose weights
/// scored best on the validation reconstruction task.
pub fn train(
    train_table: &DataTable,
    val_table: &DataTable,
    config: &TrainConfig,
    mut observer: impl FnMut(TrainEvent),
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_table.n_rows() == 0 || val_table.n_rows() == 0 {
        return Err(TrainError::Schema(SchemaError::EmptyTable));
    }
    let schema = train_table.schema().clone();
    let num_sched = config.num_schedule()?;
    let cat_sched = config.cat_schedule()?;
    // Fit on the training split only.
    let preprocessor = Preprocessor::fit(train_table)?;
    let mut denoiser =
        Denoiser::init(&schema, config.denoiser.clone(), derive_seed(config.seed, STREAM_INIT));
    let mut opt = Adam::new(config.learning_rate, denoiser.n_params());

    let fixture = build_val_fixture(val_table, config, config.seed)?;
    let mut grads: Vec<f64> = Vec::new();
    let mut history = Vec::new();
    let mut best: Option<(f64, Vec<f64>, u64, ValScore)> = None;
    let mut final_loss = None;

    let n_rows = train_table.n_rows();
    let widths = schema.cat_widths().to_vec();

    for step in 0..config.steps {
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(config.seed, 1 + step));
        let indices: Vec<usize> =
            (0..config.batch_size).map(|_| rng.gen_range(0..n_rows)).collect();
        let encoded = preprocessor.transform(train_table, &indices)?;
        let masks = draw_masks(
            config.batch_size,
            &schema,
            config.f_mask_num,
            config.f_mask_cat,
            &mut rng,
        )?;
        let prepared = prepare_batch(&encoded, &masks, &widths, &num_sched, &cat_sched, &mut rng);
        let loss = training_step(
            &mut denoiser,
            &mut opt,
            &prepared,
            &cat_sched,
            config.lambda_cat_at(step),
            step,
            &mut grads,
        )?;
        observer(TrainEvent::Step { step, loss });
        final_loss = Some(loss);

        if (step + 1) % config.checkpoint_every == 0 || step + 1 == config.steps {
            let sampler = Sampler::new(
                &denoiser,
                &schema,
                &preprocessor,
                num_sched.clone(),
                cat_sched.clone(),
                config.t1_decode,
            );
            let score = validate_reconstruction(
                &sampler,
                &fixture,
                step,
                derive_seed(config.seed, STREAM_VAL_SAMPLER),
            )?;
            let is_best = best.as_ref().map_or(true, |(s, ..)| score.score < *s);
            if is_best {
                best = Some((score.score, denoiser.params().to_vec(), step, score));
            }
            history.push(score);
            observer(TrainEvent::Validation { score, best: is_best });
        }
    }

    let (_, best_params, best_step, best_score) = best.expect("at least one validation ran");
    denoiser.params_mut().copy_from_slice(&best_params);
    let checkpoint = Checkpoint::new(
        schema,
        preprocessor,
        config.clone(),
        denoiser,
        best_step,
        Some(best_score),
    );
    Ok(TrainOutcome {
        checkpoint,
        history,
        final_loss: final_loss.expect("ran at least one step"),
    })
}
