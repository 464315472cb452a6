//! Conditional reverse-diffusion sampling for imputation.
//!
//! Masked numerical entries start from standard-normal noise, masked
//! categorical features from a uniformly sampled category. The condition
//! vector stays fixed while `t` runs from `T` down to 1: numerical
//! targets follow the reverse mean plus `sigma_t` noise (none at
//! `t == 1`), categorical targets are re-sampled from the multinomial
//! posterior built from the predicted `x0` probabilities, and at `t == 1`
//! are decoded directly from those probabilities. Observed cells are
//! copied through untouched.
//!
//! Row `r` of a call draws from a seed derived from `(seed, r)`, so
//! results do not depend on traversal order.

use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::checkpoint::Checkpoint;
use crate::denoiser::Denoiser;
use crate::diffusion::{
    gaussian_reverse_mean, multinomial_posterior, DiffusionSchedule, ScheduleError,
};
use crate::masking::{mask_from_missing, MaskError, MaskPair};
use crate::math::{derive_seed, sample_categorical, softmax_in_place};
use crate::preprocess::Preprocessor;
use crate::schema::{Cell, ColumnKind, DataTable, TableSchema};
use crate::train::T1Decode;

#[derive(Debug, Clone, PartialEq)]
pub enum SampleError {
    /// The input table's schema does not match the checkpoint's.
    SchemaMismatch { expected: u64, got: u64 },
    Mask(MaskError),
    Schedule(ScheduleError),
}

impl core::fmt::Display for SampleError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SampleError::SchemaMismatch { expected, got } => {
                write!(f, "schema fingerprint {got:#x} does not match checkpoint {expected:#x}")
            }
            SampleError::Mask(e) => write!(f, "{e}"),
            SampleError::Schedule(e) => write!(f, "{e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SampleError {}

impl From<MaskError> for SampleError {
    fn from(e: MaskError) -> Self {
        SampleError::Mask(e)
    }
}

impl From<ScheduleError> for SampleError {
    fn from(e: ScheduleError) -> Self {
        SampleError::Schedule(e)
    }
}

/// Anything that can fill in masked cells of a table. The diffusion
/// [`Sampler`] is the production implementation; tests plug in oracle-
/// or stub-backed samplers to exercise the evaluation machinery.
pub trait ConditionalSampler {
    fn schema(&self) -> &TableSchema;

    /// Returns completed rows: masked cells filled in, observed cells
    /// copied through bit-identically.
    fn impute_masked(
        &self,
        table: &DataTable,
        masks: &MaskPair,
        seed: u64,
    ) -> Result<Vec<Vec<Cell>>, SampleError>;
}

pub struct Sampler<'a> {
    denoiser: &'a Denoiser,
    schema: &'a TableSchema,
    preprocessor: &'a Preprocessor,
    num_sched: DiffusionSchedule,
    cat_sched: DiffusionSchedule,
    t1_decode: T1Decode,
}

impl<'a> Sampler<'a> {
    pub fn new(
        denoiser: &'a Denoiser,
        schema: &'a TableSchema,
        preprocessor: &'a Preprocessor,
        num_sched: DiffusionSchedule,
        cat_sched: DiffusionSchedule,
        t1_decode: T1Decode,
    ) -> Self {
        Sampler { denoiser, schema, preprocessor, num_sched, cat_sched, t1_decode }
    }

    pub fn from_checkpoint(ck: &'a Checkpoint) -> Result<Self, SampleError> {
        Ok(Sampler {
            denoiser: &ck.denoiser,
            schema: &ck.schema,
            preprocessor: &ck.preprocessor,
            num_sched: ck.config.num_schedule()?,
            cat_sched: ck.config.cat_schedule()?,
            t1_decode: ck.config.t1_decode,
        })
    }

    fn impute_row(&self, row: &[Cell], masks: &MaskPair, r: usize, seed: u64) -> Vec<Cell> {
        let schema = self.schema;
        let n_num = schema.n_num();
        let widths = schema.cat_widths();
        let onehot: usize = widths.iter().sum();
        let t_count = self.num_sched.t_count();

        let masked_num: Vec<usize> =
            (0..n_num).filter(|&i| !masks.num_row(r)[i]).collect();
        let masked_cat: Vec<usize> =
            (0..widths.len()).filter(|&c| !masks.cat_row(r)[c]).collect();
        if masked_num.is_empty() && masked_cat.is_empty() {
            return row.to_vec();
        }

        // Fixed condition vector and mask bits.
        let mut cond = alloc::vec![0.0; n_num + onehot];
        let mut bits = alloc::vec![0.0; n_num + widths.len()];
        for i in 0..n_num {
            if masks.num_row(r)[i] {
                let v = row[schema.numerical_column(i)].as_num().expect("observed cell");
                cond[i] = self.preprocessor.quantile(i).forward(v);
                bits[i] = 1.0;
            }
        }
        for (c, &w) in widths.iter().enumerate() {
            if masks.cat_row(r)[c] {
                let ord = row[schema.categorical_column(c)].as_cat().expect("observed cell");
                cond[n_num + schema.onehot_offset(c) + ord as usize] = 1.0;
                bits[n_num + c] = 1.0;
                let _ = w;
            }
        }

        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, r as u64));
        let mut num_state = alloc::vec![0.0; n_num];
        for &i in &masked_num {
            num_state[i] = rng.sample::<f64, _>(StandardNormal);
        }
        let mut cat_state = alloc::vec![0u32; widths.len()];
        for &c in &masked_cat {
            cat_state[c] = rng.gen_range(0..widths[c]) as u32;
        }

        let mut target = alloc::vec![0.0; n_num + onehot];
        for t in (1..=t_count).rev() {
            target.fill(0.0);
            for &i in &masked_num {
                target[i] = num_state[i];
            }
            for &c in &masked_cat {
                target[n_num + schema.onehot_offset(c) + cat_state[c] as usize] = 1.0;
            }
            let out = self.denoiser.forward(&target, &cond, &bits, t);
            let (eps_pred, logits) = self.denoiser.split_output(&out);

            if !masked_num.is_empty() {
                let xs: Vec<f64> = masked_num.iter().map(|&i| num_state[i]).collect();
                let eps: Vec<f64> = masked_num.iter().map(|&i| eps_pred[i]).collect();
                let mu = gaussian_reverse_mean(&xs, &eps, t, &self.num_sched);
                let sigma = self.num_sched.sigma(t);
                for (j, &i) in masked_num.iter().enumerate() {
                    num_state[i] = if t > 1 {
                        mu[j] + sigma * rng.sample::<f64, _>(StandardNormal)
                    } else {
                        mu[j]
                    };
                }
            }
            for &c in &masked_cat {
                let off = schema.onehot_offset(c);
                let w = widths[c];
                let mut x0_hat = logits[off..off + w].to_vec();
                softmax_in_place(&mut x0_hat);
                if t >= 2 {
                    let mut xt = alloc::vec![0.0; w];
                    xt[cat_state[c] as usize] = 1.0;
                    let pi = multinomial_posterior(&xt, &x0_hat, t, &self.cat_sched);
                    cat_state[c] = sample_categorical(&pi, rng.gen::<f64>()) as u32;
                } else {
                    cat_state[c] = match self.t1_decode {
                        T1Decode::Sample => sample_categorical(&x0_hat, rng.gen::<f64>()) as u32,
                        T1Decode::Argmax => {
                            let mut best = 0usize;
                            for (k, &v) in x0_hat.iter().enumerate().skip(1) {
                                if v > x0_hat[best] {
                                    best = k;
                                }
                            }
                            best as u32
                        }
                    };
                }
            }
        }

        // Decode targets; observed cells pass through bit-identically.
        let mut out_row = row.to_vec();
        for &i in &masked_num {
            let v = self.preprocessor.quantile(i).inverse(num_state[i]);
            out_row[schema.numerical_column(i)] = Cell::Num(v);
        }
        for &c in &masked_cat {
            out_row[schema.categorical_column(c)] = Cell::Cat(cat_state[c]);
        }
        out_row
    }
}

impl ConditionalSampler for Sampler<'_> {
    fn schema(&self) -> &TableSchema {
        self.schema
    }

    fn impute_masked(
        &self,
        table: &DataTable,
        masks: &MaskPair,
        seed: u64,
    ) -> Result<Vec<Vec<Cell>>, SampleError> {
        assert_eq!(table.n_rows(), masks.n_rows());
        let mut rows = Vec::with_capacity(table.n_rows());
        for r in 0..table.n_rows() {
            rows.push(self.impute_row(table.row(r), masks, r, seed));
        }
        Ok(rows)
    }
}

/// One completed copy of the input table.
#[derive(Debug, Clone)]
pub struct ImputationResult {
    pub scenario: usize,
    pub table: DataTable,
    /// Column indices generated (not observed) per row.
    pub generated: Vec<Vec<usize>>,
}

impl ImputationResult {
    pub fn generated_names(&self, row: usize) -> Vec<&str> {
        self.generated[row]
            .iter()
            .map(|&c| self.table.schema().column(c).name.as_str())
            .collect()
    }
}

/// Imputes every missing cell of `rows`, producing `n_scenarios`
/// independent completions. Observed cells are bit-identical between
/// input and output; missing always-observed cells are rejected.
pub fn impute(
    checkpoint: &Checkpoint,
    rows: &DataTable,
    n_scenarios: usize,
    seed: u64,
) -> Result<Vec<ImputationResult>, SampleError> {
    let got = rows.schema().fingerprint();
    if got != checkpoint.schema_fingerprint {
        return Err(SampleError::SchemaMismatch {
            expected: checkpoint.schema_fingerprint,
            got,
        });
    }
    let sampler = Sampler::from_checkpoint(checkpoint)?;
    let masks = mask_from_missing(rows)?;
    let schema = rows.schema();
    let generated: Vec<Vec<usize>> = (0..rows.n_rows())
        .map(|r| {
            (0..schema.len())
                .filter(|&c| rows.row(r)[c].is_missing())
                .collect()
        })
        .collect();

    let mut results = Vec::with_capacity(n_scenarios);
    for scenario in 0..n_scenarios {
        let completed =
            sampler.impute_masked(rows, &masks, derive_seed(seed, scenario as u64))?;
        let table = DataTable::new(schema.clone(), completed)
            .expect("imputed cells conform to the schema");
        results.push(ImputationResult { scenario, table, generated: generated.clone() });
    }
    Ok(results)
}

/// All-observed masks except the given target columns, which are masked
/// in every row. Used by the evaluation protocol to impute chosen
/// variables on otherwise complete rows.
pub fn masks_for_targets(
    schema: &TableSchema,
    n_rows: usize,
    target_cols: &[usize],
) -> Result<MaskPair, MaskError> {
    let mut masks = MaskPair::all_observed(n_rows, schema);
    for &col in target_cols {
        let spec = schema.column(col);
        if spec.always_observed {
            return Err(MaskError::NoMaskableFeatures(spec.kind));
        }
        for r in 0..n_rows {
            match spec.kind {
                ColumnKind::Numerical => masks.num_row_mut(r)[schema.slot(col)] = false,
                ColumnKind::Categorical => masks.cat_row_mut(r)[schema.slot(col)] = false,
            }
        }
    }
    Ok(masks)
}
