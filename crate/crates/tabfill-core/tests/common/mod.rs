//! Oracle-backed test samplers: stand-ins for a trained model that let
//! the evaluation machinery be verified against exactly known
//! distributions without any training.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use tabfill_core::masking::MaskPair;
use tabfill_core::math::{derive_seed, sample_categorical};
use tabfill_core::oracle::OracleSpec;
use tabfill_core::sample::{ConditionalSampler, SampleError};
use tabfill_core::schema::{Cell, ColumnKind, DataTable, TableSchema};

/// Samples masked cells from the oracle's exact conditionals: categorical
/// targets jointly from the full-row conditional, a numerical target from
/// its location-scale rule given its parents. A model that learned the
/// data perfectly would behave like this.
pub struct OracleSampler<'a> {
    pub spec: &'a OracleSpec,
}

impl ConditionalSampler for OracleSampler<'_> {
    fn schema(&self) -> &TableSchema {
        self.spec.schema()
    }

    fn impute_masked(
        &self,
        table: &DataTable,
        masks: &MaskPair,
        seed: u64,
    ) -> Result<Vec<Vec<Cell>>, SampleError> {
        let schema = self.spec.schema();
        let mut out = Vec::with_capacity(table.n_rows());
        for r in 0..table.n_rows() {
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, r as u64));
            let mut row = table.row(r).to_vec();
            let cat_targets: Vec<usize> = (0..schema.n_cat())
                .filter(|&c| !masks.cat_row(r)[c])
                .map(|c| schema.categorical_column(c))
                .collect();
            let num_targets: Vec<usize> = (0..schema.n_num())
                .filter(|&i| !masks.num_row(r)[i])
                .map(|i| schema.numerical_column(i))
                .collect();
            if !cat_targets.is_empty() {
                assert!(
                    num_targets.is_empty(),
                    "OracleSampler supports categorical-only or single-numerical masks"
                );
                let joint = self.spec.exact_conditional_given_row(&row, &cat_targets);
                let weights: Vec<f64> = joint.iter().map(|(_, w)| *w).collect();
                let pick = sample_categorical(&weights, rng.gen::<f64>());
                for (i, &col) in cat_targets.iter().enumerate() {
                    row[col] = Cell::Cat(joint[pick].0[i]);
                }
            } else {
                for &col in &num_targets {
                    let (mu, sd) = self
                        .spec
                        .num_conditional_given_row(&row, col)
                        .expect("numerical target must follow a location-scale rule");
                    let z: f64 = rng.sample(StandardNormal);
                    row[col] = Cell::Num(mu + sd * z);
                }
            }
            out.push(row);
        }
        Ok(out)
    }
}

/// Deterministic point predictor: fills categorical targets with the
/// argmax of the exact full-row conditional. Its reconstruction accuracy
/// is the Bayes accuracy.
pub struct BayesArgmaxSampler<'a> {
    pub spec: &'a OracleSpec,
}

impl ConditionalSampler for BayesArgmaxSampler<'_> {
    fn schema(&self) -> &TableSchema {
        self.spec.schema()
    }

    fn impute_masked(
        &self,
        table: &DataTable,
        masks: &MaskPair,
        _seed: u64,
    ) -> Result<Vec<Vec<Cell>>, SampleError> {
        let schema = self.spec.schema();
        let mut out = Vec::with_capacity(table.n_rows());
        for r in 0..table.n_rows() {
            let mut row = table.row(r).to_vec();
            for c in 0..schema.n_cat() {
                if !masks.cat_row(r)[c] {
                    let col = schema.categorical_column(c);
                    let post = self.spec.exact_full_conditional(&row, col);
                    let mut best = 0usize;
                    for (k, &p) in post.iter().enumerate().skip(1) {
                        if p > post[best] {
                            best = k;
                        }
                    }
                    row[col] = Cell::Cat(best as u32);
                }
            }
            for i in 0..schema.n_num() {
                if !masks.num_row(r)[i] {
                    let col = schema.numerical_column(i);
                    let (mu, _) = self
                        .spec
                        .num_conditional_given_row(&row, col)
                        .expect("numerical target must follow a location-scale rule");
                    row[col] = Cell::Num(mu);
                }
            }
            out.push(row);
        }
        Ok(out)
    }
}

/// Returns the input rows untouched: since scored tables still hold the
/// ground truth under the mask, this acts as a perfect predictor for
/// scorer-exactness checks.
pub struct IdentitySampler<'a> {
    pub schema: &'a TableSchema,
}

impl ConditionalSampler for IdentitySampler<'_> {
    fn schema(&self) -> &TableSchema {
        self.schema
    }

    fn impute_masked(
        &self,
        table: &DataTable,
        _masks: &MaskPair,
        _seed: u64,
    ) -> Result<Vec<Vec<Cell>>, SampleError> {
        Ok(table.rows().to_vec())
    }
}

/// Collapsed sampler: every masked categorical cell becomes the same
/// category.
pub struct ConstantSampler<'a> {
    pub schema: &'a TableSchema,
    pub category: u32,
}

impl ConditionalSampler for ConstantSampler<'_> {
    fn schema(&self) -> &TableSchema {
        self.schema
    }

    fn impute_masked(
        &self,
        table: &DataTable,
        masks: &MaskPair,
        _seed: u64,
    ) -> Result<Vec<Vec<Cell>>, SampleError> {
        let mut out = Vec::with_capacity(table.n_rows());
        for r in 0..table.n_rows() {
            let mut row = table.row(r).to_vec();
            for c in 0..self.schema.n_cat() {
                if !masks.cat_row(r)[c] {
                    row[self.schema.categorical_column(c)] = Cell::Cat(self.category);
                }
            }
            out.push(row);
        }
        Ok(out)
    }
}

/// Replaces the generative model with a resampler of the true matched
/// training rows: each masked target cell is drawn uniformly from the
/// training rows sharing the row's dependency tuple. Distances measured
/// against it estimate the pure two-sample noise floor.
pub struct TrainResampler<'a> {
    schema: &'a TableSchema,
    target: usize,
    deps: Vec<usize>,
    groups: BTreeMap<Vec<u64>, Vec<Cell>>,
}

impl<'a> TrainResampler<'a> {
    pub fn new(train: &DataTable, schema: &'a TableSchema, target: &str) -> Self {
        let col = schema.column_index(target).unwrap();
        let deps: Vec<usize> = schema
            .column(col)
            .dependencies
            .iter()
            .map(|d| schema.column_index(d).unwrap())
            .collect();
        let mut groups: BTreeMap<Vec<u64>, Vec<Cell>> = BTreeMap::new();
        for row in train.rows() {
            groups.entry(key_of(row, &deps)).or_default().push(row[col]);
        }
        TrainResampler { schema, target: col, deps, groups }
    }
}

fn key_of(row: &[Cell], deps: &[usize]) -> Vec<u64> {
    deps.iter()
        .map(|&c| match row[c] {
            Cell::Cat(o) => o as u64,
            Cell::Num(v) => v.to_bits(),
            Cell::Missing => u64::MAX,
        })
        .collect()
}

impl ConditionalSampler for TrainResampler<'_> {
    fn schema(&self) -> &TableSchema {
        self.schema
    }

    fn impute_masked(
        &self,
        table: &DataTable,
        masks: &MaskPair,
        seed: u64,
    ) -> Result<Vec<Vec<Cell>>, SampleError> {
        let mut out = Vec::with_capacity(table.n_rows());
        for r in 0..table.n_rows() {
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, r as u64));
            let mut row = table.row(r).to_vec();
            let slot = self.schema.slot(self.target);
            let masked = match self.schema.column(self.target).kind {
                ColumnKind::Categorical => !masks.cat_row(r)[slot],
                ColumnKind::Numerical => !masks.num_row(r)[slot],
            };
            if masked {
                let pool = self
                    .groups
                    .get(&key_of(&row, &self.deps))
                    .expect("resampler needs matched training rows");
                row[self.target] = pool[rng.gen_range(0..pool.len())];
            }
            out.push(row);
        }
        Ok(out)
    }
}
