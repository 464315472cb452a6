//! Dynamic condition/target masking.
//!
//! During training a fresh mask is drawn per batch: one masking ratio is
//! drawn per feature kind, the resulting count is shared by every row in
//! the batch, and the masked feature identities are re-drawn per row. At
//! inference the mask simply mirrors which cells are missing.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::preprocess::EncodedBatch;
use crate::schema::{ColumnKind, DataTable, TableSchema};

#[derive(Debug, Clone, PartialEq)]
pub enum MaskError {
    /// A positive masking cap was requested but every feature of that
    /// kind is always observed.
    NoMaskableFeatures(ColumnKind),
    MissingAlwaysObserved { row: usize, column: String },
    NoObservedFeatures { row: usize },
}

impl core::fmt::Display for MaskError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            MaskError::NoMaskableFeatures(kind) => {
                let kind = match kind {
                    ColumnKind::Numerical => "numerical",
                    ColumnKind::Categorical => "categorical",
                };
                write!(f, "masking requested but no {kind} feature is maskable")
            }
            MaskError::MissingAlwaysObserved { row, column } => {
                write!(f, "row {row}: always-observed column '{column}' is missing")
            }
            MaskError::NoObservedFeatures { row } => {
                write!(f, "row {row} has no observed features to condition on")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for MaskError {}

/// Per-row observed/masked indicators: `true` = observed (condition),
/// `false` = masked (target). Numerical bits are per numerical column,
/// categorical bits are per categorical column and expand to the whole
/// one-hot block when applied.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPair {
    n_rows: usize,
    n_num: usize,
    n_cat: usize,
    mask_num: Vec<bool>,
    mask_cat: Vec<bool>,
}

impl MaskPair {
    pub fn all_observed(n_rows: usize, schema: &TableSchema) -> Self {
        MaskPair {
            n_rows,
            n_num: schema.n_num(),
            n_cat: schema.n_cat(),
            mask_num: alloc::vec![true; n_rows * schema.n_num()],
            mask_cat: alloc::vec![true; n_rows * schema.n_cat()],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn num_row(&self, r: usize) -> &[bool] {
        &self.mask_num[r * self.n_num..(r + 1) * self.n_num]
    }

    pub fn cat_row(&self, r: usize) -> &[bool] {
        &self.mask_cat[r * self.n_cat..(r + 1) * self.n_cat]
    }

    pub fn num_row_mut(&mut self, r: usize) -> &mut [bool] {
        &mut self.mask_num[r * self.n_num..(r + 1) * self.n_num]
    }

    pub fn cat_row_mut(&mut self, r: usize) -> &mut [bool] {
        &mut self.mask_cat[r * self.n_cat..(r + 1) * self.n_cat]
    }

    /// Count of masked (target) features in a row, split by kind.
    pub fn masked_counts(&self, r: usize) -> (usize, usize) {
        let num = self.num_row(r).iter().filter(|&&b| !b).count();
        let cat = self.cat_row(r).iter().filter(|&&b| !b).count();
        (num, cat)
    }
}

fn masked_count(cap: f64, maskable: usize, rng: &mut ChaCha12Rng) -> usize {
    if cap <= 0.0 || maskable == 0 {
        return 0;
    }
    // Positive ratio in (0, cap]: 1 - gen() lies in (0, 1].
    let ratio = cap * (1.0 - rng.gen::<f64>());
    (libm::ceil(ratio * maskable as f64) as usize).clamp(1, maskable)
}

/// Draws one training mask for a batch.
///
/// One ratio per kind is drawn uniformly from `(0, cap]`, the masked
/// count is `ceil(ratio * maskable)` clamped to `[1, maskable]`, and each
/// row masks that many distinct maskable features chosen uniformly.
/// Always-observed columns are never masked.
pub fn draw_masks(
    batch_size: usize,
    schema: &TableSchema,
    f_mask_num: f64,
    f_mask_cat: f64,
    rng: &mut ChaCha12Rng,
) -> Result<MaskPair, MaskError> {
    let maskable_num: Vec<usize> = (0..schema.n_num())
        .filter(|&slot| !schema.column(schema.numerical_column(slot)).always_observed)
        .collect();
    let maskable_cat: Vec<usize> = (0..schema.n_cat())
        .filter(|&slot| !schema.column(schema.categorical_column(slot)).always_observed)
        .collect();
    if f_mask_num > 0.0 && maskable_num.is_empty() {
        return Err(MaskError::NoMaskableFeatures(ColumnKind::Numerical));
    }
    if f_mask_cat > 0.0 && maskable_cat.is_empty() {
        return Err(MaskError::NoMaskableFeatures(ColumnKind::Categorical));
    }

    let count_num = masked_count(f_mask_num, maskable_num.len(), rng);
    let count_cat = masked_count(f_mask_cat, maskable_cat.len(), rng);

    let mut masks = MaskPair::all_observed(batch_size, schema);
    for r in 0..batch_size {
        for slot in rand::seq::index::sample(rng, maskable_num.len(), count_num).iter() {
            masks.num_row_mut(r)[maskable_num[slot]] = false;
        }
        for slot in rand::seq::index::sample(rng, maskable_cat.len(), count_cat).iter() {
            masks.cat_row_mut(r)[maskable_cat[slot]] = false;
        }
    }
    Ok(masks)
}

/// Splits an encoded batch into condition and target components.
///
/// Observed entries are copied into the condition, masked entries into
/// the target; the other side is zero-filled, so `cond + target`
/// reconstructs the batch exactly.
pub fn partition(
    batch: &EncodedBatch,
    masks: &MaskPair,
    cat_widths: &[usize],
) -> (EncodedBatch, EncodedBatch) {
    assert_eq!(batch.n_rows, masks.n_rows);
    assert_eq!(batch.n_num, masks.n_num);
    assert_eq!(cat_widths.len(), masks.n_cat);

    let mut cond = EncodedBatch::zeros(batch.n_rows, batch.n_num, batch.onehot_width);
    let mut target = EncodedBatch::zeros(batch.n_rows, batch.n_num, batch.onehot_width);
    cond.row_ids = batch.row_ids.clone();
    target.row_ids = batch.row_ids.clone();

    for r in 0..batch.n_rows {
        for (i, &observed) in masks.num_row(r).iter().enumerate() {
            let v = batch.num_row(r)[i];
            if observed {
                cond.num_row_mut(r)[i] = v;
            } else {
                target.num_row_mut(r)[i] = v;
            }
        }
        let mut off = 0;
        for (c, &w) in cat_widths.iter().enumerate() {
            let dst = if masks.cat_row(r)[c] { &mut cond } else { &mut target };
            dst.cat_row_mut(r)[off..off + w].copy_from_slice(&batch.cat_row(r)[off..off + w]);
            off += w;
        }
    }
    (cond, target)
}

/// Builds inference masks from the missing cells of a table: every
/// missing cell becomes a target bit. Unlike training masks, counts may
/// differ per row.
pub fn mask_from_missing(table: &DataTable) -> Result<MaskPair, MaskError> {
    let schema = table.schema();
    let mut masks = MaskPair::all_observed(table.n_rows(), schema);
    for (r, row) in table.rows().iter().enumerate() {
        let mut any_observed = false;
        for (c, cell) in row.iter().enumerate() {
            let col = schema.column(c);
            if cell.is_missing() {
                if col.always_observed {
                    return Err(MaskError::MissingAlwaysObserved {
                        row: r,
                        column: col.name.clone(),
                    });
                }
                match col.kind {
                    ColumnKind::Numerical => masks.num_row_mut(r)[schema.slot(c)] = false,
                    ColumnKind::Categorical => masks.cat_row_mut(r)[schema.slot(c)] = false,
                }
            } else {
                any_observed = true;
            }
        }
        if !any_observed {
            return Err(MaskError::NoObservedFeatures { row: r });
        }
    }
    Ok(masks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{Cell, ColumnSpec, DataTable};
    use rand::SeedableRng;

    fn wide_schema(n_cat: usize) -> TableSchema {
        let mut cols = alloc::vec![
            ColumnSpec::numerical("lat").always_observed(),
            ColumnSpec::numerical("a"),
            ColumnSpec::numerical("b"),
        ];
        for i in 0..n_cat {
            cols.push(ColumnSpec::categorical(&alloc::format!("c{i}"), &["x", "y", "z"]));
        }
        TableSchema::new(cols).unwrap()
    }

    #[test]
    fn cat_cap_of_5_percent_masks_one_or_two_of_31() {
        let schema = wide_schema(31);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..500 {
            let masks = draw_masks(4, &schema, 0.0, 0.05, &mut rng).unwrap();
            let (n, c) = masks.masked_counts(0);
            assert_eq!(n, 0, "f_mask_num = 0 masks no numerical features");
            assert!(c == 1 || c == 2, "got {c}");
            // Same count in every row of the batch.
            for r in 1..4 {
                assert_eq!(masks.masked_counts(r).1, c);
            }
        }
    }

    #[test]
    fn always_observed_never_masked() {
        let schema = wide_schema(4);
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let masks = draw_masks(1, &schema, 1.0, 1.0, &mut rng).unwrap();
            assert!(masks.num_row(0)[0], "always-observed latitude slot was masked");
        }
    }

    #[test]
    fn positive_cap_requires_maskable_features() {
        let schema = TableSchema::new(alloc::vec![
            ColumnSpec::numerical("lat").always_observed(),
            ColumnSpec::categorical("c", &["x", "y"]),
        ])
        .unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let err = draw_masks(2, &schema, 0.5, 0.0, &mut rng).unwrap_err();
        assert_eq!(err, MaskError::NoMaskableFeatures(ColumnKind::Numerical));
        assert!(draw_masks(2, &schema, 0.0, 0.5, &mut rng).is_ok());
    }

    #[test]
    fn masked_feature_choice_is_uniform() {
        // 10 maskable categorical features at cap 0.2; per-feature masked
        // counts should match the binomial expectation within 3 sigma.
        let schema = wide_schema(10);
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let mut per_feature = [0usize; 10];
        let mut total = 0usize;
        for _ in 0..2000 {
            let masks = draw_masks(16, &schema, 0.0, 0.2, &mut rng).unwrap();
            for r in 0..16 {
                for (c, &obs) in masks.cat_row(r).iter().enumerate() {
                    if !obs {
                        per_feature[c] += 1;
                        total += 1;
                    }
                }
            }
        }
        let expected = total as f64 / 10.0;
        let sigma = libm::sqrt(total as f64 * 0.1 * 0.9);
        for (c, &count) in per_feature.iter().enumerate() {
            let dev = (count as f64 - expected).abs();
            assert!(dev <= 3.0 * sigma, "feature {c}: count {count} expected {expected}");
        }
    }

    fn toy_batch() -> (TableSchema, EncodedBatch) {
        let schema = TableSchema::new(alloc::vec![
            ColumnSpec::numerical("n0"),
            ColumnSpec::numerical("n1"),
            ColumnSpec::categorical("c0", &["a", "b"]),
            ColumnSpec::categorical("c1", &["a", "b", "c"]),
        ])
        .unwrap();
        let mut batch = EncodedBatch::zeros(2, 2, 5);
        batch.x_num.copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
        batch.x_cat.copy_from_slice(&[1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        (schema, batch)
    }

    #[test]
    fn partition_is_lossless_and_exact() {
        let (schema, batch) = toy_batch();
        let mut masks = MaskPair::all_observed(2, &schema);
        masks.num_row_mut(0)[1] = false;
        masks.cat_row_mut(0)[0] = false;
        masks.cat_row_mut(1)[1] = false;

        let (cond, target) = partition(&batch, &masks, schema.cat_widths());
        // Complement identity, elementwise and exact.
        for i in 0..batch.x_num.len() {
            assert_eq!(cond.x_num[i] + target.x_num[i], batch.x_num[i]);
            assert!(cond.x_num[i] == 0.0 || target.x_num[i] == 0.0);
        }
        for i in 0..batch.x_cat.len() {
            assert_eq!(cond.x_cat[i] + target.x_cat[i], batch.x_cat[i]);
        }
        // The masked one-hot block moved entirely to the target side.
        assert_eq!(target.cat_row(0)[..2], [1.0, 0.0]);
        assert_eq!(cond.cat_row(0)[..2], [0.0, 0.0]);
    }

    #[test]
    fn all_ones_mask_keeps_everything_in_condition() {
        let (schema, batch) = toy_batch();
        let masks = MaskPair::all_observed(2, &schema);
        let (cond, target) = partition(&batch, &masks, schema.cat_widths());
        assert_eq!(cond.x_num, batch.x_num);
        assert_eq!(cond.x_cat, batch.x_cat);
        assert!(target.x_num.iter().all(|&v| v == 0.0));
        assert!(target.x_cat.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn missing_cells_become_target_bits() {
        let schema = TableSchema::new(alloc::vec![
            ColumnSpec::numerical("lat").always_observed(),
            ColumnSpec::numerical("x"),
            ColumnSpec::categorical("heating_fuel", &["gas", "oil"]),
        ])
        .unwrap();
        let table = DataTable::new(
            schema.clone(),
            alloc::vec![
                alloc::vec![Cell::Num(1.0), Cell::Num(2.0), Cell::Cat(0)],
                alloc::vec![Cell::Num(1.0), Cell::Num(2.0), Cell::Missing],
            ],
        )
        .unwrap();
        let masks = mask_from_missing(&table).unwrap();
        assert_eq!(masks.masked_counts(0), (0, 0));
        assert_eq!(masks.masked_counts(1), (0, 1));
        assert!(!masks.cat_row(1)[0]);
    }

    #[test]
    fn missing_in_always_observed_column_is_an_error() {
        let schema = TableSchema::new(alloc::vec![
            ColumnSpec::numerical("lat").always_observed(),
            ColumnSpec::categorical("c", &["a", "b"]),
        ])
        .unwrap();
        let table = DataTable::new(
            schema,
            alloc::vec![alloc::vec![Cell::Missing, Cell::Cat(0)]],
        )
        .unwrap();
        let err = mask_from_missing(&table).unwrap_err();
        assert!(matches!(err, MaskError::MissingAlwaysObserved { row: 0, .. }));
    }

    #[test]
    fn fully_missing_row_is_an_error() {
        let schema = TableSchema::new(alloc::vec![
            ColumnSpec::numerical("x"),
            ColumnSpec::categorical("c", &["a", "b"]),
        ])
        .unwrap();
        let table = DataTable::new(
            schema,
            alloc::vec![alloc::vec![Cell::Missing, Cell::Missing]],
        )
        .unwrap();
        assert!(matches!(
            mask_from_missing(&table).unwrap_err(),
            MaskError::NoObservedFeatures { row: 0 }
        ));
    }
}
