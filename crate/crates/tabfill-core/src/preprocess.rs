//! Column transforms: rank-based Gaussian quantile normalization for
//! numerical columns and one-hot encoding for categorical columns.
//!
//! Transforms are fitted on the training split only and serialized with
//! the model checkpoint so train and inference always agree.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math::inv_norm_cdf;
use crate::schema::{Cell, ColumnKind, DataTable, TableSchema};

/// Outputs are clipped to the normal quantiles of the extreme empirical
/// ranks; +-5.2 corresponds to a tail probability of about 1e-7.
pub const Z_CLIP: f64 = 5.2;

/// At most this many landmarks are kept per column.
pub const MAX_LANDMARKS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub enum PreprocessError {
    /// Fewer than two distinct finite values: drop the column or declare
    /// it categorical.
    ConstantColumn(String),
    NonFiniteValue(String),
    MissingCell { row: usize, column: String },
    ShapeMismatch { expected: usize, got: usize },
}

impl core::fmt::Display for PreprocessError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            PreprocessError::ConstantColumn(c) => write!(
                f,
                "column '{c}' has fewer than 2 distinct values; drop it or declare it categorical"
            ),
            PreprocessError::NonFiniteValue(c) => {
                write!(f, "column '{c}' contains a non-finite value")
            }
            PreprocessError::MissingCell { row, column } => {
                write!(f, "row {row}, column '{column}': cannot encode a missing cell")
            }
            PreprocessError::ShapeMismatch { expected, got } => {
                write!(f, "encoded width mismatch: expected {expected}, got {got}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for PreprocessError {}

/// Monotone map from a column's empirical distribution to standard-normal
/// quantiles, stored as (value, z) landmark pairs with linear
/// interpolation between them.
///
/// Ranks use the mid-rank convention for ties and the `i / (n + 1)`
/// plotting position, so the empirical median of `{1, 2, 3}` maps to 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantileTransform {
    values: Vec<f64>,
    zscores: Vec<f64>,
}

impl QuantileTransform {
    /// Fits the transform to a column of finite values.
    pub fn fit(column: &str, values: &[f64]) -> Result<Self, PreprocessError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(PreprocessError::NonFiniteValue(String::from(column)));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sorted.len();

        // Collapse ties to (value, mid-rank) pairs; ranks are 1-based.
        let mut landmarks: Vec<(f64, f64)> = Vec::new();
        let mut i = 0usize;
        while i < n {
            let mut j = i + 1;
            while j < n && sorted[j] == sorted[i] {
                j += 1;
            }
            let mid_rank = (i + 1 + j) as f64 / 2.0;
            landmarks.push((sorted[i], mid_rank));
            i = j;
        }
        if landmarks.len() < 2 {
            return Err(PreprocessError::ConstantColumn(String::from(column)));
        }
        // Evenly subsample down to MAX_LANDMARKS, always keeping the ends.
        let m = landmarks.len();
        let picked: Vec<(f64, f64)> = if m <= MAX_LANDMARKS {
            landmarks
        } else {
            (0..MAX_LANDMARKS)
                .map(|k| landmarks[k * (m - 1) / (MAX_LANDMARKS - 1)])
                .collect()
        };

        let denom = (n + 1) as f64;
        let mut values = Vec::with_capacity(picked.len());
        let mut zscores = Vec::with_capacity(picked.len());
        for (v, rank) in picked {
            values.push(v);
            zscores.push(inv_norm_cdf(rank / denom).clamp(-Z_CLIP, Z_CLIP));
        }
        Ok(QuantileTransform { values, zscores })
    }

    /// Maps a raw value to its normal quantile. Values outside the fitted
    /// range clip to +-[`Z_CLIP`].
    pub fn forward(&self, x: f64) -> f64 {
        let v = &self.values;
        if x < v[0] {
            return -Z_CLIP;
        }
        if x > v[v.len() - 1] {
            return Z_CLIP;
        }
        let hi = v.partition_point(|&lv| lv < x);
        if hi == 0 {
            return self.zscores[0];
        }
        if v[hi] == x {
            return self.zscores[hi];
        }
        let lo = hi - 1;
        let t = (x - v[lo]) / (v[hi] - v[lo]);
        self.zscores[lo] + t * (self.zscores[hi] - self.zscores[lo])
    }

    /// Inverse of [`forward`](Self::forward); z-scores outside the fitted
    /// grid map to the extreme landmark values.
    pub fn inverse(&self, z: f64) -> f64 {
        let zs = &self.zscores;
        let last = zs.len() - 1;
        if z <= zs[0] {
            return self.values[0];
        }
        if z >= zs[last] {
            return self.values[last];
        }
        let hi = zs.partition_point(|&lz| lz < z);
        let lo = hi - 1;
        let dz = zs[hi] - zs[lo];
        if dz <= 0.0 {
            return self.values[lo];
        }
        let t = (z - zs[lo]) / dz;
        self.values[lo] + t * (self.values[hi] - self.values[lo])
    }

    /// Largest gap between adjacent landmark values; the round-trip error
    /// bound for in-range inputs.
    pub fn max_gap(&self) -> f64 {
        self.values.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values[0]
    }

    pub fn max_value(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

/// Ordinal/one-hot codec for the categorical columns.
///
/// Ordinal codes are fixed by the schema's vocabulary order; this type
/// only carries the block widths.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoryEncoder {
    widths: Vec<usize>,
}

impl CategoryEncoder {
    pub fn from_schema(schema: &TableSchema) -> Self {
        CategoryEncoder { widths: schema.cat_widths().to_vec() }
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn onehot_width(&self) -> usize {
        self.widths.iter().sum()
    }

    /// Writes the one-hot block for `ordinal` into `block`.
    pub fn encode(&self, cat_slot: usize, ordinal: u32, block: &mut [f64]) {
        debug_assert_eq!(block.len(), self.widths[cat_slot]);
        block.fill(0.0);
        block[ordinal as usize] = 1.0;
    }

    /// Decodes a score block to an ordinal: argmax, ties broken by the
    /// lowest ordinal.
    pub fn decode(&self, cat_slot: usize, block: &[f64]) -> u32 {
        debug_assert_eq!(block.len(), self.widths[cat_slot]);
        let mut best = 0usize;
        for (i, &v) in block.iter().enumerate().skip(1) {
            if v > block[best] {
                best = i;
            }
        }
        best as u32
    }
}

/// A batch of rows in model space: quantile-transformed numerical values
/// and concatenated categorical blocks (one-hot when freshly encoded,
/// probabilities during diffusion). Both matrices are row-major.
#[derive(Debug, Clone)]
pub struct EncodedBatch {
    pub n_rows: usize,
    pub n_num: usize,
    pub onehot_width: usize,
    pub x_num: Vec<f64>,
    pub x_cat: Vec<f64>,
    /// Source row indices, for provenance.
    pub row_ids: Vec<usize>,
}

impl EncodedBatch {
    pub fn zeros(n_rows: usize, n_num: usize, onehot_width: usize) -> Self {
        EncodedBatch {
            n_rows,
            n_num,
            onehot_width,
            x_num: alloc::vec![0.0; n_rows * n_num],
            x_cat: alloc::vec![0.0; n_rows * onehot_width],
            row_ids: (0..n_rows).collect(),
        }
    }

    pub fn num_row(&self, r: usize) -> &[f64] {
        &self.x_num[r * self.n_num..(r + 1) * self.n_num]
    }

    pub fn cat_row(&self, r: usize) -> &[f64] {
        &self.x_cat[r * self.onehot_width..(r + 1) * self.onehot_width]
    }

    pub fn num_row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.x_num[r * self.n_num..(r + 1) * self.n_num]
    }

    pub fn cat_row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.x_cat[r * self.onehot_width..(r + 1) * self.onehot_width]
    }
}

/// All fitted column transforms for one schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Preprocessor {
    quantiles: Vec<QuantileTransform>,
    encoder: CategoryEncoder,
}

impl Preprocessor {
    /// Fits quantile transforms on the non-missing values of every
    /// numerical column. Fit this on the training split only.
    pub fn fit(table: &DataTable) -> Result<Self, PreprocessError> {
        let schema = table.schema();
        let mut quantiles = Vec::with_capacity(schema.n_num());
        for slot in 0..schema.n_num() {
            let col_idx = schema.numerical_column(slot);
            let name = &schema.column(col_idx).name;
            let values: Vec<f64> =
                table.rows().iter().filter_map(|row| row[col_idx].as_num()).collect();
            quantiles.push(QuantileTransform::fit(name, &values)?);
        }
        Ok(Preprocessor { quantiles, encoder: CategoryEncoder::from_schema(schema) })
    }

    pub fn quantile(&self, num_slot: usize) -> &QuantileTransform {
        &self.quantiles[num_slot]
    }

    pub fn encoder(&self) -> &CategoryEncoder {
        &self.encoder
    }

    /// Encodes the selected rows. Missing cells are rejected; masking of
    /// unknown values happens downstream, not in the encoder.
    pub fn transform(
        &self,
        table: &DataTable,
        rows: &[usize],
    ) -> Result<EncodedBatch, PreprocessError> {
        let schema = table.schema();
        let mut batch = EncodedBatch::zeros(rows.len(), schema.n_num(), schema.onehot_width());
        batch.row_ids = rows.to_vec();
        for (r, &row_id) in rows.iter().enumerate() {
            let row = table.row(row_id);
            for (c, cell) in row.iter().enumerate() {
                let slot = schema.slot(c);
                match (cell, schema.column(c).kind) {
                    (Cell::Num(v), ColumnKind::Numerical) => {
                        batch.num_row_mut(r)[slot] = self.quantiles[slot].forward(*v);
                    }
                    (Cell::Cat(o), ColumnKind::Categorical) => {
                        let off = schema.onehot_offset(slot);
                        let w = schema.cat_widths()[slot];
                        self.encoder.encode(slot, *o, &mut batch.cat_row_mut(r)[off..off + w]);
                    }
                    (Cell::Missing, _) => {
                        return Err(PreprocessError::MissingCell {
                            row: row_id,
                            column: schema.column(c).name.clone(),
                        });
                    }
                    _ => unreachable!("DataTable validates cell kinds"),
                }
            }
        }
        Ok(batch)
    }

    /// Decodes a batch back to cells: inverse interpolation for numerical
    /// values, per-block argmax for categories. Total on finite input.
    pub fn inverse_transform(
        &self,
        schema: &TableSchema,
        batch: &EncodedBatch,
    ) -> Result<Vec<Vec<Cell>>, PreprocessError> {
        if batch.n_num != schema.n_num() || batch.onehot_width != schema.onehot_width() {
            return Err(PreprocessError::ShapeMismatch {
                expected: schema.n_num() + schema.onehot_width(),
                got: batch.n_num + batch.onehot_width,
            });
        }
        let mut rows = Vec::with_capacity(batch.n_rows);
        for r in 0..batch.n_rows {
            let mut row = Vec::with_capacity(schema.len());
            for c in 0..schema.len() {
                let slot = schema.slot(c);
                match schema.column(c).kind {
                    ColumnKind::Numerical => {
                        row.push(Cell::Num(self.quantiles[slot].inverse(batch.num_row(r)[slot])));
                    }
                    ColumnKind::Categorical => {
                        let off = schema.onehot_offset(slot);
                        let w = schema.cat_widths()[slot];
                        let ord = self.encoder.decode(slot, &batch.cat_row(r)[off..off + w]);
                        row.push(Cell::Cat(ord));
                    }
                }
            }
            rows.push(row);
        }
        Ok(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::ColumnSpec;

    #[test]
    fn median_of_three_maps_to_zero() {
        let qt = QuantileTransform::fit("x", &[1.0, 2.0, 3.0]).unwrap();
        assert!(qt.forward(2.0).abs() < 1e-12);
        assert!(qt.forward(1.0) < qt.forward(2.0));
        assert!(qt.forward(2.0) < qt.forward(3.0));
        // Inverse of the median.
        assert!((qt.inverse(0.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn tied_values_use_mid_ranks() {
        let qt = QuantileTransform::fit("x", &[1.0, 2.0, 2.0, 3.0]).unwrap();
        // The tied pair occupies ranks 2 and 3 of 4: mid-rank 2.5, p = 0.5.
        assert!(qt.forward(2.0).abs() < 1e-12);
    }

    #[test]
    fn normal_quantile_grid_is_near_identity() {
        // 99 evenly spaced standard-normal quantiles; with the i/(n+1)
        // plotting position the fitted map reproduces them directly.
        let values: Vec<f64> = (1..100).map(|i| inv_norm_cdf(i as f64 / 100.0)).collect();
        let qt = QuantileTransform::fit("z", &values).unwrap();
        let max_dev = values
            .iter()
            .map(|&v| (qt.forward(v) - v).abs())
            .fold(0.0, f64::max);
        assert!(max_dev < 0.1, "max deviation {max_dev}");
    }

    #[test]
    fn out_of_range_clips_to_extreme_quantiles() {
        let qt = QuantileTransform::fit("x", &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(qt.forward(0.5), -Z_CLIP);
        assert_eq!(qt.forward(100.0), Z_CLIP);
    }

    #[test]
    fn constant_column_is_rejected() {
        let err = QuantileTransform::fit("x", &[4.0; 10]).unwrap_err();
        assert!(matches!(err, PreprocessError::ConstantColumn(_)));
    }

    #[test]
    fn round_trip_within_one_landmark_gap() {
        let mut values = Vec::new();
        // Uneven spacing on purpose.
        for i in 0..500 {
            values.push((i as f64).sqrt() * 3.0 + (i % 7) as f64 * 0.01);
        }
        let qt = QuantileTransform::fit("x", &values).unwrap();
        let gap = qt.max_gap();
        for i in 0..500 {
            let v = values[i];
            let err = (qt.inverse(qt.forward(v)) - v).abs();
            assert!(err <= gap + 1e-9, "v={v} err={err} gap={gap}");
        }
    }

    #[test]
    fn landmark_count_is_capped() {
        let values: Vec<f64> = (0..5000).map(|i| i as f64).collect();
        let qt = QuantileTransform::fit("x", &values).unwrap();
        assert!(qt.values.len() <= MAX_LANDMARKS);
        assert_eq!(qt.min_value(), 0.0);
        assert_eq!(qt.max_value(), 4999.0);
    }

    fn toy_table() -> DataTable {
        let schema = TableSchema::new(alloc::vec![
            ColumnSpec::numerical("x"),
            ColumnSpec::categorical("c", &["a", "b", "z"]),
        ])
        .unwrap();
        let rows = (0..9)
            .map(|i| alloc::vec![Cell::Num(i as f64), Cell::Cat((i % 3) as u32)])
            .collect();
        DataTable::new(schema, rows).unwrap()
    }

    #[test]
    fn onehot_blocks_are_valid() {
        let t = toy_table();
        let pre = Preprocessor::fit(&t).unwrap();
        let batch = pre.transform(&t, &[1, 4]).unwrap();
        assert_eq!(batch.cat_row(0), &[0.0, 1.0, 0.0]);
        for r in 0..batch.n_rows {
            let s: f64 = batch.cat_row(r).iter().sum();
            assert_eq!(s, 1.0);
        }
    }

    #[test]
    fn decode_breaks_ties_toward_lowest_ordinal() {
        let enc = CategoryEncoder { widths: alloc::vec![2, 3] };
        assert_eq!(enc.decode(0, &[0.5, 0.5]), 0);
        assert_eq!(enc.decode(1, &[0.2, 0.5, 0.3]), 1);
    }

    #[test]
    fn full_row_round_trip() {
        let t = toy_table();
        let pre = Preprocessor::fit(&t).unwrap();
        let rows: Vec<usize> = (0..t.n_rows()).collect();
        let batch = pre.transform(&t, &rows).unwrap();
        let decoded = pre.inverse_transform(t.schema(), &batch).unwrap();
        let gap = pre.quantile(0).max_gap();
        for (r, row) in decoded.iter().enumerate() {
            let orig = t.row(r);
            assert!((row[0].as_num().unwrap() - orig[0].as_num().unwrap()).abs() <= gap);
            assert_eq!(row[1], orig[1]);
        }
    }

    #[test]
    fn transform_rejects_missing_cells() {
        let schema = toy_table().schema().clone();
        let t = DataTable::new(schema, alloc::vec![alloc::vec![Cell::Missing, Cell::Cat(0)]])
            .unwrap();
        let pre = Preprocessor::fit(&toy_table()).unwrap();
        let err = pre.transform(&t, &[0]).unwrap_err();
        assert!(matches!(err, PreprocessError::MissingCell { row: 0, .. }));
    }
}
