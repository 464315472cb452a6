//! Table schemas and in-memory tables.
//!
//! A [`TableSchema`] fixes the canonical column order used by every other
//! module: numerical cells are encoded in schema order, followed by the
//! one-hot blocks of the categorical columns in schema order. Category
//! vocabularies are ordered; a category's position is its ordinal code.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numerical,
    Categorical,
}

/// Declarative description of one column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Ordered vocabulary; position fixes the ordinal code. Empty for
    /// numerical columns.
    #[serde(default)]
    pub categories: Vec<String>,
    /// Always-observed columns are never masked and never imputed.
    #[serde(default)]
    pub always_observed: bool,
    /// Documented dependency columns, used to group rows during
    /// evaluation and to build the matched-row baselines.
    #[serde(default)]
    pub dependencies: Vec<String>,
}

impl ColumnSpec {
    pub fn numerical(name: &str) -> Self {
        ColumnSpec {
            name: String::from(name),
            kind: ColumnKind::Numerical,
            categories: Vec::new(),
            always_observed: false,
            dependencies: Vec::new(),
        }
    }

    pub fn categorical(name: &str, categories: &[&str]) -> Self {
        ColumnSpec {
            name: String::from(name),
            kind: ColumnKind::Categorical,
            categories: categories.iter().map(|c| String::from(*c)).collect(),
            always_observed: false,
            dependencies: Vec::new(),
        }
    }

    pub fn always_observed(mut self) -> Self {
        self.always_observed = true;
        self
    }

    pub fn with_dependencies(mut self, deps: &[&str]) -> Self {
        self.dependencies = deps.iter().map(|d| String::from(*d)).collect();
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SchemaError {
    NoColumns,
    DuplicateColumn(String),
    /// Categorical columns need at least two categories.
    TooFewCategories(String),
    DuplicateCategory { column: String, category: String },
    CategoriesOnNumerical(String),
    UnknownDependency { column: String, dependency: String },
    SelfDependency(String),
    CyclicDependencies(String),
    EmptyTable,
    BadFractions { sum: f64 },
    RowArity { row: usize, expected: usize, got: usize },
    KindMismatch { row: usize, column: String },
    NonFiniteNumber { row: usize, column: String },
    BadOrdinal { row: usize, column: String, ordinal: u32 },
}

impl core::fmt::Display for SchemaError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SchemaError::NoColumns => write!(f, "schema has no columns"),
            SchemaError::DuplicateColumn(c) => write!(f, "duplicate column name '{c}'"),
            SchemaError::TooFewCategories(c) => {
                write!(f, "categorical column '{c}' needs at least 2 categories")
            }
            SchemaError::DuplicateCategory { column, category } => {
                write!(f, "column '{column}' lists category '{category}' twice")
            }
            SchemaError::CategoriesOnNumerical(c) => {
                write!(f, "numerical column '{c}' must not declare categories")
            }
            SchemaError::UnknownDependency { column, dependency } => {
                write!(f, "column '{column}' depends on unknown column '{dependency}'")
            }
            SchemaError::SelfDependency(c) => write!(f, "column '{c}' depends on itself"),
            SchemaError::CyclicDependencies(c) => {
                write!(f, "dependency cycle through column '{c}'")
            }
            SchemaError::EmptyTable => write!(f, "table has no rows"),
            SchemaError::BadFractions { sum } => {
                write!(f, "split fractions must be positive and sum to 1 (sum = {sum})")
            }
            SchemaError::RowArity { row, expected, got } => {
                write!(f, "row {row}: expected {expected} cells, got {got}")
            }
            SchemaError::KindMismatch { row, column } => {
                write!(f, "row {row}, column '{column}': cell kind does not match schema")
            }
            SchemaError::NonFiniteNumber { row, column } => {
                write!(f, "row {row}, column '{column}': non-finite numerical value")
            }
            SchemaError::BadOrdinal { row, column, ordinal } => {
                write!(f, "row {row}, column '{column}': ordinal {ordinal} out of vocabulary")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SchemaError {}

/// Validated, ordered collection of [`ColumnSpec`]s.
///
/// The column order is the canonical encoding order used everywhere else.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "Vec<ColumnSpec>", into = "Vec<ColumnSpec>")]
pub struct TableSchema {
    columns: Vec<ColumnSpec>,
    n_num: usize,
    cat_widths: Vec<usize>,
    /// Column index -> position among columns of the same kind.
    slots: Vec<usize>,
}

impl TryFrom<Vec<ColumnSpec>> for TableSchema {
    type Error = SchemaError;
    fn try_from(columns: Vec<ColumnSpec>) -> Result<Self, SchemaError> {
        TableSchema::new(columns)
    }
}

impl From<TableSchema> for Vec<ColumnSpec> {
    fn from(s: TableSchema) -> Self {
        s.columns
    }
}

impl TableSchema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self, SchemaError> {
        if columns.is_empty() {
            return Err(SchemaError::NoColumns);
        }
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, col) in columns.iter().enumerate() {
            if index.insert(col.name.as_str(), i).is_some() {
                return Err(SchemaError::DuplicateColumn(col.name.clone()));
            }
            match col.kind {
                ColumnKind::Categorical => {
                    if col.categories.len() < 2 {
                        return Err(SchemaError::TooFewCategories(col.name.clone()));
                    }
                    let mut seen: BTreeMap<&str, ()> = BTreeMap::new();
                    for c in &col.categories {
                        if seen.insert(c.as_str(), ()).is_some() {
                            return Err(SchemaError::DuplicateCategory {
                                column: col.name.clone(),
                                category: c.clone(),
                            });
                        }
                    }
                }
                ColumnKind::Numerical => {
                    if !col.categories.is_empty() {
                        return Err(SchemaError::CategoriesOnNumerical(col.name.clone()));
                    }
                }
            }
        }
        for col in &columns {
            for dep in &col.dependencies {
                if dep == &col.name {
                    return Err(SchemaError::SelfDependency(col.name.clone()));
                }
                if !index.contains_key(dep.as_str()) {
                    return Err(SchemaError::UnknownDependency {
                        column: col.name.clone(),
                        dependency: dep.clone(),
                    });
                }
            }
        }
        // Kahn's algorithm over the dependency edges (dep -> column).
        let n = columns.len();
        let mut indegree = alloc::vec![0usize; n];
        let mut out_edges: Vec<Vec<usize>> = alloc::vec![Vec::new(); n];
        for (i, col) in columns.iter().enumerate() {
            for dep in &col.dependencies {
                let d = index[dep.as_str()];
                out_edges[d].push(i);
                indegree[i] += 1;
            }
        }
        let mut queue: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut visited = 0usize;
        while let Some(i) = queue.pop() {
            visited += 1;
            for &j in &out_edges[i] {
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    queue.push(j);
                }
            }
        }
        if visited != n {
            let culprit = (0..n).find(|&i| indegree[i] > 0).unwrap();
            return Err(SchemaError::CyclicDependencies(columns[culprit].name.clone()));
        }

        let mut n_num = 0usize;
        let mut cat_widths = Vec::new();
        let mut slots = Vec::with_capacity(n);
        for col in &columns {
            match col.kind {
                ColumnKind::Numerical => {
                    slots.push(n_num);
                    n_num += 1;
                }
                ColumnKind::Categorical => {
                    slots.push(cat_widths.len());
                    cat_widths.push(col.categories.len());
                }
            }
        }
        Ok(TableSchema { columns, n_num, cat_widths, slots })
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Number of numerical columns.
    pub fn n_num(&self) -> usize {
        self.n_num
    }

    /// Number of categorical columns.
    pub fn n_cat(&self) -> usize {
        self.cat_widths.len()
    }

    /// One-hot width of each categorical column, in schema order.
    pub fn cat_widths(&self) -> &[usize] {
        &self.cat_widths
    }

    /// Total one-hot width across all categorical columns.
    pub fn onehot_width(&self) -> usize {
        self.cat_widths.iter().sum()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, index: usize) -> &ColumnSpec {
        &self.columns[index]
    }

    /// Position of a column among columns of its own kind: numerical
    /// columns map to their index in `0..n_num`, categorical columns to
    /// their index in `0..n_cat`.
    pub fn slot(&self, index: usize) -> usize {
        self.slots[index]
    }

    /// Schema-order column index of the `slot`-th numerical column.
    pub fn numerical_column(&self, slot: usize) -> usize {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == ColumnKind::Numerical)
            .nth(slot)
            .map(|(i, _)| i)
            .expect("numerical slot out of range")
    }

    /// Schema-order column index of the `slot`-th categorical column.
    pub fn categorical_column(&self, slot: usize) -> usize {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == ColumnKind::Categorical)
            .nth(slot)
            .map(|(i, _)| i)
            .expect("categorical slot out of range")
    }

    /// Offset of a categorical column's one-hot block within the
    /// concatenated categorical encoding, by categorical slot.
    pub fn onehot_offset(&self, cat_slot: usize) -> usize {
        self.cat_widths[..cat_slot].iter().sum()
    }

    /// Ordinal code of a category value in the named column.
    pub fn ordinal(&self, column: usize, value: &str) -> Option<u32> {
        self.columns[column]
            .categories
            .iter()
            .position(|c| c == value)
            .map(|p| p as u32)
    }

    /// FNV-1a fingerprint over the canonical schema description, stored in
    /// checkpoints to detect schema/model mismatches.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01B3);
            }
        };
        for col in &self.columns {
            eat(col.name.as_bytes());
            eat(&[0xFF, matches!(col.kind, ColumnKind::Categorical) as u8]);
            eat(&[col.always_observed as u8]);
            for c in &col.categories {
                eat(c.as_bytes());
                eat(&[0xFE]);
            }
            for d in &col.dependencies {
                eat(d.as_bytes());
                eat(&[0xFD]);
            }
            eat(&[0xFC]);
        }
        h
    }
}

/// One table cell. Categorical cells store the ordinal code into the
/// column's vocabulary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Missing,
    Num(f64),
    Cat(u32),
}

impl Cell {
    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_cat(&self) -> Option<u32> {
        match self {
            Cell::Cat(v) => Some(*v),
            _ => None,
        }
    }
}

/// A validated table: every cell matches its column kind, categorical
/// ordinals are in range, numerical values are finite.
#[derive(Debug, Clone)]
pub struct DataTable {
    schema: TableSchema,
    rows: Vec<Vec<Cell>>,
}

impl DataTable {
    pub fn new(schema: TableSchema, rows: Vec<Vec<Cell>>) -> Result<Self, SchemaError> {
        for (r, row) in rows.iter().enumerate() {
            if row.len() != schema.len() {
                return Err(SchemaError::RowArity {
                    row: r,
                    expected: schema.len(),
                    got: row.len(),
                });
            }
            for (c, cell) in row.iter().enumerate() {
                let col = schema.column(c);
                match (cell, col.kind) {
                    (Cell::Missing, _) => {}
                    (Cell::Num(v), ColumnKind::Numerical) => {
                        if !v.is_finite() {
                            return Err(SchemaError::NonFiniteNumber {
                                row: r,
                                column: col.name.clone(),
                            });
                        }
                    }
                    (Cell::Cat(o), ColumnKind::Categorical) => {
                        if *o as usize >= col.categories.len() {
                            return Err(SchemaError::BadOrdinal {
                                row: r,
                                column: col.name.clone(),
                                ordinal: *o,
                            });
                        }
                    }
                    _ => {
                        return Err(SchemaError::KindMismatch { row: r, column: col.name.clone() })
                    }
                }
            }
        }
        Ok(DataTable { schema, rows })
    }

    pub fn schema(&self) -> &TableSchema {
        &self.schema
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, r: usize) -> &[Cell] {
        &self.rows[r]
    }

    /// New table holding the given rows (cloned) in the given order.
    pub fn select(&self, indices: &[usize]) -> DataTable {
        DataTable {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Deterministic shuffled three-way split.
    ///
    /// Sizes are `floor(fraction * n)` per part with every remainder row
    /// assigned to the training part.
    pub fn split(
        &self,
        fractions: (f64, f64, f64),
        seed: u64,
    ) -> Result<(DataTable, DataTable, DataTable), SchemaError> {
        let (f_train, f_val, f_test) = fractions;
        let sum = f_train + f_val + f_test;
        if !(f_train > 0.0 && f_val > 0.0 && f_test > 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(SchemaError::BadFractions { sum });
        }
        let n = self.rows.len();
        if n == 0 {
            return Err(SchemaError::EmptyTable);
        }
        let mut indices: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        indices.shuffle(&mut rng);

        let n_val = (f_val * n as f64) as usize;
        let n_test = (f_test * n as f64) as usize;
        let n_train = n - n_val - n_test;
        let train = self.select(&indices[..n_train]);
        let val = self.select(&indices[n_train..n_train + n_val]);
        let test = self.select(&indices[n_train + n_val..]);
        Ok((train, val, test))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_schema() -> TableSchema {
        TableSchema::new(alloc::vec![
            ColumnSpec::numerical("x"),
            ColumnSpec::categorical("fuel", &["electric", "gas"]).with_dependencies(&["x"]),
        ])
        .unwrap()
    }

    #[test]
    fn layout_counts() {
        let s = toy_schema();
        assert_eq!(s.n_num(), 1);
        assert_eq!(s.cat_widths(), &[2]);
        assert_eq!(s.onehot_width(), 2);
        assert_eq!(s.slot(0), 0);
        assert_eq!(s.slot(1), 0);
        assert_eq!(s.numerical_column(0), 0);
        assert_eq!(s.categorical_column(0), 1);
    }

    #[test]
    fn rejects_duplicate_categories() {
        let err = TableSchema::new(alloc::vec![ColumnSpec::categorical("a", &["x", "x"])])
            .unwrap_err();
        assert!(matches!(err, SchemaError::DuplicateCategory { .. }));
    }

    #[test]
    fn rejects_dependency_cycle() {
        let err = TableSchema::new(alloc::vec![
            ColumnSpec::categorical("a", &["1", "2"]).with_dependencies(&["b"]),
            ColumnSpec::categorical("b", &["1", "2"]).with_dependencies(&["a"]),
        ])
        .unwrap_err();
        assert!(matches!(err, SchemaError::CyclicDependencies(_)));
    }

    #[test]
    fn rejects_unknown_dependency() {
        let err = TableSchema::new(alloc::vec![
            ColumnSpec::categorical("a", &["1", "2"]).with_dependencies(&["nope"]),
        ])
        .unwrap_err();
        assert!(matches!(err, SchemaError::UnknownDependency { .. }));
    }

    #[test]
    fn table_validates_cells() {
        let s = toy_schema();
        let err = DataTable::new(
            s.clone(),
            alloc::vec![alloc::vec![Cell::Num(1.0), Cell::Cat(2)]],
        )
        .unwrap_err();
        assert!(matches!(err, SchemaError::BadOrdinal { ordinal: 2, .. }));

        let err = DataTable::new(
            s.clone(),
            alloc::vec![alloc::vec![Cell::Num(f64::NAN), Cell::Cat(0)]],
        )
        .unwrap_err();
        assert!(matches!(err, SchemaError::NonFiniteNumber { .. }));

        let ok = DataTable::new(s, alloc::vec![alloc::vec![Cell::Missing, Cell::Cat(1)]]);
        assert!(ok.is_ok());
    }

    fn table_of(n: usize) -> DataTable {
        let s = toy_schema();
        let rows = (0..n)
            .map(|i| alloc::vec![Cell::Num(i as f64), Cell::Cat((i % 2) as u32)])
            .collect();
        DataTable::new(s, rows).unwrap()
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        let t = table_of(10);
        let (tr, va, te) = t.split((0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!((tr.n_rows(), va.n_rows(), te.n_rows()), (8, 1, 1));

        // 7 rows at (0.5, 0.25, 0.25): floors are 1 and 1, remainder to train.
        let t = table_of(7);
        let (tr, va, te) = t.split((0.5, 0.25, 0.25), 7).unwrap();
        assert_eq!((tr.n_rows(), va.n_rows(), te.n_rows()), (5, 1, 1));
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let t = table_of(50);
        let (a1, b1, c1) = t.split((0.6, 0.2, 0.2), 42).unwrap();
        let (a2, b2, c2) = t.split((0.6, 0.2, 0.2), 42).unwrap();
        assert_eq!(a1.rows(), a2.rows());
        assert_eq!(b1.rows(), b2.rows());
        assert_eq!(c1.rows(), c2.rows());

        // Union of the splits is the original multiset of rows.
        let mut seen: Vec<f64> = a1
            .rows()
            .iter()
            .chain(b1.rows())
            .chain(c1.rows())
            .map(|r| r[0].as_num().unwrap())
            .collect();
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expect: Vec<f64> = (0..50).map(|i| i as f64).collect();
        assert_eq!(seen, expect);
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let t = table_of(10);
        assert!(matches!(
            t.split((0.5, 0.5, 0.5), 1).unwrap_err(),
            SchemaError::BadFractions { .. }
        ));
    }

    #[test]
    fn fingerprint_tracks_schema_changes() {
        let a = toy_schema().fingerprint();
        let b = TableSchema::new(alloc::vec![
            ColumnSpec::numerical("x"),
            ColumnSpec::categorical("fuel", &["electric", "propane"]).with_dependencies(&["x"]),
        ])
        .unwrap()
        .fingerprint();
        assert_ne!(a, b);
        assert_eq!(a, toy_schema().fingerprint());
    }
}
