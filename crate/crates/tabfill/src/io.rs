//! CSV reading and writing against a schema.
//!
//! Files are RFC-4180-style UTF-8 with a required header row. The header
//! must contain exactly the schema's column names (any order). Missing
//! values are written as the schema file's missing token (empty string by
//! default); on input both the token and, when the token is empty, empty
//! cells mean missing.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use tabfill_core::schema::{Cell, ColumnKind, ColumnSpec, DataTable, TableSchema};

/// On-disk schema description: column specs plus the missing-value token.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaFile {
    /// Cell content that denotes a missing value.
    #[serde(default)]
    pub missing: String,
    pub columns: Vec<ColumnSpec>,
}

impl SchemaFile {
    pub fn new(schema: &TableSchema, missing: &str) -> Self {
        SchemaFile { missing: missing.to_owned(), columns: schema.columns().to_vec() }
    }

    pub fn schema(&self) -> Result<TableSchema> {
        TableSchema::new(self.columns.clone()).map_err(|e| anyhow!("invalid schema: {e}"))
    }
}

pub fn load_schema(path: &Path) -> Result<(TableSchema, String)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading schema file {}", path.display()))?;
    let file: SchemaFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing schema file {}", path.display()))?;
    Ok((file.schema()?, file.missing))
}

pub fn save_schema(path: &Path, schema: &TableSchema, missing: &str) -> Result<()> {
    let text = serde_json::to_string_pretty(&SchemaFile::new(schema, missing))?;
    std::fs::write(path, text + "\n")
        .with_context(|| format!("writing schema file {}", path.display()))
}

/// Loads and validates a CSV file against the schema. Errors carry the
/// 1-based data row and the column name.
pub fn load_csv(path: &Path, schema: &TableSchema, missing: &str) -> Result<DataTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;

    let headers = reader
        .headers()
        .with_context(|| format!("{}: missing header row", path.display()))?
        .clone();
    // Header must match the schema's column set exactly, order-insensitive.
    let mut mapping = vec![usize::MAX; schema.len()];
    for (pos, name) in headers.iter().enumerate() {
        let col = schema
            .column_index(name)
            .ok_or_else(|| anyhow!("{}: unknown column '{name}' in header", path.display()))?;
        if mapping[col] != usize::MAX {
            bail!("{}: duplicate column '{name}' in header", path.display());
        }
        mapping[col] = pos;
    }
    for (col, &pos) in mapping.iter().enumerate() {
        if pos == usize::MAX {
            bail!("{}: header lacks column '{}'", path.display(), schema.column(col).name);
        }
    }

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 1;
        let record = record.with_context(|| format!("{}: row {row_no}", path.display()))?;
        if record.len() != schema.len() {
            bail!(
                "{}: row {row_no}: expected {} cells, got {}",
                path.display(),
                schema.len(),
                record.len()
            );
        }
        let mut row = Vec::with_capacity(schema.len());
        for (col, &pos) in mapping.iter().enumerate() {
            let raw = &record[pos];
            let spec = schema.column(col);
            if raw == missing {
                row.push(Cell::Missing);
                continue;
            }
            match spec.kind {
                ColumnKind::Numerical => {
                    let v: f64 = raw.parse().map_err(|_| {
                        anyhow!(
                            "{}: row {row_no}, column '{}': '{raw}' is not a number",
                            path.display(),
                            spec.name
                        )
                    })?;
                    if !v.is_finite() {
                        bail!(
                            "{}: row {row_no}, column '{}': non-finite value '{raw}'",
                            path.display(),
                            spec.name
                        );
                    }
                    row.push(Cell::Num(v));
                }
                ColumnKind::Categorical => {
                    let ord = schema.ordinal(col, raw).ok_or_else(|| {
                        anyhow!(
                            "{}: row {row_no}, column '{}': unknown category '{raw}'",
                            path.display(),
                            spec.name
                        )
                    })?;
                    row.push(Cell::Cat(ord));
                }
            }
        }
        rows.push(row);
    }
    DataTable::new(schema.clone(), rows)
        .map_err(|e| anyhow!("{}: validation failed: {e}", path.display()))
}

/// Writes a table in schema column order. Numerical cells print with
/// Rust's shortest round-trip formatting, so re-reading reproduces them
/// exactly.
pub fn write_csv(path: &Path, table: &DataTable, missing: &str) -> Result<()> {
    let schema = table.schema();
    let mut writer = csv::WriterBuilder::new()
        .from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    writer.write_record(schema.columns().iter().map(|c| c.name.as_str()))?;
    let mut field = String::new();
    for row in table.rows() {
        for (col, cell) in row.iter().enumerate() {
            field.clear();
            match cell {
                Cell::Missing => field.push_str(missing),
                Cell::Num(v) => field.push_str(&format!("{v}")),
                Cell::Cat(o) => {
                    field.push_str(&schema.column(col).categories[*o as usize]);
                }
            }
            writer.write_field(&field)?;
        }
        writer.write_record(None::<&[u8]>)?;
    }
    writer.flush()?;
    Ok(())
}
