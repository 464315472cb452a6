//! `impute`: fill the missing cells of a CSV with conditional samples
//! from a trained checkpoint, one output CSV per scenario plus a
//! provenance sidecar naming the generated fields per row.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::Args;
use log::info;
use serde::Serialize;

use tabfill_core::sample::impute;

use crate::files::{config_hash, load_checkpoint, save_json_pretty, Manifest};
use crate::io::{load_csv, write_csv};

#[derive(Debug, Args)]
pub struct ImputeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Input CSV; empty cells (or the schema's missing token) are imputed.
    #[arg(long)]
    pub input: PathBuf,
    /// Number of independent completions to draw.
    #[arg(long, default_value_t = 1)]
    pub scenarios: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Missing-value token used in the input and output CSVs.
    #[arg(long, default_value = "")]
    pub missing: String,
    /// Output directory (created if absent).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct Provenance<'a> {
    /// Generated (imputed) column names per input row; observed cells
    /// were copied through unchanged in every scenario.
    generated_fields: Vec<Vec<&'a str>>,
    scenarios: usize,
    seed: u64,
}

pub fn run(args: &ImputeArgs) -> Result<()> {
    if args.scenarios == 0 {
        anyhow::bail!("--scenarios must be positive");
    }
    let ck = load_checkpoint(&args.checkpoint)?;
    let table = load_csv(&args.input, &ck.schema, &args.missing)?;
    info!("imputing {} rows, {} scenario(s)", table.n_rows(), args.scenarios);

    let results =
        impute(&ck, &table, args.scenarios, args.seed).map_err(|e| anyhow!("imputation failed: {e}"))?;

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let mut manifest = Manifest::new("impute", config_hash(&ck.config)?, args.seed)
        .input(&args.checkpoint)
        .input(&args.input);
    for result in &results {
        let name = format!("scenario_{}.csv", result.scenario);
        write_csv(&args.out.join(&name), &result.table, &args.missing)?;
        manifest = manifest.output(Path::new(&name));
    }

    let provenance = Provenance {
        generated_fields: (0..table.n_rows()).map(|r| results[0].generated_names(r)).collect(),
        scenarios: args.scenarios,
        seed: args.seed,
    };
    save_json_pretty(&args.out.join("provenance.json"), &provenance)?;
    manifest.output(Path::new("provenance.json")).write(&args.out)
}
