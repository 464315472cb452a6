//! `gen-data`: sample a synthetic table from an oracle spec, carve out
//! the held-out region, and write train/val/test/ood CSVs plus the
//! schema.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use log::info;

use tabfill_core::oracle::{default_building_spec, OracleSpec};

use crate::files::{config_hash, load_oracle_spec, save_oracle_spec, Manifest};
use crate::io::{save_schema, write_csv};

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Oracle spec JSON; defaults to the built-in building-characteristics spec.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Total rows to sample (before the held-out partition).
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train/val/test fractions applied to the non-held-out pool.
    #[arg(long, default_value = "0.8,0.1,0.1", value_parser = parse_fractions)]
    pub fractions: (f64, f64, f64),
    /// Separate seed for the split shuffle.
    #[arg(long, default_value_t = 1)]
    pub split_seed: u64,
    /// Output directory (created if absent).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn parse_fractions(s: &str) -> Result<(f64, f64, f64), String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated fractions, got {}", parts.len()));
    }
    Ok((parts[0], parts[1], parts[2]))
}

pub fn run(args: &GenDataArgs) -> Result<()> {
    let spec: OracleSpec = match &args.spec {
        Some(path) => load_oracle_spec(path)?,
        None => default_building_spec(),
    };
    if args.n == 0 {
        bail!("--n must be positive");
    }
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    info!("sampling {} rows (seed {})", args.n, args.seed);
    let full = spec.generate(args.n, args.seed);
    let (main, ood) = spec.partition_held_out(&full);
    info!("held-out region: {} of {} rows", ood.n_rows(), full.n_rows());
    let (train, val, test) = main
        .split(args.fractions, args.split_seed)
        .map_err(|e| anyhow::anyhow!("split failed: {e}"))?;
    info!("splits: train={} val={} test={} ood={}", train.n_rows(), val.n_rows(), test.n_rows(), ood.n_rows());

    let out = |name: &str| -> PathBuf { args.out.join(name) };
    save_schema(&out("schema.json"), spec.schema(), "")?;
    save_oracle_spec(&out("oracle_spec.json"), &spec)?;
    write_csv(&out("train.csv"), &train, "")?;
    write_csv(&out("val.csv"), &val, "")?;
    write_csv(&out("test.csv"), &test, "")?;
    write_csv(&out("ood.csv"), &ood, "")?;

    let mut manifest = Manifest::new("gen-data", config_hash(&spec)?, args.seed);
    if let Some(path) = &args.spec {
        manifest = manifest.input(path);
    }
    for name in ["schema.json", "oracle_spec.json", "train.csv", "val.csv", "test.csv", "ood.csv"] {
        manifest = manifest.output(Path::new(name));
    }
    manifest.write(&args.out)
}
