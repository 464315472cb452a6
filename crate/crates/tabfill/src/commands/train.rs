//! `train`: fit the preprocessor and run the training loop, writing the
//! best-validation checkpoint, the validation history, and a manifest.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::Args;
use log::info;

use tabfill_core::train::{train, TrainConfig, TrainEvent};

use crate::files::{config_hash, load_train_config, save_checkpoint, save_json_pretty, Manifest};
use crate::io::{load_csv, load_schema};

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub schema: PathBuf,
    /// Training split CSV.
    #[arg(long = "train")]
    pub train_csv: PathBuf,
    /// Validation split CSV.
    #[arg(long = "val")]
    pub val_csv: PathBuf,
    /// Training configuration JSON; missing fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (created if absent).
    #[arg(long)]
    pub out: PathBuf,
    /// Flag overrides; flags win over the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub t_count: Option<usize>,
    #[arg(long)]
    pub f_mask_num: Option<f64>,
    #[arg(long)]
    pub f_mask_cat: Option<f64>,
    /// Log every N steps.
    #[arg(long, default_value_t = 100)]
    pub log_every: u64,
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let (schema, missing) = load_schema(&args.schema)?;
    let train_table = load_csv(&args.train_csv, &schema, &missing)?;
    let val_table = load_csv(&args.val_csv, &schema, &missing)?;
    info!("loaded train={} val={} rows", train_table.n_rows(), val_table.n_rows());

    let mut config = match &args.config {
        Some(path) => load_train_config(path)?,
        None => TrainConfig::default(),
    };
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.steps {
        config.steps = v;
    }
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = args.learning_rate {
        config.learning_rate = v;
    }
    if let Some(v) = args.t_count {
        config.t_count = v;
    }
    if let Some(v) = args.f_mask_num {
        config.f_mask_num = v;
    }
    if let Some(v) = args.f_mask_cat {
        config.f_mask_cat = v;
    }

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    let log_every = args.log_every.max(1);
    let outcome = train(&train_table, &val_table, &config, |event| match event {
        TrainEvent::Step { step, loss } => {
            if step % log_every == 0 {
                info!(
                    "step {step}: loss={:.5} (num={:.5}, cat={:.5}, lambda_cat={:.3})",
                    loss.total, loss.num_term, loss.cat_term, loss.lambda_cat
                );
            }
        }
        TrainEvent::Validation { score, best } => {
            info!(
                "validation @{}: rmse_norm={:.4} accuracy={:.4} score={:.4}{}",
                score.step,
                score.rmse_norm,
                score.accuracy,
                score.score,
                if best { " (new best)" } else { "" }
            );
        }
    })
    .map_err(|e| anyhow!("training failed: {e}"))?;

    let ck_path = args.out.join("checkpoint.json");
    save_checkpoint(&ck_path, &outcome.checkpoint)?;
    save_json_pretty(&args.out.join("history.json"), &outcome.history)?;
    info!(
        "checkpoint from step {} written to {}",
        outcome.checkpoint.selected_step,
        ck_path.display()
    );

    Manifest::new("train", config_hash(&config)?, config.seed)
        .input(&args.schema)
        .input(&args.train_csv)
        .input(&args.val_csv)
        .output(Path::new("checkpoint.json"))
        .output(Path::new("history.json"))
        .write(&args.out)
}
