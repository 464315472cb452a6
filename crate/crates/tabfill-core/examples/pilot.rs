//! Scratch pilot for sizing the desk-scale training configuration.

use std::time::Instant;

use tabfill_core::denoiser::DenoiserConfig;
use tabfill_core::eval::{reconstruction_eval, univariate_eval, EvalOptions};
use tabfill_core::oracle::default_building_spec;
use tabfill_core::sample::Sampler;
use tabfill_core::train::{train, TrainConfig, TrainEvent};

mod ceiling {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use tabfill_core::masking::MaskPair;
    use tabfill_core::math::{derive_seed, sample_categorical};
    use tabfill_core::oracle::OracleSpec;
    use tabfill_core::sample::{ConditionalSampler, SampleError};
    use tabfill_core::schema::{Cell, DataTable, TableSchema};

    /// Perfectly calibrated sampler: draws categorical targets from the
    /// exact full-row conditional.
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
                for c in 0..schema.n_cat() {
                    if !masks.cat_row(r)[c] {
                        let col = schema.categorical_column(c);
                        let post = self.spec.exact_full_conditional(&row, col);
                        row[col] = Cell::Cat(sample_categorical(&post, rng.gen::<f64>()) as u32);
                    }
                }
                for i in 0..schema.n_num() {
                    if !masks.num_row(r)[i] {
                        let col = schema.numerical_column(i);
                        if let Some((mu, sd)) = self.spec.num_conditional_given_row(&row, col) {
                            let z: f64 = rng.sample(rand_distr::StandardNormal);
                            row[col] = Cell::Num(mu + sd * z);
                        }
                    }
                }
                out.push(row);
            }
            Ok(out)
        }
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let t_count: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(64);
    let hidden: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(128);

    let spec = default_building_spec();

    if steps == 0 {
        // Ceiling mode: score the exact-conditional sampler instead of a
        // trained model.
        let full = spec.generate(20_000, 11);
        let (main, _) = spec.partition_held_out(&full);
        let (train_t, _, test_t) = main.split((0.8, 0.1, 0.1), 2).unwrap();
        let sampler = ceiling::OracleSampler { spec: &spec };
        let opts = EvalOptions { max_rows: Some(1500), ..EvalOptions::default() };
        let rep = reconstruction_eval(&sampler, &train_t, &test_t, &opts).unwrap();
        for f in &rep.features {
            eprintln!(
                "ceiling {}: model_rmse={:.4?} base_rmse={:.4?} acc={:.4?} mode={:.4?}",
                f.column, f.model_rmse, f.mean_baseline_rmse, f.model_accuracy, f.mode_accuracy
            );
        }
        return;
    }
    let t0 = Instant::now();
    let full = spec.generate(72_000, 11);
    let (main, ood) = spec.partition_held_out(&full);
    eprintln!("generate: {:?} main={} ood={}", t0.elapsed(), main.n_rows(), ood.n_rows());
    let main = main.select(&(0..62_500).collect::<Vec<_>>());
    let (train_t, val_t, test_t) = main.split((0.8, 0.1, 0.1), 2).unwrap();
    eprintln!("splits: {} {} {}", train_t.n_rows(), val_t.n_rows(), test_t.n_rows());

    let config = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 256,
        steps,
        t_count,
        num_beta_min: 2e-3,
        num_beta_max: 0.28,
        f_mask_num: 0.5,
        f_mask_cat: 0.2,
        seed: 5,
        checkpoint_every: 500,
        val_rows: 384,
        denoiser: DenoiserConfig {
            hidden_dims: vec![hidden, hidden],
            t_embed_dim: 64,
            dropout: 0.0,
        },
        ..TrainConfig::default()
    };

    let t0 = Instant::now();
    let outcome = train(&train_t, &val_t, &config, |ev| match ev {
        TrainEvent::Step { step, loss } => {
            if step % 200 == 0 {
                eprintln!(
                    "step {step}: total={:.4} num={:.4} cat={:.4} ({:?})",
                    loss.total,
                    loss.num_term,
                    loss.cat_term,
                    t0.elapsed()
                );
            }
        }
        TrainEvent::Validation { score, best } => {
            eprintln!(
                "val @{}: rmse={:.4} acc={:.4} score={:.4} best={best}",
                score.step, score.rmse_norm, score.accuracy, score.score
            );
        }
    })
    .unwrap();
    eprintln!("train time: {:?}", t0.elapsed());

    let ck = outcome.checkpoint;
    let sampler = Sampler::from_checkpoint(&ck).unwrap();
    let opts = EvalOptions::default();

    for target in ["heating_fuel", "clothes_dryer", "hvac_is_faulted", "vintage", "sqft", "total_consumption"] {
        let t0 = Instant::now();
        let rep = univariate_eval(&sampler, &train_t, &test_t, target, &opts).unwrap();
        eprintln!(
            "univariate {target}: avg={:.4?} rb={:.4?} groups={} skipped={} ({:?})",
            rep.average,
            rep.random_baseline_average,
            rep.groups.len(),
            rep.skipped_groups,
            t0.elapsed()
        );
    }

    let t0 = Instant::now();
    let opts_recon = EvalOptions { max_rows: Some(1500), ..EvalOptions::default() };
    let rep = reconstruction_eval(&sampler, &train_t, &test_t, &opts_recon).unwrap();
    eprintln!("reconstruction (1500 rows): {:?}", t0.elapsed());
    for f in &rep.features {
        eprintln!(
            "  {}: model_rmse={:.4?} base_rmse={:.4?} acc={:.4?} mode={:.4?} rand={:.4?}",
            f.column, f.model_rmse, f.mean_baseline_rmse, f.model_accuracy, f.mode_accuracy, f.random_accuracy
        );
    }
}
