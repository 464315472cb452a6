//! Training-loss and optimization-loop checks: the analytic gradients of
//! the hybrid loss against central finite differences, loss behavior on a
//! frozen batch, and loop determinism.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use tabfill_core::denoiser::{Denoiser, DenoiserConfig};
use tabfill_core::diffusion::{make_schedule, ScheduleKind};
use tabfill_core::masking::{draw_masks, MaskPair};
use tabfill_core::preprocess::Preprocessor;
use tabfill_core::schema::{Cell, ColumnSpec, DataTable, TableSchema};
use tabfill_core::train::{
    hybrid_loss, hybrid_loss_and_grads, prepare_batch, train, training_step, Adam, LambdaCat,
    PreparedBatch, T1Decode, TrainConfig, TrainEvent,
};

fn toy_schema() -> TableSchema {
    TableSchema::new(vec![
        ColumnSpec::numerical("anchor").always_observed(),
        ColumnSpec::numerical("x"),
        ColumnSpec::categorical("c2", &["a", "b"]),
        ColumnSpec::categorical("c3", &["a", "b", "c"]),
    ])
    .unwrap()
}

fn toy_table(n: usize) -> DataTable {
    let rows = (0..n)
        .map(|i| {
            vec![
                Cell::Num(i as f64 * 0.1),
                Cell::Num((i as f64 * 0.7).sin() * 2.0),
                Cell::Cat((i % 2) as u32),
                Cell::Cat((i % 3) as u32),
            ]
        })
        .collect();
    DataTable::new(toy_schema(), rows).unwrap()
}

fn tiny_net(seed: u64) -> Denoiser {
    let cfg = DenoiserConfig { hidden_dims: vec![8, 8], t_embed_dim: 8, dropout: 0.0 };
    Denoiser::init(&toy_schema(), cfg, seed)
}

fn frozen_batch(n: usize, seed: u64, f_num: f64, f_cat: f64) -> PreparedBatch {
    let schema = toy_schema();
    let table = toy_table(64);
    let pre = Preprocessor::fit(&table).unwrap();
    let indices: Vec<usize> = (0..n).map(|i| i % table.n_rows()).collect();
    let encoded = pre.transform(&table, &indices).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let masks = draw_masks(n, &schema, f_num, f_cat, &mut rng).unwrap();
    let num_sched = make_schedule(6, ScheduleKind::Linear, 0.02, 0.3).unwrap();
    let cat_sched = make_schedule(6, ScheduleKind::Cosine, 0.0, 0.0).unwrap();
    prepare_batch(&encoded, &masks, schema.cat_widths(), &num_sched, &cat_sched, &mut rng)
}

#[test]
fn hybrid_loss_gradients_match_central_differences() {
    let start = std::time::Instant::now();
    let cat_sched = make_schedule(6, ScheduleKind::Cosine, 0.0, 0.0).unwrap();
    let mut net = tiny_net(3);
    assert!(net.n_params() < 10_000, "keep the finite-difference sweep cheap");
    let batch = frozen_batch(6, 17, 0.9, 0.9);
    assert!(batch.n_num_targets > 0, "need numerical targets");
    assert!(batch.cat_counts.iter().any(|&c| c > 0), "need categorical targets");
    // Make sure both variational branches (t == 1 and t >= 2) appear.
    assert!(batch.rows.iter().any(|r| r.t == 1) && batch.rows.iter().any(|r| r.t > 1));

    let lambda = 0.7;
    let mut grads = vec![0.0; net.n_params()];
    hybrid_loss_and_grads(&net, &batch, &cat_sched, lambda, &mut grads);

    let h = 1e-4;
    let mut max_rel = 0.0f64;
    for i in 0..net.n_params() {
        let orig = net.params()[i];
        net.params_mut()[i] = orig + h;
        let up = hybrid_loss(&net, &batch, &cat_sched, lambda).total;
        net.params_mut()[i] = orig - h;
        let down = hybrid_loss(&net, &batch, &cat_sched, lambda).total;
        net.params_mut()[i] = orig;
        let fd = (up - down) / (2.0 * h);
        let rel = (grads[i] - fd).abs() / grads[i].abs().max(fd.abs()).max(1e-6);
        if rel > max_rel {
            max_rel = rel;
        }
    }
    assert!(max_rel <= 1e-3, "max relative gradient error {max_rel}");
    assert!(start.elapsed().as_secs() < 60, "gradient oracle must run in under a minute");
}

#[test]
fn empty_mask_gives_zero_loss_and_zero_gradients() {
    let schema = toy_schema();
    let table = toy_table(8);
    let pre = Preprocessor::fit(&table).unwrap();
    let indices: Vec<usize> = (0..8).collect();
    let encoded = pre.transform(&table, &indices).unwrap();
    let masks = MaskPair::all_observed(8, &schema);
    let num_sched = make_schedule(6, ScheduleKind::Linear, 0.02, 0.3).unwrap();
    let cat_sched = make_schedule(6, ScheduleKind::Cosine, 0.0, 0.0).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(0);
    let batch =
        prepare_batch(&encoded, &masks, schema.cat_widths(), &num_sched, &cat_sched, &mut rng);

    let net = tiny_net(5);
    let mut grads = vec![1.0; net.n_params()];
    let loss = hybrid_loss_and_grads(&net, &batch, &cat_sched, 1.0, &mut grads);
    assert_eq!(loss.total, 0.0);
    assert_eq!(loss.n_num_targets, 0);
    assert_eq!(loss.n_cat_targets, 0);
    assert!(grads.iter().all(|&g| g == 0.0));
}

#[test]
fn doubling_lambda_cat_doubles_categorical_gradients() {
    // Categorical-only batch so every gradient is a categorical gradient.
    let cat_sched = make_schedule(6, ScheduleKind::Cosine, 0.0, 0.0).unwrap();
    let net = tiny_net(11);
    let batch = frozen_batch(5, 23, 0.0, 1.0);
    assert_eq!(batch.n_num_targets, 0);

    let mut g1 = vec![0.0; net.n_params()];
    let l1 = hybrid_loss_and_grads(&net, &batch, &cat_sched, 1.0, &mut g1);
    let mut g2 = vec![0.0; net.n_params()];
    let l2 = hybrid_loss_and_grads(&net, &batch, &cat_sched, 2.0, &mut g2);
    assert!((l2.total - 2.0 * l1.total).abs() < 1e-12);
    for i in 0..g1.len() {
        assert!((g2[i] - 2.0 * g1[i]).abs() <= 1e-12 * g1[i].abs().max(1.0));
    }
}

#[test]
fn categorical_only_batch_has_no_numerical_term() {
    let cat_sched = make_schedule(6, ScheduleKind::Cosine, 0.0, 0.0).unwrap();
    let net = tiny_net(7);
    let batch = frozen_batch(8, 31, 0.0, 0.8);
    let loss = hybrid_loss(&net, &batch, &cat_sched, 1.0);
    assert_eq!(loss.num_term, 0.0);
    assert!(loss.cat_term > 0.0);
    assert!((loss.total - loss.cat_term).abs() < 1e-15);
}

#[test]
fn loss_ignores_values_at_observed_positions() {
    let cat_sched = make_schedule(6, ScheduleKind::Cosine, 0.0, 0.0).unwrap();
    let net = tiny_net(13);
    let batch = frozen_batch(6, 41, 0.5, 0.5);
    let base = hybrid_loss(&net, &batch, &cat_sched, 1.0).total;

    // Tampering with supervision values at observed (non-target)
    // positions must not change the loss.
    let mut tampered = batch.clone();
    for row in &mut tampered.rows {
        for i in 0..row.num_target.len() {
            if !row.num_target[i] {
                row.eps_true[i] = 1234.5;
            }
        }
    }
    let after = hybrid_loss(&net, &tampered, &cat_sched, 1.0).total;
    assert_eq!(base, after);
}

#[test]
fn loss_on_frozen_batch_halves_within_200_steps() {
    let cat_sched = make_schedule(6, ScheduleKind::Cosine, 0.0, 0.0).unwrap();
    let mut net = tiny_net(19);
    let mut opt = Adam::new(5e-3, net.n_params());
    let batch = frozen_batch(16, 47, 0.6, 0.6);

    let initial = hybrid_loss(&net, &batch, &cat_sched, 1.0).total;
    let mut grads = Vec::new();
    for step in 0..200 {
        training_step(&mut net, &mut opt, &batch, &cat_sched, 1.0, step, &mut grads).unwrap();
    }
    let fin = hybrid_loss(&net, &batch, &cat_sched, 1.0).total;
    assert!(
        fin <= 0.5 * initial,
        "loss did not halve: {initial} -> {fin}"
    );
}

#[test]
fn lambda_schedule_decays_linearly_to_floor() {
    let config = TrainConfig {
        steps: 101,
        lambda_cat: LambdaCat::LinearDecayFrom1,
        lambda_cat_floor: 0.1,
        ..TrainConfig::default()
    };
    assert_eq!(config.lambda_cat_at(0), 1.0);
    assert_eq!(config.lambda_cat_at(100), 0.1);
    let mid = config.lambda_cat_at(50);
    assert!((mid - 0.55).abs() < 1e-12);
    for s in 1..=100u64 {
        assert!(config.lambda_cat_at(s) <= config.lambda_cat_at(s - 1));
        assert!(config.lambda_cat_at(s) >= 0.0);
    }
    let constant = TrainConfig { lambda_cat: LambdaCat::Constant1, ..config };
    assert_eq!(constant.lambda_cat_at(77), 1.0);
}

fn quick_config(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 2e-3,
        batch_size: 16,
        steps: 30,
        t_count: 4,
        num_beta_min: 0.05,
        num_beta_max: 0.4,
        f_mask_num: 0.5,
        f_mask_cat: 0.5,
        seed,
        checkpoint_every: 15,
        val_rows: 16,
        denoiser: DenoiserConfig { hidden_dims: vec![8, 8], t_embed_dim: 8, dropout: 0.0 },
        t1_decode: T1Decode::Sample,
        ..TrainConfig::default()
    }
}

#[test]
fn identical_seeds_give_identical_checkpoints() {
    let table = toy_table(64);
    let (tr, va, _te) = table.split((0.7, 0.2, 0.1), 3).unwrap();
    let a = train(&tr, &va, &quick_config(99), |_| {}).unwrap();
    let b = train(&tr, &va, &quick_config(99), |_| {}).unwrap();
    assert_eq!(a.checkpoint.denoiser.params(), b.checkpoint.denoiser.params());
    assert_eq!(a.checkpoint.selected_step, b.checkpoint.selected_step);
    assert_eq!(a.history, b.history);

    let c = train(&tr, &va, &quick_config(100), |_| {}).unwrap();
    assert_ne!(a.checkpoint.denoiser.params(), c.checkpoint.denoiser.params());
}

#[test]
fn train_emits_validation_events_and_tracks_best() {
    let table = toy_table(64);
    let (tr, va, _te) = table.split((0.7, 0.2, 0.1), 3).unwrap();
    let mut val_events = 0;
    let mut best_events = 0;
    let out = train(&tr, &va, &quick_config(1), |ev| {
        if let TrainEvent::Validation { best, .. } = ev {
            val_events += 1;
            if best {
                best_events += 1;
            }
        }
    })
    .unwrap();
    assert_eq!(val_events, 2, "steps=30, cadence 15 -> two validations");
    assert!(best_events >= 1);
    assert_eq!(out.history.len(), 2);
    let best_score = out.history.iter().map(|v| v.score).fold(f64::INFINITY, f64::min);
    assert_eq!(out.checkpoint.validation.unwrap().score, best_score);
}

#[test]
fn invalid_configs_are_rejected() {
    let table = toy_table(32);
    let (tr, va, _) = table.split((0.7, 0.2, 0.1), 3).unwrap();
    let mut cfg = quick_config(0);
    cfg.f_mask_num = 0.0;
    cfg.f_mask_cat = 0.0;
    assert!(train(&tr, &va, &cfg, |_| {}).is_err());

    let mut cfg = quick_config(0);
    cfg.learning_rate = -1.0;
    assert!(train(&tr, &va, &cfg, |_| {}).is_err());
}
