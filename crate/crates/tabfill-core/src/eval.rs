//! The evaluation protocol: dependency-matched conditional-distribution
//! comparison (univariate and bivariate), reconstruction scoring with
//! matched-row baselines, and the conditional sample-diversity
//! diagnostic.
//!
//! For a target with documented dependencies, every unique dependency
//! tuple in the test data forms a group: the true distribution comes from
//! up to `group_cap` matched training rows, the generated one from an
//! equal number of conditional imputations of the group's test rows with
//! the target masked and the full remaining row observed. Groups with no
//! matched training rows are skipped; groups with fewer than
//! `min_group_matches` are reported but excluded from averages.
//! Dependency-free targets compare random training rows against
//! imputations of random test rows. Distances: Jensen-Shannon for
//! categorical targets, range-normalized Wasserstein for numerical ones.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::masking::MaskError;
use crate::math::derive_seed;
use crate::metrics::{
    distribution_from_counts, js_distance, wasserstein_1d_normalized, MetricsError,
};
use crate::sample::{masks_for_targets, ConditionalSampler, SampleError};
use crate::schema::{Cell, ColumnKind, DataTable, TableSchema};

#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    UnknownColumn(String),
    AlwaysObservedTarget(String),
    /// Bivariate evaluation needs two columns of the same kind.
    MixedKindPair,
    ProductSpaceTooLarge { cells: usize, cap: usize },
    TooFewSamples { needed: usize, got: usize },
    IncompleteConditionRow { row: usize },
    Metrics(MetricsError),
    Sample(SampleError),
    Mask(MaskError),
}

impl core::fmt::Display for EvalError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            EvalError::UnknownColumn(c) => write!(f, "unknown column '{c}'"),
            EvalError::AlwaysObservedTarget(c) => {
                write!(f, "column '{c}' is always observed and cannot be evaluated as a target")
            }
            EvalError::MixedKindPair => {
                write!(f, "bivariate evaluation needs two columns of the same kind")
            }
            EvalError::ProductSpaceTooLarge { cells, cap } => {
                write!(f, "joint space has {cells} cells, above the cap of {cap}")
            }
            EvalError::TooFewSamples { needed, got } => {
                write!(f, "need at least {needed} samples, got {got}")
            }
            EvalError::IncompleteConditionRow { row } => {
                write!(f, "condition row {row} has missing cells outside the target")
            }
            EvalError::Metrics(e) => write!(f, "{e}"),
            EvalError::Sample(e) => write!(f, "{e}"),
            EvalError::Mask(e) => write!(f, "{e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for EvalError {}

impl From<MetricsError> for EvalError {
    fn from(e: MetricsError) -> Self {
        EvalError::Metrics(e)
    }
}
impl From<SampleError> for EvalError {
    fn from(e: SampleError) -> Self {
        EvalError::Sample(e)
    }
}
impl From<MaskError> for EvalError {
    fn from(e: MaskError) -> Self {
        EvalError::Mask(e)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Per-group sample cap on each side.
    pub group_cap: usize,
    /// Groups with fewer matched training rows are excluded from averages.
    pub min_group_matches: usize,
    /// Bins per axis for numerical bivariate joints.
    pub bins: usize,
    /// Maximum joint cells in bivariate evaluation.
    pub cell_cap: usize,
    /// Optional cap on scored test rows in reconstruction evaluation.
    pub max_rows: Option<usize>,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            group_cap: 1000,
            min_group_matches: 30,
            bins: 20,
            cell_cap: 10_000,
            max_rows: None,
            seed: 0,
        }
    }
}

/// Exact-match key over dependency columns (categorical ordinals and
/// numerical bit patterns).
fn dep_key(row: &[Cell], deps: &[usize]) -> Vec<u64> {
    deps.iter()
        .map(|&c| match row[c] {
            Cell::Cat(o) => o as u64,
            Cell::Num(v) => v.to_bits(),
            Cell::Missing => u64::MAX,
        })
        .collect()
}

fn dep_display(schema: &TableSchema, deps: &[usize], row: &[Cell]) -> Vec<String> {
    deps.iter()
        .map(|&c| match row[c] {
            Cell::Cat(o) => schema.column(c).categories[o as usize].clone(),
            Cell::Num(v) => alloc::format!("{v}"),
            Cell::Missing => String::from(""),
        })
        .collect()
}

fn group_rows(table: &DataTable, deps: &[usize]) -> BTreeMap<Vec<u64>, Vec<usize>> {
    let mut groups: BTreeMap<Vec<u64>, Vec<usize>> = BTreeMap::new();
    for (r, row) in table.rows().iter().enumerate() {
        groups.entry(dep_key(row, deps)).or_default().push(r);
    }
    groups
}

fn resolve_target(schema: &TableSchema, name: &str) -> Result<usize, EvalError> {
    let col = schema
        .column_index(name)
        .ok_or_else(|| EvalError::UnknownColumn(String::from(name)))?;
    if schema.column(col).always_observed {
        return Err(EvalError::AlwaysObservedTarget(String::from(name)));
    }
    Ok(col)
}

fn resolve_deps(schema: &TableSchema, col: usize) -> Vec<usize> {
    schema
        .column(col)
        .dependencies
        .iter()
        .map(|d| schema.column_index(d).expect("schema validated dependencies"))
        .collect()
}

/// Seeded sample without replacement of `n` of the given indices.
fn sample_indices(pool: &[usize], n: usize, rng: &mut ChaCha12Rng) -> Vec<usize> {
    if n >= pool.len() {
        return pool.to_vec();
    }
    rand::seq::index::sample(rng, pool.len(), n).iter().map(|i| pool[i]).collect()
}

fn cat_counts(values: impl Iterator<Item = u32>, k: usize) -> Vec<usize> {
    let mut counts = alloc::vec![0usize; k];
    for v in values {
        counts[v as usize] += 1;
    }
    counts
}

/// Plottable side-by-side distributions for one group: category labels
/// (or bin centers for numerical targets) with the true and generated
/// probabilities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupHistogram {
    pub labels: Vec<String>,
    pub true_probs: Vec<f64>,
    pub gen_probs: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupDistance {
    /// Dependency tuple values defining the group.
    pub key: Vec<String>,
    pub matched_train: usize,
    /// Samples on each side.
    pub n: usize,
    pub distance: f64,
    /// False when the Wasserstein fallback (zero true range) was used.
    pub normalized: bool,
    pub included: bool,
    /// JS distance between the group's true distribution and the uniform
    /// random-imputation baseline (categorical targets only).
    pub random_baseline: Option<f64>,
    pub histogram: GroupHistogram,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnivariateReport {
    pub column: String,
    pub kind: ColumnKind,
    pub dependencies: Vec<String>,
    pub groups: Vec<GroupDistance>,
    /// Groups present in test data with no matched training rows.
    pub skipped_groups: usize,
    /// Unweighted mean over included groups.
    pub average: Option<f64>,
    pub random_baseline_average: Option<f64>,
}

fn average_included(
    groups: &[GroupDistance],
    pick: impl Fn(&GroupDistance) -> Option<f64>,
) -> Option<f64> {
    let vals: Vec<f64> = groups.iter().filter(|g| g.included).filter_map(&pick).collect();
    if vals.is_empty() {
        None
    } else {
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Compares true and generated conditional distributions of one target
/// column over every dependency group in the test data.
pub fn univariate_eval(
    sampler: &dyn ConditionalSampler,
    train: &DataTable,
    test: &DataTable,
    target: &str,
    opts: &EvalOptions,
) -> Result<UnivariateReport, EvalError> {
    let schema = sampler.schema().clone();
    let col = resolve_target(&schema, target)?;
    let deps = resolve_deps(&schema, col);
    let kind = schema.column(col).kind;
    let base_seed = derive_seed(opts.seed, col as u64);

    // (key display, matched train rows, test rows to impute)
    let mut tasks: Vec<(Vec<String>, Vec<usize>, Vec<usize>)> = Vec::new();
    let mut skipped_groups = 0usize;
    if deps.is_empty() {
        let mut rng = ChaCha12Rng::seed_from_u64(base_seed);
        let all_train: Vec<usize> = (0..train.n_rows()).collect();
        let all_test: Vec<usize> = (0..test.n_rows()).collect();
        let n = opts.group_cap.min(all_train.len()).min(all_test.len());
        let true_rows = sample_indices(&all_train, n, &mut rng);
        let gen_rows = sample_indices(&all_test, n, &mut rng);
        tasks.push((Vec::new(), true_rows, gen_rows));
    } else {
        let train_groups = group_rows(train, &deps);
        for (key, test_rows) in group_rows(test, &deps) {
            match train_groups.get(&key) {
                None => skipped_groups += 1,
                Some(matched) => {
                    let display = dep_display(&schema, &deps, test.row(test_rows[0]));
                    tasks.push((display, matched.clone(), test_rows));
                }
            }
        }
    }

    let mut groups = Vec::with_capacity(tasks.len());
    for (gi, (key, matched, test_rows)) in tasks.into_iter().enumerate() {
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(base_seed, 1 + gi as u64));
        let n = opts.group_cap.min(matched.len());
        let true_rows = sample_indices(&matched, n, &mut rng);
        // Equal generated count; cycle through the group's test rows.
        let gen_rows: Vec<usize> = (0..n).map(|i| test_rows[i % test_rows.len()]).collect();

        let sub = test.select(&gen_rows);
        let masks = masks_for_targets(&schema, sub.n_rows(), &[col])?;
        let completed =
            sampler.impute_masked(&sub, &masks, derive_seed(base_seed, 0x9000 + gi as u64))?;

        let (distance, normalized, random_baseline) = match kind {
            ColumnKind::Categorical => {
                let k = schema.column(col).categories.len();
                let true_dist = distribution_from_counts(&cat_counts(
                    true_rows.iter().map(|&r| train.row(r)[col].as_cat().unwrap()),
                    k,
                ))?;
                let gen_dist = distribution_from_counts(&cat_counts(
                    completed.iter().map(|row| row[col].as_cat().unwrap()),
                    k,
                ))?;
                let d = js_distance(&true_dist, &gen_dist)?;
                let uniform = alloc::vec![1.0 / k as f64; k];
                let rb = js_distance(&true_dist, &uniform)?;
                (d, true, Some(rb))
            }
            ColumnKind::Numerical => {
                let true_vals: Vec<f64> =
                    true_rows.iter().map(|&r| train.row(r)[col].as_num().unwrap()).collect();
                let gen_vals: Vec<f64> =
                    completed.iter().map(|row| row[col].as_num().unwrap()).collect();
                let w = wasserstein_1d_normalized(&true_vals, &gen_vals)?;
                (w.value, w.normalized, None)
            }
        };

        groups.push(GroupDistance {
            key,
            matched_train: matched.len(),
            n,
            distance,
            normalized,
            included: matched.len() >= opts.min_group_matches,
            random_baseline,
        });
    }

    let average = average_included(&groups, |g| Some(g.distance));
    let random_baseline_average = average_included(&groups, |g| g.random_baseline);
    Ok(UnivariateReport {
        column: String::from(target),
        kind,
        dependencies: schema.column(col).dependencies.clone(),
        groups,
        skipped_groups,
        average,
        random_baseline_average,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BivariateGroup {
    pub key: Vec<String>,
    pub matched_train: usize,
    pub n: usize,
    pub joint_distance: f64,
    pub marginal_a: f64,
    pub marginal_b: f64,
    /// `p_true - p_gen` per joint cell, row-major over (a, b).
    pub error_grid: Vec<f64>,
    pub included: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BivariateReport {
    pub column_a: String,
    pub column_b: String,
    pub kind: ColumnKind,
    pub grid_dims: (usize, usize),
    pub groups: Vec<BivariateGroup>,
    pub skipped_groups: usize,
    pub average_joint: Option<f64>,
    pub average_marginal_a: Option<f64>,
    pub average_marginal_b: Option<f64>,
}

fn bin_index(v: f64, lo: f64, width: f64, bins: usize) -> usize {
    if width <= 0.0 {
        return 0;
    }
    (((v - lo) / width) as usize).min(bins - 1)
}

/// Simultaneously imputes two target columns and compares the joint
/// distributions over every group of the union of their dependencies.
pub fn bivariate_eval(
    sampler: &dyn ConditionalSampler,
    train: &DataTable,
    test: &DataTable,
    target_a: &str,
    target_b: &str,
    opts: &EvalOptions,
) -> Result<BivariateReport, EvalError> {
    let schema = sampler.schema().clone();
    let col_a = resolve_target(&schema, target_a)?;
    let col_b = resolve_target(&schema, target_b)?;
    let kind = schema.column(col_a).kind;
    if schema.column(col_b).kind != kind {
        return Err(EvalError::MixedKindPair);
    }
    let (ka, kb) = match kind {
        ColumnKind::Categorical => {
            (schema.column(col_a).categories.len(), schema.column(col_b).categories.len())
        }
        ColumnKind::Numerical => (opts.bins, opts.bins),
    };
    if ka * kb > opts.cell_cap {
        return Err(EvalError::ProductSpaceTooLarge { cells: ka * kb, cap: opts.cell_cap });
    }

    // Union of the two dependency lists, minus the targets themselves.
    let mut deps = resolve_deps(&schema, col_a);
    for d in resolve_deps(&schema, col_b) {
        if !deps.contains(&d) {
            deps.push(d);
        }
    }
    deps.retain(|&d| d != col_a && d != col_b);
    deps.sort_unstable();

    let base_seed = derive_seed(opts.seed, 0xB1 + (col_a * schema.len() + col_b) as u64);
    let mut tasks: Vec<(Vec<String>, Vec<usize>, Vec<usize>)> = Vec::new();
    let mut skipped_groups = 0usize;
    if deps.is_empty() {
        let mut rng = ChaCha12Rng::seed_from_u64(base_seed);
        let all_train: Vec<usize> = (0..train.n_rows()).collect();
        let all_test: Vec<usize> = (0..test.n_rows()).collect();
        let n = opts.group_cap.min(all_train.len()).min(all_test.len());
        tasks.push((
            Vec::new(),
            sample_indices(&all_train, n, &mut rng),
            sample_indices(&all_test, n, &mut rng),
        ));
    } else {
        let train_groups = group_rows(train, &deps);
        for (key, test_rows) in group_rows(test, &deps) {
            match train_groups.get(&key) {
                None => skipped_groups += 1,
                Some(matched) => {
                    let display = dep_display(&schema, &deps, test.row(test_rows[0]));
                    tasks.push((display, matched.clone(), test_rows));
                }
            }
        }
    }

    let mut groups = Vec::with_capacity(tasks.len());
    for (gi, (key, matched, test_rows)) in tasks.into_iter().enumerate() {
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(base_seed, 1 + gi as u64));
        let n = opts.group_cap.min(matched.len());
        let true_rows = sample_indices(&matched, n, &mut rng);
        let gen_rows: Vec<usize> = (0..n).map(|i| test_rows[i % test_rows.len()]).collect();

        let sub = test.select(&gen_rows);
        let masks = masks_for_targets(&schema, sub.n_rows(), &[col_a, col_b])?;
        let completed =
            sampler.impute_masked(&sub, &masks, derive_seed(base_seed, 0x9000 + gi as u64))?;

        let (joint_true, joint_gen, marginal_a, marginal_b) = match kind {
            ColumnKind::Categorical => {
                let idx = |row: &[Cell]| {
                    row[col_a].as_cat().unwrap() as usize * kb
                        + row[col_b].as_cat().unwrap() as usize
                };
                let mut ct = alloc::vec![0usize; ka * kb];
                for &r in &true_rows {
                    ct[idx(train.row(r))] += 1;
                }
                let mut cg = alloc::vec![0usize; ka * kb];
                for row in &completed {
                    cg[idx(row)] += 1;
                }
                let ma = js_distance(
                    &distribution_from_counts(&cat_counts(
                        true_rows.iter().map(|&r| train.row(r)[col_a].as_cat().unwrap()),
                        ka,
                    ))?,
                    &distribution_from_counts(&cat_counts(
                        completed.iter().map(|row| row[col_a].as_cat().unwrap()),
                        ka,
                    ))?,
                )?;
                let mb = js_distance(
                    &distribution_from_counts(&cat_counts(
                        true_rows.iter().map(|&r| train.row(r)[col_b].as_cat().unwrap()),
                        kb,
                    ))?,
                    &distribution_from_counts(&cat_counts(
                        completed.iter().map(|row| row[col_b].as_cat().unwrap()),
                        kb,
                    ))?,
                )?;
                (distribution_from_counts(&ct)?, distribution_from_counts(&cg)?, ma, mb)
            }
            ColumnKind::Numerical => {
                // Equal-width bins over the true samples' ranges.
                let ta: Vec<f64> =
                    true_rows.iter().map(|&r| train.row(r)[col_a].as_num().unwrap()).collect();
                let tb: Vec<f64> =
                    true_rows.iter().map(|&r| train.row(r)[col_b].as_num().unwrap()).collect();
                let ga: Vec<f64> =
                    completed.iter().map(|row| row[col_a].as_num().unwrap()).collect();
                let gb: Vec<f64> =
                    completed.iter().map(|row| row[col_b].as_num().unwrap()).collect();
                let (lo_a, hi_a) = ta
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
                let (lo_b, hi_b) = tb
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
                let wa = (hi_a - lo_a) / ka as f64;
                let wb = (hi_b - lo_b) / kb as f64;
                let mut ct = alloc::vec![0usize; ka * kb];
                for i in 0..ta.len() {
                    ct[bin_index(ta[i], lo_a, wa, ka) * kb + bin_index(tb[i], lo_b, wb, kb)] += 1;
                }
                let mut cg = alloc::vec![0usize; ka * kb];
                for i in 0..ga.len() {
                    cg[bin_index(ga[i], lo_a, wa, ka) * kb + bin_index(gb[i], lo_b, wb, kb)] += 1;
                }
                let ma = wasserstein_1d_normalized(&ta, &ga)?.value;
                let mb = wasserstein_1d_normalized(&tb, &gb)?.value;
                (distribution_from_counts(&ct)?, distribution_from_counts(&cg)?, ma, mb)
            }
        };

        let joint_distance = js_distance(&joint_true, &joint_gen)?;
        let error_grid: Vec<f64> =
            joint_true.iter().zip(&joint_gen).map(|(t, g)| t - g).collect();
        groups.push(BivariateGroup {
            key,
            matched_train: matched.len(),
            n,
            joint_distance,
            marginal_a,
            marginal_b,
            error_grid,
            included: matched.len() >= opts.min_group_matches,
        });
    }

    let avg = |pick: &dyn Fn(&BivariateGroup) -> f64| -> Option<f64> {
        let vals: Vec<f64> = groups.iter().filter(|g| g.included).map(pick).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    };
    let average_joint = avg(&|g| g.joint_distance);
    let average_marginal_a = avg(&|g| g.marginal_a);
    let average_marginal_b = avg(&|g| g.marginal_b);
    Ok(BivariateReport {
        column_a: String::from(target_a),
        column_b: String::from(target_b),
        kind,
        grid_dims: (ka, kb),
        groups,
        skipped_groups,
        average_joint,
        average_marginal_a,
        average_marginal_b,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureReconstruction {
    pub column: String,
    pub kind: ColumnKind,
    pub n_rows: usize,
    /// Rows whose dependency tuple had no matched training rows; the
    /// baseline fell back to the global statistic there.
    pub fallback_rows: usize,
    /// Range-normalized RMSE of the model's imputations (numerical).
    pub model_rmse: Option<f64>,
    /// Range-normalized RMSE of the matched-row mean baseline.
    pub mean_baseline_rmse: Option<f64>,
    pub model_accuracy: Option<f64>,
    /// Accuracy of the matched-row majority-category baseline.
    pub mode_accuracy: Option<f64>,
    /// Accuracy of uniformly random category imputation.
    pub random_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub features: Vec<FeatureReconstruction>,
    pub avg_model_rmse: Option<f64>,
    pub avg_mean_baseline_rmse: Option<f64>,
    pub avg_model_accuracy: Option<f64>,
    pub avg_mode_accuracy: Option<f64>,
    pub avg_random_accuracy: Option<f64>,
}

enum BaselineStats {
    Num { sum: f64, count: usize },
    Cat { counts: Vec<usize> },
}

impl BaselineStats {
    fn push(&mut self, cell: &Cell) {
        match (self, cell) {
            (BaselineStats::Num { sum, count }, Cell::Num(v)) => {
                *sum += v;
                *count += 1;
            }
            (BaselineStats::Cat { counts }, Cell::Cat(o)) => counts[*o as usize] += 1,
            _ => {}
        }
    }
}

fn argmax_count(counts: &[usize]) -> u32 {
    let mut best = 0usize;
    for (i, &c) in counts.iter().enumerate().skip(1) {
        if c > counts[best] {
            best = i;
        }
    }
    best as u32
}

/// Masks each imputable column one at a time across the test rows,
/// imputes once per row, and scores against ground truth next to the
/// matched-row mean/mode baselines and the random-category baseline.
pub fn reconstruction_eval(
    sampler: &dyn ConditionalSampler,
    train: &DataTable,
    test: &DataTable,
    opts: &EvalOptions,
) -> Result<ReconstructionReport, EvalError> {
    let schema = sampler.schema().clone();
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(opts.seed, 0x5C0E));
    let rows: Vec<usize> = match opts.max_rows {
        Some(cap) if cap < test.n_rows() => {
            rand::seq::index::sample(&mut rng, test.n_rows(), cap).into_vec()
        }
        _ => (0..test.n_rows()).collect(),
    };
    let scored = test.select(&rows);

    let mut features = Vec::new();
    for col in 0..schema.len() {
        let spec = schema.column(col);
        if spec.always_observed {
            continue;
        }
        let deps = resolve_deps(&schema, col);
        let k = spec.categories.len();

        // Per-dependency-tuple baseline statistics from the training set.
        let mut stats: BTreeMap<Vec<u64>, BaselineStats> = BTreeMap::new();
        let mut global = match spec.kind {
            ColumnKind::Numerical => BaselineStats::Num { sum: 0.0, count: 0 },
            ColumnKind::Categorical => BaselineStats::Cat { counts: alloc::vec![0; k] },
        };
        for row in train.rows() {
            let entry = stats.entry(dep_key(row, &deps)).or_insert_with(|| match spec.kind {
                ColumnKind::Numerical => BaselineStats::Num { sum: 0.0, count: 0 },
                ColumnKind::Categorical => BaselineStats::Cat { counts: alloc::vec![0; k] },
            });
            entry.push(&row[col]);
            global.push(&row[col]);
        }

        let masks = masks_for_targets(&schema, scored.n_rows(), &[col])?;
        let completed =
            sampler.impute_masked(&scored, &masks, derive_seed(opts.seed, 0xE000 + col as u64))?;

        let mut fallback_rows = 0usize;
        let mut entry = FeatureReconstruction {
            column: spec.name.clone(),
            kind: spec.kind,
            n_rows: scored.n_rows(),
            fallback_rows: 0,
            model_rmse: None,
            mean_baseline_rmse: None,
            model_accuracy: None,
            mode_accuracy: None,
            random_accuracy: None,
        };

        match spec.kind {
            ColumnKind::Numerical => {
                let mut sq_model = 0.0;
                let mut sq_base = 0.0;
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for (r, row) in completed.iter().enumerate() {
                    let truth = scored.row(r)[col].as_num().unwrap();
                    lo = lo.min(truth);
                    hi = hi.max(truth);
                    let pred = row[col].as_num().unwrap();
                    sq_model += (pred - truth) * (pred - truth);

                    let base = match stats.get(&dep_key(scored.row(r), &deps)) {
                        Some(BaselineStats::Num { sum, count }) if *count > 0 => {
                            sum / *count as f64
                        }
                        _ => {
                            fallback_rows += 1;
                            match &global {
                                BaselineStats::Num { sum, count } => sum / (*count).max(1) as f64,
                                _ => unreachable!(),
                            }
                        }
                    };
                    sq_base += (base - truth) * (base - truth);
                }
                let n = completed.len() as f64;
                let range = (hi - lo).max(1e-12);
                entry.model_rmse = Some(libm::sqrt(sq_model / n) / range);
                entry.mean_baseline_rmse = Some(libm::sqrt(sq_base / n) / range);
            }
            ColumnKind::Categorical => {
                let mut hits_model = 0usize;
                let mut hits_mode = 0usize;
                let mut hits_random = 0usize;
                for (r, row) in completed.iter().enumerate() {
                    let truth = scored.row(r)[col].as_cat().unwrap();
                    if row[col].as_cat().unwrap() == truth {
                        hits_model += 1;
                    }
                    let mode = match stats.get(&dep_key(scored.row(r), &deps)) {
                        Some(BaselineStats::Cat { counts }) if counts.iter().any(|&c| c > 0) => {
                            argmax_count(counts)
                        }
                        _ => {
                            fallback_rows += 1;
                            match &global {
                                BaselineStats::Cat { counts } => argmax_count(counts),
                                _ => unreachable!(),
                            }
                        }
                    };
                    if mode == truth {
                        hits_mode += 1;
                    }
                    if rng.gen_range(0..k) as u32 == truth {
                        hits_random += 1;
                    }
                }
                let n = completed.len() as f64;
                entry.model_accuracy = Some(hits_model as f64 / n);
                entry.mode_accuracy = Some(hits_mode as f64 / n);
                entry.random_accuracy = Some(hits_random as f64 / n);
            }
        }
        entry.fallback_rows = fallback_rows;
        features.push(entry);
    }

    let avg = |pick: &dyn Fn(&FeatureReconstruction) -> Option<f64>| -> Option<f64> {
        let vals: Vec<f64> = features.iter().filter_map(pick).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    };
    Ok(ReconstructionReport {
        avg_model_rmse: avg(&|f| f.model_rmse),
        avg_mean_baseline_rmse: avg(&|f| f.mean_baseline_rmse),
        avg_model_accuracy: avg(&|f| f.model_accuracy),
        avg_mode_accuracy: avg(&|f| f.mode_accuracy),
        avg_random_accuracy: avg(&|f| f.random_accuracy),
        features,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiversityReport {
    pub column: String,
    pub n_samples: usize,
    pub counts: Vec<usize>,
    pub distribution: Vec<f64>,
    pub top_category: usize,
    pub top_frequency: f64,
    pub true_top_prob: f64,
    /// Flagged when the sampler collapses to one category (top frequency
    /// >= 0.99) although the true conditional is non-degenerate (true top
    /// probability <= 0.9).
    pub collapse: bool,
}

/// Draws `n_samples` conditional imputations of one categorical target
/// for a fixed condition row and measures the empirical spread.
pub fn diversity_diagnostic(
    sampler: &dyn ConditionalSampler,
    condition_row: &DataTable,
    target: &str,
    n_samples: usize,
    true_top_prob: f64,
    seed: u64,
) -> Result<DiversityReport, EvalError> {
    if n_samples < 100 {
        return Err(EvalError::TooFewSamples { needed: 100, got: n_samples });
    }
    let schema = sampler.schema().clone();
    let col = resolve_target(&schema, target)?;
    let row = condition_row.row(0).to_vec();
    for (c, cell) in row.iter().enumerate() {
        if c != col && cell.is_missing() {
            return Err(EvalError::IncompleteConditionRow { row: 0 });
        }
    }

    let rows: Vec<Vec<Cell>> = (0..n_samples).map(|_| row.clone()).collect();
    let table = DataTable::new(schema.clone(), rows).expect("replicated condition row");
    let masks = masks_for_targets(&schema, n_samples, &[col])?;
    let completed = sampler.impute_masked(&table, &masks, seed)?;

    let k = schema.column(col).categories.len();
    let counts = cat_counts(completed.iter().map(|r| r[col].as_cat().unwrap()), k);
    let distribution = distribution_from_counts(&counts)?;
    let top_category = argmax_count(&counts) as usize;
    let top_frequency = distribution[top_category];
    Ok(DiversityReport {
        column: String::from(target),
        n_samples,
        counts,
        distribution,
        top_category,
        top_frequency,
        true_top_prob,
        collapse: top_frequency >= 0.99 && true_top_prob <= 0.9,
    })
}

/// Everything one evaluation invocation produced, in report form.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub univariate: Vec<UnivariateReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bivariate: Vec<BivariateReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reconstruction: Option<ReconstructionReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diversity: Vec<DiversityReport>,
}

impl EvalReport {
    fn average_over(
        &self,
        kind: ColumnKind,
        pick: impl Fn(&UnivariateReport) -> Option<f64>,
    ) -> Option<f64> {
        let vals: Vec<f64> =
            self.univariate.iter().filter(|r| r.kind == kind).filter_map(pick).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }

    /// Mean JS distance over the categorical univariate targets.
    pub fn average_categorical_jsd(&self) -> Option<f64> {
        self.average_over(ColumnKind::Categorical, |r| r.average)
    }

    /// Mean normalized Wasserstein distance over the numerical targets.
    pub fn average_numerical_wd(&self) -> Option<f64> {
        self.average_over(ColumnKind::Numerical, |r| r.average)
    }

    /// Mean random-baseline JS distance over the categorical targets.
    pub fn average_random_baseline_jsd(&self) -> Option<f64> {
        self.average_over(ColumnKind::Categorical, |r| r.random_baseline_average)
    }
}
