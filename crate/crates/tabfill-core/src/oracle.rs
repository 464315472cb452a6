//! Synthetic table generator with exactly known conditionals.
//!
//! An [`OracleSpec`] declares one sampling model per schema column:
//! categorical columns are either root marginals or conditional tables
//! keyed by categorical parent tuples, numerical columns are either
//! Gaussian mixtures or location-scale rules with additive categorical
//! effects and at most one numerical parent. Tables are generated by
//! ancestral sampling; because every distribution is declared, marginals,
//! conditionals, entropies, and moments can all be computed exactly,
//! which is what the test suites score the trained model against.
//!
//! An optional held-out region predicate on a root column carves samples
//! into a main pool and an out-of-distribution pool.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::math::{derive_seed, norm_pdf, sample_categorical};
use crate::schema::{Cell, ColumnKind, ColumnSpec, DataTable, TableSchema};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleError {
    /// Path to the offending entry, e.g. `models[4].probs[12]`.
    pub path: String,
    pub reason: String,
}

impl OracleError {
    fn new(path: impl Into<String>, reason: impl Into<String>) -> Self {
        OracleError { path: path.into(), reason: reason.into() }
    }
}

impl core::fmt::Display for OracleError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "oracle spec error at {}: {}", self.path, self.reason)
    }
}

#[cfg(feature = "std")]
impl std::error::Error for OracleError {}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

/// Conditional probability table over categorical parents. Rows are laid
/// out mixed-radix over parent ordinals with the first parent most
/// significant, covering every parent tuple.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoricalTable {
    pub parents: Vec<String>,
    pub probs: Vec<Vec<f64>>,
}

/// `value = base + sum(effects[parent][ordinal]) + sum(coef * parent_value)
///  + noise_sd * N(0,1)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NumericalRule {
    pub base: f64,
    #[serde(default)]
    pub cat_parents: Vec<String>,
    #[serde(default)]
    pub effects: Vec<Vec<f64>>,
    #[serde(default)]
    pub num_parents: Vec<String>,
    #[serde(default)]
    pub coefs: Vec<f64>,
    pub noise_sd: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnModel {
    CategoricalRoot { probs: Vec<f64> },
    CategoricalTable(CategoricalTable),
    NumericalMixture { components: Vec<MixtureComponent> },
    NumericalRule(NumericalRule),
}

/// Predicate selecting the held-out (out-of-distribution) region. Only
/// root columns may be referenced.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionPredicate {
    NumericalRange { column: String, min: Option<f64>, max: Option<f64> },
    Categories { column: String, values: Vec<String> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "OracleSpecFile", into = "OracleSpecFile")]
pub struct OracleSpec {
    schema: TableSchema,
    models: Vec<ColumnModel>,
    held_out: Option<RegionPredicate>,
    /// Parent column indices per column (categorical then numerical).
    #[serde(skip)]
    parents: Vec<Vec<usize>>,
    /// Child column indices per column.
    #[serde(skip)]
    children: Vec<Vec<usize>>,
    /// Ancestral sampling order.
    #[serde(skip)]
    topo: Vec<usize>,
}

/// Raw serialized form, validated into [`OracleSpec`] on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleSpecFile {
    pub schema: TableSchema,
    pub models: Vec<ColumnModel>,
    #[serde(default)]
    pub held_out: Option<RegionPredicate>,
}

impl TryFrom<OracleSpecFile> for OracleSpec {
    type Error = OracleError;
    fn try_from(file: OracleSpecFile) -> Result<Self, OracleError> {
        OracleSpec::new(file.schema, file.models, file.held_out)
    }
}

impl From<OracleSpec> for OracleSpecFile {
    fn from(spec: OracleSpec) -> Self {
        OracleSpecFile { schema: spec.schema, models: spec.models, held_out: spec.held_out }
    }
}

fn check_probs(path: &str, probs: &[f64], k: usize) -> Result<(), OracleError> {
    if probs.len() != k {
        return Err(OracleError::new(
            path,
            format!("expected {k} probabilities, got {}", probs.len()),
        ));
    }
    let mut sum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        if !(0.0..=1.0).contains(&p) || !p.is_finite() {
            return Err(OracleError::new(
                format!("{path}[{i}]"),
                format!("probability {p} outside [0, 1]"),
            ));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(OracleError::new(path, format!("probabilities sum to {sum}, expected 1")));
    }
    Ok(())
}

impl OracleSpec {
    pub fn new(
        schema: TableSchema,
        models: Vec<ColumnModel>,
        held_out: Option<RegionPredicate>,
    ) -> Result<Self, OracleError> {
        if models.len() != schema.len() {
            return Err(OracleError::new(
                "models",
                format!("expected {} models, got {}", schema.len(), models.len()),
            ));
        }
        let mut parents: Vec<Vec<usize>> = Vec::with_capacity(models.len());
        for (c, model) in models.iter().enumerate() {
            let col = schema.column(c);
            let path = format!("models[{c}]");
            let resolve = |names: &[String],
                           want: ColumnKind,
                           what: &str|
             -> Result<Vec<usize>, OracleError> {
                names
                    .iter()
                    .map(|n| {
                        let idx = schema.column_index(n).ok_or_else(|| {
                            OracleError::new(
                                format!("{path}.{what}"),
                                format!("unknown column '{n}'"),
                            )
                        })?;
                        if schema.column(idx).kind != want {
                            return Err(OracleError::new(
                                format!("{path}.{what}"),
                                format!("parent '{n}' has the wrong kind"),
                            ));
                        }
                        if idx == c {
                            return Err(OracleError::new(
                                format!("{path}.{what}"),
                                "column is its own parent",
                            ));
                        }
                        Ok(idx)
                    })
                    .collect()
            };
            let p = match model {
                ColumnModel::CategoricalRoot { probs } => {
                    if col.kind != ColumnKind::Categorical {
                        return Err(OracleError::new(&path, "categorical model on numerical column"));
                    }
                    check_probs(&format!("{path}.probs"), probs, col.categories.len())?;
                    Vec::new()
                }
                ColumnModel::CategoricalTable(table) => {
                    if col.kind != ColumnKind::Categorical {
                        return Err(OracleError::new(&path, "categorical model on numerical column"));
                    }
                    if table.parents.is_empty() {
                        return Err(OracleError::new(
                            format!("{path}.parents"),
                            "conditional table without parents",
                        ));
                    }
                    let idxs = resolve(&table.parents, ColumnKind::Categorical, "parents")?;
                    let tuples: usize =
                        idxs.iter().map(|&p| schema.column(p).categories.len()).product();
                    if table.probs.len() != tuples {
                        return Err(OracleError::new(
                            format!("{path}.probs"),
                            format!(
                                "table must cover all {tuples} parent tuples, got {}",
                                table.probs.len()
                            ),
                        ));
                    }
                    for (row, probs) in table.probs.iter().enumerate() {
                        check_probs(&format!("{path}.probs[{row}]"), probs, col.categories.len())?;
                    }
                    idxs
                }
                ColumnModel::NumericalMixture { components } => {
                    if col.kind != ColumnKind::Numerical {
                        return Err(OracleError::new(&path, "numerical model on categorical column"));
                    }
                    if components.is_empty() {
                        return Err(OracleError::new(
                            format!("{path}.components"),
                            "mixture needs components",
                        ));
                    }
                    let wsum: f64 = components.iter().map(|c| c.weight).sum();
                    if (wsum - 1.0).abs() > 1e-9 {
                        return Err(OracleError::new(
                            format!("{path}.components"),
                            format!("weights sum to {wsum}, expected 1"),
                        ));
                    }
                    for (i, comp) in components.iter().enumerate() {
                        if comp.weight < 0.0 || comp.sd <= 0.0 || !comp.mean.is_finite() {
                            return Err(OracleError::new(
                                format!("{path}.components[{i}]"),
                                "weights must be >= 0, sd > 0, mean finite",
                            ));
                        }
                    }
                    Vec::new()
                }
                ColumnModel::NumericalRule(rule) => {
                    if col.kind != ColumnKind::Numerical {
                        return Err(OracleError::new(&path, "numerical model on categorical column"));
                    }
                    let mut idxs = resolve(&rule.cat_parents, ColumnKind::Categorical, "cat_parents")?;
                    if rule.effects.len() != rule.cat_parents.len() {
                        return Err(OracleError::new(
                            format!("{path}.effects"),
                            "one effect vector per categorical parent",
                        ));
                    }
                    for (p, eff) in rule.effects.iter().enumerate() {
                        let k = schema.column(idxs[p]).categories.len();
                        if eff.len() != k {
                            return Err(OracleError::new(
                                format!("{path}.effects[{p}]"),
                                format!("expected {k} effect values, got {}", eff.len()),
                            ));
                        }
                    }
                    let nidx = resolve(&rule.num_parents, ColumnKind::Numerical, "num_parents")?;
                    if rule.coefs.len() != nidx.len() {
                        return Err(OracleError::new(
                            format!("{path}.coefs"),
                            "one coefficient per numerical parent",
                        ));
                    }
                    // Exact moment computations assume numerical ancestry
                    // forms a chain.
                    if nidx.len() > 1 {
                        return Err(OracleError::new(
                            format!("{path}.num_parents"),
                            "at most one numerical parent is supported",
                        ));
                    }
                    if rule.noise_sd <= 0.0 {
                        return Err(OracleError::new(format!("{path}.noise_sd"), "noise sd must be > 0"));
                    }
                    idxs.extend(nidx);
                    idxs
                }
            };
            parents.push(p);
        }

        // Topological order (Kahn); also proves acyclicity.
        let n = models.len();
        let mut indegree: Vec<usize> = parents.iter().map(|p| p.len()).collect();
        let mut children: Vec<Vec<usize>> = alloc::vec![Vec::new(); n];
        for (c, ps) in parents.iter().enumerate() {
            for &p in ps {
                children[p].push(c);
            }
        }
        let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut topo = Vec::with_capacity(n);
        while let Some(i) = ready.pop() {
            topo.push(i);
            for &ch in &children[i] {
                indegree[ch] -= 1;
                if indegree[ch] == 0 {
                    ready.push(ch);
                }
            }
        }
        if topo.len() != n {
            let culprit = (0..n).find(|&i| indegree[i] > 0).unwrap();
            return Err(OracleError::new(
                format!("models[{culprit}]"),
                "dependency cycle in the sampling DAG",
            ));
        }

        if let Some(pred) = &held_out {
            let (name, want_kind) = match pred {
                RegionPredicate::NumericalRange { column, .. } => (column, ColumnKind::Numerical),
                RegionPredicate::Categories { column, values } => {
                    let idx = schema.column_index(column).ok_or_else(|| {
                        OracleError::new("held_out", format!("unknown column '{column}'"))
                    })?;
                    for v in values {
                        if schema.ordinal(idx, v).is_none() {
                            return Err(OracleError::new(
                                "held_out.values",
                                format!("unknown category '{v}'"),
                            ));
                        }
                    }
                    (column, ColumnKind::Categorical)
                }
            };
            let idx = schema
                .column_index(name)
                .ok_or_else(|| OracleError::new("held_out", format!("unknown column '{name}'")))?;
            if schema.column(idx).kind != want_kind {
                return Err(OracleError::new("held_out", "predicate kind does not match the column"));
            }
            if !parents[idx].is_empty() {
                return Err(OracleError::new("held_out", format!("column '{name}' is not a root")));
            }
        }

        Ok(OracleSpec { schema, models, held_out, parents, children, topo })
    }

    pub fn schema(&self) -> &TableSchema {
        &self.schema
    }

    pub fn models(&self) -> &[ColumnModel] {
        &self.models
    }

    pub fn held_out(&self) -> Option<&RegionPredicate> {
        self.held_out.as_ref()
    }

    /// DAG parents of a column (the documented schema dependencies may be
    /// a subset of these).
    pub fn dag_parents(&self, col: usize) -> &[usize] {
        &self.parents[col]
    }

    pub fn dag_children(&self, col: usize) -> &[usize] {
        &self.children[col]
    }

    fn table_index(&self, parent_idxs: &[usize], get: impl Fn(usize) -> u32) -> usize {
        let mut idx = 0usize;
        for &p in parent_idxs {
            let k = self.schema.column(p).categories.len();
            idx = idx * k + get(p) as usize;
        }
        idx
    }

    /// Conditional probabilities of a categorical column given an
    /// assignment covering all of its parents.
    fn cat_probs_given<'a>(&'a self, col: usize, assign: &BTreeMap<usize, u32>) -> &'a [f64] {
        match &self.models[col] {
            ColumnModel::CategoricalRoot { probs } => probs,
            ColumnModel::CategoricalTable(table) => {
                let idx = self.table_index(&self.parents[col], |p| assign[&p]);
                &table.probs[idx]
            }
            _ => unreachable!("categorical model expected"),
        }
    }

    /// Ancestral sampling. Rows draw from seeds derived per row index, so
    /// regeneration is bit-identical and row blocks are independent.
    pub fn generate(&self, n: usize, seed: u64) -> DataTable {
        let mut rows = Vec::with_capacity(n);
        for r in 0..n {
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, r as u64));
            let mut row = alloc::vec![Cell::Missing; self.schema.len()];
            for &c in &self.topo {
                let cell = match &self.models[c] {
                    ColumnModel::CategoricalRoot { probs } => {
                        Cell::Cat(sample_categorical(probs, rng.gen::<f64>()) as u32)
                    }
                    ColumnModel::CategoricalTable(table) => {
                        let idx = self.table_index(&self.parents[c], |p| {
                            row[p].as_cat().expect("parents sampled first")
                        });
                        Cell::Cat(sample_categorical(&table.probs[idx], rng.gen::<f64>()) as u32)
                    }
                    ColumnModel::NumericalMixture { components } => {
                        let weights: Vec<f64> = components.iter().map(|c| c.weight).collect();
                        let comp = &components[sample_categorical(&weights, rng.gen::<f64>())];
                        let z: f64 = rng.sample(StandardNormal);
                        Cell::Num(comp.mean + comp.sd * z)
                    }
                    ColumnModel::NumericalRule(rule) => {
                        let mut mu = rule.base;
                        for (p, eff) in rule.effects.iter().enumerate() {
                            let ord =
                                row[self.parents[c][p]].as_cat().expect("parents sampled first");
                            mu += eff[ord as usize];
                        }
                        let off = rule.effects.len();
                        for (j, &coef) in rule.coefs.iter().enumerate() {
                            let v = row[self.parents[c][off + j]]
                                .as_num()
                                .expect("parents sampled first");
                            mu += coef * v;
                        }
                        let z: f64 = rng.sample(StandardNormal);
                        Cell::Num(mu + rule.noise_sd * z)
                    }
                };
                row[c] = cell;
            }
            rows.push(row);
        }
        DataTable::new(self.schema.clone(), rows).expect("generated rows conform to the schema")
    }

    fn row_held_out(&self, row: &[Cell]) -> bool {
        match &self.held_out {
            None => false,
            Some(RegionPredicate::NumericalRange { column, min, max }) => {
                let idx = self.schema.column_index(column).unwrap();
                let v = row[idx].as_num().unwrap();
                min.map_or(true, |m| v >= m) && max.map_or(true, |m| v <= m)
            }
            Some(RegionPredicate::Categories { column, values }) => {
                let idx = self.schema.column_index(column).unwrap();
                let ord = row[idx].as_cat().unwrap();
                values.iter().any(|v| self.schema.ordinal(idx, v) == Some(ord))
            }
        }
    }

    /// Splits a generated table into (main, held-out-region) pools.
    pub fn partition_held_out(&self, table: &DataTable) -> (DataTable, DataTable) {
        let mut main = Vec::new();
        let mut ood = Vec::new();
        for (r, row) in table.rows().iter().enumerate() {
            if self.row_held_out(row) {
                ood.push(r);
            } else {
                main.push(r);
            }
        }
        (table.select(&main), table.select(&ood))
    }

    /// The given columns together with all their ancestors, in
    /// topological order.
    fn ancestor_closure(&self, cols: &[usize]) -> Vec<usize> {
        let mut needed = alloc::vec![false; self.schema.len()];
        let mut stack: Vec<usize> = cols.to_vec();
        while let Some(c) = stack.pop() {
            if needed[c] {
                continue;
            }
            needed[c] = true;
            for &p in &self.parents[c] {
                stack.push(p);
            }
        }
        self.topo.iter().copied().filter(|&c| needed[c]).collect()
    }

    fn enumerate_assignments(
        &self,
        order: &[usize],
        pinned: &BTreeMap<usize, u32>,
        visit: &mut dyn FnMut(&BTreeMap<usize, u32>, f64),
    ) {
        fn dfs(
            spec: &OracleSpec,
            order: &[usize],
            depth: usize,
            pinned: &BTreeMap<usize, u32>,
            assign: &mut BTreeMap<usize, u32>,
            prob: f64,
            visit: &mut dyn FnMut(&BTreeMap<usize, u32>, f64),
        ) {
            if depth == order.len() {
                visit(assign, prob);
                return;
            }
            let col = order[depth];
            let probs = spec.cat_probs_given(col, assign).to_vec();
            match pinned.get(&col) {
                Some(&ord) => {
                    let p = probs[ord as usize];
                    if p > 0.0 {
                        assign.insert(col, ord);
                        dfs(spec, order, depth + 1, pinned, assign, prob * p, visit);
                        assign.remove(&col);
                    }
                }
                None => {
                    for (k, &p) in probs.iter().enumerate() {
                        if p > 0.0 {
                            assign.insert(col, k as u32);
                            dfs(spec, order, depth + 1, pinned, assign, prob * p, visit);
                            assign.remove(&col);
                        }
                    }
                }
            }
        }
        let mut assign = BTreeMap::new();
        dfs(self, order, 0, pinned, &mut assign, 1.0, visit);
    }

    /// Exact conditional distribution of a categorical column given a
    /// (possibly partial) assignment of other categorical columns,
    /// computed by enumeration over the relevant sub-DAG. Conditioning on
    /// numerical columns is not supported.
    pub fn exact_conditional(
        &self,
        target: usize,
        given: &BTreeMap<usize, u32>,
    ) -> Result<Vec<f64>, OracleError> {
        if self.schema.column(target).kind != ColumnKind::Categorical
            || given.keys().any(|&c| self.schema.column(c).kind != ColumnKind::Categorical)
        {
            return Err(OracleError::new(
                "exact_conditional",
                "only categorical targets and categorical conditions are supported",
            ));
        }
        let mut cols: Vec<usize> = given.keys().copied().collect();
        cols.push(target);
        let order = self.ancestor_closure(&cols);
        let k = self.schema.column(target).categories.len();
        let mut dist = alloc::vec![0.0; k];
        let mut total = 0.0;
        self.enumerate_assignments(&order, given, &mut |assign, p| {
            dist[assign[&target] as usize] += p;
            total += p;
        });
        if total <= 0.0 {
            return Err(OracleError::new(
                "exact_conditional",
                "the conditioning assignment has probability zero",
            ));
        }
        for d in dist.iter_mut() {
            *d /= total;
        }
        Ok(dist)
    }

    /// Exact marginal of a categorical column.
    pub fn exact_marginal(&self, target: usize) -> Result<Vec<f64>, OracleError> {
        self.exact_conditional(target, &BTreeMap::new())
    }

    /// Exact conditional of a categorical column given a complete row
    /// (its Markov blanket): prior times the likelihood of every child.
    pub fn exact_full_conditional(&self, row: &[Cell], target: usize) -> Vec<f64> {
        let assign: BTreeMap<usize, u32> = row
            .iter()
            .enumerate()
            .filter_map(|(c, cell)| cell.as_cat().map(|o| (c, o)))
            .collect();
        let prior = self.cat_probs_given(target, &assign).to_vec();
        let k = prior.len();
        let mut weights = prior;
        for &child in &self.children[target] {
            for (ord, w) in weights.iter_mut().enumerate() {
                if *w == 0.0 {
                    continue;
                }
                let value_of = |p: usize| -> u32 {
                    if p == target {
                        ord as u32
                    } else {
                        row[p].as_cat().expect("categorical parent")
                    }
                };
                match &self.models[child] {
                    ColumnModel::CategoricalTable(table) => {
                        let idx = self.table_index(&self.parents[child], value_of);
                        *w *= table.probs[idx][row[child].as_cat().unwrap() as usize];
                    }
                    ColumnModel::NumericalRule(rule) => {
                        let mut mu = rule.base;
                        for (p, eff) in rule.effects.iter().enumerate() {
                            mu += eff[value_of(self.parents[child][p]) as usize];
                        }
                        let off = rule.effects.len();
                        for (j, &coef) in rule.coefs.iter().enumerate() {
                            mu += coef * row[self.parents[child][off + j]].as_num().unwrap();
                        }
                        let x = row[child].as_num().unwrap();
                        *w *= norm_pdf((x - mu) / rule.noise_sd) / rule.noise_sd;
                    }
                    _ => unreachable!("roots have no parents"),
                }
            }
        }
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            for w in weights.iter_mut() {
                *w /= total;
            }
        } else {
            // Zero-probability row under the spec; fall back to uniform.
            weights = alloc::vec![1.0 / k as f64; k];
        }
        weights
    }

    /// Exact joint conditional of several categorical columns given a
    /// row observing everything else: enumerates target assignments and
    /// weighs each by its priors and the likelihood of every child
    /// (categorical tables, numerical rule densities).
    pub fn exact_conditional_given_row(
        &self,
        row: &[Cell],
        targets: &[usize],
    ) -> Vec<(Vec<u32>, f64)> {
        let ks: Vec<usize> =
            targets.iter().map(|&t| self.schema.column(t).categories.len()).collect();
        let total_assignments: usize = ks.iter().product();

        // Columns whose probability depends on some target: the targets
        // themselves plus their children.
        let mut affected: Vec<usize> = targets.to_vec();
        for &t in targets {
            for &c in &self.children[t] {
                if !affected.contains(&c) {
                    affected.push(c);
                }
            }
        }

        let mut out = Vec::with_capacity(total_assignments);
        let mut total = 0.0;
        for flat in 0..total_assignments {
            let mut rem = flat;
            let mut assignment = alloc::vec![0u32; targets.len()];
            for i in (0..targets.len()).rev() {
                assignment[i] = (rem % ks[i]) as u32;
                rem /= ks[i];
            }
            let value_of = |col: usize| -> Option<u32> {
                targets
                    .iter()
                    .position(|&t| t == col)
                    .map(|i| assignment[i])
                    .or_else(|| row[col].as_cat())
            };
            let mut w = 1.0;
            for &col in &affected {
                match &self.models[col] {
                    ColumnModel::CategoricalRoot { probs } => {
                        w *= probs[value_of(col).unwrap() as usize];
                    }
                    ColumnModel::CategoricalTable(table) => {
                        let idx = self.table_index(&self.parents[col], |p| value_of(p).unwrap());
                        w *= table.probs[idx][value_of(col).unwrap() as usize];
                    }
                    ColumnModel::NumericalRule(rule) => {
                        let mut mu = rule.base;
                        for (p, eff) in rule.effects.iter().enumerate() {
                            mu += eff[value_of(self.parents[col][p]).unwrap() as usize];
                        }
                        let off = rule.effects.len();
                        for (j, &coef) in rule.coefs.iter().enumerate() {
                            mu += coef * row[self.parents[col][off + j]].as_num().unwrap();
                        }
                        let x = row[col].as_num().unwrap();
                        w *= norm_pdf((x - mu) / rule.noise_sd) / rule.noise_sd;
                    }
                    ColumnModel::NumericalMixture { .. } => {
                        unreachable!("mixtures have no parents")
                    }
                }
            }
            total += w;
            out.push((assignment, w));
        }
        if total > 0.0 {
            for (_, w) in out.iter_mut() {
                *w /= total;
            }
        } else {
            let uniform = 1.0 / total_assignments as f64;
            for (_, w) in out.iter_mut() {
                *w = uniform;
            }
        }
        out
    }

    /// Exact joint distribution over a set of categorical columns.
    pub fn exact_joint(&self, cols: &[usize]) -> BTreeMap<Vec<u32>, f64> {
        let order = self.ancestor_closure(cols);
        let mut joint: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        self.enumerate_assignments(&order, &BTreeMap::new(), &mut |assign, p| {
            let key: Vec<u32> = cols.iter().map(|c| assign[c]).collect();
            *joint.entry(key).or_insert(0.0) += p;
        });
        joint
    }

    /// Marginal Shannon entropy of a categorical column, in bits.
    pub fn marginal_entropy_bits(&self, col: usize) -> Result<f64, OracleError> {
        Ok(crate::metrics::entropy_bits(&self.exact_marginal(col)?))
    }

    /// Conditional entropy `H(X | DAG parents)` in bits. For roots this
    /// equals the marginal entropy.
    pub fn conditional_entropy_bits(&self, col: usize) -> Result<f64, OracleError> {
        let parents = self.parents[col].clone();
        if parents.is_empty() {
            return self.marginal_entropy_bits(col);
        }
        let parent_joint = self.exact_joint(&parents);
        let mut h = 0.0;
        for (tuple, p_tuple) in parent_joint {
            if p_tuple <= 0.0 {
                continue;
            }
            let assign: BTreeMap<usize, u32> =
                parents.iter().copied().zip(tuple.iter().copied()).collect();
            let cond = self.cat_probs_given(col, &assign);
            h += p_tuple * crate::metrics::entropy_bits(cond);
        }
        Ok(h)
    }

    /// Whether a categorical column's DAG parents are informative:
    /// `H(X | parents) < H(X)` strictly.
    pub fn categorical_informative(&self, col: usize) -> Result<bool, OracleError> {
        Ok(self.conditional_entropy_bits(col)? < self.marginal_entropy_bits(col)? - 1e-9)
    }

    /// Mean and variance of a numerical column given a full assignment of
    /// the categorical columns it (transitively) depends on.
    fn num_moments_given(&self, col: usize, assign: &BTreeMap<usize, u32>) -> (f64, f64) {
        match &self.models[col] {
            ColumnModel::NumericalMixture { components } => {
                let mean: f64 = components.iter().map(|c| c.weight * c.mean).sum();
                let second: f64 = components
                    .iter()
                    .map(|c| c.weight * (c.sd * c.sd + c.mean * c.mean))
                    .sum();
                (mean, second - mean * mean)
            }
            ColumnModel::NumericalRule(rule) => {
                let mut mean = rule.base;
                let mut var = rule.noise_sd * rule.noise_sd;
                for (p, eff) in rule.effects.iter().enumerate() {
                    mean += eff[assign[&self.parents[col][p]] as usize];
                }
                let off = rule.effects.len();
                for (j, &coef) in rule.coefs.iter().enumerate() {
                    let (pm, pv) = self.num_moments_given(self.parents[col][off + j], assign);
                    mean += coef * pm;
                    var += coef * coef * pv;
                }
                (mean, var)
            }
            _ => unreachable!("numerical column expected"),
        }
    }

    /// Categorical ancestors feeding a numerical column's chain.
    fn num_cat_ancestors(&self, col: usize) -> Vec<usize> {
        let mut cats = Vec::new();
        let mut stack = alloc::vec![col];
        let mut seen = alloc::vec![false; self.schema.len()];
        while let Some(c) = stack.pop() {
            if seen[c] {
                continue;
            }
            seen[c] = true;
            match self.schema.column(c).kind {
                ColumnKind::Categorical => cats.push(c),
                ColumnKind::Numerical => {
                    for &p in &self.parents[c] {
                        stack.push(p);
                    }
                }
            }
        }
        cats
    }

    /// Exact marginal mean and variance of a numerical column, by
    /// enumerating its categorical ancestor tuples.
    pub fn num_marginal_moments(&self, col: usize) -> (f64, f64) {
        let cats = self.num_cat_ancestors(col);
        if cats.is_empty() {
            return self.num_moments_given(col, &BTreeMap::new());
        }
        let joint = self.exact_joint(&cats);
        let mut mean = 0.0;
        let mut second = 0.0;
        for (tuple, p) in joint {
            let assign: BTreeMap<usize, u32> =
                cats.iter().copied().zip(tuple.iter().copied()).collect();
            let (m, v) = self.num_moments_given(col, &assign);
            mean += p * m;
            second += p * (v + m * m);
        }
        (mean, second - mean * mean)
    }

    /// Expected conditional variance `E[Var(X | all DAG parents)]`: the
    /// rule noise for location-scale columns, the marginal variance for
    /// parentless mixtures.
    pub fn num_expected_conditional_variance(&self, col: usize) -> f64 {
        match &self.models[col] {
            ColumnModel::NumericalRule(rule) => rule.noise_sd * rule.noise_sd,
            _ => self.num_marginal_moments(col).1,
        }
    }

    /// Whether a numerical column's DAG parents are informative:
    /// expected conditional variance strictly below marginal variance.
    pub fn numerical_informative(&self, col: usize) -> bool {
        let (_, marginal_var) = self.num_marginal_moments(col);
        self.num_expected_conditional_variance(col) < marginal_var - 1e-9
    }

    /// Conditional mean and sd of a location-scale column given a full
    /// row of its parents (closed form).
    pub fn num_conditional_given_row(&self, row: &[Cell], col: usize) -> Option<(f64, f64)> {
        match &self.models[col] {
            ColumnModel::NumericalRule(rule) => {
                let mut mu = rule.base;
                for (p, eff) in rule.effects.iter().enumerate() {
                    mu += eff[row[self.parents[col][p]].as_cat()? as usize];
                }
                let off = rule.effects.len();
                for (j, &coef) in rule.coefs.iter().enumerate() {
                    mu += coef * row[self.parents[col][off + j]].as_num()?;
                }
                Some((mu, rule.noise_sd))
            }
            _ => None,
        }
    }
}

/// The 12-column building-characteristics oracle used across the test
/// suites: three numerical columns (an always-observed region coordinate,
/// square footage, and consumption) and nine categorical columns with
/// appliance/HVAC-style dependency structure. Conditional tables are
/// filled from simple additive weight formulas and normalized, keeping
/// every conditional non-degenerate while still strongly coupled.
pub fn default_building_spec() -> OracleSpec {
    let schema = TableSchema::new(alloc::vec![
        ColumnSpec::numerical("region_id").always_observed(),
        ColumnSpec::numerical("sqft").with_dependencies(&["building_type", "vintage"]),
        ColumnSpec::numerical("total_consumption")
            .with_dependencies(&["usage_level", "heating_fuel", "heating_type"]),
        ColumnSpec::categorical(
            "building_type",
            &["single_family_detached", "single_family_attached", "multi_family"],
        ),
        ColumnSpec::categorical("vintage", &["pre_1960", "1960s", "1980s", "2000s", "2010s"]),
        ColumnSpec::categorical("usage_level", &["low", "medium", "high"]),
        ColumnSpec::categorical("heating_fuel", &["electricity", "natural_gas", "fuel_oil", "none"])
            .with_dependencies(&["building_type", "vintage"]),
        ColumnSpec::categorical("heating_type", &["ducted_furnace", "baseboard", "heat_pump", "none"])
            .with_dependencies(&["heating_fuel"]),
        ColumnSpec::categorical("has_ducts", &["yes", "no"]).with_dependencies(&["heating_type"]),
        ColumnSpec::categorical("water_heater_fuel", &["electricity", "natural_gas", "fuel_oil", "none"])
            .with_dependencies(&["heating_fuel"]),
        ColumnSpec::categorical("clothes_dryer", &["electric", "gas", "propane", "none"])
            .with_dependencies(&["heating_fuel", "building_type"]),
        ColumnSpec::categorical("hvac_is_faulted", &["no", "yes"]),
    ])
    .expect("static schema is valid");

    let normalize = |w: [f64; 4]| -> Vec<f64> {
        let s: f64 = w.iter().sum();
        w.iter().map(|x| x / s).collect()
    };

    // heating_fuel | (building_type, vintage), building_type most significant.
    let mut fuel_rows = Vec::new();
    for b in 0..3usize {
        for v in 0..5usize {
            let vf = v as f64;
            fuel_rows.push(normalize([
                0.18 + 0.05 * vf + if b == 2 { 0.12 } else { 0.0 },
                0.45 - 0.02 * vf + if b == 0 { 0.05 } else { 0.0 },
                0.22 - 0.03 * vf + if b == 1 { 0.03 } else { 0.0 },
                0.10 + if b == 2 { 0.05 } else { 0.0 },
            ]));
        }
    }

    let type_rows = alloc::vec![
        alloc::vec![0.15, 0.33, 0.45, 0.07], // electricity
        alloc::vec![0.58, 0.25, 0.07, 0.10], // natural_gas
        alloc::vec![0.55, 0.33, 0.04, 0.08], // fuel_oil
        alloc::vec![0.04, 0.05, 0.06, 0.85], // none
    ];

    let ducts_rows = alloc::vec![
        alloc::vec![0.85, 0.15], // ducted_furnace
        alloc::vec![0.20, 0.80], // baseboard
        alloc::vec![0.55, 0.45], // heat_pump
        alloc::vec![0.25, 0.75], // none
    ];

    let whf_rows = alloc::vec![
        alloc::vec![0.60, 0.27, 0.05, 0.08], // electricity
        alloc::vec![0.25, 0.60, 0.07, 0.08], // natural_gas
        alloc::vec![0.22, 0.22, 0.50, 0.06], // fuel_oil
        alloc::vec![0.50, 0.32, 0.08, 0.10], // none
    ];

    // clothes_dryer | (heating_fuel, building_type), fuel most significant.
    let mut dryer_rows = Vec::new();
    for f in 0..4usize {
        for b in 0..3usize {
            dryer_rows.push(normalize([
                0.40 + if f == 0 { 0.10 } else { 0.0 } - if b == 2 { 0.05 } else { 0.0 },
                0.18 + if f == 1 { 0.25 } else { 0.0 },
                0.10 + if f == 2 { 0.12 } else { 0.0 },
                0.12 + if b == 2 { 0.10 } else { 0.0 } + if f == 3 { 0.08 } else { 0.0 },
            ]));
        }
    }

    let models = alloc::vec![
        // region_id: six well-separated areas, the last one held out.
        ColumnModel::NumericalMixture {
            components: alloc::vec![
                MixtureComponent { weight: 0.19, mean: 10.0, sd: 1.2 },
                MixtureComponent { weight: 0.19, mean: 18.0, sd: 1.2 },
                MixtureComponent { weight: 0.19, mean: 26.0, sd: 1.2 },
                MixtureComponent { weight: 0.19, mean: 34.0, sd: 1.2 },
                MixtureComponent { weight: 0.16, mean: 42.0, sd: 1.2 },
                MixtureComponent { weight: 0.08, mean: 55.0, sd: 1.2 },
            ],
        },
        // sqft in thousands.
        ColumnModel::NumericalRule(NumericalRule {
            base: 2.0,
            cat_parents: alloc::vec!["building_type".into(), "vintage".into()],
            effects: alloc::vec![
                alloc::vec![0.8, 0.0, -0.8],
                alloc::vec![-0.3, -0.1, 0.0, 0.25, 0.4],
            ],
            num_parents: alloc::vec![],
            coefs: alloc::vec![],
            noise_sd: 0.6,
        }),
        ColumnModel::NumericalRule(NumericalRule {
            base: 2.5,
            cat_parents: alloc::vec![
                "usage_level".into(),
                "heating_fuel".into(),
                "heating_type".into(),
                "has_ducts".into(),
                "water_heater_fuel".into(),
                "clothes_dryer".into(),
            ],
            effects: alloc::vec![
                alloc::vec![-1.5, 0.0, 1.5],
                alloc::vec![1.2, 0.0, 0.3, -1.2],
                alloc::vec![0.0, 0.9, -0.9, -1.5],
                alloc::vec![0.5, -0.5],
                alloc::vec![0.8, 0.0, 0.45, -0.5],
                alloc::vec![0.6, 0.1, 0.25, -0.5],
            ],
            num_parents: alloc::vec!["sqft".into()],
            coefs: alloc::vec![1.0],
            noise_sd: 0.3,
        }),
        ColumnModel::CategoricalRoot { probs: alloc::vec![0.55, 0.25, 0.20] },
        ColumnModel::CategoricalRoot { probs: alloc::vec![0.25, 0.20, 0.25, 0.18, 0.12] },
        ColumnModel::CategoricalRoot { probs: alloc::vec![0.30, 0.45, 0.25] },
        ColumnModel::CategoricalTable(CategoricalTable {
            parents: alloc::vec!["building_type".into(), "vintage".into()],
            probs: fuel_rows,
        }),
        ColumnModel::CategoricalTable(CategoricalTable {
            parents: alloc::vec!["heating_fuel".into()],
            probs: type_rows,
        }),
        ColumnModel::CategoricalTable(CategoricalTable {
            parents: alloc::vec!["heating_type".into()],
            probs: ducts_rows,
        }),
        ColumnModel::CategoricalTable(CategoricalTable {
            parents: alloc::vec!["heating_fuel".into()],
            probs: whf_rows,
        }),
        ColumnModel::CategoricalTable(CategoricalTable {
            parents: alloc::vec!["heating_fuel".into(), "building_type".into()],
            probs: dryer_rows,
        }),
        ColumnModel::CategoricalRoot { probs: alloc::vec![0.97, 0.03] },
    ];

    OracleSpec::new(
        schema,
        models,
        Some(RegionPredicate::NumericalRange {
            column: "region_id".into(),
            min: Some(50.0),
            max: None,
        }),
    )
    .expect("default building spec is valid")
}
