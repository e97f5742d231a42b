//! The outer loop: undersample the large level of the nesting variable,
//! run the inner loop on each undersample, re-score the best trees on the
//! full data, and assemble ensembles and the report.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ctree::{grow_tree, render_tree, Tree, TreeParams};
use crate::dataset::{Dataset, RowIndexSet, SchemaHint};
use crate::error::{Error, Result};
use crate::prindt::{
    prindt_inner, rank_by, score_tree, top_k, Accuracy, Ensemble, ForbiddenCombination,
    InnerConfig, ScoredTree,
};
use crate::sampling::{partition_in_order, split_by_level, undersample_level, SeedStream};

/// The predictor whose levels are balanced by the outer loop.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Nesting {
    pub column: String,
    pub small_level: String,
}

impl Default for Nesting {
    fn default() -> Self {
        Nesting {
            column: "SPEAKER".into(),
            small_level: "child".into(),
        }
    }
}

/// Everything that determines a run. Defaults are the reference settings:
/// 10 outer and 999 inner repetitions at 6%, alpha 0.01, best 3 trees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub class_column: String,
    pub nesting: Nesting,
    pub outer_reps: usize,
    pub inner_reps: usize,
    pub percents: Vec<f64>,
    pub alpha: f64,
    pub min_split: usize,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub k_best: usize,
    pub ensemble_size: usize,
    pub seed: u64,
    /// Predictor columns; `None` means every column except the class and
    /// nesting columns.
    pub predictors: Option<Vec<String>>,
    pub forbidden: Vec<ForbiddenCombination>,
    /// Adds a heterogeneity probe with this many parts to the report.
    pub probe_parts: Option<usize>,
    /// Column kind overrides for CSV loading.
    pub schema: Option<SchemaHint>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let tree = TreeParams::default();
        RunConfig {
            class_column: "class".into(),
            nesting: Nesting::default(),
            outer_reps: 10,
            inner_reps: 999,
            percents: vec![0.06],
            alpha: tree.alpha,
            min_split: tree.min_split,
            min_leaf: tree.min_leaf,
            max_depth: tree.max_depth,
            k_best: 3,
            ensemble_size: 3,
            seed: 0,
            predictors: None,
            forbidden: Vec::new(),
            probe_parts: None,
            schema: None,
        }
    }
}

impl RunConfig {
    pub fn tree_params(&self) -> TreeParams {
        TreeParams {
            alpha: self.alpha,
            min_split: self.min_split,
            min_leaf: self.min_leaf,
            max_depth: self.max_depth,
        }
    }

    /// Checks the settings that do not depend on data.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("outer_reps", self.outer_reps),
            ("inner_reps", self.inner_reps),
            ("k_best", self.k_best),
            ("ensemble_size", self.ensemble_size),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.percents.is_empty() {
            return Err(Error::Config("percents must not be empty".into()));
        }
        if let Some(p) = self.percents.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::Config(format!("percent {p} outside (0, 1]")));
        }
        if self.probe_parts.is_some_and(|k| k < 2) {
            return Err(Error::Config("probe_parts must be at least 2".into()));
        }
        self.tree_params().validate()
    }

    /// Resolves the predictor list against `d`.
    pub fn predictors_for(&self, d: &Dataset) -> Result<Vec<String>> {
        let names = match &self.predictors {
            Some(p) => p.clone(),
            None => d
                .predictor_names()
                .into_iter()
                .filter(|n| *n != self.nesting.column)
                .collect(),
        };
        for n in &names {
            d.column_index(n)?;
            if n == d.class_column() {
                return Err(Error::Config(
                    "the class column cannot be a predictor".into(),
                ));
            }
        }
        if names.is_empty() {
            return Err(Error::Config("no predictor columns".into()));
        }
        Ok(names)
    }

    fn inner_config(&self, d: &Dataset) -> Result<InnerConfig> {
        Ok(InnerConfig {
            percents: self.percents.clone(),
            inner_reps: self.inner_reps,
            params: self.tree_params(),
            predictors: self.predictors_for(d)?,
            forbidden: self.forbidden.clone(),
        })
    }
}

/// One tree kept from an outer repetition, with both scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeRecord {
    pub id: String,
    pub outer: usize,
    pub inner: usize,
    pub percent_index: usize,
    pub percent: f64,
    pub outer_score: Accuracy,
    pub full_score: Accuracy,
    pub tree: Tree,
    pub rendered: String,
}

impl TreeRecord {
    fn key(&self) -> (usize, usize, usize) {
        (self.outer, self.inner, self.percent_index)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaRecord {
    pub outer: usize,
    pub inner: usize,
    pub percent: f64,
    pub ba: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub outer: usize,
    pub under_out_digest: String,
    pub under_out_rows: RowIndexSet,
    pub large_count: usize,
    pub small_count: usize,
    pub n_trees: usize,
    pub top: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoredOn {
    UnderOut,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRecord {
    /// Outer repetition for per-undersample ensembles.
    pub outer: Option<usize>,
    pub members: Vec<String>,
    pub scored_on: ScoredOn,
    pub score: Accuracy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub n_rows: usize,
    pub class_column: String,
    pub large_level: String,
    pub small_level: String,
    pub large_count: usize,
    pub small_count: usize,
    pub nesting_small_rows: usize,
    pub nesting_large_rows: usize,
    pub predictors: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    /// 1-based part number.
    pub part: usize,
    /// Half-open range of positions within the large level's rows.
    pub start: usize,
    pub end: usize,
    pub first_row: usize,
    pub last_row: usize,
    pub ba: f64,
    pub single_class: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NesReport {
    pub config: RunConfig,
    pub data: DataSummary,
    pub outer: Vec<OuterRecord>,
    /// Every surviving inner tree scored on its outer undersample, in
    /// `(outer, inner, percent)` order.
    pub ba_outer: Vec<BaRecord>,
    /// The kept trees scored on the full data, in `(outer, rank)` order.
    pub ba_full: Vec<BaRecord>,
    pub trees: Vec<TreeRecord>,
    pub best_by_outer: String,
    pub best_by_full: String,
    pub best_identical: bool,
    pub strategy_a: Vec<EnsembleRecord>,
    pub best_strategy_a: usize,
    pub strategy_b: EnsembleRecord,
    pub probe: Option<Vec<ProbeRecord>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Criterion {
    ByOuter,
    ByFull,
}

impl NesReport {
    pub fn tree(&self, id: &str) -> Option<&TreeRecord> {
        self.trees.iter().find(|t| t.id == id)
    }

    pub fn outer_rows(&self, outer: usize) -> Option<&RowIndexSet> {
        self.outer
            .iter()
            .find(|o| o.outer == outer)
            .map(|o| &o.under_out_rows)
    }

    /// Sorted-key JSON, identical bytes for identical runs.
    pub fn to_canonical_json(&self) -> Result<String> {
        let value = serde_json::to_value(self).map_err(|e| Error::Report(e.to_string()))?;
        let mut text = serde_json::to_string(&canonicalize(value))
            .map_err(|e| Error::Report(e.to_string()))?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Report(e.to_string()))
    }
}

fn canonicalize(value: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match value {
        Value::Object(map) => {
            let sorted: BTreeMap<String, Value> =
                map.into_iter().map(|(k, v)| (k, canonicalize(v))).collect();
            Value::Object(sorted.into_iter().collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(canonicalize).collect()),
        other => other,
    }
}

/// The kept tree maximising the chosen score; ties go to the earlier
/// `(outer, inner, percent)`.
pub fn best_tree(report: &NesReport, criterion: Criterion) -> Result<&TreeRecord> {
    let score = |t: &TreeRecord| match criterion {
        Criterion::ByOuter => t.outer_score.ba,
        Criterion::ByFull => t.full_score.ba,
    };
    report
        .trees
        .iter()
        .min_by(|a, b| rank_by(score(a), a.key(), score(b), b.key()))
        .ok_or_else(|| Error::Report("report holds no trees".into()))
}

pub fn digest_rows(rows: &RowIndexSet) -> String {
    let mut hasher = Sha256::new();
    for i in rows.iter() {
        hasher.update((i as u64).to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

struct OuterRun {
    outer: usize,
    under_out: RowIndexSet,
    ranked: Vec<ScoredTree>,
}

/// Runs the nested undersampling procedure end to end.
pub fn nesprindt_run(d: &Dataset, cfg: &RunConfig) -> Result<NesReport> {
    cfg.validate()?;
    for f in &cfg.forbidden {
        f.validate(d)?;
    }
    let (nest_small, nest_large) =
        split_by_level(d, &cfg.nesting.column, &cfg.nesting.small_level)?;
    let inner_cfg = cfg.inner_config(d)?;
    let master = SeedStream::new(cfg.seed);

    let runs: Vec<OuterRun> = (1..=cfg.outer_reps)
        .into_par_iter()
        .map(|outer| -> Result<OuterRun> {
            let stream = master.child("outer", outer as u64);
            let under_out =
                undersample_level(d, &cfg.nesting.column, &cfg.nesting.small_level, &stream)?;
            let ranked = prindt_inner(d, &under_out, &inner_cfg, &stream, outer)?;
            Ok(OuterRun {
                outer,
                under_out,
                ranked,
            })
        })
        .collect::<Result<_>>()?;

    let all_rows = d.all_rows();
    let kept: Vec<(usize, ScoredTree)> = runs
        .iter()
        .enumerate()
        .flat_map(|(r, run)| {
            top_k(&run.ranked, cfg.k_best)
                .into_iter()
                .map(move |t| (r, t))
        })
        .collect();
    let trees: Vec<TreeRecord> = kept
        .par_iter()
        .map(|(_, t)| -> Result<TreeRecord> {
            let full_score = score_tree(&t.tree, d, &all_rows)?;
            Ok(TreeRecord {
                id: t.id(),
                outer: t.outer,
                inner: t.inner,
                percent_index: t.percent_index,
                percent: t.percent,
                outer_score: t.outer_score,
                full_score,
                tree: (*t.tree).clone(),
                rendered: render_tree(&t.tree),
            })
        })
        .collect::<Result<_>>()?;

    let mut keyed: Vec<((usize, usize, usize), BaRecord)> = runs
        .iter()
        .flat_map(|run| run.ranked.iter())
        .map(|t| {
            let rec = BaRecord {
                outer: t.outer,
                inner: t.inner,
                percent: t.percent,
                ba: t.outer_score.ba,
            };
            (t.key(), rec)
        })
        .collect();
    keyed.sort_by_key(|(key, _)| *key);
    let ba_outer: Vec<BaRecord> = keyed.into_iter().map(|(_, rec)| rec).collect();
    let ba_full: Vec<BaRecord> = trees
        .iter()
        .map(|t| BaRecord {
            outer: t.outer,
            inner: t.inner,
            percent: t.percent,
            ba: t.full_score.ba,
        })
        .collect();

    // Strategy A: per outer undersample, the best kept trees, scored there.
    let arcs: Vec<Arc<Tree>> = kept.iter().map(|(_, t)| Arc::clone(&t.tree)).collect();
    let strategy_a: Vec<EnsembleRecord> = runs
        .par_iter()
        .enumerate()
        .map(|(r, run)| -> Result<EnsembleRecord> {
            let members: Vec<usize> = kept
                .iter()
                .enumerate()
                .filter(|(_, (owner, _))| *owner == r)
                .map(|(k, _)| k)
                .take(cfg.ensemble_size)
                .collect();
            let ensemble = Ensemble::new(members.iter().map(|&k| Arc::clone(&arcs[k])).collect())?;
            Ok(EnsembleRecord {
                outer: Some(run.outer),
                members: members.iter().map(|&k| trees[k].id.clone()).collect(),
                scored_on: ScoredOn::UnderOut,
                score: ensemble.score(d, &run.under_out)?,
            })
        })
        .collect::<Result<_>>()?;
    let best_strategy_a = (0..strategy_a.len())
        .min_by(|&a, &b| {
            strategy_a[b]
                .score
                .ba
                .total_cmp(&strategy_a[a].score.ba)
                .then(a.cmp(&b))
        })
        .expect("at least one outer repetition");

    // Strategy B: the best kept trees by full-data accuracy, scored on the full data.
    let mut by_full: Vec<usize> = (0..trees.len()).collect();
    by_full.sort_by(|&a, &b| {
        rank_by(
            trees[a].full_score.ba,
            trees[a].key(),
            trees[b].full_score.ba,
            trees[b].key(),
        )
    });
    by_full.truncate(cfg.ensemble_size);
    let ensemble_b = Ensemble::new(by_full.iter().map(|&k| Arc::clone(&arcs[k])).collect())?;
    let strategy_b = EnsembleRecord {
        outer: None,
        members: by_full.iter().map(|&k| trees[k].id.clone()).collect(),
        scored_on: ScoredOn::Full,
        score: ensemble_b.score(d, &all_rows)?,
    };

    let outer: Vec<OuterRecord> = runs
        .iter()
        .map(|run| -> Result<OuterRecord> {
            let (large_count, small_count) = d.class_counts(Some(&run.under_out))?;
            Ok(OuterRecord {
                outer: run.outer,
                under_out_digest: digest_rows(&run.under_out),
                under_out_rows: run.under_out.clone(),
                large_count,
                small_count,
                n_trees: run.ranked.len(),
                top: top_k(&run.ranked, cfg.k_best)
                    .iter()
                    .map(ScoredTree::id)
                    .collect(),
            })
        })
        .collect::<Result<_>>()?;

    let probe = match cfg.probe_parts {
        Some(parts) => Some(heterogeneity_probe(
            d,
            &ProbeConfig {
                nesting: cfg.nesting.clone(),
                parts,
                params: cfg.tree_params(),
                predictors: inner_cfg.predictors.clone(),
            },
        )?),
        None => None,
    };

    let (large_count, small_count) = d.class_counts(None)?;
    let mut report = NesReport {
        config: cfg.clone(),
        data: DataSummary {
            n_rows: d.n_rows(),
            class_column: d.class_column().to_string(),
            large_level: d.class_levels().large.clone(),
            small_level: d.class_levels().small.clone(),
            large_count,
            small_count,
            nesting_small_rows: nest_small.len(),
            nesting_large_rows: nest_large.len(),
            predictors: inner_cfg.predictors.clone(),
        },
        outer,
        ba_outer,
        ba_full,
        trees,
        best_by_outer: String::new(),
        best_by_full: String::new(),
        best_identical: false,
        strategy_a,
        best_strategy_a,
        strategy_b,
        probe,
    };
    report.best_by_outer = best_tree(&report, Criterion::ByOuter)?.id.clone();
    report.best_by_full = best_tree(&report, Criterion::ByFull)?.id.clone();
    report.best_identical = report.best_by_outer == report.best_by_full;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    pub nesting: Nesting,
    pub parts: usize,
    pub params: TreeParams,
    pub predictors: Vec<String>,
}

/// Fits one tree per ordered part of the large nesting level, each joined
/// with every small-level row, and scores it on its own training rows.
pub fn heterogeneity_probe(d: &Dataset, cfg: &ProbeConfig) -> Result<Vec<ProbeRecord>> {
    cfg.params.validate()?;
    let (small, large) = split_by_level(d, &cfg.nesting.column, &cfg.nesting.small_level)?;
    let parts = partition_in_order(&large, cfg.parts)?;
    let mut starts = Vec::with_capacity(parts.len());
    let mut at = 0;
    for p in &parts {
        starts.push(at);
        at += p.len();
    }
    parts
        .par_iter()
        .enumerate()
        .map(|(k, part)| -> Result<ProbeRecord> {
            let train = part.union_sorted(&small);
            let (l, s) = d.class_counts(Some(&train))?;
            let (ba, single_class) = if l == 0 || s == 0 {
                (0.5, true)
            } else {
                let tree = grow_tree(d, &train, &cfg.params, &cfg.predictors)?;
                (score_tree(&tree, d, &train)?.ba, false)
            };
            let rows = part.as_slice();
            Ok(ProbeRecord {
                part: k + 1,
                start: starts[k],
                end: starts[k] + rows.len(),
                first_row: rows[0],
                last_row: rows[rows.len() - 1],
                ba,
                single_class,
            })
        })
        .collect()
}
