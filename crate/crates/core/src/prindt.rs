//! The inner loop: repeated class-undersampled tree fits scored by
//! balanced accuracy, with interpretability filtering, ranking and
//! probability-averaging ensembles.

use std::cmp::Ordering;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ctree::{decide, grow_tree, Prediction, SplitRule, Tree, TreeParams};
use crate::dataset::{Class, ColumnKind, Dataset, RowIndexSet, RowRef};
use crate::error::{Error, Result};
use crate::sampling::{undersample_class, SeedStream, UndersampleSpec};

/// Per-class accuracies and their mean on one scored sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub ba: f64,
    pub acc_large: f64,
    pub acc_small: f64,
}

impl Accuracy {
    pub fn from_class_accuracies(acc_large: f64, acc_small: f64) -> Self {
        Accuracy {
            ba: (acc_large + acc_small) / 2.0,
            acc_large,
            acc_small,
        }
    }
}

/// Balanced accuracy of `predictions` against `truth`.
pub fn balanced_accuracy(predictions: &[Class], truth: &[Class]) -> Result<Accuracy> {
    if predictions.len() != truth.len() || truth.is_empty() {
        return Err(Error::UndefinedAccuracy(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    let mut correct = [0usize; 2];
    let mut size = [0usize; 2];
    for (&p, &t) in predictions.iter().zip(truth) {
        size[t.index()] += 1;
        correct[t.index()] += usize::from(p == t);
    }
    accuracy_from_counts(correct, size)
}

fn accuracy_from_counts(correct: [usize; 2], size: [usize; 2]) -> Result<Accuracy> {
    if size[0] == 0 || size[1] == 0 {
        return Err(Error::UndefinedAccuracy(
            "the reference labels contain only one class".into(),
        ));
    }
    Ok(Accuracy::from_class_accuracies(
        correct[0] as f64 / size[0] as f64,
        correct[1] as f64 / size[1] as f64,
    ))
}

/// Scores any row classifier on `rows` of `d`.
pub fn score_rows(
    d: &Dataset,
    rows: &RowIndexSet,
    classify: impl Fn(RowRef<'_>) -> Class,
) -> Result<Accuracy> {
    let mut correct = [0usize; 2];
    let mut size = [0usize; 2];
    for i in rows.iter() {
        let truth = d.class_of(i);
        size[truth.index()] += 1;
        correct[truth.index()] += usize::from(classify(d.row(i)) == truth);
    }
    accuracy_from_counts(correct, size)
}

pub fn score_tree(tree: &Tree, d: &Dataset, rows: &RowIndexSet) -> Result<Accuracy> {
    score_rows(d, rows, |r| tree.predict(r).class)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Relation {
    In { levels: Vec<String> },
    Le { value: f64 },
    Gt { value: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conjunct {
    pub variable: String,
    #[serde(flatten)]
    pub relation: Relation,
}

/// A conjunction of conditions no reported tree may imply on any path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForbiddenCombination {
    pub conjuncts: Vec<Conjunct>,
}

impl ForbiddenCombination {
    pub fn validate(&self, d: &Dataset) -> Result<()> {
        if self.conjuncts.is_empty() {
            return Err(Error::Config(
                "forbidden combination without conjuncts".into(),
            ));
        }
        for c in &self.conjuncts {
            let idx = d.column_index(&c.variable)?;
            let schema = &d.schema()[idx];
            match (&c.relation, schema.kind) {
                (Relation::In { levels }, ColumnKind::Categorical) => {
                    for l in levels {
                        d.level_code(idx, l)?;
                    }
                }
                (Relation::Le { .. } | Relation::Gt { .. }, ColumnKind::Numeric) => {}
                (Relation::In { .. }, ColumnKind::Numeric) => {
                    return Err(Error::NotCategorical(c.variable.clone()))
                }
                (_, ColumnKind::Categorical) => return Err(Error::NotNumeric(c.variable.clone())),
            }
        }
        Ok(())
    }
}

/// A root-to-leaf path that implies a forbidden combination.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub combination: usize,
    pub leaf_id: usize,
    pub conditions: Vec<String>,
}

/// What a path has established about one variable.
#[derive(Clone, Debug, Default)]
struct Constraint {
    levels: Option<Vec<String>>,
    // Values lie in (lower, upper].
    lower: Option<f64>,
    upper: Option<f64>,
}

impl Constraint {
    fn implies(&self, relation: &Relation) -> bool {
        match relation {
            Relation::In { levels } => self
                .levels
                .as_ref()
                .is_some_and(|allowed| allowed.iter().all(|l| levels.contains(l))),
            Relation::Le { value } => self.upper.is_some_and(|u| u <= *value),
            Relation::Gt { value } => self.lower.is_some_and(|l| l >= *value),
        }
    }
}

/// First path, in pre-order, whose accumulated conditions imply every
/// conjunct of some forbidden combination.
pub fn find_violation(t: &Tree, forbidden: &[ForbiddenCombination]) -> Option<Violation> {
    if forbidden.is_empty() {
        return None;
    }
    for (leaf, path) in t.leaf_paths() {
        let mut constraints: std::collections::HashMap<&str, Constraint> = Default::default();
        for step in &path {
            let c = constraints.entry(step.split.variable.as_str()).or_default();
            match &step.split.rule {
                SplitRule::Threshold { threshold } => {
                    if step.left {
                        c.upper = Some(c.upper.map_or(*threshold, |u| u.min(*threshold)));
                    } else {
                        c.lower = Some(c.lower.map_or(*threshold, |l| l.max(*threshold)));
                    }
                }
                SplitRule::Levels { left, right } => {
                    let side: Vec<String> = if step.left { left } else { right }
                        .iter()
                        .map(|l| l.name.clone())
                        .collect();
                    c.levels = Some(match c.levels.take() {
                        Some(prev) => prev.into_iter().filter(|l| side.contains(l)).collect(),
                        None => side,
                    });
                }
            }
        }
        for (k, combo) in forbidden.iter().enumerate() {
            let implied = combo.conjuncts.iter().all(|conj| {
                constraints
                    .get(conj.variable.as_str())
                    .is_some_and(|c| c.implies(&conj.relation))
            });
            if implied {
                return Some(Violation {
                    combination: k,
                    leaf_id: t.nodes[leaf].id,
                    conditions: path.iter().map(|s| s.split.describe(s.left)).collect(),
                });
            }
        }
    }
    None
}

pub fn check_interpretable(t: &Tree, forbidden: &[ForbiddenCombination]) -> bool {
    find_violation(t, forbidden).is_none()
}

/// A fitted tree with its position in the nested loops and its scores.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredTree {
    pub tree: Arc<Tree>,
    /// 1-based outer repetition.
    pub outer: usize,
    /// 1-based inner repetition.
    pub inner: usize,
    pub percent_index: usize,
    pub percent: f64,
    /// Scored on the outer undersample.
    pub outer_score: Accuracy,
    /// Scored on the full data, once computed.
    pub full_score: Option<Accuracy>,
}

impl ScoredTree {
    pub fn id(&self) -> String {
        tree_id(self.outer, self.inner, self.percent_index)
    }

    pub fn key(&self) -> (usize, usize, usize) {
        (self.outer, self.inner, self.percent_index)
    }
}

pub fn tree_id(outer: usize, inner: usize, percent_index: usize) -> String {
    format!("{outer}-{inner}-{}", percent_index + 1)
}

/// Descending by balanced accuracy; ties go to the earlier repetition.
pub fn rank_by(
    a_ba: f64,
    a_key: (usize, usize, usize),
    b_ba: f64,
    b_key: (usize, usize, usize),
) -> Ordering {
    b_ba.total_cmp(&a_ba).then(a_key.cmp(&b_key))
}

pub fn sort_by_outer(trees: &mut [ScoredTree]) {
    trees.sort_by(|a, b| rank_by(a.outer_score.ba, a.key(), b.outer_score.ba, b.key()));
}

/// The first `min(k, len)` trees of an already ranked list.
pub fn top_k(scored: &[ScoredTree], k: usize) -> Vec<ScoredTree> {
    scored.iter().take(k.max(1)).cloned().collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerConfig {
    pub percents: Vec<f64>,
    pub inner_reps: usize,
    pub params: TreeParams,
    pub predictors: Vec<String>,
    pub forbidden: Vec<ForbiddenCombination>,
}

/// Runs every inner repetition for one outer undersample.
///
/// `stream` is the outer repetition's seed stream; repetition `j` draws
/// from its `("inner", j)` child. All configured percentages share that
/// draw's stream. Trees failing the interpretability check are dropped.
/// The result is ranked by balanced accuracy on `under_out`.
pub fn prindt_inner(
    d: &Dataset,
    under_out: &RowIndexSet,
    cfg: &InnerConfig,
    stream: &SeedStream,
    outer: usize,
) -> Result<Vec<ScoredTree>> {
    let (large, small) = d.class_counts(Some(under_out))?;
    if large == 0 || small == 0 {
        return Err(Error::Sampling(format!(
            "outer repetition {outer}: undersample lacks a class"
        )));
    }
    let specs = cfg
        .percents
        .iter()
        .map(|&p| UndersampleSpec::new(p, 0))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (1..=cfg.inner_reps)
        .flat_map(|j| (0..specs.len()).map(move |k| (j, k)))
        .collect();
    let fitted: Vec<Option<ScoredTree>> = jobs
        .par_iter()
        .map(|&(inner, k)| -> Result<Option<ScoredTree>> {
            let rng = stream.child("inner", inner as u64);
            let mut spec = specs[k];
            spec.repetition = inner;
            let under_in = undersample_class(d, under_out, &spec, &rng)?;
            let tree = grow_tree(d, &under_in, &cfg.params, &cfg.predictors)?;
            if !check_interpretable(&tree, &cfg.forbidden) {
                return Ok(None);
            }
            let outer_score = score_tree(&tree, d, under_out)?;
            Ok(Some(ScoredTree {
                tree: Arc::new(tree),
                outer,
                inner,
                percent_index: k,
                percent: spec.percent(),
                outer_score,
                full_score: None,
            }))
        })
        .collect::<Result<_>>()?;
    let mut scored: Vec<ScoredTree> = fitted.into_iter().flatten().collect();
    if scored.is_empty() {
        return Err(Error::EmptyResult { outer });
    }
    sort_by_outer(&mut scored);
    Ok(scored)
}

/// Trees combined by averaging their leaf probability pairs.
#[derive(Clone, Debug)]
pub struct Ensemble {
    members: Vec<Arc<Tree>>,
}

impl Ensemble {
    pub fn new(members: Vec<Arc<Tree>>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Config("an ensemble needs at least one tree".into()));
        }
        Ok(Ensemble { members })
    }

    pub fn members(&self) -> &[Arc<Tree>] {
        &self.members
    }

    pub fn predict(&self, row: RowRef<'_>) -> Prediction {
        let (mut p_large, mut p_small) = (0.0, 0.0);
        for t in &self.members {
            let p = t.predict(row);
            p_large += p.p_large;
            p_small += p.p_small;
        }
        let k = self.members.len() as f64;
        let (p_large, p_small) = (p_large / k, p_small / k);
        Prediction {
            class: decide(p_large, p_small),
            p_large,
            p_small,
        }
    }

    pub fn score(&self, d: &Dataset, rows: &RowIndexSet) -> Result<Accuracy> {
        score_rows(d, rows, |r| self.predict(r).class)
    }
}
