//! Significance-gated binary classification trees.
//!
//! Growth at each node: test every predictor against the class, adjust the
//! p-values for the number of tested variables, and split on the most
//! significant variable only if its adjusted p-value is at most `alpha`.
//! There is no pruning; the significance gate is the stopping rule.

mod render;
pub mod split;
pub mod stats;

use serde::{Deserialize, Serialize};

pub use render::render_tree;
pub use split::{find_split, Level, Split, SplitRule};
pub use stats::{independence_test, test_variables, VariableTest};

use crate::dataset::{Class, Dataset, RowIndexSet, RowRef};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub alpha: f64,
    pub min_split: usize,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            alpha: 0.01,
            min_split: 20,
            min_leaf: 7,
            max_depth: None,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha {} outside (0, 1)",
                self.alpha
            )));
        }
        if self.min_leaf == 0 {
            return Err(Error::Config("min_leaf must be at least 1".into()));
        }
        Ok(())
    }
}

/// `(large, small)` training counts of a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub large: usize,
    pub small: usize,
}

impl ClassCounts {
    pub fn total(&self) -> usize {
        self.large + self.small
    }

    /// `(p_large, p_small)`.
    pub fn probabilities(&self) -> (f64, f64) {
        let n = self.total() as f64;
        (self.large as f64 / n, self.small as f64 / n)
    }

    fn of(d: &Dataset, rows: &[usize]) -> Self {
        let small = rows
            .iter()
            .filter(|&&i| d.class_of(i) == Class::Small)
            .count();
        ClassCounts {
            large: rows.len() - small,
            small,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum NodeKind {
    Leaf,
    Split {
        test: VariableTest,
        split: Split,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    /// 1-based pre-order number.
    pub id: usize,
    pub depth: usize,
    pub counts: ClassCounts,
    #[serde(flatten)]
    pub kind: NodeKind,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub class: Class,
    pub p_large: f64,
    pub p_small: f64,
}

/// Majority class of a probability pair; an exact tie goes to the small class.
pub fn decide(p_large: f64, p_small: f64) -> Class {
    if p_small >= p_large {
        Class::Small
    } else {
        Class::Large
    }
}

/// One step of a root-to-leaf path.
#[derive(Clone, Copy, Debug)]
pub struct PathStep<'a> {
    pub node: usize,
    pub split: &'a Split,
    pub left: bool,
}

/// A fitted tree. Nodes are stored in pre-order; `nodes[0]` is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub params: TreeParams,
    pub predictors: Vec<String>,
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    /// Index of the leaf `row` falls into.
    pub fn leaf_of(&self, row: RowRef<'_>) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at].kind {
                NodeKind::Leaf => return at,
                NodeKind::Split {
                    split, left, right, ..
                } => {
                    at = match split.goes_left(row) {
                        Some(true) => *left,
                        Some(false) => *right,
                        // Unseen level: follow the child with more training rows.
                        None => {
                            if self.nodes[*left].counts.total() >= self.nodes[*right].counts.total()
                            {
                                *left
                            } else {
                                *right
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn predict(&self, row: RowRef<'_>) -> Prediction {
        let leaf = &self.nodes[self.leaf_of(row)];
        let (p_large, p_small) = leaf.counts.probabilities();
        Prediction {
            class: decide(p_large, p_small),
            p_large,
            p_small,
        }
    }

    pub fn predict_class(&self, d: &Dataset, row: usize) -> Class {
        self.predict(d.row(row)).class
    }

    /// Every root-to-leaf path as `(leaf index, steps)`.
    pub fn leaf_paths(&self) -> Vec<(usize, Vec<PathStep<'_>>)> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, Vec::new())];
        while let Some((at, path)) = stack.pop() {
            match &self.nodes[at].kind {
                NodeKind::Leaf => out.push((at, path)),
                NodeKind::Split {
                    split, left, right, ..
                } => {
                    let mut r = path.clone();
                    r.push(PathStep {
                        node: at,
                        split,
                        left: false,
                    });
                    stack.push((*right, r));
                    let mut l = path;
                    l.push(PathStep {
                        node: at,
                        split,
                        left: true,
                    });
                    stack.push((*left, l));
                }
            }
        }
        out
    }
}

/// The variable with the smallest adjusted p-value if it is at most
/// `alpha`. Ties go to the larger statistic, then to the earlier column.
pub fn select_split_variable(tests: &[VariableTest], alpha: f64) -> Option<&VariableTest> {
    tests
        .iter()
        .filter(|t| !t.constant)
        .min_by(|a, b| {
            a.p_adjusted
                .total_cmp(&b.p_adjusted)
                .then(b.statistic.total_cmp(&a.statistic))
                .then(a.column.cmp(&b.column))
        })
        .filter(|t| t.p_adjusted <= alpha)
}

/// Grows a tree on the rows in `within` using the given predictors.
pub fn grow_tree(
    d: &Dataset,
    within: &RowIndexSet,
    params: &TreeParams,
    predictors: &[String],
) -> Result<Tree> {
    params.validate()?;
    d.validate(within)?;
    let columns = predictors
        .iter()
        .map(|p| d.column_index(p))
        .collect::<Result<Vec<_>>>()?;
    if columns.contains(&d.class_column_index()) {
        return Err(Error::Config(
            "the class column cannot be a predictor".into(),
        ));
    }
    let counts = ClassCounts::of(d, within.as_slice());
    if counts.large == 0 || counts.small == 0 {
        return Err(Error::Sampling("tree training set lacks a class".into()));
    }
    let mut builder = Builder {
        d,
        params,
        columns: &columns,
        nodes: Vec::new(),
    };
    builder.grow(within.as_slice().to_vec(), 0);
    Ok(Tree {
        params: params.clone(),
        predictors: predictors.to_vec(),
        nodes: builder.nodes,
    })
}

struct Builder<'a> {
    d: &'a Dataset,
    params: &'a TreeParams,
    columns: &'a [usize],
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let at = self.nodes.len();
        let counts = ClassCounts::of(self.d, &rows);
        self.nodes.push(Node {
            id: at + 1,
            depth,
            counts,
            kind: NodeKind::Leaf,
        });
        if let Some((test, split)) = self.choose(&rows, counts, depth) {
            let (l_rows, r_rows): (Vec<usize>, Vec<usize>) = rows
                .iter()
                .partition(|&&i| split.goes_left(self.d.row(i)) == Some(true));
            drop(rows);
            let left = self.grow(l_rows, depth + 1);
            let right = self.grow(r_rows, depth + 1);
            self.nodes[at].kind = NodeKind::Split {
                test,
                split,
                left,
                right,
            };
        }
        at
    }

    fn choose(
        &self,
        rows: &[usize],
        counts: ClassCounts,
        depth: usize,
    ) -> Option<(VariableTest, Split)> {
        if counts.large == 0 || counts.small == 0 {
            return None;
        }
        if rows.len() < self.params.min_split {
            return None;
        }
        if self.params.max_depth.is_some_and(|m| depth >= m) {
            return None;
        }
        let tests = stats::test_columns(self.d, rows, self.columns);
        let chosen = select_split_variable(&tests, self.params.alpha)?;
        let split = find_split(self.d, rows, chosen.column, self.params.min_leaf)?;
        Some((chosen.clone(), split))
    }
}

#[cfg(test)]
mod tests;
