//! Binary split search for a selected variable.

use serde::{Deserialize, Serialize};

use crate::dataset::{Class, ColumnData, Dataset, RowRef};

/// Up to this many observed levels, categorical splits are found by
/// exhaustive search over level subsets.
pub const EXHAUSTIVE_LEVELS: usize = 12;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level {
    pub code: u32,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SplitRule {
    /// Left branch takes `value <= threshold`.
    Threshold { threshold: f64 },
    /// Left branch takes the `left` levels; `right` holds the remaining
    /// levels observed in the node.
    Levels { left: Vec<Level>, right: Vec<Level> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub variable: String,
    pub column: usize,
    pub rule: SplitRule,
}

impl Split {
    /// `Some(true)` for the left branch, `None` for a level the node never saw.
    pub fn goes_left(&self, row: RowRef<'_>) -> Option<bool> {
        match &self.rule {
            SplitRule::Threshold { threshold } => Some(row.number(self.column) <= *threshold),
            SplitRule::Levels { left, right } => {
                let code = row.level(self.column);
                if left.iter().any(|l| l.code == code) {
                    Some(true)
                } else if right.iter().any(|l| l.code == code) {
                    Some(false)
                } else {
                    None
                }
            }
        }
    }

    /// Human-readable condition for one branch.
    pub fn describe(&self, left: bool) -> String {
        match &self.rule {
            SplitRule::Threshold { threshold } => {
                let op = if left { "<=" } else { ">" };
                format!("{} {op} {}", self.variable, format_threshold(*threshold))
            }
            SplitRule::Levels { left: l, right: r } => {
                let side = if left { l } else { r };
                let names: Vec<&str> = side.iter().map(|x| x.name.as_str()).collect();
                format!("{} in {{{}}}", self.variable, names.join(", "))
            }
        }
    }
}

pub(crate) fn format_threshold(t: f64) -> String {
    if t.fract() == 0.0 {
        format!("{t:.0}")
    } else {
        let s = format!("{t:.6}");
        s.trim_end_matches('0').to_string()
    }
}

/// Pearson chi-square of the 2 x 2 split-by-class table.
pub(crate) fn chi_square_2x2(left: [usize; 2], right: [usize; 2]) -> f64 {
    let (a, b) = (left[0] as f64, left[1] as f64);
    let (c, d) = (right[0] as f64, right[1] as f64);
    let denom = (a + b) * (c + d) * (a + c) * (b + d);
    if denom == 0.0 {
        return 0.0;
    }
    let cross = a * d - b * c;
    (a + b + c + d) * cross * cross / denom
}

/// Best binary split of `rows` on `column` under the `min_leaf` constraint,
/// or `None` when no split leaves both children with `min_leaf` rows.
pub fn find_split(d: &Dataset, rows: &[usize], column: usize, min_leaf: usize) -> Option<Split> {
    let min_leaf = min_leaf.max(1);
    let variable = d.schema()[column].name.clone();
    let rule = match d.column(column) {
        ColumnData::Numeric(values) => numeric_split(d, rows, values, min_leaf)?,
        ColumnData::Categorical(codes) => {
            let schema = &d.schema()[column];
            categorical_split(d, rows, codes, min_leaf, |c| {
                schema.level_name(c).to_string()
            })?
        }
    };
    Some(Split {
        variable,
        column,
        rule,
    })
}

fn numeric_split(
    d: &Dataset,
    rows: &[usize],
    values: &[f64],
    min_leaf: usize,
) -> Option<SplitRule> {
    let mut pairs: Vec<(f64, Class)> = rows.iter().map(|&i| (values[i], d.class_of(i))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut total = [0usize; 2];
    for (_, c) in &pairs {
        total[c.index()] += 1;
    }
    let n = pairs.len();
    let mut left = [0usize; 2];
    let mut best: Option<(f64, f64)> = None;
    for k in 0..n.saturating_sub(1) {
        left[pairs[k].1.index()] += 1;
        if pairs[k].0 == pairs[k + 1].0 {
            continue;
        }
        let n_left = k + 1;
        if n_left < min_leaf || n - n_left < min_leaf {
            continue;
        }
        let right = [total[0] - left[0], total[1] - left[1]];
        let stat = chi_square_2x2(left, right);
        if best.is_none_or(|(s, _)| stat > s) {
            let threshold = pairs[k].0 + (pairs[k + 1].0 - pairs[k].0) / 2.0;
            best = Some((stat, threshold));
        }
    }
    best.map(|(_, threshold)| SplitRule::Threshold { threshold })
}

fn categorical_split(
    d: &Dataset,
    rows: &[usize],
    codes: &[u32],
    min_leaf: usize,
    name: impl Fn(u32) -> String,
) -> Option<SplitRule> {
    let mut table: std::collections::BTreeMap<u32, [usize; 2]> = Default::default();
    for &i in rows {
        table.entry(codes[i]).or_insert([0; 2])[d.class_of(i).index()] += 1;
    }
    let levels: Vec<(u32, [usize; 2])> = table.into_iter().collect();
    let l = levels.len();
    if l < 2 {
        return None;
    }
    let total = levels
        .iter()
        .fold([0usize; 2], |acc, (_, c)| [acc[0] + c[0], acc[1] + c[1]]);

    let evaluate = |members: &[bool]| -> Option<f64> {
        let mut left = [0usize; 2];
        for (k, (_, c)) in levels.iter().enumerate() {
            if members[k] {
                left[0] += c[0];
                left[1] += c[1];
            }
        }
        let right = [total[0] - left[0], total[1] - left[1]];
        let (nl, nr) = (left[0] + left[1], right[0] + right[1]);
        (nl >= min_leaf && nr >= min_leaf).then(|| chi_square_2x2(left, right))
    };

    let mut best: Option<(f64, Vec<bool>)> = None;
    let mut consider = |members: Vec<bool>| {
        if let Some(stat) = evaluate(&members) {
            if best.as_ref().is_none_or(|(s, _)| stat > *s) {
                best = Some((stat, members));
            }
        }
    };

    if l <= EXHAUSTIVE_LEVELS {
        // The first observed level always sits on the left, so each
        // unordered partition is visited once.
        for mask in 0u32..(1u32 << (l - 1)) - 1 {
            let mut members = vec![false; l];
            members[0] = true;
            for (bit, m) in members.iter_mut().skip(1).enumerate() {
                *m = mask >> bit & 1 == 1;
            }
            consider(members);
        }
    } else {
        let mut order: Vec<usize> = (0..l).collect();
        let rate = |k: usize| {
            let c = levels[k].1;
            c[1] as f64 / (c[0] + c[1]) as f64
        };
        order.sort_by(|&a, &b| rate(a).total_cmp(&rate(b)).then(a.cmp(&b)));
        for prefix in 1..l {
            let mut members = vec![false; l];
            for &k in &order[..prefix] {
                members[k] = true;
            }
            consider(members);
        }
    }

    let (_, members) = best?;
    let (mut left, mut right) = (Vec::new(), Vec::new());
    for (k, (code, _)) in levels.iter().enumerate() {
        let level = Level {
            code: *code,
            name: name(*code),
        };
        if members[k] {
            left.push(level);
        } else {
            right.push(level);
        }
    }
    Some(SplitRule::Levels { left, right })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ColumnKind, ColumnSchema};

    fn numeric(xs: &[f64], small: impl Fn(f64) -> bool) -> Dataset {
        let schema = vec![
            ColumnSchema {
                name: "class".into(),
                kind: ColumnKind::Categorical,
                levels: vec!["large".into(), "small".into()],
            },
            ColumnSchema {
                name: "x".into(),
                kind: ColumnKind::Numeric,
                levels: vec![],
            },
        ];
        let classes = xs.iter().map(|&x| u32::from(small(x))).collect();
        Dataset::from_columns(
            schema,
            vec![
                ColumnData::Categorical(classes),
                ColumnData::Numeric(xs.to_vec()),
            ],
            "class",
        )
        .unwrap()
    }

    #[test]
    fn perfect_separation_midpoint() {
        let xs: Vec<f64> = (1..=10).map(f64::from).collect();
        let d = numeric(&xs, |x| x >= 6.0);
        let rows: Vec<usize> = (0..10).collect();
        let split = find_split(&d, &rows, 1, 1).unwrap();
        assert_eq!(split.rule, SplitRule::Threshold { threshold: 5.5 });
    }

    #[test]
    fn min_leaf_forces_no_split() {
        let xs: Vec<f64> = (1..=10).map(f64::from).collect();
        let d = numeric(&xs, |x| x >= 6.0);
        let rows: Vec<usize> = (0..10).collect();
        assert!(find_split(&d, &rows, 1, 6).is_none());
        // min_leaf = 5 admits exactly the 5 | 5 cut.
        let split = find_split(&d, &rows, 1, 5).unwrap();
        assert_eq!(split.rule, SplitRule::Threshold { threshold: 5.5 });
    }

    #[test]
    fn threshold_is_between_distinct_values() {
        let xs = [1.0, 1.0, 1.0, 4.0, 4.0, 9.0];
        let d = numeric(&xs, |x| x > 2.0);
        let rows: Vec<usize> = (0..6).collect();
        let split = find_split(&d, &rows, 1, 1).unwrap();
        assert_eq!(split.rule, SplitRule::Threshold { threshold: 2.5 });
    }

    #[test]
    fn two_by_two_chi_square() {
        assert!((chi_square_2x2([10, 0], [0, 10]) - 20.0).abs() < 1e-12);
        assert_eq!(chi_square_2x2([5, 5], [5, 5]), 0.0);
    }

    #[test]
    fn format_threshold_trims() {
        assert_eq!(format_threshold(145.0), "145");
        assert_eq!(format_threshold(5.5), "5.5");
    }
}
