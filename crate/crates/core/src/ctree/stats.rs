//! Per-variable independence tests against the binary class.
//!
//! Categorical predictors use Pearson's chi-square on the level-by-class
//! table; numeric predictors use the two-sample rank-sum statistic with
//! midranks. Both report their statistic on the chi-square(1)-comparable
//! scale where possible so the tie-break on "larger statistic" is
//! meaningful across kinds. Small samples get p-values from the exact
//! conditional (permutation) distribution; larger ones use the asymptotic
//! chi-square or normal approximation.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dataset::{Class, ColumnData, Dataset, RowIndexSet};
use crate::error::Result;

/// Largest node size for which the chi-square p-value is computed from the
/// exact conditional distribution of the table.
pub const EXACT_CHI_SQUARE_MAX_N: usize = 16;

/// Largest per-class size for which the rank-sum p-value is computed by
/// exact enumeration of the permutation distribution.
pub const EXACT_RANK_SUM_MAX_PER_CLASS: usize = 12;

const REL_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableTest {
    pub variable: String,
    pub column: usize,
    pub statistic: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
    /// The variable takes a single value in the node and was not tested.
    #[serde(default)]
    pub constant: bool,
}

/// Runs the independence test for one variable. `p_adjusted` equals
/// `p_raw` here; [`test_variables`] applies the multiplicity adjustment.
pub fn independence_test(
    d: &Dataset,
    within: &RowIndexSet,
    variable: &str,
) -> Result<VariableTest> {
    let column = d.column_index(variable)?;
    d.validate(within)?;
    Ok(test_column(d, within.as_slice(), column))
}

/// Tests every predictor and applies the Bonferroni adjustment over the
/// `m` variables that are not constant within the node.
pub fn test_variables(
    d: &Dataset,
    within: &RowIndexSet,
    predictors: &[String],
) -> Result<Vec<VariableTest>> {
    d.validate(within)?;
    let columns = predictors
        .iter()
        .map(|p| d.column_index(p))
        .collect::<Result<Vec<_>>>()?;
    Ok(test_columns(d, within.as_slice(), &columns))
}

pub(crate) fn test_columns(d: &Dataset, rows: &[usize], columns: &[usize]) -> Vec<VariableTest> {
    let mut tests: Vec<VariableTest> = columns.iter().map(|&c| test_column(d, rows, c)).collect();
    let m = tests.iter().filter(|t| !t.constant).count() as f64;
    for t in &mut tests {
        t.p_adjusted = if t.constant {
            1.0
        } else {
            (m * t.p_raw).min(1.0)
        };
    }
    tests
}

fn test_column(d: &Dataset, rows: &[usize], column: usize) -> VariableTest {
    let variable = d.schema()[column].name.clone();
    let (statistic, p, constant) = match d.column(column) {
        ColumnData::Categorical(codes) => {
            let n_levels = d.schema()[column].levels.len();
            let mut table = vec![[0u64; 2]; n_levels];
            for &i in rows {
                table[codes[i] as usize][d.class_of(i).index()] += 1;
            }
            let observed = table.iter().filter(|r| r[0] + r[1] > 0).count();
            if observed < 2 {
                (0.0, 1.0, true)
            } else {
                let (s, p) = chi_square_test(&table);
                (s, p, false)
            }
        }
        ColumnData::Numeric(values) => {
            let xs: Vec<f64> = rows.iter().map(|&i| values[i]).collect();
            let first = xs.first().copied();
            if xs.iter().all(|&x| Some(x) == first) {
                (0.0, 1.0, true)
            } else {
                let classes: Vec<Class> = rows.iter().map(|&i| d.class_of(i)).collect();
                let (s, p) = rank_sum_test(&xs, &classes);
                (s, p, false)
            }
        }
    };
    VariableTest {
        variable,
        column,
        statistic,
        p_raw: p,
        p_adjusted: p,
        constant,
    }
}

/// Pearson chi-square statistic of an r x 2 table (`[large, small]` per
/// row). Rows with no observations are dropped. Zero when a class column
/// is empty.
pub fn chi_square_statistic(table: &[[u64; 2]]) -> f64 {
    let rows: Vec<[u64; 2]> = table.iter().copied().filter(|r| r[0] + r[1] > 0).collect();
    let n: u64 = rows.iter().map(|r| r[0] + r[1]).sum();
    let col = [
        rows.iter().map(|r| r[0]).sum::<u64>(),
        rows.iter().map(|r| r[1]).sum::<u64>(),
    ];
    if col[0] == 0 || col[1] == 0 || rows.len() < 2 {
        return 0.0;
    }
    let n = n as f64;
    let mut stat = 0.0;
    for r in &rows {
        let row_total = (r[0] + r[1]) as f64;
        for c in 0..2 {
            let expected = row_total * col[c] as f64 / n;
            let diff = r[c] as f64 - expected;
            stat += diff * diff / expected;
        }
    }
    stat
}

/// Chi-square independence test of an r x 2 table: `(statistic, p)`.
///
/// Tables with at most [`EXACT_CHI_SQUARE_MAX_N`] observations use the exact
/// distribution of the statistic given both margins; larger tables use the
/// chi-square tail with `r - 1` degrees of freedom.
pub fn chi_square_test(table: &[[u64; 2]]) -> (f64, f64) {
    let rows: Vec<[u64; 2]> = table.iter().copied().filter(|r| r[0] + r[1] > 0).collect();
    let stat = chi_square_statistic(&rows);
    let n: u64 = rows.iter().map(|r| r[0] + r[1]).sum();
    let small: u64 = rows.iter().map(|r| r[1]).sum();
    if rows.len() < 2 || small == 0 || small == n {
        return (stat, 1.0);
    }
    let p = if n as usize <= EXACT_CHI_SQUARE_MAX_N {
        exact_chi_square_p(&rows, stat)
    } else {
        chi_square_tail(stat, (rows.len() - 1) as f64)
    };
    (stat, p)
}

/// Upper tail of the chi-square distribution.
pub fn chi_square_tail(stat: f64, df: f64) -> f64 {
    if stat <= 0.0 {
        return 1.0;
    }
    let dist = ChiSquared::new(df).expect("positive degrees of freedom");
    dist.sf(stat).clamp(0.0, 1.0)
}

/// Probability, under the multivariate hypergeometric law with fixed row
/// and column totals, that the statistic reaches `observed`.
fn exact_chi_square_p(rows: &[[u64; 2]], observed: f64) -> f64 {
    let totals: Vec<u64> = rows.iter().map(|r| r[0] + r[1]).collect();
    let n: u64 = totals.iter().sum();
    let small: u64 = rows.iter().map(|r| r[1]).sum();
    let binom = binomial_table(n as usize);
    let denom = binom[n as usize][small as usize];
    let threshold = observed - REL_EPS * observed.max(1.0);

    // Capacity still available in rows after position i.
    let mut suffix = vec![0u64; totals.len() + 1];
    for i in (0..totals.len()).rev() {
        suffix[i] = suffix[i + 1] + totals[i];
    }

    let mut table = vec![[0u64; 2]; totals.len()];
    let mut mass = 0.0;
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        i: usize,
        remaining: u64,
        weight: f64,
        totals: &[u64],
        suffix: &[u64],
        binom: &[Vec<f64>],
        table: &mut Vec<[u64; 2]>,
        threshold: f64,
        mass: &mut f64,
    ) {
        if i == totals.len() {
            if chi_square_statistic(table) >= threshold {
                *mass += weight;
            }
            return;
        }
        let lo = remaining.saturating_sub(suffix[i + 1]);
        let hi = remaining.min(totals[i]);
        for s in lo..=hi {
            table[i] = [totals[i] - s, s];
            let w = weight * binom[totals[i] as usize][s as usize];
            recurse(
                i + 1,
                remaining - s,
                w,
                totals,
                suffix,
                binom,
                table,
                threshold,
                mass,
            );
        }
    }
    recurse(
        0, small, 1.0, &totals, &suffix, &binom, &mut table, threshold, &mut mass,
    );
    (mass / denom).clamp(0.0, 1.0)
}

fn binomial_table(n: usize) -> Vec<Vec<f64>> {
    let mut t = vec![vec![0.0; n + 1]; n + 1];
    for i in 0..=n {
        t[i][0] = 1.0;
        for k in 1..=i {
            t[i][k] = t[i - 1][k - 1] + if k < i { t[i - 1][k] } else { 0.0 };
        }
    }
    t
}

/// Midranks (1-based) of `values` and the tie-correction sum of `t^3 - t`.
pub fn midranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + 1 + end) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = rank;
        }
        let t = (end - start) as f64;
        ties += t * t * t - t;
        start = end;
    }
    (ranks, ties)
}

/// Two-sample rank-sum test of `values` split by class: `(z^2, p)`.
///
/// `W` is the sum of the small-class midranks and `z` its standardisation
/// with the tie-corrected variance. The p-value is two-sided; it comes from
/// exact enumeration when both classes have at most
/// [`EXACT_RANK_SUM_MAX_PER_CLASS`] members, else from the normal
/// approximation.
pub fn rank_sum_test(values: &[f64], classes: &[Class]) -> (f64, f64) {
    assert_eq!(values.len(), classes.len());
    let n = values.len();
    let n_small = classes.iter().filter(|&&c| c == Class::Small).count();
    let n_large = n - n_small;
    if n_small == 0 || n_large == 0 {
        return (0.0, 1.0);
    }
    let (ranks, ties) = midranks(values);
    let w: f64 = ranks
        .iter()
        .zip(classes)
        .filter(|(_, &c)| c == Class::Small)
        .map(|(r, _)| r)
        .sum();
    let (n1, n2, nf) = (n_small as f64, n_large as f64, n as f64);
    let mean = n1 * (nf + 1.0) / 2.0;
    let var = n1 * n2 / 12.0 * ((nf + 1.0) - ties / (nf * (nf - 1.0)));
    if var <= 0.0 {
        return (0.0, 1.0);
    }
    let z = (w - mean) / var.sqrt();
    let stat = z * z;
    let p = if n_small <= EXACT_RANK_SUM_MAX_PER_CLASS && n_large <= EXACT_RANK_SUM_MAX_PER_CLASS {
        exact_rank_sum_p(&ranks, n_small, w)
    } else {
        chi_square_tail(stat, 1.0)
    };
    (stat, p)
}

/// Two-sided exact p-value of a rank sum `w` over all `C(N, k)` ways to
/// label `k` of the ranks as small-class. Midranks are doubled so the
/// subset-sum recursion runs over integers.
fn exact_rank_sum_p(ranks: &[f64], k: usize, w: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    // counts[j][s]: subsets of size j with doubled rank sum s.
    let mut counts = vec![vec![0.0f64; max_sum + 1]; k + 1];
    counts[0][0] = 1.0;
    for &r in &doubled {
        for j in (1..=k).rev() {
            for s in (r..=max_sum).rev() {
                let add = counts[j - 1][s - r];
                if add != 0.0 {
                    counts[j][s] += add;
                }
            }
        }
    }
    let n = ranks.len();
    let mean2 = k as f64 * (n as f64 + 1.0);
    let dev = (2.0 * w - mean2).abs();
    let threshold = dev - REL_EPS * dev.max(1.0);
    let total: f64 = counts[k].iter().sum();
    let tail: f64 = counts[k]
        .iter()
        .enumerate()
        .filter(|(s, _)| (*s as f64 - mean2).abs() >= threshold)
        .map(|(_, c)| c)
        .sum();
    (tail / total).clamp(0.0, 1.0)
}
