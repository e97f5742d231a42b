//! Seeded undersampling and ordered partitioning.
//!
//! Every random draw is taken from a [`SeedStream`] addressed by a
//! derivation path, so a repetition's sample depends only on the master
//! seed and its own `(label, index)` path, never on scheduling.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{Class, ColumnData, Dataset, RowIndexSet};
use crate::error::{Error, Result};

/// A deterministic random stream named by a master seed and a path.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedStream {
    master_seed: u64,
    path: Vec<(String, u64)>,
}

impl SeedStream {
    pub fn new(master_seed: u64) -> Self {
        SeedStream {
            master_seed,
            path: Vec::new(),
        }
    }

    /// Extends the path by one `(label, index)` step.
    pub fn child(&self, label: &str, index: u64) -> Self {
        let mut path = self.path.clone();
        path.push((label.to_string(), index));
        SeedStream {
            master_seed: self.master_seed,
            path,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn path(&self) -> &[(String, u64)] {
        &self.path
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(b"nesprindt-seed-v1");
        hasher.update(self.master_seed.to_le_bytes());
        for (label, index) in &self.path {
            hasher.update((label.len() as u64).to_le_bytes());
            hasher.update(label.as_bytes());
            hasher.update(index.to_le_bytes());
        }
        let seed: [u8; 32] = hasher.finalize().into();
        ChaCha8Rng::from_seed(seed)
    }
}

/// Fraction of the large class kept by [`undersample_class`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UndersampleSpec {
    percent: f64,
    pub repetition: usize,
}

impl UndersampleSpec {
    pub fn new(percent: f64, repetition: usize) -> Result<Self> {
        if !(percent > 0.0 && percent <= 1.0) {
            return Err(Error::Config(format!(
                "undersampling percent {percent} outside (0, 1]"
            )));
        }
        Ok(UndersampleSpec {
            percent,
            repetition,
        })
    }

    pub fn percent(&self) -> f64 {
        self.percent
    }
}

/// Number of large-class rows kept out of `large`: `floor(percent * large)`,
/// with products within rounding error of an integer snapped to it first.
pub fn large_class_quota(percent: f64, large: usize) -> usize {
    let exact = percent * large as f64;
    let rounded = exact.round();
    if (exact - rounded).abs() < 1e-9 * exact.max(1.0) {
        rounded as usize
    } else {
        exact.floor() as usize
    }
}

/// All small-class rows of `within` plus a uniform sample without
/// replacement of `floor(percent * L)` of its `L` large-class rows.
/// The result keeps the original row order.
pub fn undersample_class(
    d: &Dataset,
    within: &RowIndexSet,
    spec: &UndersampleSpec,
    rng: &SeedStream,
) -> Result<RowIndexSet> {
    d.validate(within)?;
    let large: Vec<usize> = within
        .iter()
        .filter(|&i| d.class_of(i) == Class::Large)
        .collect();
    let n_small = within.len() - large.len();
    if large.is_empty() || n_small == 0 {
        return Err(Error::Sampling(
            "class undersampling needs both classes in the sample".into(),
        ));
    }
    let quota = large_class_quota(spec.percent(), large.len());
    if quota == 0 {
        return Err(Error::Sampling(format!(
            "{} of {} large-class rows keeps none",
            spec.percent(),
            large.len()
        )));
    }
    let mut keep = vec![false; d.n_rows()];
    if quota == large.len() {
        for &i in &large {
            keep[i] = true;
        }
    } else {
        let mut gen = rng.rng();
        for k in index::sample(&mut gen, large.len(), quota) {
            keep[large[k]] = true;
        }
    }
    Ok(RowIndexSet::from_vec_unchecked(
        within
            .iter()
            .filter(|&i| d.class_of(i) == Class::Small || keep[i])
            .collect(),
    ))
}

/// All rows of `small_level` plus an equally sized uniform sample without
/// replacement of the other level, in original row order.
pub fn undersample_level(
    d: &Dataset,
    column: &str,
    small_level: &str,
    rng: &SeedStream,
) -> Result<RowIndexSet> {
    let (small, large) = split_by_level(d, column, small_level)?;
    if large.len() < small.len() {
        return Err(Error::Nesting(format!(
            "level `{small_level}` of `{column}` has {} rows but the other level only {}",
            small.len(),
            large.len()
        )));
    }
    let mut keep = vec![false; d.n_rows()];
    for &i in small.as_slice() {
        keep[i] = true;
    }
    let mut gen = rng.rng();
    for k in index::sample(&mut gen, large.len(), small.len()) {
        keep[large.as_slice()[k]] = true;
    }
    Ok(RowIndexSet::from_vec_unchecked(
        (0..d.n_rows()).filter(|&i| keep[i]).collect(),
    ))
}

/// Splits all rows into `(small_level rows, other-level rows)`, checking the
/// column is a binary partition of the data.
pub fn split_by_level(
    d: &Dataset,
    column: &str,
    small_level: &str,
) -> Result<(RowIndexSet, RowIndexSet)> {
    let idx = d.column_index(column)?;
    let code = d.level_code(idx, small_level)?;
    let codes = match d.column(idx) {
        ColumnData::Categorical(codes) => codes,
        ColumnData::Numeric(_) => return Err(Error::NotCategorical(column.into())),
    };
    let mut observed: Vec<u32> = codes.clone();
    observed.sort_unstable();
    observed.dedup();
    if observed.len() != 2 || !observed.contains(&code) {
        return Err(Error::Nesting(format!(
            "`{column}` must take exactly two values including `{small_level}`, found {}",
            observed.len()
        )));
    }
    let (small, large): (Vec<usize>, Vec<usize>) = (0..d.n_rows()).partition(|&i| codes[i] == code);
    Ok((
        RowIndexSet::from_vec_unchecked(small),
        RowIndexSet::from_vec_unchecked(large),
    ))
}

/// Splits `within` into `k` contiguous parts in order. The first
/// `|within| mod k` parts hold one extra row.
pub fn partition_in_order(within: &RowIndexSet, k: usize) -> Result<Vec<RowIndexSet>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 parts, got {k}")));
    }
    let n = within.len();
    if k > n {
        return Err(Error::Sampling(format!(
            "cannot cut {n} rows into {k} parts"
        )));
    }
    let (base, extra) = (n / k, n % k);
    let rows = within.as_slice();
    let mut parts = Vec::with_capacity(k);
    let mut start = 0;
    for p in 0..k {
        let len = base + usize::from(p < extra);
        parts.push(RowIndexSet::from_vec_unchecked(
            rows[start..start + len].to_vec(),
        ));
        start += len;
    }
    Ok(parts)
}
