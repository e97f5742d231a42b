//! Synthetic corpora with the column layout and class/speaker imbalance of
//! the child/adult pronoun data.
//!
//! Predictors are drawn first; the exact number of minority-class rows per
//! speaker level is then chosen by weighted sampling without replacement,
//! so planted effects shift *which* rows are minority while the cell counts
//! stay exactly as configured.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnData, ColumnKind, ColumnSchema, Dataset};
use crate::error::{Error, Result};
use crate::sampling::SeedStream;

pub const CLASS: &str = "class";
pub const PRN_TYPE: &str = "PRN_TYPE";
pub const MLU: &str = "MLU";
pub const ETHN_GROUP: &str = "ETHN_GROUP";
pub const AGE: &str = "AGE";
pub const SPEAKER: &str = "SPEAKER";

const PRN_LEVELS: [&str; 5] = ["refer", "dem", "it_ex", "it_ref", "it_con"];
const PRN_SHARES: [f64; 5] = [0.55, 0.15, 0.10, 0.12, 0.08];
const ADULT_AGE: f64 = 216.0;

/// Which effects the generator plants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Plant {
    /// Class independent of every column.
    None,
    /// Dominant pronoun-type effect plus an age threshold among young children.
    Default,
    /// `Default` plus a burst of minority rows among demonstratives in one
    /// ordered part (1-based `part` of `parts`) of the adult rows.
    Hetero { part: usize, parts: usize },
}

impl Plant {
    pub fn parse(s: &str) -> Result<Plant> {
        match s {
            "none" => Ok(Plant::None),
            "default" => Ok(Plant::Default),
            "hetero" => Ok(Plant::Hetero { part: 5, parts: 8 }),
            other => Err(Error::Config(format!(
                "unknown plant `{other}` (expected none, default or hetero)"
            ))),
        }
    }
}

/// Row counts per (speaker, class) cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounts {
    pub child_realized: usize,
    pub child_zero: usize,
    pub adult_realized: usize,
    pub adult_zero: usize,
}

impl Default for CellCounts {
    fn default() -> Self {
        CellCounts {
            child_realized: 2_899,
            child_zero: 326,
            adult_realized: 16_543,
            adult_zero: 782,
        }
    }
}

impl CellCounts {
    pub fn children(&self) -> usize {
        self.child_realized + self.child_zero
    }

    pub fn adults(&self) -> usize {
        self.adult_realized + self.adult_zero
    }

    /// Keeps the speaker totals and sets each level's minority share to `rate`.
    pub fn with_minority_rate(&self, rate: f64) -> Result<CellCounts> {
        if !(rate > 0.0 && rate < 1.0) {
            return Err(Error::Config(format!(
                "minority rate {rate} outside (0, 1)"
            )));
        }
        let split = |total: usize| {
            let zero = (rate * total as f64).round() as usize;
            (total - zero, zero)
        };
        let (child_realized, child_zero) = split(self.children());
        let (adult_realized, adult_zero) = split(self.adults());
        let counts = CellCounts {
            child_realized,
            child_zero,
            adult_realized,
            adult_zero,
        };
        counts.validate()?;
        Ok(counts)
    }

    pub fn validate(&self) -> Result<()> {
        if self.children() == 0 || self.adults() == 0 {
            return Err(Error::Config("both speaker levels need rows".into()));
        }
        if self.child_zero + self.adult_zero == 0 || self.child_realized + self.adult_realized == 0
        {
            return Err(Error::Config("the class needs both levels".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub counts: CellCounts,
    pub plant: Plant,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            counts: CellCounts::default(),
            plant: Plant::Default,
            seed: 0,
        }
    }
}

struct Row {
    prn: u32,
    mlu: u32,
    ethn: u32,
    age: f64,
}

/// Generates a corpus: all child rows first, then all adult rows.
///
/// Columns: `class` (realized/zero), `PRN_TYPE`, `MLU`, `ETHN_GROUP`, `AGE`,
/// `SPEAKER`.
pub fn generate(cfg: &GeneratorConfig) -> Result<Dataset> {
    cfg.counts.validate()?;
    if let Plant::Hetero { part, parts } = cfg.plant {
        if parts < 2 || part == 0 || part > parts || parts > cfg.counts.adults() {
            return Err(Error::Config(format!(
                "heterogeneous part {part} of {parts} is invalid"
            )));
        }
    }
    let stream = SeedStream::new(cfg.seed).child("generate", 0);
    let mut rng = stream.child("predictors", 0).rng();
    let n_child = cfg.counts.children();
    let n_adult = cfg.counts.adults();

    let mut rows = Vec::with_capacity(n_child + n_adult);
    for _ in 0..n_child {
        let age = f64::from(rng.random_range(40u32..=145));
        // MLU group 3 from about seven years, with some spread.
        let older = age + rng.random_range(-10.0..10.0) >= 84.0;
        rows.push(Row {
            prn: draw_prn(&mut rng),
            mlu: if older { 1 } else { 0 },
            ethn: u32::from(rng.random::<f64>() < 0.3),
            age,
        });
    }
    for _ in 0..n_adult {
        rows.push(Row {
            prn: draw_prn(&mut rng),
            mlu: 2,
            ethn: 2,
            age: ADULT_AGE,
        });
    }

    let mut zero = vec![false; rows.len()];
    let mut class_rng = stream.child("class", 0).rng();
    match cfg.plant {
        Plant::None => {
            let weights = vec![1.0; rows.len()];
            let k = cfg.counts.child_zero + cfg.counts.adult_zero;
            for i in weighted_sample(&mut class_rng, &weights, k) {
                zero[i] = true;
            }
        }
        Plant::Default | Plant::Hetero { .. } => {
            let child_w: Vec<f64> = rows[..n_child].iter().map(child_weight).collect();
            for i in weighted_sample(&mut class_rng, &child_w, cfg.counts.child_zero) {
                zero[i] = true;
            }
            let hot = match cfg.plant {
                Plant::Hetero { part, parts } => {
                    let (base, extra) = (n_adult / parts, n_adult % parts);
                    let start: usize = (0..part - 1).map(|p| base + usize::from(p < extra)).sum();
                    let len = base + usize::from(part - 1 < extra);
                    Some(start..start + len)
                }
                _ => None,
            };
            let adult_w: Vec<f64> = rows[n_child..]
                .iter()
                .enumerate()
                .map(|(k, r)| {
                    let hot = hot.as_ref().is_some_and(|h| h.contains(&k));
                    adult_weight(r, hot)
                })
                .collect();
            for i in weighted_sample(&mut class_rng, &adult_w, cfg.counts.adult_zero) {
                zero[n_child + i] = true;
            }
        }
    }

    let cat = |name: &str, levels: &[&str]| ColumnSchema {
        name: name.to_string(),
        kind: ColumnKind::Categorical,
        levels: levels.iter().map(|s| s.to_string()).collect(),
    };
    let schema = vec![
        cat(CLASS, &["realized", "zero"]),
        cat(PRN_TYPE, &PRN_LEVELS),
        cat(MLU, &["2", "3", "adult"]),
        cat(ETHN_GROUP, &["C", "I", "n_a"]),
        ColumnSchema {
            name: AGE.to_string(),
            kind: ColumnKind::Numeric,
            levels: vec![],
        },
        cat(SPEAKER, &["child", "adult"]),
    ];
    let columns = vec![
        ColumnData::Categorical(zero.iter().map(|&z| u32::from(z)).collect()),
        ColumnData::Categorical(rows.iter().map(|r| r.prn).collect()),
        ColumnData::Categorical(rows.iter().map(|r| r.mlu).collect()),
        ColumnData::Categorical(rows.iter().map(|r| r.ethn).collect()),
        ColumnData::Numeric(rows.iter().map(|r| r.age).collect()),
        ColumnData::Categorical((0..rows.len()).map(|i| u32::from(i >= n_child)).collect()),
    ];
    Dataset::from_columns(schema, columns, CLASS)
}

fn draw_prn(rng: &mut impl Rng) -> u32 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, share) in PRN_SHARES.iter().enumerate() {
        acc += share;
        if u < acc {
            return k as u32;
        }
    }
    (PRN_SHARES.len() - 1) as u32
}

fn is_it(prn: u32) -> bool {
    prn >= 2
}

fn child_weight(r: &Row) -> f64 {
    let mut w = if is_it(r.prn) { 20.0 } else { 1.0 };
    if r.mlu == 0 && r.age > 66.0 {
        w *= 3.0;
    }
    if r.ethn == 0 {
        w *= 1.3;
    }
    w
}

fn adult_weight(r: &Row, hot: bool) -> f64 {
    let mut w = if is_it(r.prn) { 3.0 } else { 1.0 };
    if hot && r.prn == 1 {
        w *= 300.0;
    }
    w
}

/// `k` distinct indices drawn with probability proportional to weight,
/// without replacement (exponential-key method), returned in ascending order.
fn weighted_sample(rng: &mut impl Rng, weights: &[f64], k: usize) -> Vec<usize> {
    let mut keys: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            (u.ln() / w, i)
        })
        .collect();
    keys.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut chosen: Vec<usize> = keys.into_iter().take(k).map(|(_, i)| i).collect();
    chosen.sort_unstable();
    chosen
}

/// Adds a `SPEAKER` column (`child`/`adult`) derived from an MLU-style
/// column in which adults carry their own level.
pub fn derive_speaker(d: &Dataset, mlu_column: &str, adult_level: &str) -> Result<Dataset> {
    if d.column_index(SPEAKER).is_ok() {
        return Err(Error::Config(format!("column `{SPEAKER}` already exists")));
    }
    let idx = d.column_index(mlu_column)?;
    let adult = d.level_code(idx, adult_level)?;
    let codes = match d.column(idx) {
        ColumnData::Categorical(codes) => codes,
        ColumnData::Numeric(_) => return Err(Error::NotCategorical(mlu_column.into())),
    };
    let mut schema = d.schema().to_vec();
    let mut columns: Vec<ColumnData> = (0..schema.len()).map(|c| d.column(c).clone()).collect();
    schema.push(ColumnSchema {
        name: SPEAKER.to_string(),
        kind: ColumnKind::Categorical,
        levels: vec!["child".into(), "adult".into()],
    });
    columns.push(ColumnData::Categorical(
        codes.iter().map(|&c| u32::from(c == adult)).collect(),
    ));
    Dataset::from_columns(schema, columns, d.class_column())
}
