//! Typed tabular data: schema, columnar storage, CSV ingestion and
//! index-based subsetting.
//!
//! A [`Dataset`] is immutable after loading. Every sample drawn from it is a
//! [`RowIndexSet`] into the original rows, so concurrent tree fits can share
//! one dataset without copying.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Categorical,
    Numeric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    /// Level names in first-appearance order. Empty for numeric columns.
    pub levels: Vec<String>,
}

impl ColumnSchema {
    pub fn level_code(&self, level: &str) -> Option<u32> {
        self.levels
            .iter()
            .position(|l| l == level)
            .map(|p| p as u32)
    }

    pub fn level_name(&self, code: u32) -> &str {
        &self.levels[code as usize]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ColumnData {
    Categorical(Vec<u32>),
    Numeric(Vec<f64>),
}

/// Binary class label. `Large` is the majority class of the full data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    Large,
    Small,
}

impl Class {
    pub fn index(self) -> usize {
        match self {
            Class::Large => 0,
            Class::Small => 1,
        }
    }
}

/// Names of the two class levels, fixed at load time from full-data counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassLevels {
    pub large: String,
    pub small: String,
}

impl ClassLevels {
    pub fn name(&self, class: Class) -> &str {
        match class {
            Class::Large => &self.large,
            Class::Small => &self.small,
        }
    }
}

/// Ordered, duplicate-free row positions into a [`Dataset`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RowIndexSet(Vec<usize>);

impl RowIndexSet {
    /// Validates that every index is below `n_rows` and appears once.
    pub fn new(indices: Vec<usize>, n_rows: usize) -> Result<Self> {
        let mut seen = vec![false; n_rows];
        for &i in &indices {
            if i >= n_rows {
                return Err(Error::InvalidIndex(format!(
                    "row {i} out of range for {n_rows} rows"
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidIndex(format!("row {i} appears twice")));
            }
        }
        Ok(RowIndexSet(indices))
    }

    /// Caller guarantees the invariants.
    pub(crate) fn from_vec_unchecked(indices: Vec<usize>) -> Self {
        RowIndexSet(indices)
    }

    pub fn empty() -> Self {
        RowIndexSet(Vec::new())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    /// Union of two sets, returned in ascending row order.
    pub fn union_sorted(&self, other: &RowIndexSet) -> RowIndexSet {
        let mut rows: Vec<usize> = self.0.iter().chain(other.0.iter()).copied().collect();
        rows.sort_unstable();
        rows.dedup();
        RowIndexSet(rows)
    }
}

impl<'a> IntoIterator for &'a RowIndexSet {
    type Item = &'a usize;
    type IntoIter = std::slice::Iter<'a, usize>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Optional per-column kind overrides applied during CSV loading.
pub type SchemaHint = BTreeMap<String, ColumnKind>;

#[derive(Clone, Debug)]
pub struct Dataset {
    schema: Vec<ColumnSchema>,
    columns: Vec<ColumnData>,
    class_column: usize,
    class_levels: ClassLevels,
    classes: Vec<Class>,
}

/// A borrowed view of one row.
#[derive(Clone, Copy, Debug)]
pub struct RowRef<'a> {
    data: &'a Dataset,
    row: usize,
}

impl<'a> RowRef<'a> {
    pub fn index(&self) -> usize {
        self.row
    }

    /// Level code of a categorical cell.
    pub fn level(&self, column: usize) -> u32 {
        match &self.data.columns[column] {
            ColumnData::Categorical(codes) => codes[self.row],
            ColumnData::Numeric(_) => panic!("column {column} is numeric"),
        }
    }

    pub fn number(&self, column: usize) -> f64 {
        match &self.data.columns[column] {
            ColumnData::Numeric(values) => values[self.row],
            ColumnData::Categorical(_) => panic!("column {column} is categorical"),
        }
    }

    pub fn class(&self) -> Class {
        self.data.classes[self.row]
    }
}

impl Dataset {
    /// Loads a CSV file. See [`Dataset::from_reader`].
    pub fn load_csv(
        path: impl AsRef<Path>,
        schema_hint: Option<&SchemaHint>,
        class_column: &str,
    ) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_reader(file, schema_hint, class_column)
    }

    /// Parses comma-separated text with a header row.
    ///
    /// A column is numeric when the hint says so or, absent a hint, when
    /// every cell parses as a decimal number. Categorical levels are
    /// recorded in first-appearance order. The class level with fewer rows
    /// becomes the small class; on equal counts the level seen second is
    /// small.
    pub fn from_reader<R: Read>(
        reader: R,
        schema_hint: Option<&SchemaHint>,
        class_column: &str,
    ) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Csv(e.to_string()))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let width = header.len();

        let mut raw: Vec<Vec<String>> = vec![Vec::new(); width];
        for (r, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::Csv(e.to_string()))?;
            // Data rows are numbered from 1, the header being row 0.
            let row = r + 1;
            if record.len() != width {
                return Err(Error::RaggedRow {
                    row,
                    expected: width,
                    found: record.len(),
                });
            }
            for (c, cell) in record.iter().enumerate() {
                let cell = cell.trim();
                if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
                    return Err(Error::MissingCell {
                        row,
                        column: header[c].clone(),
                    });
                }
                raw[c].push(cell.to_string());
            }
        }

        let class_idx = header
            .iter()
            .position(|h| h == class_column)
            .ok_or_else(|| Error::UnknownColumn(class_column.to_string()))?;
        if let Some(hint) = schema_hint {
            if let Some(name) = hint.keys().find(|k| !header.contains(k)) {
                return Err(Error::UnknownColumn(name.clone()));
            }
        }

        let mut schema = Vec::with_capacity(width);
        let mut columns = Vec::with_capacity(width);
        for (c, cells) in raw.into_iter().enumerate() {
            let name = header[c].clone();
            let hinted = schema_hint.and_then(|h| h.get(&name)).copied();
            let kind = if c == class_idx {
                if hinted == Some(ColumnKind::Numeric) {
                    return Err(Error::Config(format!(
                        "class column `{name}` cannot be numeric"
                    )));
                }
                ColumnKind::Categorical
            } else {
                match hinted {
                    Some(kind) => kind,
                    None if !cells.is_empty() && cells.iter().all(|v| v.parse::<f64>().is_ok()) => {
                        ColumnKind::Numeric
                    }
                    None => ColumnKind::Categorical,
                }
            };
            match kind {
                ColumnKind::Numeric => {
                    let values = cells
                        .iter()
                        .enumerate()
                        .map(|(r, v)| {
                            v.parse::<f64>()
                                .ok()
                                .filter(|x| x.is_finite())
                                .ok_or_else(|| Error::NumericParse {
                                    row: r + 1,
                                    column: name.clone(),
                                    value: v.clone(),
                                })
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    schema.push(ColumnSchema {
                        name,
                        kind,
                        levels: Vec::new(),
                    });
                    columns.push(ColumnData::Numeric(values));
                }
                ColumnKind::Categorical => {
                    let mut levels: Vec<String> = Vec::new();
                    let mut lookup: HashMap<String, u32> = HashMap::new();
                    let codes = cells
                        .into_iter()
                        .map(|v| {
                            *lookup.entry(v).or_insert_with_key(|v| {
                                levels.push(v.clone());
                                (levels.len() - 1) as u32
                            })
                        })
                        .collect();
                    schema.push(ColumnSchema { name, kind, levels });
                    columns.push(ColumnData::Categorical(codes));
                }
            }
        }

        Self::from_columns(schema, columns, class_column)
    }

    /// Builds a dataset from already-typed columns.
    pub fn from_columns(
        schema: Vec<ColumnSchema>,
        columns: Vec<ColumnData>,
        class_column: &str,
    ) -> Result<Self> {
        if schema.len() != columns.len() {
            return Err(Error::Config(format!(
                "{} schema entries for {} columns",
                schema.len(),
                columns.len()
            )));
        }
        let n = columns.first().map(column_len).unwrap_or(0);
        let mut names = std::collections::HashSet::new();
        for (s, col) in schema.iter().zip(&columns) {
            if !names.insert(s.name.as_str()) {
                return Err(Error::Config(format!("duplicate column `{}`", s.name)));
            }
            if column_len(col) != n {
                return Err(Error::RaggedRow {
                    row: 0,
                    expected: n,
                    found: column_len(col),
                });
            }
            match (s.kind, col) {
                (ColumnKind::Numeric, ColumnData::Numeric(_)) => {
                    if !s.levels.is_empty() {
                        return Err(Error::Config(format!(
                            "numeric column `{}` carries levels",
                            s.name
                        )));
                    }
                }
                (ColumnKind::Categorical, ColumnData::Categorical(codes)) => {
                    let mut uniq = std::collections::HashSet::new();
                    if s.levels.iter().any(|l| l.is_empty() || !uniq.insert(l)) {
                        return Err(Error::Config(format!(
                            "column `{}` has empty or repeated level names",
                            s.name
                        )));
                    }
                    if codes.iter().any(|&c| c as usize >= s.levels.len()) {
                        return Err(Error::Config(format!(
                            "column `{}` has a code outside its level list",
                            s.name
                        )));
                    }
                }
                _ => {
                    return Err(Error::Config(format!(
                        "column `{}` data does not match its kind",
                        s.name
                    )))
                }
            }
        }

        let class_column_idx = schema
            .iter()
            .position(|s| s.name == class_column)
            .ok_or_else(|| Error::UnknownColumn(class_column.to_string()))?;
        let codes = match &columns[class_column_idx] {
            ColumnData::Categorical(codes) => codes,
            ColumnData::Numeric(_) => return Err(Error::NotCategorical(class_column.into())),
        };
        let levels = &schema[class_column_idx].levels;
        let mut counts = vec![0usize; levels.len()];
        for &c in codes {
            counts[c as usize] += 1;
        }
        let observed: Vec<usize> = (0..levels.len()).filter(|&l| counts[l] > 0).collect();
        if observed.len() != 2 {
            return Err(Error::ClassLevels {
                column: class_column.to_string(),
                found: observed.len(),
            });
        }
        let (first, second) = (observed[0], observed[1]);
        let small_code = if counts[first] < counts[second] {
            first
        } else {
            second
        };
        let large_code = if small_code == first { second } else { first };
        let class_levels = ClassLevels {
            large: levels[large_code].clone(),
            small: levels[small_code].clone(),
        };
        let classes = codes
            .iter()
            .map(|&c| {
                if c as usize == small_code {
                    Class::Small
                } else {
                    Class::Large
                }
            })
            .collect();

        Ok(Dataset {
            schema,
            columns,
            class_column: class_column_idx,
            class_levels,
            classes,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.classes.len()
    }

    pub fn schema(&self) -> &[ColumnSchema] {
        &self.schema
    }

    pub fn column(&self, index: usize) -> &ColumnData {
        &self.columns[index]
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.schema
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn class_column(&self) -> &str {
        &self.schema[self.class_column].name
    }

    pub fn class_column_index(&self) -> usize {
        self.class_column
    }

    pub fn class_levels(&self) -> &ClassLevels {
        &self.class_levels
    }

    pub fn classes(&self) -> &[Class] {
        &self.classes
    }

    pub fn class_of(&self, row: usize) -> Class {
        self.classes[row]
    }

    pub fn row(&self, row: usize) -> RowRef<'_> {
        assert!(row < self.n_rows(), "row {row} out of range");
        RowRef { data: self, row }
    }

    pub fn all_rows(&self) -> RowIndexSet {
        RowIndexSet((0..self.n_rows()).collect())
    }

    /// Checks that `set` indexes into this dataset.
    pub fn validate(&self, set: &RowIndexSet) -> Result<()> {
        match set.0.iter().find(|&&i| i >= self.n_rows()) {
            Some(i) => Err(Error::InvalidIndex(format!(
                "row {i} out of range for {} rows",
                self.n_rows()
            ))),
            None => Ok(()),
        }
    }

    /// Counts `(large, small)` over `within`, or over all rows.
    pub fn class_counts(&self, within: Option<&RowIndexSet>) -> Result<(usize, usize)> {
        let mut counts = [0usize; 2];
        match within {
            Some(set) => {
                self.validate(set)?;
                for i in set.iter() {
                    counts[self.classes[i].index()] += 1;
                }
            }
            None => {
                for c in &self.classes {
                    counts[c.index()] += 1;
                }
            }
        }
        Ok((counts[0], counts[1]))
    }

    /// Rows whose categorical cell in `column` equals `level`, in row order.
    pub fn rows_with_level(&self, column: &str, level: &str) -> Result<RowIndexSet> {
        let idx = self.column_index(column)?;
        let code = self.level_code(idx, level)?;
        let codes = match &self.columns[idx] {
            ColumnData::Categorical(codes) => codes,
            ColumnData::Numeric(_) => return Err(Error::NotCategorical(column.into())),
        };
        Ok(RowIndexSet(
            codes
                .iter()
                .enumerate()
                .filter(|(_, &c)| c == code)
                .map(|(i, _)| i)
                .collect(),
        ))
    }

    pub fn level_code(&self, column: usize, level: &str) -> Result<u32> {
        let schema = &self.schema[column];
        if schema.kind != ColumnKind::Categorical {
            return Err(Error::NotCategorical(schema.name.clone()));
        }
        schema.level_code(level).ok_or_else(|| Error::UnknownLevel {
            column: schema.name.clone(),
            level: level.to_string(),
        })
    }

    /// Every column except the class column, in schema order.
    pub fn predictor_names(&self) -> Vec<String> {
        self.schema
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != self.class_column)
            .map(|(_, s)| s.name.clone())
            .collect()
    }

    /// Writes the dataset back out as CSV in the load dialect.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| Error::Csv(e.to_string());
        w.write_record(self.schema.iter().map(|s| s.name.as_str()))
            .map_err(csv_err)?;
        for r in 0..self.n_rows() {
            let record: Vec<String> = self
                .columns
                .iter()
                .zip(&self.schema)
                .map(|(col, s)| match col {
                    ColumnData::Categorical(codes) => s.levels[codes[r] as usize].clone(),
                    ColumnData::Numeric(values) => format_number(values[r]),
                })
                .collect();
            w.write_record(&record).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Csv(e.to_string()))
    }
}

fn column_len(col: &ColumnData) -> usize {
    match col {
        ColumnData::Categorical(c) => c.len(),
        ColumnData::Numeric(v) => v.len(),
    }
}

fn format_number(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<Dataset> {
        Dataset::from_reader(text.as_bytes(), None, "class")
    }

    #[test]
    fn infers_kinds_and_first_appearance_levels() {
        let d = load("class,MLU,AGE\nzero,3,40\nrealized,adult,216\nrealized,2,50\n").unwrap();
        assert_eq!(d.schema()[1].kind, ColumnKind::Categorical);
        assert_eq!(d.schema()[1].levels, vec!["3", "adult", "2"]);
        assert_eq!(d.schema()[2].kind, ColumnKind::Numeric);
        assert_eq!(d.class_levels().small, "zero");
        assert_eq!(d.class_counts(None).unwrap(), (2, 1));
    }

    #[test]
    fn single_row_is_rejected() {
        let err = load("class,x\nzero,1\n").unwrap_err();
        assert!(matches!(err, Error::ClassLevels { found: 1, .. }));
    }

    #[test]
    fn three_class_levels_are_rejected() {
        let err = load("class,x\na,1\nb,2\nc,3\n").unwrap_err();
        assert!(matches!(err, Error::ClassLevels { found: 3, .. }));
    }

    #[test]
    fn missing_cell_is_rejected() {
        let err = load("class,x\na,1\nb,\n").unwrap_err();
        assert!(matches!(err, Error::MissingCell { row: 2, .. }), "{err}");
    }

    #[test]
    fn ragged_row_is_rejected() {
        let err = load("class,x\na,1\nb,2,3\n").unwrap_err();
        assert!(matches!(
            err,
            Error::RaggedRow {
                row: 2,
                expected: 2,
                found: 3
            }
        ));
    }

    #[test]
    fn numeric_hint_failure_is_reported() {
        let mut hint = SchemaHint::new();
        hint.insert("x".into(), ColumnKind::Numeric);
        let err = Dataset::from_reader("class,x\na,1\nb,two\n".as_bytes(), Some(&hint), "class")
            .unwrap_err();
        assert!(matches!(err, Error::NumericParse { row: 2, .. }));
    }

    #[test]
    fn categorical_hint_overrides_inference() {
        let mut hint = SchemaHint::new();
        hint.insert("x".into(), ColumnKind::Categorical);
        let d =
            Dataset::from_reader("class,x\na,1\nb,2\n".as_bytes(), Some(&hint), "class").unwrap();
        assert_eq!(d.schema()[1].levels, vec!["1", "2"]);
    }

    #[test]
    fn missing_class_column_names_the_column() {
        let err = load("label,x\na,1\nb,2\n").unwrap_err();
        assert!(err.to_string().contains("`class`"));
    }

    #[test]
    fn equal_class_counts_make_second_level_small() {
        let d = load("class\na\nb\n").unwrap();
        assert_eq!(d.class_levels().large, "a");
        assert_eq!(d.class_levels().small, "b");
    }

    #[test]
    fn empty_index_set_counts_zero() {
        let d = load("class\na\nb\na\n").unwrap();
        assert_eq!(d.class_counts(Some(&RowIndexSet::empty())).unwrap(), (0, 0));
    }

    #[test]
    fn rows_with_level_preserves_order() {
        let d = load("class,s\na,child\nb,adult\na,child\na,adult\n").unwrap();
        assert_eq!(d.rows_with_level("s", "child").unwrap().as_slice(), &[0, 2]);
        assert!(matches!(
            d.rows_with_level("s", "teen"),
            Err(Error::UnknownLevel { .. })
        ));
        assert!(matches!(
            d.rows_with_level("t", "x"),
            Err(Error::UnknownColumn(_))
        ));
    }

    #[test]
    fn level_without_rows_gives_empty_set() {
        let schema = vec![
            ColumnSchema {
                name: "class".into(),
                kind: ColumnKind::Categorical,
                levels: vec!["a".into(), "b".into()],
            },
            ColumnSchema {
                name: "s".into(),
                kind: ColumnKind::Categorical,
                levels: vec!["x".into(), "unused".into()],
            },
        ];
        let columns = vec![
            ColumnData::Categorical(vec![0, 1, 0]),
            ColumnData::Categorical(vec![0, 0, 0]),
        ];
        let d = Dataset::from_columns(schema, columns, "class").unwrap();
        assert!(d.rows_with_level("s", "unused").unwrap().is_empty());
    }

    #[test]
    fn index_set_rejects_duplicates_and_out_of_range() {
        assert!(RowIndexSet::new(vec![0, 1, 1], 3).is_err());
        assert!(RowIndexSet::new(vec![0, 3], 3).is_err());
        assert!(RowIndexSet::new(vec![2, 0], 3).is_ok());
    }

    #[test]
    fn numeric_column_with_levels_is_rejected() {
        let schema = vec![
            ColumnSchema {
                name: "class".into(),
                kind: ColumnKind::Categorical,
                levels: vec!["a".into(), "b".into()],
            },
            ColumnSchema {
                name: "x".into(),
                kind: ColumnKind::Numeric,
                levels: vec!["1".into()],
            },
        ];
        let columns = vec![
            ColumnData::Categorical(vec![0, 1]),
            ColumnData::Numeric(vec![1.0, 2.0]),
        ];
        assert!(Dataset::from_columns(schema, columns, "class").is_err());
    }

    #[test]
    fn write_then_load_round_trips() {
        let text = "class,MLU,AGE\nzero,3,40.5\nrealized,adult,216\nrealized,2,50\n";
        let d = load(text).unwrap();
        let mut out = Vec::new();
        d.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }
}
