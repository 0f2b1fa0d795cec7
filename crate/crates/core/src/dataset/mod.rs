//! Ingestion of NHANES-style survey files and recoding into discrete
//! analysis variables.
//!
//! Raw files (SAS transport or CSV) parse into a [`RawTable`] of loosely
//! typed cells. Tables are joined on a respondent key with
//! [`merge_by_key`], and [`recode::apply_recode`] turns them into a
//! [`DiscreteDataset`] whose every cell is a small integer level.

mod delimited;
pub mod recode;
pub mod xpt;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use delimited::parse_csv;
pub use recode::{apply_recode, RecodeConfig, RecodeOp, RecodeRule};
pub use xpt::{parse_xpt, parse_xpt_members, XptMember};

/// Level code used in a [`DiscreteDataset`] for a value recoded with the
/// keep-as-missing policy.
pub const MISSING_LEVEL: i64 = -1;

/// Raw-value codes NHANES uses for "refused" and "don't know" answers.
pub const NHANES_MISSING_CODES: [f64; 6] = [7.0, 9.0, 77.0, 99.0, 777.0, 999.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("malformed header at byte {offset}: {message}")]
    MalformedHeader { offset: usize, message: String },
    #[error("unsupported transport version at byte {offset}: {found}")]
    UnsupportedVersion { offset: usize, found: String },
    #[error("truncated record at byte {offset}: {message}")]
    TruncatedRecord { offset: usize, message: String },
    #[error("row {line} has {found} fields, header has {expected}")]
    RaggedRow {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("CSV header row is missing or has an empty column name")]
    EmptyHeader,
    #[error("CSV input: {0}")]
    Csv(String),
    #[error("table has no key variable `{0}`")]
    MissingKey(String),
    #[error("duplicate key value {value} for `{key}`")]
    DuplicateKey { key: String, value: String },
    #[error("column `{0}` appears in more than one table")]
    DuplicateColumn(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("value {value} of `{variable}` is outside the rule domain for `{target}`")]
    UnmappedValue {
        variable: String,
        target: String,
        value: String,
    },
    #[error("invalid schema for `{variable}`: {message}")]
    InvalidSchema { variable: String, message: String },
    #[error("invalid recode rule for `{target}`: {message}")]
    InvalidRule { target: String, message: String },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("recoding left no complete rows")]
    EmptyDataset,
    #[error("cannot read `{path}`: {message}")]
    Io { path: String, message: String },
}

/// One raw cell value.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
    Missing,
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            _ => None,
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Num(v) => write!(f, "{v}"),
            Cell::Text(s) => write!(f, "{s:?}"),
            Cell::Missing => write!(f, "<missing>"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VarKind {
    /// Numeric codes drawn from a declared level set.
    Categorical { levels: Vec<i64> },
    Continuous,
    /// Character data (XPT `$` variables, non-numeric CSV columns).
    Text,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableSchema {
    pub name: String,
    pub label: String,
    pub kind: VarKind,
    /// Raw numeric values treated as missing in addition to empty cells.
    pub missing_codes: Vec<f64>,
}

impl VariableSchema {
    pub fn new(name: impl Into<String>, kind: VarKind) -> Self {
        VariableSchema {
            name: name.into(),
            label: String::new(),
            kind,
            missing_codes: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |message: &str| DatasetError::InvalidSchema {
            variable: self.name.clone(),
            message: message.to_string(),
        };
        if let VarKind::Categorical { levels } = &self.kind {
            let distinct: BTreeSet<_> = levels.iter().collect();
            if distinct.len() != levels.len() {
                return Err(bad("level codes are not distinct"));
            }
            if levels
                .iter()
                .any(|&l| self.missing_codes.contains(&(l as f64)))
            {
                return Err(bad("a missing code is also a declared level"));
            }
        }
        Ok(())
    }

    pub fn is_missing(&self, cell: &Cell) -> bool {
        match cell {
            Cell::Missing => true,
            Cell::Num(v) => self.missing_codes.contains(v),
            Cell::Text(_) => false,
        }
    }
}

/// A parsed file: one schema entry per column and one cell per column per row.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub schema: Vec<VariableSchema>,
    pub rows: Vec<Vec<Cell>>,
    pub key_variable: Option<String>,
}

impl RawTable {
    pub fn new(schema: Vec<VariableSchema>, rows: Vec<Vec<Cell>>) -> Result<Self, DatasetError> {
        for s in &schema {
            s.validate()?;
        }
        if let Some(r) = rows.iter().find(|r| r.len() != schema.len()) {
            return Err(DatasetError::InvalidDataset(format!(
                "row has {} cells, schema has {}",
                r.len(),
                schema.len()
            )));
        }
        Ok(RawTable {
            schema,
            rows,
            key_variable: None,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.schema.iter().map(|s| s.name.as_str())
    }

    pub fn column_index(&self, name: &str) -> Result<usize, DatasetError> {
        self.schema
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| DatasetError::UnknownVariable(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<impl Iterator<Item = &Cell>, DatasetError> {
        let i = self.column_index(name)?;
        Ok(self.rows.iter().map(move |r| &r[i]))
    }

    /// Declare `name` as the unique row key.
    pub fn with_key(mut self, name: &str) -> Result<Self, DatasetError> {
        key_positions(&self, name)?;
        self.key_variable = Some(name.to_string());
        Ok(self)
    }

    pub fn set_missing_codes(&mut self, name: &str, codes: &[f64]) -> Result<(), DatasetError> {
        let i = self.column_index(name)?;
        self.schema[i].missing_codes = codes.to_vec();
        self.schema[i].validate()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum KeyValue {
    Num(u64),
    Text(String),
}

fn key_value(cell: &Cell) -> Option<KeyValue> {
    match cell {
        // +0.0 and -0.0 name the same respondent
        Cell::Num(v) => Some(KeyValue::Num((v + 0.0).to_bits())),
        Cell::Text(s) => Some(KeyValue::Text(s.clone())),
        Cell::Missing => None,
    }
}

fn key_positions(t: &RawTable, key: &str) -> Result<HashMap<KeyValue, usize>, DatasetError> {
    let col = t
        .column_index(key)
        .map_err(|_| DatasetError::MissingKey(key.to_string()))?;
    let mut out = HashMap::with_capacity(t.n_rows());
    for (i, row) in t.rows.iter().enumerate() {
        if let Some(k) = key_value(&row[col]) {
            if out.insert(k, i).is_some() {
                return Err(DatasetError::DuplicateKey {
                    key: key.to_string(),
                    value: row[col].to_string(),
                });
            }
        }
    }
    Ok(out)
}

/// Inner join of `tables` on `key`.
///
/// Rows follow the first table's order. Columns are the first table's
/// columns followed by each later table's non-key columns. Rows whose key
/// cell is missing never match.
pub fn merge_by_key(tables: &[RawTable], key: &str) -> Result<RawTable, DatasetError> {
    let Some(first) = tables.first() else {
        return Err(DatasetError::InvalidDataset("no tables to merge".into()));
    };
    let positions: Vec<_> = tables
        .iter()
        .map(|t| key_positions(t, key))
        .collect::<Result<_, _>>()?;

    let mut schema = first.schema.clone();
    let mut names: BTreeSet<String> = schema.iter().map(|s| s.name.clone()).collect();
    let mut picks: Vec<Vec<usize>> = vec![(0..first.schema.len()).collect()];
    for t in &tables[1..] {
        let mut cols = Vec::new();
        for (i, s) in t.schema.iter().enumerate() {
            if s.name == key {
                continue;
            }
            if !names.insert(s.name.clone()) {
                return Err(DatasetError::DuplicateColumn(s.name.clone()));
            }
            schema.push(s.clone());
            cols.push(i);
        }
        picks.push(cols);
    }

    let key_col = first.column_index(key)?;
    let mut rows = Vec::new();
    'rows: for row in &first.rows {
        let Some(k) = key_value(&row[key_col]) else {
            continue;
        };
        let mut merged = row.clone();
        for (ti, t) in tables.iter().enumerate().skip(1) {
            let Some(&ri) = positions[ti].get(&k) else {
                continue 'rows;
            };
            merged.extend(picks[ti].iter().map(|&c| t.rows[ri][c].clone()));
        }
        rows.push(merged);
    }
    Ok(RawTable {
        schema,
        rows,
        key_variable: Some(key.to_string()),
    })
}

/// Parse a raw file by extension: `.xpt` as SAS transport, anything else as
/// CSV.
pub fn read_table(path: &std::path::Path) -> Result<RawTable, DatasetError> {
    let bytes = std::fs::read(path).map_err(|e| DatasetError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let is_xpt = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("xpt"));
    if is_xpt {
        parse_xpt(&bytes)
    } else {
        parse_csv(&bytes)
    }
}

/// Remove rows where any of `vars` is missing (empty cell or a declared
/// missing code). Returns the filtered table and the number of rows dropped.
pub fn drop_missing(t: &RawTable, vars: &[&str]) -> Result<(RawTable, usize), DatasetError> {
    let cols: Vec<usize> = vars
        .iter()
        .map(|v| t.column_index(v))
        .collect::<Result<_, _>>()?;
    let rows: Vec<Vec<Cell>> = t
        .rows
        .iter()
        .filter(|r| !cols.iter().any(|&c| t.schema[c].is_missing(&r[c])))
        .cloned()
        .collect();
    let dropped = t.n_rows() - rows.len();
    if rows.is_empty() && t.n_rows() > 0 {
        log::warn!("every row is missing at least one of {vars:?}");
    }
    Ok((
        RawTable {
            schema: t.schema.clone(),
            rows,
            key_variable: t.key_variable.clone(),
        },
        dropped,
    ))
}

/// A discrete variable and its declared levels (sorted, excluding
/// [`MISSING_LEVEL`]).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscreteVariable {
    pub name: String,
    pub levels: Vec<i64>,
}

/// Column-major table of categorical observations.
///
/// Every cell is one of its variable's declared levels, or [`MISSING_LEVEL`]
/// for variables recoded with the keep-as-missing policy. Analyses call
/// [`DiscreteDataset::complete_cases`] on the variables they use.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDataset {
    variables: Vec<DiscreteVariable>,
    columns: Vec<Vec<i64>>,
    meta: BTreeMap<String, String>,
}

impl DiscreteDataset {
    pub fn new(variables: Vec<DiscreteVariable>, columns: Vec<Vec<i64>>) -> Result<Self, DatasetError> {
        if variables.len() != columns.len() {
            return Err(DatasetError::InvalidDataset(format!(
                "{} variables but {} columns",
                variables.len(),
                columns.len()
            )));
        }
        let n = columns.first().map_or(0, Vec::len);
        let mut names = BTreeSet::new();
        for (v, col) in variables.iter().zip(&columns) {
            if !names.insert(v.name.as_str()) {
                return Err(DatasetError::InvalidDataset(format!(
                    "duplicate variable `{}`",
                    v.name
                )));
            }
            if col.len() != n {
                return Err(DatasetError::InvalidDataset(format!(
                    "column `{}` has {} rows, expected {n}",
                    v.name,
                    col.len()
                )));
            }
            if v.levels.windows(2).any(|w| w[0] >= w[1]) || v.levels.contains(&MISSING_LEVEL) {
                return Err(DatasetError::InvalidDataset(format!(
                    "levels of `{}` must be strictly increasing and exclude {MISSING_LEVEL}",
                    v.name
                )));
            }
            if let Some(bad) = col
                .iter()
                .find(|&&c| c != MISSING_LEVEL && v.levels.binary_search(&c).is_err())
            {
                return Err(DatasetError::InvalidDataset(format!(
                    "value {bad} of `{}` is not a declared level",
                    v.name
                )));
            }
        }
        Ok(DiscreteDataset {
            variables,
            columns,
            meta: BTreeMap::new(),
        })
    }

    /// Build from columns, declaring each column's observed values as its
    /// levels.
    pub fn from_columns<S: Into<String>>(cols: Vec<(S, Vec<i64>)>) -> Result<Self, DatasetError> {
        let (variables, columns) = cols
            .into_iter()
            .map(|(name, col)| {
                let levels: BTreeSet<i64> =
                    col.iter().copied().filter(|&c| c != MISSING_LEVEL).collect();
                (
                    DiscreteVariable {
                        name: name.into(),
                        levels: levels.into_iter().collect(),
                    },
                    col,
                )
            })
            .unzip();
        Self::new(variables, columns)
    }

    /// Interpret a raw table of integer-valued cells as a dataset. Empty
    /// cells and declared missing codes become [`MISSING_LEVEL`].
    pub fn from_raw(t: &RawTable) -> Result<Self, DatasetError> {
        let mut cols = Vec::with_capacity(t.schema.len());
        for (c, s) in t.schema.iter().enumerate() {
            let mut col = Vec::with_capacity(t.n_rows());
            for row in &t.rows {
                let cell = &row[c];
                if s.is_missing(cell) {
                    col.push(MISSING_LEVEL);
                    continue;
                }
                match cell {
                    Cell::Num(v) if v.fract() == 0.0 && *v != MISSING_LEVEL as f64 => {
                        col.push(*v as i64)
                    }
                    other => {
                        return Err(DatasetError::InvalidDataset(format!(
                            "`{}` holds non-integer value {other}",
                            s.name
                        )))
                    }
                }
            }
            cols.push((s.name.clone(), col));
        }
        Self::from_columns(cols)
    }

    pub fn n(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn variables(&self) -> &[DiscreteVariable] {
        &self.variables
    }

    pub fn variable_names(&self) -> impl Iterator<Item = &str> {
        self.variables.iter().map(|v| v.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn variable(&self, name: &str) -> Result<&DiscreteVariable, DatasetError> {
        self.index_of(name)
            .map(|i| &self.variables[i])
            .ok_or_else(|| DatasetError::UnknownVariable(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<&[i64], DatasetError> {
        self.index_of(name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| DatasetError::UnknownVariable(name.to_string()))
    }

    pub fn meta(&self) -> &BTreeMap<String, String> {
        &self.meta
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.meta.insert(key.into(), value.into());
    }

    pub fn missing_count(&self, name: &str) -> Result<usize, DatasetError> {
        Ok(self.column(name)?.iter().filter(|&&c| c == MISSING_LEVEL).count())
    }

    /// Keep the rows selected by `keep`, preserving schema and metadata.
    pub fn select_rows(&self, keep: &[bool]) -> DiscreteDataset {
        DiscreteDataset {
            variables: self.variables.clone(),
            columns: self
                .columns
                .iter()
                .map(|col| {
                    col.iter()
                        .zip(keep)
                        .filter(|(_, &k)| k)
                        .map(|(&c, _)| c)
                        .collect()
                })
                .collect(),
            meta: self.meta.clone(),
        }
    }

    /// Drop rows missing any of `vars`. Returns the filtered dataset and the
    /// number of rows removed.
    pub fn complete_cases(&self, vars: &[&str]) -> Result<(DiscreteDataset, usize), DatasetError> {
        let cols: Vec<&[i64]> = vars.iter().map(|v| self.column(v)).collect::<Result<_, _>>()?;
        let keep: Vec<bool> = (0..self.n())
            .map(|r| cols.iter().all(|c| c[r] != MISSING_LEVEL))
            .collect();
        let dropped = keep.iter().filter(|&&k| !k).count();
        Ok((self.select_rows(&keep), dropped))
    }

    /// Columnar JSON document with a schema header.
    pub fn to_json(&self) -> String {
        let doc = DatasetDocument {
            format: DATASET_FORMAT.to_string(),
            version: crate::SCHEMA_VERSION.to_string(),
            n: self.n(),
            meta: self.meta.clone(),
            variables: self
                .variables
                .iter()
                .zip(&self.columns)
                .map(|(v, col)| ColumnDocument {
                    name: v.name.clone(),
                    levels: v.levels.clone(),
                    values: col
                        .iter()
                        .map(|&c| (c != MISSING_LEVEL).then_some(c))
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string(&doc).expect("dataset serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, DatasetError> {
        let doc: DatasetDocument =
            serde_json::from_str(text).map_err(|e| DatasetError::InvalidDataset(e.to_string()))?;
        if doc.format != DATASET_FORMAT {
            return Err(DatasetError::InvalidDataset(format!(
                "unexpected format tag `{}`",
                doc.format
            )));
        }
        if doc.version != crate::SCHEMA_VERSION {
            return Err(DatasetError::InvalidDataset(format!(
                "unsupported dataset version `{}`",
                doc.version
            )));
        }
        let (variables, columns) = doc
            .variables
            .into_iter()
            .map(|c| {
                (
                    DiscreteVariable {
                        name: c.name,
                        levels: c.levels,
                    },
                    c.values
                        .into_iter()
                        .map(|v| v.unwrap_or(MISSING_LEVEL))
                        .collect(),
                )
            })
            .unzip();
        let mut d = Self::new(variables, columns)?;
        if d.n() != doc.n {
            return Err(DatasetError::InvalidDataset(format!(
                "header says n = {} but columns hold {}",
                doc.n,
                d.n()
            )));
        }
        d.meta = doc.meta;
        Ok(d)
    }
}

const DATASET_FORMAT: &str = "pns-toolkit/dataset";

#[derive(Serialize, Deserialize)]
struct DatasetDocument {
    format: String,
    version: String,
    n: usize,
    meta: BTreeMap<String, String>,
    variables: Vec<ColumnDocument>,
}

#[derive(Serialize, Deserialize)]
struct ColumnDocument {
    name: String,
    levels: Vec<i64>,
    values: Vec<Option<i64>>,
}
