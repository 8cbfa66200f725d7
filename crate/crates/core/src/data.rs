//! Tabular ingestion, target designation and presence-vector decomposition.
//!
//! A [`Dataset`] is a column-major table. Columns whose non-missing cells all
//! parse as finite numbers become numeric attributes; every other column is
//! kept as a categorical column, which can still serve as a target but never
//! as an explanatory attribute.

use std::collections::{HashMap, HashSet};
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("empty dataset: no data rows")]
    Empty,
    #[error("no columns in input")]
    NoColumns,
    #[error("line {line}: expected {expected} fields, found {found}")]
    Ragged {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("duplicate column name `{0}`")]
    DuplicateName(String),
    #[error("column {0} has an empty name")]
    EmptyName(usize),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("column `{0}` is not numeric")]
    NotNumeric(String),
    #[error("target `{name}` has {distinct} distinct label(s); at least 2 are required")]
    DegenerateTarget { name: String, distinct: usize },
    #[error("statistics unavailable for `{0}`: every cell is missing")]
    StatsUnavailable(String),
    #[error("row id column `{0}` contains a missing cell")]
    MissingRowId(String),
    #[error("label `{label}` does not occur in target `{target}`")]
    UnknownLabel { target: String, label: String },
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub delimiter: u8,
    pub has_header: bool,
    pub missing_tokens: Vec<String>,
    /// Column whose cells become the row identifiers instead of a data column.
    pub id_column: Option<String>,
    /// Accept a table with a header and no rows. Only batch scoring needs this.
    pub allow_empty: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            has_header: true,
            missing_tokens: vec!["".into(), "NA".into(), "null".into()],
            id_column: None,
            allow_empty: false,
        }
    }
}

/// Accepts a single ASCII character, `tab` or `\t`.
pub fn parse_delimiter(text: &str) -> Option<u8> {
    match text {
        "tab" | "\\t" | "\t" => Some(b'\t'),
        _ if text.len() == 1 && text.is_ascii() && text != "\"" => Some(text.as_bytes()[0]),
        _ => None,
    }
}

impl LoadOptions {
    pub fn tsv() -> Self {
        Self {
            delimiter: b'\t',
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

impl Column {
    pub fn is_numeric(&self) -> bool {
        matches!(self.data, ColumnData::Numeric(_))
    }

    /// Cell rendered as text, `None` when missing.
    pub fn text(&self, row: usize) -> Option<String> {
        match &self.data {
            ColumnData::Numeric(v) => v[row].map(format_number),
            ColumnData::Categorical(v) => v[row].clone(),
        }
    }

    pub fn missing_count(&self) -> usize {
        match &self.data {
            ColumnData::Numeric(v) => v.iter().filter(|c| c.is_none()).count(),
            ColumnData::Categorical(v) => v.iter().filter(|c| c.is_none()).count(),
        }
    }
}

/// Shortest text that parses back to the same `f64`.
pub fn format_number(v: f64) -> String {
    format!("{v}")
}

/// Immutable column-major table.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Column>,
    row_ids: Vec<String>,
    id_column: Option<String>,
    target: Option<String>,
}

impl Dataset {
    /// Builds a dataset from parts, checking the shape invariants.
    pub fn from_columns(columns: Vec<Column>, row_ids: Option<Vec<String>>) -> Result<Self> {
        if columns.is_empty() {
            return Err(DataError::NoColumns);
        }
        let n = column_len(&columns[0]);
        let mut seen = HashSet::new();
        for (i, c) in columns.iter().enumerate() {
            if c.name.is_empty() {
                return Err(DataError::EmptyName(i));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(DataError::DuplicateName(c.name.clone()));
            }
            if column_len(c) != n {
                return Err(DataError::Ragged {
                    line: 0,
                    expected: n,
                    found: column_len(c),
                });
            }
        }
        if n == 0 {
            return Err(DataError::Empty);
        }
        let row_ids = row_ids.unwrap_or_else(|| (0..n).map(|i| i.to_string()).collect());
        if row_ids.len() != n {
            return Err(DataError::Ragged {
                line: 0,
                expected: n,
                found: row_ids.len(),
            });
        }
        Ok(Self {
            columns,
            row_ids,
            id_column: None,
            target: None,
        })
    }

    pub fn load<R: Read>(source: R, options: &LoadOptions) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(options.delimiter)
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(source);

        let mut header: Option<Vec<String>> = None;
        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut width = None;
        for record in reader.records() {
            let record = record.map_err(|e| DataError::Parse {
                line: e.position().map(|p| p.line()).unwrap_or(0),
                message: e.to_string(),
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            // A lone empty field is a blank line.
            if record.len() == 1 && record[0].is_empty() && width != Some(1) {
                continue;
            }
            match width {
                None => width = Some(record.len()),
                Some(w) if w != record.len() => {
                    return Err(DataError::Ragged {
                        line,
                        expected: w,
                        found: record.len(),
                    })
                }
                _ => {}
            }
            let fields: Vec<String> = record.iter().map(str::to_owned).collect();
            if options.has_header && header.is_none() {
                header = Some(fields);
            } else {
                rows.push(fields);
            }
        }

        let width = width.ok_or(DataError::Empty)?;
        if width == 0 {
            return Err(DataError::NoColumns);
        }
        let names =
            header.unwrap_or_else(|| (1..=width).map(|i| format!("column_{i}")).collect());
        let mut seen = HashSet::new();
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(DataError::EmptyName(i));
            }
            if !seen.insert(name.as_str()) {
                return Err(DataError::DuplicateName(name.clone()));
            }
        }
        if rows.is_empty() && !options.allow_empty {
            return Err(DataError::Empty);
        }

        let missing: HashSet<&str> = options.missing_tokens.iter().map(String::as_str).collect();
        let mut columns = Vec::with_capacity(width);
        let mut row_ids = None;
        for (j, name) in names.into_iter().enumerate() {
            let cells: Vec<Option<&str>> = rows
                .iter()
                .map(|r| {
                    let cell = r[j].as_str();
                    (!missing.contains(cell)).then_some(cell)
                })
                .collect();
            if options.id_column.as_deref() == Some(name.as_str()) {
                let ids = cells
                    .iter()
                    .map(|c| c.map(str::to_owned))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| DataError::MissingRowId(name.clone()))?;
                row_ids = Some(ids);
                continue;
            }
            columns.push(Column {
                name,
                data: classify(&cells),
            });
        }
        if let Some(id) = &options.id_column {
            if row_ids.is_none() {
                return Err(DataError::UnknownColumn(id.clone()));
            }
        }
        if columns.is_empty() {
            return Err(DataError::NoColumns);
        }
        let n = rows.len();
        Ok(Self {
            columns,
            row_ids: row_ids.unwrap_or_else(|| (0..n).map(|i| i.to_string()).collect()),
            id_column: options.id_column.clone(),
            target: None,
        })
    }

    pub fn from_csv_str(text: &str, options: &LoadOptions) -> Result<Self> {
        Self::load(text.as_bytes(), options)
    }

    /// Delimited text that [`Dataset::load`] reads back into an equal dataset
    /// when given the same delimiter and `id_column`. Missing cells are
    /// written as `NA`.
    pub fn to_delimited(&self, delimiter: u8) -> String {
        let mut w = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .from_writer(Vec::new());
        let mut header: Vec<&str> = Vec::new();
        if let Some(id) = &self.id_column {
            header.push(id);
        }
        header.extend(self.columns.iter().map(|c| c.name.as_str()));
        w.write_record(&header).expect("in-memory write");
        for i in 0..self.n_rows() {
            let mut record: Vec<String> = Vec::new();
            if self.id_column.is_some() {
                record.push(self.row_ids[i].clone());
            }
            record.extend(
                self.columns
                    .iter()
                    .map(|c| c.text(i).unwrap_or_else(|| "NA".into())),
            );
            w.write_record(&record).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    /// Number of numeric attributes.
    pub fn n_attrs(&self) -> usize {
        self.columns.iter().filter(|c| c.is_numeric()).count()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn id_column(&self) -> Option<&str> {
        self.id_column.as_deref()
    }

    pub fn target(&self) -> Option<&str> {
        self.target.as_deref()
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Numeric attribute cells, or an error naming the column.
    pub fn attribute(&self, name: &str) -> Result<&[Option<f64>]> {
        match self.column(name) {
            Some(Column {
                data: ColumnData::Numeric(v),
                ..
            }) => Ok(v),
            Some(_) => Err(DataError::NotNumeric(name.to_owned())),
            None => Err(DataError::UnknownColumn(name.to_owned())),
        }
    }

    pub fn attribute_names(&self) -> impl Iterator<Item = &str> {
        self.columns
            .iter()
            .filter(|c| c.is_numeric())
            .map(|c| c.name.as_str())
    }

    /// Numeric attributes usable as explanatory variables: every numeric
    /// column except the designated target.
    pub fn explanatory_names(&self) -> Vec<&str> {
        self.attribute_names()
            .filter(|n| Some(*n) != self.target.as_deref())
            .collect()
    }

    /// Columns with at least two distinct non-missing values.
    pub fn candidate_targets(&self) -> Vec<&str> {
        self.columns
            .iter()
            .filter(|c| {
                let mut seen = HashSet::new();
                (0..self.n_rows()).filter_map(|i| c.text(i)).any(|v| {
                    seen.insert(v);
                    seen.len() >= 2
                })
            })
            .map(|c| c.name.as_str())
            .collect()
    }

    /// Returns a copy with `name` designated as target.
    pub fn with_target(mut self, name: &str) -> Result<Self> {
        if self.column(name).is_none() {
            return Err(DataError::UnknownColumn(name.to_owned()));
        }
        self.target = Some(name.to_owned());
        Ok(self)
    }

    /// Rows restricted to the given indices, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let columns = self
            .columns
            .iter()
            .map(|c| Column {
                name: c.name.clone(),
                data: match &c.data {
                    ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&i| v[i]).collect()),
                    ColumnData::Categorical(v) => {
                        ColumnData::Categorical(rows.iter().map(|&i| v[i].clone()).collect())
                    }
                },
            })
            .collect();
        Self {
            columns,
            row_ids: rows.iter().map(|&i| self.row_ids[i].clone()).collect(),
            id_column: self.id_column.clone(),
            target: self.target.clone(),
        }
    }

    /// Replaces one numeric column; used to derive rescaled or standardized copies.
    pub fn map_attribute(&self, name: &str, f: impl Fn(f64) -> f64) -> Result<Self> {
        self.attribute(name)?;
        let mut out = self.clone();
        for c in &mut out.columns {
            if c.name == name {
                if let ColumnData::Numeric(v) = &mut c.data {
                    for cell in v.iter_mut().flatten() {
                        *cell = f(*cell);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Complete-case design: indices of rows where every named attribute is
    /// present, plus the column-major values for those rows.
    pub fn complete_rows(&self, names: &[String], within: Option<&[usize]>) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
        let cols = names
            .iter()
            .map(|n| self.attribute(n))
            .collect::<Result<Vec<_>>>()?;
        let candidates: Vec<usize> = match within {
            Some(r) => r.to_vec(),
            None => (0..self.n_rows()).collect(),
        };
        let rows: Vec<usize> = candidates
            .into_iter()
            .filter(|&i| cols.iter().all(|c| c[i].is_some()))
            .collect();
        let values = cols
            .iter()
            .map(|c| rows.iter().map(|&i| c[i].expect("complete row")).collect())
            .collect();
        Ok((rows, values))
    }

    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            n_rows: self.n_rows(),
            n_attrs: self.n_attrs(),
            attributes: self.attribute_names().map(str::to_owned).collect(),
            categorical: self
                .columns
                .iter()
                .filter(|c| !c.is_numeric())
                .map(|c| c.name.clone())
                .collect(),
            candidate_targets: self.candidate_targets().into_iter().map(str::to_owned).collect(),
            missing: self
                .columns
                .iter()
                .map(|c| (c.name.clone(), c.missing_count()))
                .filter(|(_, m)| *m > 0)
                .collect(),
            target: self.target.clone(),
        }
    }
}

fn column_len(c: &Column) -> usize {
    match &c.data {
        ColumnData::Numeric(v) => v.len(),
        ColumnData::Categorical(v) => v.len(),
    }
}

fn classify(cells: &[Option<&str>]) -> ColumnData {
    let parsed: Option<Vec<Option<f64>>> = cells
        .iter()
        .map(|c| match c {
            None => Some(None),
            Some(s) => s.parse::<f64>().ok().filter(|v| v.is_finite()).map(Some),
        })
        .collect();
    match parsed {
        Some(v) => ColumnData::Numeric(v),
        None => ColumnData::Categorical(cells.iter().map(|c| c.map(str::to_owned)).collect()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_rows: usize,
    pub n_attrs: usize,
    pub attributes: Vec<String>,
    pub categorical: Vec<String>,
    pub candidate_targets: Vec<String>,
    /// Missing-cell counts for columns that have any.
    pub missing: Vec<(String, usize)>,
    pub target: Option<String>,
}

/// Target attribute split into mutually exclusive per-label presence vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetDecomposition {
    pub target: String,
    /// Labels in first-appearance order.
    pub labels: Vec<String>,
    /// Dataset row index of each retained row.
    pub rows: Vec<usize>,
    /// Label index of each retained row.
    pub assignment: Vec<usize>,
    pub counts: Vec<usize>,
    /// Rows dropped because their target cell was missing.
    pub dropped: usize,
}

impl TargetDecomposition {
    pub fn n_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Presence vector of label `j` over the retained rows.
    pub fn presence_column(&self, j: usize) -> Vec<f64> {
        self.assignment
            .iter()
            .map(|&a| if a == j { 1.0 } else { 0.0 })
            .collect()
    }

    /// Retained-rows × labels binary matrix.
    pub fn presence(&self) -> Vec<Vec<u8>> {
        self.assignment
            .iter()
            .map(|&a| (0..self.labels.len()).map(|j| u8::from(a == j)).collect())
            .collect()
    }

    /// Label index for any dataset row, `None` if the row was dropped.
    pub fn label_of_row(&self) -> HashMap<usize, usize> {
        self.rows.iter().copied().zip(self.assignment.iter().copied()).collect()
    }

    /// Keeps only rows carrying one of `labels`, re-indexed in the given order.
    /// A single label is allowed here; callers decide how to treat it.
    pub fn restrict(&self, labels: &[String]) -> Result<Self> {
        let mut map = vec![None; self.labels.len()];
        for (new, l) in labels.iter().enumerate() {
            let old = self.label_index(l).ok_or_else(|| DataError::UnknownLabel {
                target: self.target.clone(),
                label: l.clone(),
            })?;
            map[old] = Some(new);
        }
        let mut rows = Vec::new();
        let mut assignment = Vec::new();
        let mut counts = vec![0; labels.len()];
        for (&r, &a) in self.rows.iter().zip(&self.assignment) {
            if let Some(new) = map[a] {
                rows.push(r);
                assignment.push(new);
                counts[new] += 1;
            }
        }
        Ok(Self {
            target: self.target.clone(),
            labels: labels.to_vec(),
            rows,
            assignment,
            counts,
            dropped: self.dropped,
        })
    }

    pub fn summary(&self) -> DecompositionSummary {
        DecompositionSummary {
            target: self.target.clone(),
            labels: self.labels.clone(),
            counts: self.counts.clone(),
            retained: self.rows.len(),
            dropped: self.dropped,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSummary {
    pub target: String,
    pub labels: Vec<String>,
    pub counts: Vec<usize>,
    pub retained: usize,
    pub dropped: usize,
}

/// Splits the target column into one presence vector per distinct label.
pub fn decompose_target(ds: &Dataset, target: &str) -> Result<TargetDecomposition> {
    let column = ds
        .column(target)
        .ok_or_else(|| DataError::UnknownColumn(target.to_owned()))?;
    let mut labels: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut rows = Vec::new();
    let mut assignment = Vec::new();
    let mut dropped = 0;
    for i in 0..ds.n_rows() {
        let Some(value) = column.text(i) else {
            dropped += 1;
            continue;
        };
        let j = *index.entry(value.clone()).or_insert_with(|| {
            labels.push(value);
            labels.len() - 1
        });
        rows.push(i);
        assignment.push(j);
    }
    if labels.len() < 2 {
        return Err(DataError::DegenerateTarget {
            name: target.to_owned(),
            distinct: labels.len(),
        });
    }
    let mut counts = vec![0; labels.len()];
    for &a in &assignment {
        counts[a] += 1;
    }
    Ok(TargetDecomposition {
        target: target.to_owned(),
        labels,
        rows,
        assignment,
        counts,
        dropped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub missing: usize,
}

pub fn column_stats(ds: &Dataset, name: &str) -> Result<ColumnStats> {
    let cells = ds.attribute(name)?;
    stats_of(cells).ok_or_else(|| DataError::StatsUnavailable(name.to_owned()))
}

/// Statistics over the present cells, `None` when all are missing.
pub fn stats_of(cells: &[Option<f64>]) -> Option<ColumnStats> {
    let values: Vec<f64> = cells.iter().flatten().copied().collect();
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some(ColumnStats {
        mean,
        std: var.sqrt(),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        count: values.len(),
        missing: cells.len() - values.len(),
    })
}
