//! Tabular data ingestion: typed cells, schema inference, row sampling, and
//! synthetic fixtures with known conditional probabilities.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Read;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::scalar::sigmoid;
use crate::stats::{cmp_finite, sorted_quantile};

/// Literal that marks a missing value in text inputs, besides the empty string.
pub const MISSING_SENTINEL: &str = "NA";

/// Distinct-count threshold at or below which an all-numeric column is
/// treated as categorical.
pub const DEFAULT_CATEGORICAL_MAX_DISTINCT: usize = 10;

/// One table cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Missing,
    Number(f64),
    Text(String),
}

impl Cell {
    /// Applies the text typing rules: empty or `NA` is missing, finite
    /// decimals become numbers, non-finite literals are rejected, anything
    /// else is text.
    pub fn parse(raw: &str) -> std::result::Result<Cell, String> {
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed == MISSING_SENTINEL {
            return Ok(Cell::Missing);
        }
        match trimmed.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Cell::Number(v)),
            Ok(_) => Err(trimmed.to_string()),
            Err(_) => Ok(Cell::Text(raw.to_string())),
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Cell::Number(v) => Some(*v),
            _ => None,
        }
    }

    /// Re-applies the text typing rules to a `Text` cell. Used for values
    /// supplied through metadata, which may quote numbers.
    pub fn normalized(self) -> Cell {
        match self {
            Cell::Text(s) => Cell::parse(&s).unwrap_or(Cell::Text(s)),
            other => other,
        }
    }

    fn key(&self) -> CellKey {
        match self {
            Cell::Missing => CellKey::Missing,
            Cell::Number(v) => CellKey::Number(if *v == 0.0 { 0 } else { v.to_bits() }),
            Cell::Text(s) => CellKey::Text(s.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum CellKey {
    Missing,
    Number(u64),
    Text(String),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Missing => f.write_str(MISSING_SENTINEL),
            Cell::Number(v) => f.write_str(&format_number(*v)),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl Serialize for Cell {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Cell::Missing => s.serialize_none(),
            Cell::Number(v) => s.serialize_f64(*v),
            Cell::Text(t) => s.serialize_str(t),
        }
    }
}

impl<'de> Deserialize<'de> for Cell {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct CellVisitor;
        impl<'de> Visitor<'de> for CellVisitor {
            type Value = Cell;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("null, a number, a string, or a boolean")
            }
            fn visit_unit<E: de::Error>(self) -> std::result::Result<Cell, E> {
                Ok(Cell::Missing)
            }
            fn visit_none<E: de::Error>(self) -> std::result::Result<Cell, E> {
                Ok(Cell::Missing)
            }
            fn visit_bool<E: de::Error>(self, v: bool) -> std::result::Result<Cell, E> {
                Ok(Cell::Text(v.to_string()))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Cell, E> {
                Ok(Cell::Number(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Cell, E> {
                Ok(Cell::Number(v as f64))
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Cell, E> {
                if v.is_finite() {
                    Ok(Cell::Number(v))
                } else {
                    Err(E::custom("non-finite number"))
                }
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Cell, E> {
                Ok(Cell::Text(v.to_string()))
            }
        }
        d.deserialize_any(CellVisitor)
    }
}

/// Renders a number for prompts and labels: integral values in full without
/// a decimal point, everything else with at most 6 significant digits and
/// trailing zeros trimmed (scientific notation outside `1e-4 ..= 1e6`).
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if v.fract() == 0.0 && v.abs() < 1e15 {
        return format!("{v:.0}");
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        return format!("{}e{}", trim_zeros(mantissa), exp);
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub values: Vec<Cell>,
}

/// Column-oriented table with a fixed row count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Column>", into = "Vec<Column>")]
pub struct Table {
    columns: Vec<Column>,
    row_count: usize,
}

impl TryFrom<Vec<Column>> for Table {
    type Error = Error;
    fn try_from(columns: Vec<Column>) -> Result<Self> {
        Table::new(columns)
    }
}

impl From<Table> for Vec<Column> {
    fn from(t: Table) -> Self {
        t.columns
    }
}

impl Table {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (i, c) in columns.iter().enumerate() {
            if c.name.trim().is_empty() {
                return Err(Error::EmptyColumnName(i));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(Error::DuplicateColumn(c.name.clone()));
            }
        }
        let row_count = columns.first().map_or(0, |c| c.values.len());
        for (i, c) in columns.iter().enumerate() {
            if c.values.len() != row_count {
                return Err(Error::RaggedRow {
                    row: i,
                    expected: row_count,
                    found: c.values.len(),
                });
            }
        }
        Ok(Table { columns, row_count })
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.column(name).is_some()
    }

    pub fn row(&self, index: usize) -> RowView<'_> {
        assert!(index < self.row_count, "row {index} out of range");
        RowView { table: self, index }
    }

    /// New table holding the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Table {
        let columns = self
            .columns
            .iter()
            .map(|c| Column {
                name: c.name.clone(),
                values: rows.iter().map(|&r| c.values[r].clone()).collect(),
            })
            .collect();
        Table {
            columns,
            row_count: rows.len(),
        }
    }
}

/// Borrowed view of one table row.
#[derive(Debug, Clone, Copy)]
pub struct RowView<'a> {
    table: &'a Table,
    index: usize,
}

impl<'a> RowView<'a> {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn get(&self, column: &str) -> Option<&'a Cell> {
        self.table.column(column).map(|c| &c.values[self.index])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableFormat {
    Csv,
    #[serde(alias = "jsonl")]
    JsonLines,
}

impl TableFormat {
    /// Guesses the format from a file extension (`.jsonl`/`.ndjson` vs anything else).
    pub fn from_path(path: &Path) -> TableFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => TableFormat::JsonLines,
            _ => TableFormat::Csv,
        }
    }
}

pub fn load_table(path: &Path, format: TableFormat) -> Result<Table> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    file.read_to_string(&mut text)
        .map_err(|e| Error::io(path, e))?;
    match format {
        TableFormat::Csv => parse_csv(&text),
        TableFormat::JsonLines => parse_json_lines(&text),
    }
}

pub fn parse_csv(text: &str) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(str::to_string)
        .collect();
    check_header(&headers)?;
    let mut values: Vec<Vec<Cell>> = vec![Vec::new(); headers.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        for (col, raw) in record.iter().enumerate() {
            let cell = Cell::parse(raw).map_err(|literal| Error::NonFinite {
                column: headers[col].clone(),
                row,
                literal,
            })?;
            values[col].push(cell);
        }
    }
    Table::new(
        headers
            .into_iter()
            .zip(values)
            .map(|(name, values)| Column { name, values })
            .collect(),
    )
}

/// Writes a table as CSV. Numbers use their shortest round-trip form and
/// missing cells are empty, so [`parse_csv`] reads the same table back
/// (text cells that look numeric come back as numbers).
pub fn write_csv(table: &Table, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    w.write_record(table.column_names()).map_err(io)?;
    for r in 0..table.row_count() {
        w.write_record(table.columns().iter().map(|c| match &c.values[r] {
            Cell::Missing => String::new(),
            Cell::Number(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }))
        .map_err(io)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn csv_error(e: csv::Error) -> Error {
    if let csv::ErrorKind::UnequalLengths {
        pos,
        expected_len,
        len,
    } = e.kind()
    {
        return Error::RaggedRow {
            row: pos.as_ref().map_or(0, |p| p.record() as usize),
            expected: *expected_len as usize,
            found: *len as usize,
        };
    }
    Error::Parse(e.to_string())
}

fn check_header(headers: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for (i, h) in headers.iter().enumerate() {
        if h.trim().is_empty() {
            return Err(Error::EmptyColumnName(i));
        }
        if !seen.insert(h.as_str()) {
            return Err(Error::DuplicateColumn(h.clone()));
        }
    }
    Ok(())
}

/// Parses JSON-lines where every line is an object with the same key set as
/// the first. Strings follow the CSV typing rules; `null` is missing.
pub fn parse_json_lines(text: &str) -> Result<Table> {
    let mut headers: Vec<String> = Vec::new();
    let mut values: Vec<Vec<Cell>> = Vec::new();
    for (row, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let obj: serde_json::Map<String, Value> = serde_json::from_str(line)
            .map_err(|e| Error::Parse(format!("line {}: {e}", row + 1)))?;
        if row == 0 {
            headers = obj.keys().cloned().collect();
            values = vec![Vec::new(); headers.len()];
        } else if obj.len() != headers.len() || headers.iter().any(|h| !obj.contains_key(h)) {
            return Err(Error::RaggedRow {
                row,
                expected: headers.len(),
                found: obj.len(),
            });
        }
        for (col, name) in headers.iter().enumerate() {
            values[col].push(json_cell(&obj[name], name, row)?);
        }
    }
    Table::new(
        headers
            .into_iter()
            .zip(values)
            .map(|(name, values)| Column { name, values })
            .collect(),
    )
}

fn json_cell(v: &Value, column: &str, row: usize) -> Result<Cell> {
    match v {
        Value::Null => Ok(Cell::Missing),
        Value::Bool(b) => Ok(Cell::Text(b.to_string())),
        Value::Number(n) => n.as_f64().map(Cell::Number).ok_or_else(|| Error::NonFinite {
            column: column.to_string(),
            row,
            literal: n.to_string(),
        }),
        Value::String(s) => Cell::parse(s).map_err(|literal| Error::NonFinite {
            column: column.to_string(),
            row,
            literal,
        }),
        other => Err(Error::Parse(format!(
            "column `{column}`, row {row}: nested value {other}"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Categorical,
}

/// Per-column statistics used by the task construction rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnProfile {
    pub name: String,
    pub kind: ColumnKind,
    pub missing_count: usize,
    pub missing_fraction: f64,
    pub mode_value: Cell,
    /// Fraction of non-missing rows equal to the mode.
    pub mode_fraction: f64,
    /// Median of non-missing values; continuous columns only.
    pub median: Option<f64>,
    pub distinct_count: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SchemaOptions {
    #[serde(default = "default_categorical_max_distinct")]
    pub categorical_max_distinct: usize,
    /// Manual kind assignments that bypass the distinct-count rule.
    #[serde(default)]
    pub overrides: BTreeMap<String, ColumnKind>,
}

fn default_categorical_max_distinct() -> usize {
    DEFAULT_CATEGORICAL_MAX_DISTINCT
}

impl SchemaOptions {
    pub fn with_threshold(categorical_max_distinct: usize) -> Self {
        SchemaOptions {
            categorical_max_distinct,
            overrides: BTreeMap::new(),
        }
    }
}

pub fn infer_schema(table: &Table, categorical_max_distinct: usize) -> Result<Vec<ColumnProfile>> {
    infer_schema_with(table, &SchemaOptions::with_threshold(categorical_max_distinct))
}

pub fn infer_schema_with(table: &Table, options: &SchemaOptions) -> Result<Vec<ColumnProfile>> {
    if table.row_count() == 0 {
        return Err(Error::EmptyTable);
    }
    if let Some(unknown) = options.overrides.keys().find(|k| !table.has_column(k)) {
        return Err(Error::UnknownColumn(unknown.clone()));
    }
    table
        .columns()
        .iter()
        .map(|c| {
            profile_column(
                c,
                options.overrides.get(&c.name).copied(),
                options.categorical_max_distinct,
            )
        })
        .collect()
}

pub fn profile_column(
    column: &Column,
    kind_override: Option<ColumnKind>,
    categorical_max_distinct: usize,
) -> Result<ColumnProfile> {
    let row_count = column.values.len();
    let present: Vec<&Cell> = column.values.iter().filter(|c| !c.is_missing()).collect();
    let missing_count = row_count - present.len();

    // (first occurrence, count) per distinct value
    let mut counts: HashMap<CellKey, (usize, usize)> = HashMap::new();
    for (i, cell) in present.iter().enumerate() {
        counts.entry(cell.key()).or_insert((i, 0)).1 += 1;
    }
    let distinct_count = counts.len();
    let (mode_value, mode_count) = counts
        .values()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|&(first, count)| (present[first].clone(), count))
        .unwrap_or((Cell::Missing, 0));

    let numbers: Option<Vec<f64>> = present.iter().map(|c| c.as_number()).collect();
    let kind = match kind_override {
        Some(ColumnKind::Continuous) if numbers.is_none() || present.is_empty() => {
            return Err(Error::InvalidArgument(format!(
                "column `{}` cannot be continuous: it holds non-numeric values",
                column.name
            )))
        }
        Some(kind) => kind,
        None if numbers.is_some()
            && !present.is_empty()
            && distinct_count > categorical_max_distinct =>
        {
            ColumnKind::Continuous
        }
        None => ColumnKind::Categorical,
    };
    let median = match (kind, numbers) {
        (ColumnKind::Continuous, Some(mut xs)) => {
            xs.sort_by(cmp_finite);
            Some(sorted_quantile(&xs, 0.5))
        }
        _ => None,
    };

    Ok(ColumnProfile {
        name: column.name.clone(),
        kind,
        missing_count,
        missing_fraction: if row_count == 0 {
            0.0
        } else {
            missing_count as f64 / row_count as f64
        },
        mode_value,
        mode_fraction: if present.is_empty() {
            0.0
        } else {
            mode_count as f64 / present.len() as f64
        },
        median,
        distinct_count,
    })
}

/// The two answer texts of a binary question, positive first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelTexts {
    pub positive: String,
    pub negative: String,
}

/// JSON sidecar describing a dataset and its designated prediction task.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub target: Option<String>,
    /// Target value that counts as the positive class.
    #[serde(default)]
    pub positive_value: Option<Cell>,
    #[serde(default)]
    pub label_texts: Option<LabelTexts>,
    #[serde(default)]
    pub question: Option<String>,
    /// `false` marks a dataset whose labels must never be read.
    #[serde(default = "default_true")]
    pub labeled: bool,
    #[serde(default)]
    pub column_kinds: BTreeMap<String, ColumnKind>,
    #[serde(default)]
    pub categorical_max_distinct: Option<usize>,
}

fn default_true() -> bool {
    true
}

impl DatasetMetadata {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    pub fn schema_options(&self) -> SchemaOptions {
        SchemaOptions {
            categorical_max_distinct: self
                .categorical_max_distinct
                .unwrap_or(DEFAULT_CATEGORICAL_MAX_DISTINCT),
            overrides: self.column_kinds.clone(),
        }
    }
}

/// A loaded table plus its inferred schema and task metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetProfile {
    pub name: String,
    pub description: String,
    pub table: Table,
    pub profiles: Vec<ColumnProfile>,
    pub designated_target: Option<String>,
    pub positive_value: Option<Cell>,
    pub label_texts: Option<LabelTexts>,
    pub question: Option<String>,
    pub labeled: bool,
    #[serde(default)]
    pub schema_options: SchemaOptions,
    /// Generating parameters, for synthetic fixtures only.
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
}

impl DatasetProfile {
    pub fn from_table(table: Table, metadata: DatasetMetadata) -> Result<Self> {
        let schema_options = metadata.schema_options();
        let profiles = infer_schema_with(&table, &schema_options)?;
        if let Some(target) = &metadata.target {
            if metadata.labeled && !table.has_column(target) {
                return Err(Error::UnknownColumn(target.clone()));
            }
        }
        Ok(DatasetProfile {
            name: metadata.name,
            description: metadata.description,
            table,
            profiles,
            designated_target: metadata.target,
            positive_value: metadata.positive_value.map(Cell::normalized),
            label_texts: metadata.label_texts,
            question: metadata.question,
            labeled: metadata.labeled,
            schema_options,
            synthetic: None,
        })
    }

    pub fn load(data_path: &Path, metadata_path: &Path, format: TableFormat) -> Result<Self> {
        let table = load_table(data_path, format)?;
        let metadata = DatasetMetadata::load(metadata_path)?;
        Self::from_table(table, metadata)
    }

    /// Metadata sidecar that reproduces this profile when loaded with its table.
    pub fn metadata(&self) -> DatasetMetadata {
        DatasetMetadata {
            name: self.name.clone(),
            description: self.description.clone(),
            target: self.designated_target.clone(),
            positive_value: self.positive_value.clone(),
            label_texts: self.label_texts.clone(),
            question: self.question.clone(),
            labeled: self.labeled,
            column_kinds: self.schema_options.overrides.clone(),
            categorical_max_distinct: Some(self.schema_options.categorical_max_distinct),
        }
    }

    pub fn profile(&self, column: &str) -> Option<&ColumnProfile> {
        self.profiles.iter().find(|p| p.name == column)
    }

    /// Samples rows and recomputes the schema statistics on the sample.
    pub fn sampled(&self, n: usize, seed: u64) -> Result<Self> {
        let table = sample_rows(&self.table, n, seed)?;
        if table.row_count() == self.table.row_count() {
            return Ok(self.clone());
        }
        let profiles = infer_schema_with(&table, &self.schema_options)?;
        Ok(DatasetProfile {
            table,
            profiles,
            ..self.clone()
        })
    }
}

/// Uniform sample of `n` rows without replacement, source order preserved.
pub fn sample_rows(table: &Table, n: usize, seed: u64) -> Result<Table> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    if table.row_count() <= n {
        return Ok(table.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = index::sample(&mut rng, table.row_count(), n).into_vec();
    rows.sort_unstable();
    Ok(table.select_rows(&rows))
}

/// Parameters of a synthetic logistic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub d: usize,
    pub n: usize,
    pub weights: Vec<f64>,
    pub logit_scale: f64,
    pub seed: u64,
}

/// Grid resolution of synthetic features; values are `k / GRID` for integer
/// `k` in `0..=GRID`, which prompts render exactly and whose mean is 1/2.
pub const SYNTHETIC_GRID: u32 = 10_000;
pub const SYNTHETIC_TARGET: &str = "label";

impl SyntheticSpec {
    pub fn feature_name(j: usize) -> String {
        format!("x{}", j + 1)
    }

    pub fn feature_mean(&self) -> f64 {
        0.5
    }

    /// Latent logit `scale * (w.x - w.E[x])` for one feature vector.
    pub fn logit(&self, x: &[f64]) -> f64 {
        let centered: f64 = self
            .weights
            .iter()
            .zip(x)
            .map(|(w, v)| w * (v - self.feature_mean()))
            .sum();
        self.logit_scale * centered
    }

    pub fn true_probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }
}

pub fn generate_synthetic_dataset(spec: &SyntheticSpec) -> Result<DatasetProfile> {
    if spec.d == 0 || spec.n == 0 {
        return Err(Error::InvalidArgument(
            "synthetic datasets need d >= 1 and n >= 1".into(),
        ));
    }
    if spec.weights.len() != spec.d {
        return Err(Error::LengthMismatch {
            left: spec.weights.len(),
            right: spec.d,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut features = vec![Vec::with_capacity(spec.n); spec.d];
    let mut labels = Vec::with_capacity(spec.n);
    let mut x = vec![0.0; spec.d];
    for _ in 0..spec.n {
        for (j, xj) in x.iter_mut().enumerate() {
            *xj = rng.random_range(0..=SYNTHETIC_GRID) as f64 / SYNTHETIC_GRID as f64;
            features[j].push(Cell::Number(*xj));
        }
        let positive = rng.random::<f64>() < spec.true_probability(&x);
        labels.push(Cell::Number(if positive { 1.0 } else { 0.0 }));
    }
    let mut columns: Vec<Column> = features
        .into_iter()
        .enumerate()
        .map(|(j, values)| Column {
            name: SyntheticSpec::feature_name(j),
            values,
        })
        .collect();
    columns.push(Column {
        name: SYNTHETIC_TARGET.to_string(),
        values: labels,
    });
    let table = Table::new(columns)?;
    let metadata = DatasetMetadata {
        name: format!("synthetic-{}", spec.seed),
        description: format!(
            "Synthetic benchmark with {} numeric features uniformly distributed on [0, 1]. \
             Each record has a binary outcome.",
            spec.d
        ),
        target: Some(SYNTHETIC_TARGET.to_string()),
        positive_value: Some(Cell::Number(1.0)),
        label_texts: Some(LabelTexts {
            positive: "Yes".into(),
            negative: "No".into(),
        }),
        question: Some("Is the outcome of this record positive?".into()),
        labeled: true,
        ..Default::default()
    };
    let mut profile = DatasetProfile::from_table(table, metadata)?;
    profile.synthetic = Some(spec.clone());
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numbers(xs: &[f64]) -> Column {
        Column {
            name: "c".into(),
            values: xs.iter().map(|&v| Cell::Number(v)).collect(),
        }
    }

    #[test]
    fn csv_typing_rules() {
        let t = parse_csv("a,b\n1,x\n,y").unwrap();
        assert_eq!(t.row_count(), 2);
        assert_eq!(
            t.column("a").unwrap().values,
            vec![Cell::Number(1.0), Cell::Missing]
        );
        assert_eq!(
            t.column("b").unwrap().values,
            vec![Cell::Text("x".into()), Cell::Text("y".into())]
        );
        let t = parse_csv("a\nNA\nn/a").unwrap();
        assert_eq!(
            t.column("a").unwrap().values,
            vec![Cell::Missing, Cell::Text("n/a".into())]
        );
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(
            parse_csv("a,a\n1,2\n"),
            Err(Error::DuplicateColumn(c)) if c == "a"
        ));
        assert!(matches!(
            parse_csv("a,b\n1,2\n3\n"),
            Err(Error::RaggedRow { .. })
        ));
        assert!(matches!(
            parse_csv("a\n1e999\n"),
            Err(Error::NonFinite { .. })
        ));
        assert!(matches!(parse_csv("a\nNaN\n"), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn json_lines_null_is_missing() {
        let t = parse_json_lines("{\"a\":1}\n{\"a\":null}\n").unwrap();
        assert_eq!(
            t.column("a").unwrap().values,
            vec![Cell::Number(1.0), Cell::Missing]
        );
        assert!(matches!(
            parse_json_lines("{\"a\":1}\n{\"b\":2}\n"),
            Err(Error::RaggedRow { .. })
        ));
    }

    #[test]
    fn schema_kinds_and_statistics() {
        let xs: Vec<f64> = (1..=20).map(f64::from).collect();
        let p = profile_column(&numbers(&xs), None, 10).unwrap();
        assert_eq!(p.kind, ColumnKind::Continuous);
        assert_eq!(p.median, Some(10.5));

        let p = profile_column(&numbers(&[1.0, 1.0, 2.0, 2.0]), None, 10).unwrap();
        assert_eq!(p.kind, ColumnKind::Categorical);
        assert_eq!(p.median, None);

        let col = Column {
            name: "t".into(),
            values: ["a", "a", "b", "a"]
                .iter()
                .map(|s| Cell::Text(s.to_string()))
                .collect(),
        };
        let p = profile_column(&col, None, 10).unwrap();
        assert_eq!(p.kind, ColumnKind::Categorical);
        assert_eq!(p.mode_value, Cell::Text("a".into()));
        assert_eq!(p.mode_fraction, 0.75);
    }

    #[test]
    fn missing_fraction_and_mode_over_present_rows() {
        let col = Column {
            name: "m".into(),
            values: vec![
                Cell::Missing,
                Cell::Text("b".into()),
                Cell::Text("a".into()),
                Cell::Text("b".into()),
            ],
        };
        let p = profile_column(&col, None, 10).unwrap();
        assert_eq!(p.missing_count, 1);
        assert_eq!(p.missing_fraction, 0.25);
        assert_eq!(p.mode_value, Cell::Text("b".into()));
        assert!((p.mode_fraction - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn continuous_override_rejects_text() {
        let t = parse_csv("a\nx\ny\n").unwrap();
        let mut opts = SchemaOptions::with_threshold(10);
        opts.overrides.insert("a".into(), ColumnKind::Continuous);
        assert!(infer_schema_with(&t, &opts).is_err());
        let empty = Table::new(vec![Column {
            name: "a".into(),
            values: vec![],
        }])
        .unwrap();
        assert!(matches!(infer_schema(&empty, 10), Err(Error::EmptyTable)));
    }

    #[test]
    fn number_formatting() {
        assert_eq!(format_number(30.0), "30");
        assert_eq!(format_number(0.12345678), "0.123457");
        assert_eq!(format_number(0.5), "0.5");
        assert_eq!(format_number(-2.25), "-2.25");
        assert_eq!(format_number(1234567.0), "1234567");
        assert_eq!(format_number(9.9999996), "10");
        assert_eq!(format_number(0.00001234), "1.234e-5");
        assert_eq!(format_number(0.1234), "0.1234");
    }

    #[test]
    fn sampling_rules() {
        let t = Table::new(vec![numbers(&(0..500).map(f64::from).collect::<Vec<_>>())]).unwrap();
        assert_eq!(sample_rows(&t, 1000, 1).unwrap(), t);
        let big = Table::new(vec![numbers(&(0..5000).map(f64::from).collect::<Vec<_>>())]).unwrap();
        let a = sample_rows(&big, 1000, 9).unwrap();
        let b = sample_rows(&big, 1000, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.row_count(), 1000);
        let vals: Vec<f64> = a.columns()[0].values.iter().filter_map(Cell::as_number).collect();
        assert!(vals.windows(2).all(|w| w[0] < w[1]), "source order preserved");
        let one = sample_rows(&big, 1, 3).unwrap();
        let v = one.columns()[0].values[0].as_number().unwrap();
        assert!((0.0..5000.0).contains(&v) && v.fract() == 0.0);
        assert!(sample_rows(&big, 0, 3).is_err());
    }

    #[test]
    fn synthetic_is_deterministic_and_labeled() {
        let spec = SyntheticSpec {
            d: 3,
            n: 50,
            weights: vec![1.0, -1.0, 0.5],
            logit_scale: 2.0,
            seed: 4,
        };
        let a = generate_synthetic_dataset(&spec).unwrap();
        let b = generate_synthetic_dataset(&spec).unwrap();
        assert_eq!(a.table, b.table);
        assert_eq!(a.designated_target.as_deref(), Some(SYNTHETIC_TARGET));
        assert_eq!(a.positive_value, Some(Cell::Number(1.0)));
        assert_eq!(a.synthetic.as_ref(), Some(&spec));
        assert!(generate_synthetic_dataset(&SyntheticSpec { d: 0, ..spec }).is_err());
    }
}
