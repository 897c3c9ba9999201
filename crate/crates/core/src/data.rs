//! Typed in-memory tables, CSV ingestion, splitting and subsampling.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, LoadError, Result};

/// Marker for a missing categorical cell. Numeric cells use `NaN`.
pub const MISSING_CODE: u32 = u32::MAX;

pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// FNV-1a; used to derive per-column seeds that do not depend on column order.
pub(crate) fn name_hash(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    BinaryClassification,
    MulticlassClassification,
}

impl Task {
    pub fn is_classification(self) -> bool {
        !matches!(self, Task::Regression)
    }

    pub fn parse(s: &str) -> Option<Option<Task>> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Some(None),
            "regression" | "regr" => Some(Some(Task::Regression)),
            "binary" | "binary_classification" | "classif" => Some(Some(Task::BinaryClassification)),
            "multiclass" | "multiclass_classification" => Some(Some(Task::MulticlassClassification)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    /// Level names in first-appearance order; empty for numeric columns.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
    pub missing_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    /// `NaN` marks a missing value.
    Numeric(Vec<f64>),
    /// Index into [`ColumnSchema::levels`]; [`MISSING_CODE`] marks a missing value.
    Categorical(Vec<u32>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, rows: &[usize]) -> ColumnData {
        match self {
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&i| v[i]).collect()),
            ColumnData::Categorical(v) => ColumnData::Categorical(rows.iter().map(|&i| v[i]).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub name: String,
    /// Real values for regression, class indices (`0..levels.len()`) otherwise.
    pub values: Vec<f64>,
    /// Class labels in first-appearance order; empty for regression.
    #[serde(default)]
    pub levels: Vec<String>,
    pub task: Task,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: Vec<ColumnSchema>,
    pub columns: Vec<ColumnData>,
    pub target: Option<Target>,
    n_rows: usize,
}

impl Dataset {
    pub fn new(schema: Vec<ColumnSchema>, columns: Vec<ColumnData>, target: Option<Target>) -> Result<Self> {
        if schema.len() != columns.len() {
            return Err(Error::Schema(format!(
                "{} schema entries for {} columns",
                schema.len(),
                columns.len()
            )));
        }
        let n_rows = columns
            .first()
            .map(ColumnData::len)
            .or_else(|| target.as_ref().map(|t| t.values.len()))
            .unwrap_or(0);
        for (s, c) in schema.iter().zip(&columns) {
            let kind_ok = matches!(
                (s.kind, c),
                (ColumnKind::Numeric, ColumnData::Numeric(_)) | (ColumnKind::Categorical, ColumnData::Categorical(_))
            );
            if !kind_ok {
                return Err(Error::Schema(format!("column `{}` kind does not match data", s.name)));
            }
            if c.len() != n_rows {
                return Err(Error::Schema(format!(
                    "column `{}` has {} rows, expected {n_rows}",
                    s.name,
                    c.len()
                )));
            }
        }
        if let Some(t) = &target {
            if t.values.len() != n_rows {
                return Err(Error::Schema(format!(
                    "target has {} rows, expected {n_rows}",
                    t.values.len()
                )));
            }
        }
        Ok(Dataset {
            schema,
            columns,
            target,
            n_rows,
        })
    }

    /// Convenience constructor from named numeric columns (mostly for tests and simulations).
    pub fn from_numeric(features: Vec<(&str, Vec<f64>)>, target: Option<Target>) -> Result<Self> {
        let mut schema = Vec::new();
        let mut columns = Vec::new();
        for (name, values) in features {
            schema.push(ColumnSchema {
                name: name.to_string(),
                kind: ColumnKind::Numeric,
                levels: Vec::new(),
                missing_count: values.iter().filter(|v| v.is_nan()).count(),
            });
            columns.push(ColumnData::Numeric(values));
        }
        Dataset::new(schema, columns, target)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub fn task(&self) -> Option<Task> {
        self.target.as_ref().map(|t| t.task)
    }

    pub fn target(&self) -> Result<&Target> {
        self.target
            .as_ref()
            .ok_or_else(|| Error::Schema("dataset has no target column".into()))
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|s| s.name == name)
    }

    pub fn numeric(&self, name: &str) -> Result<&[f64]> {
        let j = self
            .column_index(name)
            .ok_or_else(|| Error::Schema(format!("unknown column `{name}`")))?;
        match &self.columns[j] {
            ColumnData::Numeric(v) => Ok(v),
            ColumnData::Categorical(_) => Err(Error::Schema(format!("column `{name}` is not numeric"))),
        }
    }

    pub fn categorical(&self, name: &str) -> Result<(&[u32], &[String])> {
        let j = self
            .column_index(name)
            .ok_or_else(|| Error::Schema(format!("unknown column `{name}`")))?;
        match &self.columns[j] {
            ColumnData::Categorical(v) => Ok((v, &self.schema[j].levels)),
            ColumnData::Numeric(_) => Err(Error::Schema(format!("column `{name}` is not categorical"))),
        }
    }

    /// Rows in the given order (duplicates allowed); schema unchanged except missing counts.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let columns: Vec<ColumnData> = self.columns.iter().map(|c| c.select(rows)).collect();
        let schema = self
            .schema
            .iter()
            .zip(&columns)
            .map(|(s, c)| ColumnSchema {
                missing_count: count_missing(c),
                ..s.clone()
            })
            .collect();
        let target = self.target.as_ref().map(|t| Target {
            values: rows.iter().map(|&i| t.values[i]).collect(),
            ..t.clone()
        });
        Dataset {
            schema,
            columns,
            target,
            n_rows: rows.len(),
        }
    }

    /// Same features with a replaced target.
    pub fn with_target(&self, target: Target) -> Result<Dataset> {
        Dataset::new(self.schema.clone(), self.columns.clone(), Some(target))
    }

    /// Drop the target (e.g. before handing rows to a predictor).
    pub fn without_target(&self) -> Dataset {
        Dataset {
            target: None,
            ..self.clone()
        }
    }

    /// Class index per row grouped by class; `None` for regression or no target.
    fn class_groups(&self) -> Option<Vec<Vec<usize>>> {
        let t = self.target.as_ref()?;
        if !t.task.is_classification() {
            return None;
        }
        let mut groups = vec![Vec::new(); t.levels.len()];
        for (i, &v) in t.values.iter().enumerate() {
            groups[v as usize].push(i);
        }
        Some(groups)
    }
}

fn count_missing(c: &ColumnData) -> usize {
    match c {
        ColumnData::Numeric(v) => v.iter().filter(|x| x.is_nan()).count(),
        ColumnData::Categorical(v) => v.iter().filter(|&&x| x == MISSING_CODE).count(),
    }
}

// ---------------------------------------------------------------------------
// CSV

#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    /// Extra strings treated as missing in addition to the empty string and `NA`.
    pub na_strings: Vec<String>,
}

impl CsvOptions {
    fn is_na(&self, s: &str) -> bool {
        s.is_empty() || s == "NA" || self.na_strings.iter().any(|n| n == s)
    }
}

struct RawTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    /// 1-based line number of each data row.
    lines: Vec<u64>,
}

fn read_raw(path: &Path) -> Result<RawTable> {
    let mut file = File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::Load(LoadError::MissingFile(path.to_path_buf()))
        } else {
            Error::io(format!("opening {}", path.display()), e)
        }
    })?;
    let mut text = String::new();
    file.read_to_string(&mut text)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    read_raw_str(&text)
}

fn read_raw_str(text: &str) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| LoadError::Csv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(LoadError::Csv("missing header row".into()).into());
    }
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| LoadError::Csv(e.to_string()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() == 1 && rec.get(0) == Some("") && header.len() > 1 {
            continue; // blank line
        }
        if rec.len() != header.len() {
            return Err(LoadError::Ragged {
                line,
                expected: header.len(),
                found: rec.len(),
            }
            .into());
        }
        rows.push(rec.iter().map(str::to_string).collect());
        lines.push(line);
    }
    Ok(RawTable { header, rows, lines })
}

fn parse_target(raw: &RawTable, col: usize, task: Option<Task>, opts: &CsvOptions) -> Result<Target> {
    let name = raw.header[col].clone();
    for (r, line) in raw.rows.iter().zip(&raw.lines) {
        if opts.is_na(&r[col]) {
            return Err(LoadError::MissingTargetValue { line: *line }.into());
        }
    }
    let all_numeric = raw.rows.iter().all(|r| r[col].trim().parse::<f64>().is_ok());
    let task = match task {
        Some(t) => t,
        None if all_numeric => Task::Regression,
        None => {
            let mut seen = std::collections::HashSet::new();
            for r in &raw.rows {
                seen.insert(r[col].as_str());
            }
            if seen.len() == 2 {
                Task::BinaryClassification
            } else {
                Task::MulticlassClassification
            }
        }
    };
    if task == Task::Regression {
        let mut values = Vec::with_capacity(raw.rows.len());
        for (r, line) in raw.rows.iter().zip(&raw.lines) {
            let v = r[col].trim().parse::<f64>().map_err(|_| LoadError::NotNumeric {
                column: name.clone(),
                line: *line,
                value: r[col].clone(),
            })?;
            values.push(v);
        }
        return Ok(Target {
            name,
            values,
            levels: Vec::new(),
            task,
        });
    }
    let (codes, levels) = encode_levels(raw.rows.iter().map(|r| Some(r[col].as_str())));
    let n_levels = levels.len();
    let ok = match task {
        Task::BinaryClassification => n_levels == 2,
        Task::MulticlassClassification => n_levels >= 3,
        Task::Regression => true,
    };
    if !ok {
        let (task_name, needed) = if task == Task::BinaryClassification {
            ("binary classification", "exactly 2")
        } else {
            ("multiclass classification", "at least 3")
        };
        return Err(LoadError::TargetLevels {
            target: name,
            levels: n_levels,
            task: task_name,
            needed,
        }
        .into());
    }
    Ok(Target {
        name,
        values: codes.into_iter().map(|c| c as f64).collect(),
        levels,
        task,
    })
}

fn encode_levels<'a>(values: impl Iterator<Item = Option<&'a str>>) -> (Vec<u32>, Vec<String>) {
    let mut index: HashMap<&str, u32> = HashMap::new();
    let mut levels = Vec::new();
    let mut codes = Vec::new();
    for v in values {
        match v {
            None => codes.push(MISSING_CODE),
            Some(s) => {
                let code = *index.entry(s).or_insert_with(|| {
                    levels.push(s.to_string());
                    (levels.len() - 1) as u32
                });
                codes.push(code);
            }
        }
    }
    (codes, levels)
}

fn infer_column(raw: &RawTable, col: usize, opts: &CsvOptions) -> (ColumnSchema, ColumnData) {
    let name = raw.header[col].clone();
    let numeric = raw
        .rows
        .iter()
        .filter(|r| !opts.is_na(&r[col]))
        .all(|r| r[col].trim().parse::<f64>().is_ok());
    if numeric {
        let values: Vec<f64> = raw
            .rows
            .iter()
            .map(|r| {
                if opts.is_na(&r[col]) {
                    f64::NAN
                } else {
                    r[col].trim().parse::<f64>().unwrap_or(f64::NAN)
                }
            })
            .collect();
        let missing_count = values.iter().filter(|v| v.is_nan()).count();
        (
            ColumnSchema {
                name,
                kind: ColumnKind::Numeric,
                levels: Vec::new(),
                missing_count,
            },
            ColumnData::Numeric(values),
        )
    } else {
        let (codes, levels) = encode_levels(raw.rows.iter().map(|r| {
            if opts.is_na(&r[col]) {
                None
            } else {
                Some(r[col].as_str())
            }
        }));
        let missing_count = codes.iter().filter(|&&c| c == MISSING_CODE).count();
        (
            ColumnSchema {
                name,
                kind: ColumnKind::Categorical,
                levels,
                missing_count,
            },
            ColumnData::Categorical(codes),
        )
    }
}

/// Load a CSV file, inferring column kinds. `task = None` auto-detects from the target.
pub fn load_csv(path: &Path, target: &str, task: Option<Task>, opts: &CsvOptions) -> Result<Dataset> {
    let raw = read_raw(path)?;
    table_to_dataset(raw, target, task, opts)
}

/// In-memory variant of [`load_csv`].
pub fn parse_csv(text: &str, target: &str, task: Option<Task>, opts: &CsvOptions) -> Result<Dataset> {
    table_to_dataset(read_raw_str(text)?, target, task, opts)
}

fn table_to_dataset(raw: RawTable, target: &str, task: Option<Task>, opts: &CsvOptions) -> Result<Dataset> {
    let tcol = raw
        .header
        .iter()
        .position(|h| h == target)
        .ok_or_else(|| LoadError::MissingTarget(target.to_string()))?;
    if raw.rows.is_empty() {
        return Err(LoadError::NoRows.into());
    }
    let target = parse_target(&raw, tcol, task, opts)?;
    let mut schema = Vec::new();
    let mut columns = Vec::new();
    for col in (0..raw.header.len()).filter(|&c| c != tcol) {
        let (s, c) = infer_column(&raw, col, opts);
        schema.push(s);
        columns.push(c);
    }
    Dataset::new(schema, columns, Some(target))
}

/// Load feature columns following a known schema (no kind inference). Columns not in
/// the schema are ignored; the target is not read. Unseen categorical levels are
/// appended to the returned schema's level list. Zero data rows are allowed.
pub fn load_csv_with_schema(path: &Path, schema: &[ColumnSchema], opts: &CsvOptions) -> Result<Dataset> {
    let raw = read_raw(path)?;
    table_with_schema(raw, schema, opts)
}

pub fn parse_csv_with_schema(text: &str, schema: &[ColumnSchema], opts: &CsvOptions) -> Result<Dataset> {
    table_with_schema(read_raw_str(text)?, schema, opts)
}

fn table_with_schema(raw: RawTable, schema: &[ColumnSchema], opts: &CsvOptions) -> Result<Dataset> {
    let missing: Vec<&str> = schema
        .iter()
        .filter(|s| !raw.header.iter().any(|h| h == &s.name))
        .map(|s| s.name.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Schema(format!("missing columns: {}", missing.join(", "))));
    }
    let mut out_schema = Vec::new();
    let mut columns = Vec::new();
    let mut bad = Vec::new();
    for s in schema {
        let col = raw.header.iter().position(|h| h == &s.name).unwrap_or(0);
        match s.kind {
            ColumnKind::Numeric => {
                let mut values = Vec::with_capacity(raw.rows.len());
                for (r, line) in raw.rows.iter().zip(&raw.lines) {
                    let cell = &r[col];
                    if opts.is_na(cell) {
                        values.push(f64::NAN);
                    } else {
                        match cell.trim().parse::<f64>() {
                            Ok(v) => values.push(v),
                            Err(_) => {
                                bad.push(format!("{} (line {line}: `{cell}` is not numeric)", s.name));
                                values.push(f64::NAN);
                                break;
                            }
                        }
                    }
                }
                values.resize(raw.rows.len(), f64::NAN);
                out_schema.push(ColumnSchema {
                    name: s.name.clone(),
                    kind: ColumnKind::Numeric,
                    levels: Vec::new(),
                    missing_count: values.iter().filter(|v| v.is_nan()).count(),
                });
                columns.push(ColumnData::Numeric(values));
            }
            ColumnKind::Categorical => {
                let mut levels = s.levels.clone();
                let mut index: HashMap<String, u32> =
                    levels.iter().enumerate().map(|(i, l)| (l.clone(), i as u32)).collect();
                let codes: Vec<u32> = raw
                    .rows
                    .iter()
                    .map(|r| {
                        let cell = &r[col];
                        if opts.is_na(cell) {
                            MISSING_CODE
                        } else if let Some(&c) = index.get(cell) {
                            c
                        } else {
                            levels.push(cell.clone());
                            let c = (levels.len() - 1) as u32;
                            index.insert(cell.clone(), c);
                            c
                        }
                    })
                    .collect();
                out_schema.push(ColumnSchema {
                    name: s.name.clone(),
                    kind: ColumnKind::Categorical,
                    missing_count: codes.iter().filter(|&&c| c == MISSING_CODE).count(),
                    levels,
                });
                columns.push(ColumnData::Categorical(codes));
            }
        }
    }
    if !bad.is_empty() {
        return Err(Error::Schema(format!("mistyped columns: {}", bad.join(", "))));
    }
    Dataset::new(out_schema, columns, None)
}

/// Write features (and the target, if present, as the last column).
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    write_csv_to(ds, file)
}

pub fn write_csv_to<W: Write>(ds: &Dataset, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let map_err = |e: csv::Error| Error::io("writing csv", std::io::Error::other(e.to_string()));
    let mut header: Vec<&str> = ds.schema.iter().map(|s| s.name.as_str()).collect();
    if let Some(t) = &ds.target {
        header.push(&t.name);
    }
    wtr.write_record(&header).map_err(map_err)?;
    for i in 0..ds.n_rows() {
        let mut rec: Vec<String> = Vec::with_capacity(header.len());
        for (s, c) in ds.schema.iter().zip(&ds.columns) {
            rec.push(match c {
                ColumnData::Numeric(v) if v[i].is_nan() => "NA".to_string(),
                ColumnData::Numeric(v) => format!("{:?}", v[i]),
                ColumnData::Categorical(v) if v[i] == MISSING_CODE => "NA".to_string(),
                ColumnData::Categorical(v) => s.levels[v[i] as usize].clone(),
            });
        }
        if let Some(t) = &ds.target {
            rec.push(if t.task.is_classification() {
                t.levels[t.values[i] as usize].clone()
            } else {
                format!("{:?}", t.values[i])
            });
        }
        wtr.write_record(&rec).map_err(map_err)?;
    }
    wtr.flush().map_err(|e| Error::io("writing csv", e))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Splitting and subsampling

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub validation_fraction: f64,
    pub seed: u64,
    pub stratify: bool,
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub validation: Dataset,
    pub train_rows: Vec<usize>,
    pub validation_rows: Vec<usize>,
    /// Set when stratification was requested but impossible.
    pub warning: Option<String>,
}

pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<Split> {
    let n = ds.n_rows();
    if n < 10 {
        return Err(Error::Config(format!("split needs at least 10 rows, got {n}")));
    }
    let frac = spec.validation_fraction;
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::Config(format!("validation fraction {frac} not in (0, 1)")));
    }
    let n_val_total = (frac * n as f64).round() as usize;
    if n_val_total < 1 || n_val_total >= n {
        return Err(Error::Config(format!(
            "validation fraction {frac} leaves an empty side on {n} rows"
        )));
    }
    let mut rng = seeded_rng(spec.seed);
    let mut warning = None;
    let mut val_rows: Vec<usize> = Vec::new();
    let groups = if spec.stratify { ds.class_groups() } else { None };
    match groups {
        Some(groups) if groups.iter().all(|g| g.len() != 1) => {
            for mut g in groups {
                g.shuffle(&mut rng);
                let k = (frac * g.len() as f64).round() as usize;
                val_rows.extend_from_slice(&g[..k]);
            }
        }
        other => {
            if other.is_some() {
                warning = Some("a class has a single row; falling back to an unstratified split".into());
            }
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            val_rows.extend_from_slice(&idx[..n_val_total]);
        }
    }
    if val_rows.is_empty() || val_rows.len() >= n {
        return Err(Error::Config(format!(
            "validation fraction {frac} leaves an empty side on {n} rows"
        )));
    }
    val_rows.sort_unstable();
    let mut is_val = vec![false; n];
    for &i in &val_rows {
        is_val[i] = true;
    }
    let train_rows: Vec<usize> = (0..n).filter(|&i| !is_val[i]).collect();
    Ok(Split {
        train: ds.select_rows(&train_rows),
        validation: ds.select_rows(&val_rows),
        train_rows,
        validation_rows: val_rows,
        warning,
    })
}

/// Row indices of a subsample without replacement, sorted. Stratified for classification.
pub fn subsample_rows(ds: &Dataset, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    let n = ds.n_rows();
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("subsample fraction {fraction} not in (0, 1]")));
    }
    let total = (fraction * n as f64 + 1e-9).floor() as usize;
    if total < 1 {
        return Err(Error::Config(format!(
            "subsample fraction {fraction} selects no rows out of {n}"
        )));
    }
    if total >= n {
        return Ok((0..n).collect());
    }
    let mut rng = seeded_rng(seed);
    let mut rows = match ds.class_groups() {
        Some(groups) => {
            let quotas = stratified_quotas(&groups, total, fraction);
            let mut rows = Vec::with_capacity(total);
            for (mut g, q) in groups.into_iter().zip(quotas) {
                g.shuffle(&mut rng);
                rows.extend_from_slice(&g[..q]);
            }
            rows
        }
        None => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            idx.truncate(total);
            idx
        }
    };
    rows.sort_unstable();
    Ok(rows)
}

/// Largest-remainder allocation of `total` rows over classes; every present class keeps
/// at least one row when the total allows it.
fn stratified_quotas(groups: &[Vec<usize>], total: usize, fraction: f64) -> Vec<usize> {
    let exact: Vec<f64> = groups.iter().map(|g| fraction * g.len() as f64).collect();
    let mut quotas: Vec<usize> = exact.iter().map(|e| (e + 1e-9).floor() as usize).collect();
    let mut assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - quotas[a] as f64;
        let rb = exact[b] - quotas[b] as f64;
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &c in order.iter().cycle().take(groups.len() * 2) {
        if assigned >= total {
            break;
        }
        if quotas[c] < groups[c].len() {
            quotas[c] += 1;
            assigned += 1;
        }
    }
    let present = groups.iter().filter(|g| !g.is_empty()).count();
    if total >= present {
        for c in 0..groups.len() {
            if !groups[c].is_empty() && quotas[c] == 0 {
                if let Some(donor) = (0..groups.len()).max_by_key(|&d| quotas[d]) {
                    if quotas[donor] > 1 {
                        quotas[donor] -= 1;
                        quotas[c] = 1;
                    }
                }
            }
        }
    }
    quotas
}

pub fn subsample(ds: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if fraction == 1.0 {
        return Ok(ds.clone());
    }
    let rows = subsample_rows(ds, fraction, seed)?;
    Ok(ds.select_rows(&rows))
}

/// Stratified (classification) or plain k-fold assignment; fold index per row.
pub fn kfold_assignment(ds: &Dataset, k: usize, seed: u64) -> Vec<usize> {
    let n = ds.n_rows();
    let mut rng = seeded_rng(seed);
    let mut fold = vec![0usize; n];
    let groups = ds.class_groups().unwrap_or_else(|| vec![(0..n).collect()]);
    let mut offset = 0usize;
    for mut g in groups {
        g.shuffle(&mut rng);
        for (pos, &i) in g.iter().enumerate() {
            fold[i] = (pos + offset) % k;
        }
        offset += g.len();
    }
    fold
}
