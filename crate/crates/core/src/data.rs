//! Dataset ingestion, feature schemas, GLM encoding, and synthetic data
//! generation for self-verification.
//!
//! A [`Schema`] declares the target column and a role for every other
//! column; [`load_csv`] turns a delimited file into a typed [`Dataset`]
//! with interned categorical levels and a validated nonnegative target.
//! [`generate_synthetic`] draws Tweedie-distributed targets from a known
//! mean function and returns that mean function as an oracle, so the
//! conformal machinery can be tested against ground truth.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::rng_from_seed;
use crate::tweedie::{sample_cpg, TweedieParams};

/// Hard ceiling on interned categorical levels per column.
const MAX_CATEGORY_LEVELS: usize = 1024;
/// How many offending rows a data error lists before truncating.
const MAX_REPORTED_ROWS: usize = 20;

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

/// Role of a column in the input file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnRole {
    Numeric,
    Categorical,
    Ignore,
}

/// Per-column declaration: a role, plus optional pre-declared categorical
/// levels that pin the interning order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnSpec {
    Role(ColumnRole),
    Detailed {
        role: ColumnRole,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        levels: Option<Vec<String>>,
    },
}

impl ColumnSpec {
    pub fn role(&self) -> ColumnRole {
        match self {
            ColumnSpec::Role(r) => *r,
            ColumnSpec::Detailed { role, .. } => *role,
        }
    }

    fn declared_levels(&self) -> Option<&[String]> {
        match self {
            ColumnSpec::Role(_) => None,
            ColumnSpec::Detailed { levels, .. } => levels.as_deref(),
        }
    }
}

/// Declares the target column and the role of every feature column.
///
/// Serialized as `{"target": "...", "columns": {"name": "numeric" | "categorical" | "ignore"}}`;
/// a column may also use the long form `{"role": "categorical", "levels": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub target: String,
    pub columns: BTreeMap<String, ColumnSpec>,
}

impl Schema {
    pub fn new(target: impl Into<String>, columns: BTreeMap<String, ColumnSpec>) -> Result<Self> {
        let schema = Self {
            target: target.into(),
            columns,
        };
        schema.validate()?;
        Ok(schema)
    }

    fn validate(&self) -> Result<()> {
        if self.target.is_empty() {
            return Err(Error::data("schema target column name is empty"));
        }
        if self.columns.contains_key(&self.target) {
            return Err(Error::data(format!(
                "target column '{}' must not also appear under columns",
                self.target
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schema: Schema = serde_json::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Default schema for the AutoClaim auto-insurance data: total 5-year
    /// claim amount as target; policy number, policy date, 5-year claim
    /// count, and current-period claim amount excluded; every other column
    /// kept as a feature.
    pub fn autoclaim_default() -> Self {
        use ColumnRole::*;
        let mut columns = BTreeMap::new();
        let entries: [(&str, ColumnRole); 27] = [
            ("POLICYNO", Ignore),
            ("PLCYDATE", Ignore),
            ("CLM_FREQ5", Ignore),
            ("CLM_AMT", Ignore),
            ("KIDSDRIV", Numeric),
            ("TRAVTIME", Numeric),
            ("CAR_USE", Categorical),
            ("BLUEBOOK", Numeric),
            ("RETAINED", Numeric),
            ("NPOLICY", Numeric),
            ("CAR_TYPE", Categorical),
            ("RED_CAR", Categorical),
            ("REVOLKED", Categorical),
            ("MVR_PTS", Numeric),
            ("CLM_FLAG", Categorical),
            ("AGE", Numeric),
            ("HOMEKIDS", Numeric),
            ("YOJ", Numeric),
            ("INCOME", Numeric),
            ("GENDER", Categorical),
            ("MARRIED", Categorical),
            ("PARENT1", Categorical),
            ("JOBCLASS", Categorical),
            ("MAX_EDUC", Categorical),
            ("HOME_VAL", Numeric),
            ("SAMEHOME", Numeric),
            ("AREA", Categorical),
        ];
        for (name, role) in entries {
            columns.insert(name.to_string(), ColumnSpec::Role(role));
        }
        Schema {
            target: "CLM_AMT5".to_string(),
            columns,
        }
    }
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

/// What to do with empty/unparseable feature cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPolicy {
    /// Any missing cell is a data error (default).
    #[default]
    Reject,
    /// Missing numeric cells become `NaN` markers (imputed to the column
    /// median by the GLM encoder, routed to a dedicated low bin by the
    /// tree learner); missing categorical cells become their own level.
    Impute,
}

/// Typed storage of one feature column.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    /// Finite values, except that a `NaN` marks a missing cell loaded under
    /// [`MissingPolicy::Impute`].
    Numeric(Vec<f64>),
    Categorical { codes: Vec<u32>, levels: Vec<String> },
}

/// Named feature column.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

/// Shape of one feature, as recorded by fitted models for schema checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub name: String,
    pub kind: FeatureKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureKind {
    Numeric,
    Categorical { levels: Vec<String> },
}

/// One feature value of one row, borrowed from a [`Dataset`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureValue<'a> {
    /// `NaN` marks a missing cell (impute policy only).
    Numeric(f64),
    Categorical(&'a str),
}

impl fmt::Display for FeatureValue<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureValue::Numeric(v) => write!(f, "{v}"),
            FeatureValue::Categorical(s) => write!(f, "{s}"),
        }
    }
}

/// Immutable feature matrix plus nonnegative target vector.
///
/// Every dataset carries a content-derived `source_id` and per-row
/// identities so that fitted models can record exactly which rows they saw;
/// the conformal layer uses this to reject calibration sets that overlap
/// the training rows.
#[derive(Debug, Clone)]
pub struct Dataset {
    columns: Vec<Column>,
    target: Vec<f64>,
    target_name: String,
    source_id: u64,
    row_ids: Vec<u32>,
}

impl Dataset {
    /// Assemble a dataset from columns and a target vector, validating
    /// lengths, target nonnegativity, and numeric finiteness.
    pub fn from_parts(columns: Vec<Column>, target: Vec<f64>, target_name: impl Into<String>) -> Result<Self> {
        let n = target.len();
        if n == 0 {
            return Err(Error::data("dataset has no rows"));
        }
        for col in &columns {
            let len = match &col.data {
                ColumnData::Numeric(v) => v.len(),
                ColumnData::Categorical { codes, .. } => codes.len(),
            };
            if len != n {
                return Err(Error::data(format!(
                    "column '{}' has {} rows but target has {}",
                    col.name, len, n
                )));
            }
            if let ColumnData::Categorical { codes, levels } = &col.data {
                if levels.len() > MAX_CATEGORY_LEVELS {
                    return Err(Error::data(format!(
                        "column '{}' has {} levels (limit {MAX_CATEGORY_LEVELS}); consider role 'ignore' or 'numeric'",
                        col.name,
                        levels.len()
                    )));
                }
                if codes.iter().any(|&c| c as usize >= levels.len()) {
                    return Err(Error::data(format!("column '{}' has out-of-range level codes", col.name)));
                }
            }
            if let ColumnData::Numeric(v) = &col.data {
                if v.iter().any(|x| x.is_infinite()) {
                    return Err(Error::data(format!("column '{}' contains infinite values", col.name)));
                }
            }
        }
        for (i, &y) in target.iter().enumerate() {
            if !y.is_finite() || y < 0.0 {
                return Err(Error::data(format!(
                    "target row {i} is {y}; targets must be finite and nonnegative"
                )));
            }
        }
        let target_name = target_name.into();
        let source_id = fingerprint(&columns, &target, &target_name);
        Ok(Self {
            columns,
            target,
            target_name,
            source_id,
            row_ids: (0..n as u32).collect(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    /// Content-derived identity of the originating source.
    pub fn source_id(&self) -> u64 {
        self.source_id
    }

    /// Identities of the rows relative to the originating source.
    pub fn row_ids(&self) -> &[u32] {
        &self.row_ids
    }

    /// Borrow row `i` as a vector of feature values, in column order.
    pub fn feature_row(&self, i: usize) -> Vec<FeatureValue<'_>> {
        self.columns
            .iter()
            .map(|col| match &col.data {
                ColumnData::Numeric(v) => FeatureValue::Numeric(v[i]),
                ColumnData::Categorical { codes, levels } => {
                    FeatureValue::Categorical(levels[codes[i] as usize].as_str())
                }
            })
            .collect()
    }

    /// Feature shapes, for recording in fitted models.
    pub fn feature_meta(&self) -> Vec<FeatureMeta> {
        self.columns
            .iter()
            .map(|col| FeatureMeta {
                name: col.name.clone(),
                kind: match &col.data {
                    ColumnData::Numeric(_) => FeatureKind::Numeric,
                    ColumnData::Categorical { levels, .. } => FeatureKind::Categorical {
                        levels: levels.clone(),
                    },
                },
            })
            .collect()
    }

    /// New dataset holding the given rows (by position), preserving source
    /// identity so provenance checks can detect overlaps.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        for &i in indices {
            if i >= self.n_rows() {
                return Err(Error::parameter(format!(
                    "subset index {i} out of range for {} rows",
                    self.n_rows()
                )));
            }
        }
        let columns = self
            .columns
            .iter()
            .map(|col| Column {
                name: col.name.clone(),
                data: match &col.data {
                    ColumnData::Numeric(v) => ColumnData::Numeric(indices.iter().map(|&i| v[i]).collect()),
                    ColumnData::Categorical { codes, levels } => ColumnData::Categorical {
                        codes: indices.iter().map(|&i| codes[i]).collect(),
                        levels: levels.clone(),
                    },
                },
            })
            .collect();
        Ok(Self {
            columns,
            target: indices.iter().map(|&i| self.target[i]).collect(),
            target_name: self.target_name.clone(),
            source_id: self.source_id,
            row_ids: indices.iter().map(|&i| self.row_ids[i]).collect(),
        })
    }

    /// Write the dataset back out as CSV (features, then the target column).
    ///
    /// Numeric cells use the shortest representation that round-trips, so a
    /// reload reproduces the stored values exactly.
    pub fn to_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        let mut header: Vec<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        header.push(&self.target_name);
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut record: Vec<String> = self
                .feature_row(i)
                .iter()
                .map(|v| match v {
                    FeatureValue::Numeric(x) if x.is_nan() => String::new(),
                    other => other.to_string(),
                })
                .collect();
            record.push(format!("{}", self.target[i]));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// FNV-1a over the dataset's defining content.
fn fingerprint(columns: &[Column], target: &[f64], target_name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    eat(&(target.len() as u64).to_le_bytes());
    eat(target_name.as_bytes());
    for col in columns {
        eat(col.name.as_bytes());
    }
    for &y in target {
        eat(&y.to_bits().to_le_bytes());
    }
    h
}

// ---------------------------------------------------------------------------
// CSV loading
// ---------------------------------------------------------------------------

enum ColumnBuilder {
    Numeric(Vec<f64>),
    Categorical {
        codes: Vec<u32>,
        levels: Vec<String>,
    },
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("n/a") || t.eq_ignore_ascii_case("null")
}

/// Load a CSV file under the given schema with the default
/// [`MissingPolicy::Reject`].
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    load_csv_with(path, schema, MissingPolicy::Reject)
}

/// Load a CSV file under the given schema and missing-cell policy.
///
/// The file must have a header row. Every header must be either the schema
/// target or a declared column; rows whose target cell is missing,
/// unparseable, negative, or non-finite are reported by row number.
pub fn load_csv_with(path: impl AsRef<Path>, schema: &Schema, policy: MissingPolicy) -> Result<Dataset> {
    load_csv_inner(path, schema, policy, true)
}

/// Load a feature-only CSV (e.g. rows to predict on): the target column is
/// optional and filled with zeros when absent.
pub fn load_query_csv(path: impl AsRef<Path>, schema: &Schema, policy: MissingPolicy) -> Result<Dataset> {
    load_csv_inner(path, schema, policy, false)
}

fn load_csv_inner(
    path: impl AsRef<Path>,
    schema: &Schema,
    policy: MissingPolicy,
    require_target: bool,
) -> Result<Dataset> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path.as_ref())?;

    let headers: Vec<String> = reader.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let target_pos = match headers.iter().position(|h| h == &schema.target) {
        Some(pos) => Some(pos),
        None if require_target => {
            return Err(Error::data(format!(
                "target column '{}' not found in header",
                schema.target
            )))
        }
        None => None,
    };

    // Map header position -> builder slot (None for ignored columns).
    let mut builders: Vec<Option<(String, ColumnBuilder)>> = Vec::with_capacity(headers.len());
    for (pos, name) in headers.iter().enumerate() {
        if Some(pos) == target_pos {
            builders.push(None);
            continue;
        }
        let spec = schema
            .columns
            .get(name)
            .ok_or_else(|| Error::data(format!("column '{name}' is not declared in the schema")))?;
        let builder = match spec.role() {
            ColumnRole::Ignore => None,
            ColumnRole::Numeric => Some((name.clone(), ColumnBuilder::Numeric(Vec::new()))),
            ColumnRole::Categorical => Some((
                name.clone(),
                ColumnBuilder::Categorical {
                    codes: Vec::new(),
                    levels: spec.declared_levels().map(<[String]>::to_vec).unwrap_or_default(),
                },
            )),
        };
        builders.push(builder);
    }

    let mut target = Vec::new();
    let mut problems: Vec<String> = Vec::new();
    let mut problem_count = 0usize;
    let note = |msg: String, problems: &mut Vec<String>| {
        if problems.len() < MAX_REPORTED_ROWS {
            problems.push(msg);
        }
    };

    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let row_no = row_idx + 2; // 1-based, after the header line
        if record.len() != headers.len() {
            problem_count += 1;
            note(
                format!("row {row_no}: expected {} fields, found {}", headers.len(), record.len()),
                &mut problems,
            );
            continue;
        }

        let y = match target_pos {
            None => 0.0,
            Some(pos) => {
                let raw_target = record.get(pos).unwrap_or("");
                match raw_target.trim().parse::<f64>() {
                    Ok(v) if v.is_finite() && v >= 0.0 => v,
                    Ok(v) => {
                        problem_count += 1;
                        note(
                            format!("row {row_no}: target '{}' is {v}; must be finite and nonnegative", schema.target),
                            &mut problems,
                        );
                        continue;
                    }
                    Err(_) => {
                        problem_count += 1;
                        note(
                            format!("row {row_no}: target '{}' cell '{}' is not a number", schema.target, raw_target),
                            &mut problems,
                        );
                        continue;
                    }
                }
            }
        };

        let mut row_ok = true;
        let mut parsed_num: Vec<(usize, f64)> = Vec::new();
        let mut parsed_cat: Vec<(usize, String)> = Vec::new();
        for (pos, cell) in record.iter().enumerate() {
            let Some((name, builder)) = builders[pos].as_ref() else {
                continue;
            };
            match builder {
                ColumnBuilder::Numeric(_) => {
                    if is_missing(cell) {
                        match policy {
                            MissingPolicy::Reject => {
                                problem_count += 1;
                                note(format!("row {row_no}: numeric column '{name}' is missing"), &mut problems);
                                row_ok = false;
                            }
                            MissingPolicy::Impute => parsed_num.push((pos, f64::NAN)),
                        }
                    } else {
                        match cell.trim().parse::<f64>() {
                            Ok(v) if v.is_finite() => parsed_num.push((pos, v)),
                            _ => {
                                problem_count += 1;
                                note(
                                    format!("row {row_no}: numeric column '{name}' cell '{cell}' is not finite"),
                                    &mut problems,
                                );
                                row_ok = false;
                            }
                        }
                    }
                }
                ColumnBuilder::Categorical { .. } => {
                    if is_missing(cell) && policy == MissingPolicy::Reject {
                        problem_count += 1;
                        note(format!("row {row_no}: categorical column '{name}' is missing"), &mut problems);
                        row_ok = false;
                    } else {
                        parsed_cat.push((pos, cell.trim().to_string()));
                    }
                }
            }
        }
        if !row_ok {
            continue;
        }

        target.push(y);
        for (pos, v) in parsed_num {
            if let Some((_, ColumnBuilder::Numeric(values))) = builders[pos].as_mut() {
                values.push(v);
            }
        }
        for (pos, s) in parsed_cat {
            if let Some((name, ColumnBuilder::Categorical { codes, levels })) = builders[pos].as_mut() {
                let code = match levels.iter().position(|l| l == &s) {
                    Some(idx) => idx as u32,
                    None => {
                        if levels.len() >= MAX_CATEGORY_LEVELS {
                            return Err(Error::data(format!(
                                "column '{name}' exceeds {MAX_CATEGORY_LEVELS} levels; consider role 'ignore' or 'numeric'"
                            )));
                        }
                        levels.push(s);
                        (levels.len() - 1) as u32
                    }
                };
                codes.push(code);
            }
        }
    }

    if problem_count > 0 {
        let mut msg = format!(
            "{} row(s) rejected while loading '{}':\n  {}",
            problem_count,
            path.as_ref().display(),
            problems.join("\n  ")
        );
        if problem_count > problems.len() {
            msg.push_str(&format!("\n  ... and {} more", problem_count - problems.len()));
        }
        return Err(Error::data(msg));
    }

    let columns: Vec<Column> = builders
        .into_iter()
        .flatten()
        .map(|(name, b)| Column {
            name,
            data: match b {
                ColumnBuilder::Numeric(values) => ColumnData::Numeric(values),
                ColumnBuilder::Categorical { codes, levels } => ColumnData::Categorical { codes, levels },
            },
        })
        .collect();

    Dataset::from_parts(columns, target, schema.target.clone())
}

// ---------------------------------------------------------------------------
// GLM encoding
// ---------------------------------------------------------------------------

/// Dense row-major design matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl DesignMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            data: vec![0.0; rows * cols],
            rows,
            cols,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// How one encoded design column is derived from a source feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EncodedColumnKind {
    /// Raw numeric value; missing cells replaced by the training median.
    Numeric { impute: f64 },
    /// 0/1 indicator of one categorical level (first level dropped).
    Indicator { level: u32 },
}

/// One column of the standardized design matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedColumn {
    pub feature: usize,
    pub kind: EncodedColumnKind,
    pub mean: f64,
    pub scale: f64,
}

/// Deterministic map from raw feature rows to standardized design rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmEncoding {
    pub features: Vec<FeatureMeta>,
    pub columns: Vec<EncodedColumn>,
}

impl GlmEncoding {
    /// Human-readable name of an encoded column.
    pub fn column_name(&self, j: usize) -> String {
        let col = &self.columns[j];
        let meta = &self.features[col.feature];
        match (&col.kind, &meta.kind) {
            (EncodedColumnKind::Numeric { .. }, _) => meta.name.clone(),
            (EncodedColumnKind::Indicator { level }, FeatureKind::Categorical { levels }) => {
                format!("{}={}", meta.name, levels[*level as usize])
            }
            (EncodedColumnKind::Indicator { level }, FeatureKind::Numeric) => {
                format!("{}={level}", meta.name)
            }
        }
    }

    /// Encode one raw feature row into a standardized design row.
    ///
    /// Categorical levels unseen at training encode as all-zero indicators
    /// (the dropped baseline), keeping prediction total.
    pub fn encode_row(&self, row: &[FeatureValue<'_>]) -> Result<Vec<f64>> {
        if row.len() != self.features.len() {
            return Err(Error::data(format!(
                "feature row has {} values but the encoding expects {}",
                row.len(),
                self.features.len()
            )));
        }
        let mut out = Vec::with_capacity(self.columns.len());
        for col in &self.columns {
            let meta = &self.features[col.feature];
            let raw = match (&col.kind, &row[col.feature]) {
                (EncodedColumnKind::Numeric { impute }, FeatureValue::Numeric(v)) => {
                    if v.is_nan() {
                        *impute
                    } else {
                        *v
                    }
                }
                (EncodedColumnKind::Indicator { level }, FeatureValue::Categorical(s)) => {
                    let FeatureKind::Categorical { levels } = &meta.kind else {
                        return Err(Error::data(format!("feature '{}' is not categorical", meta.name)));
                    };
                    match levels.iter().position(|l| l == s) {
                        Some(idx) if idx as u32 == *level => 1.0,
                        _ => 0.0,
                    }
                }
                (_, val) => {
                    return Err(Error::data(format!(
                        "feature '{}' has value '{}' of the wrong type",
                        meta.name, val
                    )))
                }
            };
            out.push((raw - col.mean) / col.scale);
        }
        Ok(out)
    }
}

fn median(values: &mut Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// One-hot (first level dropped) and standardize the dataset for the GLM.
///
/// Constant columns are dropped with a warning. The returned encoding
/// reproduces the design matrix exactly when re-applied to the same rows.
pub fn encode_for_glm(ds: &Dataset) -> Result<(DesignMatrix, GlmEncoding)> {
    let n = ds.n_rows();
    let features = ds.feature_meta();
    let mut raw_columns: Vec<(EncodedColumn, Vec<f64>)> = Vec::new();

    for (f_idx, col) in ds.columns().iter().enumerate() {
        match &col.data {
            ColumnData::Numeric(values) => {
                let mut present: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
                let impute = median(&mut present);
                let filled: Vec<f64> = values.iter().map(|&v| if v.is_nan() { impute } else { v }).collect();
                raw_columns.push((
                    EncodedColumn {
                        feature: f_idx,
                        kind: EncodedColumnKind::Numeric { impute },
                        mean: 0.0,
                        scale: 1.0,
                    },
                    filled,
                ));
            }
            ColumnData::Categorical { codes, levels } => {
                // Drop the first level as the baseline.
                for level in 1..levels.len() as u32 {
                    let indicator: Vec<f64> = codes.iter().map(|&c| if c == level { 1.0 } else { 0.0 }).collect();
                    raw_columns.push((
                        EncodedColumn {
                            feature: f_idx,
                            kind: EncodedColumnKind::Indicator { level },
                            mean: 0.0,
                            scale: 1.0,
                        },
                        indicator,
                    ));
                }
            }
        }
    }

    // Standardize, dropping constant columns.
    let mut kept: Vec<(EncodedColumn, Vec<f64>)> = Vec::new();
    for (mut spec, values) in raw_columns {
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let scale = var.sqrt();
        if scale <= 1e-12 {
            log::warn!(
                "dropping constant design column for feature '{}'",
                features[spec.feature].name
            );
            continue;
        }
        spec.mean = mean;
        spec.scale = scale;
        kept.push((spec, values));
    }

    let cols = kept.len();
    let mut design = DesignMatrix::zeros(n, cols);
    for i in 0..n {
        let row = design.row_mut(i);
        for (j, (spec, values)) in kept.iter().enumerate() {
            row[j] = (values[i] - spec.mean) / spec.scale;
        }
    }
    let encoding = GlmEncoding {
        features,
        columns: kept.into_iter().map(|(spec, _)| spec).collect(),
    };
    Ok((design, encoding))
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Shape of the true mean function used by the synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeanFunction {
    /// `mu(x) = exp(b0 + sum_j b_j x_j + level effects)`.
    #[serde(rename = "linear")]
    LinearLogLink,
    /// Log link over nonlinear transforms (`sin`, squares, `|x|`) of the
    /// numeric features.
    Nonlinear,
}

/// Configuration of the synthetic Tweedie data generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_rows: usize,
    pub n_numeric: usize,
    pub n_categorical: usize,
    pub mean_function: MeanFunction,
    pub phi: f64,
    pub power: f64,
    /// When set, the dispersion varies with the first numeric feature, so
    /// the noise spread depends on x beyond the mean-variance relation.
    pub heteroscedastic: bool,
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.n_rows == 0 {
            return Err(Error::parameter("synthetic config needs n_rows >= 1"));
        }
        if self.n_numeric + self.n_categorical == 0 {
            return Err(Error::parameter("synthetic config needs at least one feature"));
        }
        if self.heteroscedastic && self.n_numeric == 0 {
            return Err(Error::parameter(
                "heteroscedastic synthetic data needs at least one numeric feature",
            ));
        }
        if !(self.phi.is_finite() && self.phi > 0.0) {
            return Err(Error::parameter(format!("phi must be positive, got {}", self.phi)));
        }
        TweedieParams::new(1.0, self.phi, self.power).map(|_| ())
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_rows: 2000,
            n_numeric: 4,
            n_categorical: 1,
            mean_function: MeanFunction::LinearLogLink,
            phi: 1.0,
            power: 1.5,
            heteroscedastic: false,
        }
    }
}

const SYNTH_LEVELS: [&str; 3] = ["a", "b", "c"];
/// Linear predictor clamp, keeping synthetic means in a sane range.
const ETA_CLAMP: f64 = 4.0;
/// Heteroscedastic dispersion multiplier bounds.
const PHI_FACTOR_RANGE: (f64, f64) = (0.2, 5.0);

/// The true mean and dispersion functions behind a synthetic dataset.
///
/// Serves as an oracle predictor in tests: it knows `E(Y|X=x)` exactly.
#[derive(Debug, Clone)]
pub struct SynthOracle {
    intercept: f64,
    numeric_coefs: Vec<f64>,
    level_effects: Vec<Vec<f64>>,
    mean_function: MeanFunction,
    phi: f64,
    power: f64,
    heteroscedastic: bool,
    n_numeric: usize,
}

impl SynthOracle {
    pub fn power(&self) -> f64 {
        self.power
    }

    fn eta(&self, row: &[FeatureValue<'_>]) -> Result<f64> {
        if row.len() != self.n_numeric + self.level_effects.len() {
            return Err(Error::data(format!(
                "oracle expects {} features, got {}",
                self.n_numeric + self.level_effects.len(),
                row.len()
            )));
        }
        let mut eta = self.intercept;
        for j in 0..self.n_numeric {
            let FeatureValue::Numeric(x) = row[j] else {
                return Err(Error::data(format!("feature {j} should be numeric")));
            };
            let t = match self.mean_function {
                MeanFunction::LinearLogLink => x,
                MeanFunction::Nonlinear => match j % 3 {
                    0 => (std::f64::consts::PI * x).sin(),
                    1 => 0.5 * x * x - 0.5,
                    _ => x.abs() - 0.8,
                },
            };
            eta += self.numeric_coefs[j] * t;
        }
        for (k, effects) in self.level_effects.iter().enumerate() {
            let FeatureValue::Categorical(s) = row[self.n_numeric + k] else {
                return Err(Error::data(format!("feature {} should be categorical", self.n_numeric + k)));
            };
            let idx = SYNTH_LEVELS
                .iter()
                .position(|l| *l == s)
                .ok_or_else(|| Error::data(format!("unknown synthetic level '{s}'")))?;
            eta += effects[idx];
        }
        Ok(eta.clamp(-ETA_CLAMP, ETA_CLAMP))
    }

    /// True conditional mean `E(Y | X = row)`.
    pub fn true_mean(&self, row: &[FeatureValue<'_>]) -> Result<f64> {
        Ok(self.eta(row)?.exp())
    }

    /// True conditional dispersion `phi(row)`.
    pub fn true_phi(&self, row: &[FeatureValue<'_>]) -> Result<f64> {
        if !self.heteroscedastic {
            return Ok(self.phi);
        }
        let FeatureValue::Numeric(x) = row[0] else {
            return Err(Error::data("heteroscedastic oracle expects a numeric first feature"));
        };
        let factor = (0.8 * x).exp().clamp(PHI_FACTOR_RANGE.0, PHI_FACTOR_RANGE.1);
        Ok(self.phi * factor)
    }

    /// True conditional standard deviation `sqrt(phi(x) * mu(x)^p)`.
    pub fn true_sd(&self, row: &[FeatureValue<'_>]) -> Result<f64> {
        let mu = self.true_mean(row)?;
        Ok((self.true_phi(row)? * mu.powf(self.power)).sqrt())
    }
}

/// A generated dataset together with its generating oracle.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub oracle: SynthOracle,
}

/// Draw a synthetic dataset with Tweedie targets from a known mean function.
///
/// The same `(config, seed)` pair always produces the same dataset.
pub fn generate_synthetic(cfg: &SynthConfig, seed: u64) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut rng = rng_from_seed(seed);

    // Coefficients first, so feature draws do not shift them.
    let intercept = rng.gen_range(-0.2..0.5);
    let numeric_coefs: Vec<f64> = (0..cfg.n_numeric)
        .map(|_| {
            let magnitude = rng.gen_range(0.25..0.6);
            if rng.gen_bool(0.5) {
                magnitude
            } else {
                -magnitude
            }
        })
        .collect();
    let level_effects: Vec<Vec<f64>> = (0..cfg.n_categorical)
        .map(|_| SYNTH_LEVELS.iter().map(|_| rng.gen_range(-0.4..0.4)).collect())
        .collect();

    let oracle = SynthOracle {
        intercept,
        numeric_coefs,
        level_effects,
        mean_function: cfg.mean_function,
        phi: cfg.phi,
        power: cfg.power,
        heteroscedastic: cfg.heteroscedastic,
        n_numeric: cfg.n_numeric,
    };

    let mut numeric: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.n_rows); cfg.n_numeric];
    let mut codes: Vec<Vec<u32>> = vec![Vec::with_capacity(cfg.n_rows); cfg.n_categorical];
    let mut target = Vec::with_capacity(cfg.n_rows);

    for _ in 0..cfg.n_rows {
        let xs: Vec<f64> = (0..cfg.n_numeric)
            .map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng))
            .collect();
        let cs: Vec<u32> = (0..cfg.n_categorical)
            .map(|_| rng.gen_range(0..SYNTH_LEVELS.len() as u32))
            .collect();

        let row: Vec<FeatureValue<'_>> = xs
            .iter()
            .map(|&x| FeatureValue::Numeric(x))
            .chain(cs.iter().map(|&c| FeatureValue::Categorical(SYNTH_LEVELS[c as usize])))
            .collect();
        let mu = oracle.true_mean(&row)?;
        let phi = oracle.true_phi(&row)?;
        let params = TweedieParams::new(mu, phi, cfg.power)?;
        let y = sample_cpg(&params, 1, &mut rng)[0];

        for (j, x) in xs.into_iter().enumerate() {
            numeric[j].push(x);
        }
        for (k, c) in cs.into_iter().enumerate() {
            codes[k].push(c);
        }
        target.push(y);
    }

    let mut columns = Vec::new();
    for (j, values) in numeric.into_iter().enumerate() {
        columns.push(Column {
            name: format!("x{}", j + 1),
            data: ColumnData::Numeric(values),
        });
    }
    for (k, c) in codes.into_iter().enumerate() {
        columns.push(Column {
            name: format!("c{}", k + 1),
            data: ColumnData::Categorical {
                codes: c,
                levels: SYNTH_LEVELS.iter().map(|s| s.to_string()).collect(),
            },
        });
    }
    let dataset = Dataset::from_parts(columns, target, "y")?;
    Ok(SyntheticData { dataset, oracle })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    fn toy_schema() -> Schema {
        let mut columns = BTreeMap::new();
        columns.insert("age".to_string(), ColumnSpec::Role(ColumnRole::Numeric));
        columns.insert("area".to_string(), ColumnSpec::Role(ColumnRole::Categorical));
        Schema::new("claim", columns).unwrap()
    }

    #[test]
    fn load_csv_toy_file() {
        let f = write_temp("age,area,claim\n25,urban,0\n40,rural,123.5\n33,urban,7\n");
        let ds = load_csv(f.path(), &toy_schema()).unwrap();
        assert_eq!(ds.n_rows(), 3);
        assert_eq!(ds.n_features(), 2);
        assert_eq!(ds.target(), &[0.0, 123.5, 7.0]);
        let row = ds.feature_row(1);
        assert_eq!(row[0], FeatureValue::Numeric(40.0));
        assert_eq!(row[1], FeatureValue::Categorical("rural"));
    }

    #[test]
    fn load_csv_negative_target_names_the_row() {
        let f = write_temp("age,area,claim\n25,urban,0\n40,rural,-1\n");
        let err = load_csv(f.path(), &toy_schema()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 3"), "unexpected message: {msg}");
        assert!(msg.contains("nonnegative"), "unexpected message: {msg}");
    }

    #[test]
    fn load_csv_unparseable_target_names_the_row() {
        let f = write_temp("age,area,claim\n25,urban,abc\n");
        let err = load_csv(f.path(), &toy_schema()).unwrap_err();
        assert!(err.to_string().contains("row 2"));
    }

    #[test]
    fn load_csv_missing_numeric_rejected_by_default_imputed_on_request() {
        let f = write_temp("age,area,claim\n25,urban,1\n,rural,2\n30,urban,3\n");
        assert!(load_csv(f.path(), &toy_schema()).is_err());

        let ds = load_csv_with(f.path(), &toy_schema(), MissingPolicy::Impute).unwrap();
        assert_eq!(ds.n_rows(), 3);
        let ColumnData::Numeric(values) = &ds.columns()[0].data else {
            panic!("age should be numeric")
        };
        assert!(values[1].is_nan());

        // The GLM encoder fills the marker with the column median.
        let (design, encoding) = encode_for_glm(&ds).unwrap();
        let EncodedColumnKind::Numeric { impute } = encoding.columns[0].kind else {
            panic!("first encoded column should be numeric")
        };
        assert_eq!(impute, 27.5);
        assert!(design.row(1)[0].is_finite());
    }

    #[test]
    fn load_csv_undeclared_column_is_an_error() {
        let f = write_temp("age,area,bonus,claim\n25,urban,1,0\n");
        let err = load_csv(f.path(), &toy_schema()).unwrap_err();
        assert!(err.to_string().contains("bonus"));
    }

    #[test]
    fn autoclaim_default_schema_keeps_23_features() {
        // 28 columns: 1 target + 4 ignored + 23 features.
        let schema = Schema::autoclaim_default();
        assert_eq!(schema.columns.len(), 27);
        let header: Vec<&str> = vec![
            "POLICYNO", "PLCYDATE", "CLM_FREQ5", "CLM_AMT5", "CLM_AMT", "KIDSDRIV", "TRAVTIME", "CAR_USE",
            "BLUEBOOK", "RETAINED", "NPOLICY", "CAR_TYPE", "RED_CAR", "REVOLKED", "MVR_PTS", "CLM_FLAG", "AGE",
            "HOMEKIDS", "YOJ", "INCOME", "GENDER", "MARRIED", "PARENT1", "JOBCLASS", "MAX_EDUC", "HOME_VAL",
            "SAMEHOME", "AREA",
        ];
        assert_eq!(header.len(), 28);
        let mut rows = vec![header.join(",")];
        for i in 0..3 {
            let row = vec![
                format!("P{i}"),
                "2001-01-01".into(),
                "1".into(),
                format!("{}", 100 * i),
                "0".into(),
                "0".into(),
                "20".into(),
                "Private".into(),
                "15000".into(),
                "5".into(),
                "1".into(),
                "Sedan".into(),
                "no".into(),
                "No".into(),
                "2".into(),
                "No".into(),
                "40".into(),
                "1".into(),
                "10".into(),
                "50000".into(),
                "F".into(),
                "Yes".into(),
                "No".into(),
                "Manager".into(),
                "Bachelors".into(),
                "150000".into(),
                "7".into(),
                "Urban".into(),
            ];
            rows.push(row.join(","));
        }
        let f = write_temp(&(rows.join("\n") + "\n"));
        let ds = load_csv(f.path(), &schema).unwrap();
        assert_eq!(ds.n_features(), 23);
        assert_eq!(ds.n_rows(), 3);
    }

    #[test]
    fn schema_json_round_trip() {
        let schema = Schema::autoclaim_default();
        let json = schema.to_json().unwrap();
        let reloaded = Schema::from_json(&json).unwrap();
        assert_eq!(schema, reloaded);
    }

    #[test]
    fn schema_accepts_declared_levels() {
        let json = r#"{
            "target": "y",
            "columns": {
                "area": {"role": "categorical", "levels": ["urban", "rural"]},
                "age": "numeric"
            }
        }"#;
        let schema = Schema::from_json(json).unwrap();
        let f = write_temp("age,area,y\n25,rural,1\n30,urban,2\n");
        let ds = load_csv(f.path(), &schema).unwrap();
        let ColumnData::Categorical { codes, levels } = &ds.columns()[1].data else {
            panic!("area should be categorical")
        };
        // Declared order pins the codes: urban=0, rural=1.
        assert_eq!(levels, &["urban".to_string(), "rural".to_string()]);
        assert_eq!(codes, &[1, 0]);
    }

    #[test]
    fn encode_one_hot_drops_first_level() {
        let f = write_temp("age,area,claim\n25,urban,1\n30,rural,2\n35,suburb,3\n40,urban,4\n");
        let ds = load_csv(f.path(), &toy_schema()).unwrap();
        let (design, encoding) = encode_for_glm(&ds).unwrap();
        // age + 2 indicators for a 3-level categorical.
        assert_eq!(design.cols(), 3);
        assert_eq!(encoding.columns.len(), 3);
        assert_eq!(encoding.column_name(1), "area=rural");
        assert_eq!(encoding.column_name(2), "area=suburb");
    }

    #[test]
    fn encode_standardizes_numeric_columns() {
        let f = write_temp("age,area,claim\n10,u,1\n20,r,2\n30,u,3\n40,r,4\n");
        let ds = load_csv(f.path(), &toy_schema()).unwrap();
        let (design, _) = encode_for_glm(&ds).unwrap();
        let col: Vec<f64> = (0..4).map(|i| design.row(i)[0]).collect();
        let mean: f64 = col.iter().sum::<f64>() / 4.0;
        let var: f64 = col.iter().map(|v| v * v).sum::<f64>() / 4.0 - mean * mean;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn encode_round_trip_reproduces_design_matrix() {
        let synth = generate_synthetic(&SynthConfig::default(), 99).unwrap();
        let ds = &synth.dataset;
        let (design, encoding) = encode_for_glm(ds).unwrap();
        for i in (0..ds.n_rows()).step_by(97) {
            let encoded = encoding.encode_row(&ds.feature_row(i)).unwrap();
            assert_eq!(encoded.as_slice(), design.row(i), "row {i} differs");
        }
    }

    #[test]
    fn encode_drops_constant_column() {
        let mut columns = BTreeMap::new();
        columns.insert("flat".to_string(), ColumnSpec::Role(ColumnRole::Numeric));
        columns.insert("x".to_string(), ColumnSpec::Role(ColumnRole::Numeric));
        let schema = Schema::new("y", columns).unwrap();
        let f = write_temp("flat,x,y\n1,2,0\n1,3,1\n1,4,2\n");
        let ds = load_csv(f.path(), &schema).unwrap();
        let (design, encoding) = encode_for_glm(&ds).unwrap();
        assert_eq!(design.cols(), 1);
        assert_eq!(encoding.column_name(0), "x");
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let synth = generate_synthetic(
            &SynthConfig {
                n_rows: 50,
                ..SynthConfig::default()
            },
            3,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        synth.dataset.to_csv(&path).unwrap();

        let mut columns = BTreeMap::new();
        for j in 1..=4 {
            columns.insert(format!("x{j}"), ColumnSpec::Role(ColumnRole::Numeric));
        }
        columns.insert(
            "c1".to_string(),
            ColumnSpec::Detailed {
                role: ColumnRole::Categorical,
                levels: Some(SYNTH_LEVELS.iter().map(|s| s.to_string()).collect()),
            },
        );
        let schema = Schema::new("y", columns).unwrap();
        let reloaded = load_csv(&path, &schema).unwrap();
        assert_eq!(reloaded.target(), synth.dataset.target());
        for (a, b) in reloaded.columns().iter().zip(synth.dataset.columns()) {
            match (&a.data, &b.data) {
                (ColumnData::Numeric(u), ColumnData::Numeric(v)) => assert_eq!(u, v),
                (ColumnData::Categorical { codes: cu, .. }, ColumnData::Categorical { codes: cv, .. }) => {
                    assert_eq!(cu, cv)
                }
                _ => panic!("column kinds differ"),
            }
        }
        // Same content, same identity.
        assert_eq!(reloaded.source_id(), synth.dataset.source_id());
    }

    #[test]
    fn subset_preserves_source_identity_and_row_ids() {
        let synth = generate_synthetic(&SynthConfig::default(), 5).unwrap();
        let sub = synth.dataset.subset(&[5, 2, 9]).unwrap();
        assert_eq!(sub.n_rows(), 3);
        assert_eq!(sub.source_id(), synth.dataset.source_id());
        assert_eq!(sub.row_ids(), &[5, 2, 9]);
        assert_eq!(sub.target()[0], synth.dataset.target()[5]);
        assert!(synth.dataset.subset(&[10_000]).is_err());
    }

    #[test]
    fn synthetic_same_seed_identical_different_seed_not() {
        let cfg = SynthConfig::default();
        let a = generate_synthetic(&cfg, 11).unwrap();
        let b = generate_synthetic(&cfg, 11).unwrap();
        let c = generate_synthetic(&cfg, 12).unwrap();
        assert_eq!(a.dataset.target(), b.dataset.target());
        assert_eq!(a.dataset.source_id(), b.dataset.source_id());
        assert_ne!(a.dataset.target(), c.dataset.target());
    }

    #[test]
    fn synthetic_zero_fraction_matches_oracle_zero_mass() {
        let cfg = SynthConfig {
            n_rows: 100_000,
            n_numeric: 1,
            n_categorical: 0,
            mean_function: MeanFunction::LinearLogLink,
            phi: 1.0,
            power: 1.5,
            heteroscedastic: false,
        };
        let synth = generate_synthetic(&cfg, 21).unwrap();
        // P(Y=0 | x) = exp(-mu(x)^(2-p) / (phi*(2-p))); average it over rows.
        let ds = &synth.dataset;
        let mut expected = 0.0;
        for i in 0..ds.n_rows() {
            let row = ds.feature_row(i);
            let mu = synth.oracle.true_mean(&row).unwrap();
            let phi = synth.oracle.true_phi(&row).unwrap();
            expected += (-mu.powf(0.5) / (phi * 0.5)).exp();
        }
        expected /= ds.n_rows() as f64;
        let zero_frac = ds.target().iter().filter(|&&y| y == 0.0).count() as f64 / ds.n_rows() as f64;
        assert!(
            (zero_frac - expected).abs() < 0.01,
            "zero fraction {zero_frac} vs oracle-implied {expected}"
        );
    }

    #[test]
    fn synthetic_sample_mean_tracks_oracle_mean() {
        let cfg = SynthConfig {
            n_rows: 50_000,
            ..SynthConfig::default()
        };
        let synth = generate_synthetic(&cfg, 31).unwrap();
        let ds = &synth.dataset;
        let mut mu_sum = 0.0;
        let mut var_sum = 0.0;
        for i in 0..ds.n_rows() {
            let row = ds.feature_row(i);
            let mu = synth.oracle.true_mean(&row).unwrap();
            mu_sum += mu;
            var_sum += synth.oracle.true_phi(&row).unwrap() * mu.powf(cfg.power);
        }
        let mu_bar = mu_sum / ds.n_rows() as f64;
        let se = (var_sum / (ds.n_rows() as f64).powi(2)).sqrt();
        let y_bar: f64 = ds.target().iter().sum::<f64>() / ds.n_rows() as f64;
        assert!(
            (y_bar - mu_bar).abs() < 3.0 * se,
            "sample mean {y_bar} vs oracle mean {mu_bar} (se {se})"
        );
    }

    #[test]
    fn synthetic_heteroscedastic_phi_varies() {
        let cfg = SynthConfig {
            heteroscedastic: true,
            ..SynthConfig::default()
        };
        let synth = generate_synthetic(&cfg, 41).unwrap();
        let ds = &synth.dataset;
        let phis: Vec<f64> = (0..100)
            .map(|i| synth.oracle.true_phi(&ds.feature_row(i)).unwrap())
            .collect();
        let min = phis.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = phis.iter().cloned().fold(0.0, f64::max);
        assert!(max / min > 2.0, "dispersion should vary, got [{min}, {max}]");
    }
}
