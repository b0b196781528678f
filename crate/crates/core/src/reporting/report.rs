use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VipError};

pub const SCHEMA_VERSION: u32 = 1;
/// Significant digits kept for every per-record and table value.
pub const SIGNIFICANT_DIGITS: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = VipError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(VipError::invalid(format!("unknown report format `{other}`"))),
        }
    }
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Json => "json",
            Self::Csv => "csv",
        }
    }
}

/// Rounds to [`SIGNIFICANT_DIGITS`] significant digits; non-finite values become `None`.
pub fn round_sig(x: f64) -> Option<f64> {
    if !x.is_finite() {
        return None;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().ok()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image: String,
    pub content_hash: String,
    pub label: Option<String>,
    pub values: IndexMap<String, Option<f64>>,
}

impl ImageRecord {
    pub fn new(image: impl Into<String>, content_hash: impl Into<String>, label: Option<String>) -> Self {
        Self {
            image: image.into(),
            content_hash: content_hash.into(),
            label,
            values: IndexMap::new(),
        }
    }

    /// Stores a value rounded to the declared precision.
    pub fn set(&mut self, key: impl Into<String>, value: Option<f64>) -> &mut Self {
        self.values.insert(key.into(), value.and_then(round_sig));
        self
    }
}

/// Distribution summary of one record column over its non-missing values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub missing: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

/// Linearly interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn summarize(values: &[Option<f64>]) -> Option<Summary> {
    let mut v: Vec<f64> = values.iter().flatten().copied().collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(Summary {
        count: v.len(),
        missing: values.len() - v.len(),
        mean: v.iter().sum::<f64>() / v.len() as f64,
        median: quantile(&v, 0.5),
        q1: quantile(&v, 0.25),
        q3: quantile(&v, 0.75),
        min: v[0],
        max: v[v.len() - 1],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub name: String,
    pub values: IndexMap<String, Option<f64>>,
}

impl TableRow {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            values: IndexMap::new(),
        }
    }

    pub fn set(&mut self, key: impl Into<String>, value: Option<f64>) -> &mut Self {
        self.values.insert(key.into(), value.and_then(round_sig));
        self
    }
}

/// Results of one analysis run. Aggregates are derived from the records by
/// [`AnalysisReport::finalize`] and kept at full precision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub toolkit_version: String,
    pub command: String,
    pub model_config_hash: String,
    pub model_config: serde_json::Value,
    pub preprocessing: serde_json::Value,
    pub run_config: serde_json::Value,
    /// Which vector contribution norms and cosines are measured against.
    pub denominator: Option<String>,
    pub notes: Vec<String>,
    pub records: Vec<ImageRecord>,
    pub aggregates: IndexMap<String, Summary>,
    pub tables: IndexMap<String, Vec<TableRow>>,
}

impl AnalysisReport {
    pub fn new(command: impl Into<String>, model_config_hash: impl Into<String>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            toolkit_version: crate::VERSION.to_string(),
            command: command.into(),
            model_config_hash: model_config_hash.into(),
            model_config: serde_json::Value::Null,
            preprocessing: serde_json::Value::Null,
            run_config: serde_json::Value::Null,
            denominator: None,
            notes: Vec::new(),
            records: Vec::new(),
            aggregates: IndexMap::new(),
            tables: IndexMap::new(),
        }
    }

    /// Column names in first-seen order across records.
    pub fn columns(&self) -> Vec<String> {
        let mut cols: IndexMap<&str, ()> = IndexMap::new();
        for r in &self.records {
            for k in r.values.keys() {
                cols.insert(k, ());
            }
        }
        cols.keys().map(|k| k.to_string()).collect()
    }

    pub fn compute_aggregates(&self) -> IndexMap<String, Summary> {
        self.columns()
            .into_iter()
            .filter_map(|c| {
                let col: Vec<Option<f64>> = self
                    .records
                    .iter()
                    .map(|r| r.values.get(&c).copied().flatten())
                    .collect();
                summarize(&col).map(|s| (c, s))
            })
            .collect()
    }

    /// Sorts records by content hash (then path) and recomputes aggregates.
    pub fn finalize(&mut self) {
        self.records.sort_by(|a, b| {
            a.content_hash
                .cmp(&b.content_hash)
                .then_with(|| a.image.cmp(&b.image))
        });
        self.aggregates = self.compute_aggregates();
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// One row per image; missing values are empty cells.
    pub fn to_csv(&self) -> Result<String> {
        let cols = self.columns();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["schema_version", "image", "content_hash", "label"];
        header.extend(cols.iter().map(String::as_str));
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.records {
            let mut row = vec![
                SCHEMA_VERSION.to_string(),
                r.image.clone(),
                r.content_hash.clone(),
                r.label.clone().unwrap_or_default(),
            ];
            row.extend(cols.iter().map(|c| match r.values.get(c).copied().flatten() {
                Some(v) => v.to_string(),
                None => String::new(),
            }));
            w.write_record(&row).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| VipError::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| VipError::Format(e.to_string()))
    }

    pub fn render(&self, format: ReportFormat) -> Result<String> {
        match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Csv => self.to_csv(),
        }
    }
}

fn csv_err(e: csv::Error) -> VipError {
    VipError::Format(format!("csv: {e}"))
}

pub fn emit_report(report: &AnalysisReport, format: ReportFormat, out: &Path) -> Result<()> {
    let text = report.render(format)?;
    std::fs::write(out, text).map_err(|e| VipError::io(out, e))
}

pub fn parse_report_json(text: &str) -> Result<AnalysisReport> {
    let report: AnalysisReport = serde_json::from_str(text)?;
    if report.schema_version != SCHEMA_VERSION {
        return Err(VipError::Format(format!(
            "unsupported report schema version {}",
            report.schema_version
        )));
    }
    Ok(report)
}

pub fn read_report(path: &Path) -> Result<AnalysisReport> {
    let text = std::fs::read_to_string(path).map_err(|e| VipError::io(path, e))?;
    parse_report_json(&text)
}

/// Parses the CSV form back into records.
pub fn parse_records_csv(text: &str) -> Result<Vec<ImageRecord>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.len() < 4 || &header[0] != "schema_version" {
        return Err(VipError::Format("csv report header is malformed".into()));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let mut values = IndexMap::new();
        for (k, v) in header.iter().zip(rec.iter()).skip(4) {
            let parsed = if v.is_empty() {
                None
            } else {
                Some(v.parse::<f64>().map_err(|e| VipError::Format(format!("{k}: {e}")))?)
            };
            values.insert(k.to_string(), parsed);
        }
        out.push(ImageRecord {
            image: rec[1].to_string(),
            content_hash: rec[2].to_string(),
            label: (!rec[3].is_empty()).then(|| rec[3].to_string()),
            values,
        });
    }
    Ok(out)
}
