//! Result tables and their CSV/JSON serialization.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value as Json};

use crate::error::CliError;

/// One cell of a table.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// Floats with 17 significant digits, which round-trip exactly.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(v) => format_float(*v),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n', '\r']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Json {
        match self {
            Cell::Int(i) => Json::from(*i),
            Cell::Float(v) if v.is_finite() => Json::Number(format_float(*v).parse::<Number>().expect("finite float is a JSON number")),
            Cell::Float(_) => Json::Null,
            Cell::Bool(b) => Json::Bool(*b),
            Cell::Text(s) => Json::String(s.clone()),
        }
    }
}

/// Output file format.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Named columns of typed rows plus `key: value` metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultTable {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub metadata: Vec<(String, String)>,
}

impl ResultTable {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        ResultTable { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new(), metadata: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width of table `{}`", self.name);
        self.rows.push(row);
    }

    pub fn meta(&mut self, key: impl Into<String>, value: impl ToString) {
        self.metadata.push((key.into(), value.to_string()));
    }

    pub fn meta_float(&mut self, key: impl Into<String>, value: f64) {
        self.meta(key, format_float(value));
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[k]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(s, "# {k}: {}", v.replace('\n', " "));
        }
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> String {
        let mut meta = Map::new();
        for (k, v) in &self.metadata {
            meta.insert(k.clone(), Json::String(v.clone()));
        }
        let mut data = Map::new();
        for (k, name) in self.columns.iter().enumerate() {
            data.insert(name.clone(), Json::Array(self.rows.iter().map(|r| r[k].json()).collect()));
        }
        let mut root = Map::new();
        root.insert("name".into(), Json::String(self.name.clone()));
        root.insert("metadata".into(), Json::Object(meta));
        root.insert("columns".into(), Json::Array(self.columns.iter().cloned().map(Json::String).collect()));
        root.insert("data".into(), Json::Object(data));
        let mut s = serde_json::to_string_pretty(&Json::Object(root)).expect("serializable");
        s.push('\n');
        s
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }
}

/// Writes `table` to `path` in `format`.
pub fn write_table(table: &ResultTable, format: Format, path: &Path) -> Result<(), CliError> {
    fs::write(path, table.render(format)).map_err(|e| CliError::io(path, e))
}
