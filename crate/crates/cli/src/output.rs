use serde_json::{json, Map, Value};

use crate::config::{OutputFormat, RunConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Bool(bool),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v:.16e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) => json!(v),
            Cell::Int(v) => json!(v),
            Cell::Bool(v) => json!(v),
            Cell::Text(s) => json!(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
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

/// A table with a key/value summary. Everything here is a pure function of
/// the computed results, so it forms the reproducible body of the output.
#[derive(Debug, Clone, Default)]
pub struct Document {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub summary: Vec<(String, Cell)>,
    /// Emitted in JSON output only.
    pub extra: Option<Value>,
}

impl Document {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self { columns: columns.into_iter().map(Into::into).collect(), ..Default::default() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn note(&mut self, key: impl Into<String>, value: impl Into<Cell>) {
        self.summary.push((key.into(), value.into()));
    }

    fn csv_body(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        if !self.summary.is_empty() {
            out.push_str("\nquantity,value\n");
            for (k, v) in &self.summary {
                out.push_str(&format!("{k},{}\n", v.csv()));
            }
        }
        out
    }

    fn json_body(&self) -> Value {
        let rows: Vec<Value> = self.rows.iter().map(|r| Value::Array(r.iter().map(Cell::json).collect())).collect();
        let summary: Map<String, Value> = self.summary.iter().map(|(k, v)| (k.clone(), v.json())).collect();
        let mut body = json!({ "columns": self.columns, "rows": rows, "summary": summary });
        if let Some(extra) = &self.extra {
            body["document"] = extra.clone();
        }
        body
    }
}

/// Descriptive header lines; not part of the reproducible body.
#[derive(Debug, Clone)]
pub struct Header {
    pub config: RunConfig,
    pub reference: Option<String>,
}

impl Header {
    fn entries(&self) -> Value {
        json!({
            "artifact": "csrk",
            "version": env!("CARGO_PKG_VERSION"),
            "config": self.config,
            "reference": self.reference,
        })
    }
}

/// The rendered document: `text` is what gets written, `body` the part that
/// is byte-identical across thread counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rendered {
    pub text: String,
    pub body: String,
}

pub fn render(header: &Header, doc: &Document, format: OutputFormat) -> Rendered {
    match format {
        OutputFormat::Csv => {
            let config = serde_json::to_string(&header.config).expect("configs serialize");
            let mut text = format!("# csrk {}\n# config: {config}\n", env!("CARGO_PKG_VERSION"));
            text.push_str(&format!("# reference: {}\n", header.reference.as_deref().unwrap_or("none")));
            let body = doc.csv_body();
            text.push_str(&body);
            Rendered { text, body }
        }
        OutputFormat::Json => {
            let body_value = doc.json_body();
            let body = serde_json::to_string_pretty(&body_value).expect("values serialize");
            let whole = json!({ "header": header.entries(), "body": body_value });
            let mut text = serde_json::to_string_pretty(&whole).expect("values serialize");
            text.push('\n');
            Rendered { text, body }
        }
    }
}

/// The body of a rendered CSV or JSON document, for comparing runs.
pub fn body_of(text: &str) -> String {
    if let Ok(v) = serde_json::from_str::<Value>(text) {
        if let Some(body) = v.get("body") {
            return serde_json::to_string_pretty(body).expect("values serialize");
        }
    }
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .flat_map(|l| [l, "\n"])
        .collect()
}
