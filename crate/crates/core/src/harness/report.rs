//! Experiment reports and their two on-disk forms: a structured TOML document
//! (`report.toml`) and flat CSV tables (`<table>.csv`).
//!
//! Output is byte-deterministic for identical report content: keys keep a
//! fixed order, probabilities are written with 6 decimals and every other
//! real with 6 significant digits. Wall-clock time and worker count are not
//! part of a report.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::harness::config::{ExperimentConfig, OutputFormat};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(u64),
    /// A probability, written with 6 decimals.
    Prob(f64),
    /// Any other real, written with 6 significant digits.
    Num(f64),
    Bool(bool),
}

impl Cell {
    pub fn text(s: impl Into<String>) -> Self {
        Cell::Text(s.into())
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Prob(v) | Cell::Num(v) => Some(*v),
            Cell::Int(v) => Some(*v as f64),
            _ => None,
        }
    }

    /// Plain rendering used in CSV.
    fn plain(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(v) => v.to_string(),
            Cell::Prob(v) => fmt_prob(*v),
            Cell::Num(v) => fmt_sig(*v),
            Cell::Bool(b) => b.to_string(),
        }
    }

    /// TOML value rendering.
    fn toml(&self) -> String {
        match self {
            Cell::Text(s) => toml_string(s),
            Cell::Bool(b) => b.to_string(),
            Cell::Int(v) => v.to_string(),
            Cell::Prob(v) => toml_float(*v, fmt_prob(*v)),
            Cell::Num(v) => toml_float(*v, fmt_sig(*v)),
        }
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.plain())
    }
}

fn toml_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c if c.is_control() => {
                let _ = write!(out, "\\u{:04X}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn toml_float(v: f64, text: String) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else if text.contains(['.', 'e', 'E']) {
        text
    } else {
        format!("{text}.0")
    }
}

/// 6 decimals.
pub fn fmt_prob(v: f64) -> String {
    if !v.is_finite() {
        return fmt_nonfinite(v);
    }
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

/// 6 significant digits: fixed notation for moderate magnitudes, otherwise
/// scientific.
pub fn fmt_sig(v: f64) -> String {
    if !v.is_finite() {
        return fmt_nonfinite(v);
    }
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        // Rounding can carry into a new digit (9.999995 → 10.00000).
        let digits = s.trim_start_matches('-').replace('.', "");
        if digits.trim_start_matches('0').len() > 6 && decimals > 0 {
            let d = decimals - 1;
            return format!("{v:.d$}");
        }
        s
    } else {
        format!("{v:.5e}")
    }
}

fn fmt_nonfinite(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// A named table with a fixed column order.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub experiment: String,
    /// Resolved configuration as TOML (sections under `config`).
    pub config: String,
    pub diagnostics: Vec<(String, Cell)>,
    pub tables: Vec<Table>,
    /// A regime check failed; the run still produced results.
    pub regime_violation: bool,
    /// A validation check failed (the report still describes which).
    pub check_failed: bool,
}

impl Report {
    pub fn new(config: &ExperimentConfig) -> Self {
        #[derive(serde::Serialize)]
        struct Echo<'a> {
            config: &'a ExperimentConfig,
        }
        let config_text = toml::to_string(&Echo { config }).unwrap_or_default();
        Self {
            experiment: config.experiment.name().to_string(),
            config: config_text,
            diagnostics: Vec::new(),
            tables: Vec::new(),
            regime_violation: false,
            check_failed: false,
        }
    }

    pub fn diag(&mut self, key: &str, value: Cell) {
        self.diagnostics.push((key.to_string(), value));
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn diagnostic(&self, key: &str) -> Option<&Cell> {
        self.diagnostics.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    /// Process exit code for a completed run: 1 when a validation check
    /// failed, 2 when a regime check failed, otherwise 0.
    pub fn exit_code(&self) -> i32 {
        if self.check_failed {
            1
        } else if self.regime_violation {
            2
        } else {
            0
        }
    }

    /// The full structured document.
    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "experiment = {}", toml_string(&self.experiment));
        let _ = writeln!(out, "regime_violation = {}", self.regime_violation);
        out.push('\n');
        out.push_str(&self.config);
        if !self.config.ends_with('\n') {
            out.push('\n');
        }
        out.push_str("\n[diagnostics]\n");
        for (k, v) in &self.diagnostics {
            let _ = writeln!(out, "{k} = {}", v.toml());
        }
        for t in &self.tables {
            let _ = writeln!(out, "\n[tables.{}]", t.name);
            let cols: Vec<String> = t.columns.iter().map(|c| toml_string(c)).collect();
            let _ = writeln!(out, "columns = [{}]", cols.join(", "));
            out.push_str("rows = [\n");
            for row in &t.rows {
                let cells: Vec<String> = row.iter().map(Cell::toml).collect();
                let _ = writeln!(out, "  [{}],", cells.join(", "));
            }
            out.push_str("]\n");
        }
        out
    }

    /// One CSV document per table.
    pub fn to_csv(&self) -> Result<Vec<(String, String)>> {
        let mut docs = Vec::with_capacity(self.tables.len());
        for t in &self.tables {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&t.columns).map_err(csv_err)?;
            for row in &t.rows {
                w.write_record(row.iter().map(Cell::plain)).map_err(csv_err)?;
            }
            let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
            docs.push((t.name.clone(), String::from_utf8_lossy(&bytes).into_owned()));
        }
        Ok(docs)
    }
}

fn csv_err(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e.to_string())
}

/// Writes the report into `dir` and returns the paths written.
pub fn emit_report(report: &Report, format: OutputFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    match format {
        OutputFormat::Report => {
            let path = dir.join("report.toml");
            std::fs::write(&path, report.to_toml())?;
            written.push(path);
        }
        OutputFormat::Table => {
            for (name, doc) in report.to_csv()? {
                let path = dir.join(format!("{name}.csv"));
                std::fs::write(&path, doc)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
