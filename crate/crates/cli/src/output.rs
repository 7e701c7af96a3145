//! CSV series with `#` metadata lines, and JSON-lines check reports.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

pub const TRAJECTORY_COLUMNS: [&str; 6] = ["time", "mean_n", "var_n", "quad_phase", "i_h_raw", "i_h_filtered"];

/// A table of floats with ordered `key=value` metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            meta: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

/// Seventeen significant digits, enough to recover every `f64` exactly.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

pub fn write_table(path: &Path, table: &Table) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    for (k, v) in &table.meta {
        writeln!(out, "# {k}={v}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&table.columns)?;
    for row in &table.rows {
        if row.len() != table.columns.len() {
            bail!("row has {} fields, header has {}", row.len(), table.columns.len());
        }
        w.write_record(row.iter().map(|x| fmt_f64(*x)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_table(path: &Path) -> Result<Table> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut meta = Vec::new();
    let mut reader = BufReader::new(file);
    let mut body = String::new();
    let mut line = String::new();
    while reader.read_line(&mut line)? > 0 {
        match line.strip_prefix("# ") {
            Some(m) => {
                let (k, v) = m.trim_end().split_once('=').unwrap_or((m.trim_end(), ""));
                meta.push((k.to_string(), v.to_string()));
            }
            None => body.push_str(&line),
        }
        line.clear();
    }
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let columns: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().with_context(|| format!("row {}: {f:?}", i + 1)))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table { meta, columns, rows })
}

/// One line of a verification report.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CheckLine {
    pub suite: String,
    pub check: String,
    pub pass: bool,
    pub measured: f64,
    pub expected: String,
}

pub fn write_jsonl<W: Write>(mut out: W, lines: &[CheckLine]) -> Result<()> {
    for l in lines {
        serde_json::to_writer(&mut out, l)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
