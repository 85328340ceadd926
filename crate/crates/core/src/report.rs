//! CSV emission for per-run metrics and grid tables.

use std::fs;
use std::path::Path;

use crate::algorithm::Algorithm;
use crate::error::{Error, Result};
use crate::orchestrator::RoundMetrics;

pub const METRICS_HEADER: [&str; 11] = [
    "round",
    "algorithm_name",
    "opt_c",
    "opt_s",
    "train_loss",
    "test_loss",
    "test_acc",
    "best_acc",
    "wall_ms",
    "status",
    "payload_bytes",
];

/// Marker written in place of a number for diverged grid cells.
pub const DIVERGED: &str = "diverged";

/// A header plus string rows, as written to disk.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt_num(x: Option<f64>) -> String {
    num(x.unwrap_or(f64::NAN))
}

pub fn metrics_table(algorithm: Algorithm, metrics: &[RoundMetrics]) -> Table {
    let mut t = Table::new(METRICS_HEADER);
    for m in metrics {
        t.rows.push(vec![
            m.round.to_string(),
            algorithm.name().to_string(),
            algorithm.opt_c.to_string(),
            algorithm.opt_s.to_string(),
            num(m.train_loss),
            opt_num(m.test_loss),
            opt_num(m.test_acc),
            num(m.best_acc),
            m.wall_ms.to_string(),
            m.status.label().to_string(),
            m.payload_bytes.to_string(),
        ]);
    }
    t
}

pub fn render_table(table: &Table) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(&table.header).map_err(csv_err)?;
    for row in &table.rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

/// Writes `table`, replacing any existing file.
pub fn emit_report(table: &Table, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, render_table(table)?)?;
    Ok(())
}

pub fn read_table(path: &Path) -> Result<Table> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        row: 0,
        column: "-".into(),
        message: e.to_string(),
    })?;
    let mut records = r.records();
    let header = match records.next() {
        Some(rec) => rec.map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            row: 1,
            column: "-".into(),
            message: e.to_string(),
        })?,
        None => return Ok(Table::default()),
    };
    let mut table = Table::new(header.iter());
    for (i, rec) in records.enumerate() {
        let rec = rec.map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            row: i + 2,
            column: "-".into(),
            message: e.to_string(),
        })?;
        table.rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(table)
}
