use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// A CSV column, by header name or zero-based position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub label: ColumnRef,
    /// Feature columns; every non-label column when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<ColumnRef>>,
    #[serde(default)]
    pub has_header: bool,
}

fn csv_err(path: &Path, row: usize, column: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Csv { path: path.to_path_buf(), row, column: column.into(), message: message.into() }
}

fn resolve(path: &Path, col: &ColumnRef, header: Option<&csv::StringRecord>, width: usize) -> Result<usize> {
    let idx = match col {
        ColumnRef::Index(i) => *i,
        ColumnRef::Name(name) => {
            let header = header.ok_or_else(|| csv_err(path, 1, name.clone(), "column names need has_header = true"))?;
            header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| csv_err(path, 1, name.clone(), "no such column in header"))?
        }
    };
    if idx >= width {
        return Err(csv_err(path, 1, idx.to_string(), format!("column index beyond row width {width}")));
    }
    Ok(idx)
}

/// Reads a comma-separated dataset. Rows are reported 1-based, counting the
/// header line when present. The class count is `max label + 1` and every
/// label in between must occur.
pub fn load_csv_dataset(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_err(path, 0, "-", e.to_string()))?;
    let mut records = reader.records();
    let header = if schema.has_header {
        match records.next() {
            Some(r) => Some(r.map_err(|e| csv_err(path, 1, "-", e.to_string()))?),
            None => return Err(csv_err(path, 1, "-", "empty file")),
        }
    } else {
        None
    };
    let offset = usize::from(schema.has_header) + 1;

    let mut columns: Option<(usize, Vec<usize>)> = None;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut width = 0;
    for (i, rec) in records.enumerate() {
        let row = i + offset;
        let rec = rec.map_err(|e| csv_err(path, row, "-", e.to_string()))?;
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        let (label_col, feature_cols) = match &columns {
            Some(c) => c,
            None => {
                width = rec.len();
                let label_col = resolve(path, &schema.label, header.as_ref(), width)?;
                let feature_cols = match &schema.features {
                    Some(cols) => {
                        cols.iter().map(|c| resolve(path, c, header.as_ref(), width)).collect::<Result<Vec<_>>>()?
                    }
                    None => (0..width).filter(|&c| c != label_col).collect(),
                };
                if feature_cols.is_empty() {
                    return Err(csv_err(path, row, "-", "no feature columns"));
                }
                columns.insert((label_col, feature_cols))
            }
        };
        if rec.len() != width {
            return Err(csv_err(path, row, "-", format!("expected {width} fields, found {}", rec.len())));
        }
        let raw = rec[*label_col].trim();
        let label: f64 = raw
            .parse()
            .map_err(|_| csv_err(path, row, label_col.to_string(), format!("label {raw:?} is not a number")))?;
        if label < 0.0 || label.fract() != 0.0 || !label.is_finite() {
            return Err(csv_err(
                path,
                row,
                label_col.to_string(),
                format!("label {raw:?} is not a non-negative integer"),
            ));
        }
        labels.push(label as usize);
        for &c in feature_cols {
            let raw = rec[c].trim();
            let x: f64 =
                raw.parse().map_err(|_| csv_err(path, row, c.to_string(), format!("{raw:?} is not a number")))?;
            if !x.is_finite() {
                return Err(csv_err(path, row, c.to_string(), format!("{raw:?} is not finite")));
            }
            features.push(x);
        }
    }
    let Some((_, feature_cols)) = columns else {
        return Err(csv_err(path, offset, "-", "empty file"));
    };
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut seen = vec![false; num_classes];
    for &l in &labels {
        seen[l] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(csv_err(path, 0, "label", format!("labels are not contiguous: class {missing} never occurs")));
    }
    Dataset::new(features, feature_cols.len(), labels, num_classes)
        .map_err(|e| csv_err(path, 0, "label", e.to_string()))
}
