//! Feature-matrix CSV: a leading `index` column, one `<graph_id>.<feature>`
//! column per pipeline feature, and a trailing 0/1 `label` column when the
//! stream is labeled.

use std::io::{BufRead, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("feature CSV is empty")]
    Empty,
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

pub fn write_feature_matrix(
    path: &Path,
    header: &[String],
    rows: &[Vec<u64>],
    labels: Option<&[u8]>,
) -> Result<(), CsvError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(w, "index")?;
    for name in header {
        write!(w, ",{name}")?;
    }
    if labels.is_some() {
        write!(w, ",label")?;
    }
    writeln!(w)?;
    for (i, row) in rows.iter().enumerate() {
        write!(w, "{i}")?;
        for v in row {
            write!(w, ",{v}")?;
        }
        if let Some(labels) = labels {
            write!(w, ",{}", labels[i])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Option<Vec<u8>>,
}

pub fn read_feature_matrix(path: &Path) -> Result<FeatureMatrix, CsvError> {
    let file = std::fs::File::open(path)?;
    let mut lines = std::io::BufReader::new(file).lines();
    let header = lines.next().ok_or(CsvError::Empty)??;
    let mut names: Vec<String> = header.split(',').map(str::to_string).collect();
    let has_index = names.first().map(String::as_str) == Some("index");
    if has_index {
        names.remove(0);
    }
    let has_label = names.last().map(String::as_str) == Some("label");
    if has_label {
        names.pop();
    }
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let line_no = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields: Vec<&str> = line.split(',').collect();
        if has_index {
            fields.remove(0);
        }
        if has_label {
            let raw = fields.pop().ok_or_else(|| CsvError::Malformed {
                line: line_no,
                reason: "missing label".into(),
            })?;
            labels.push(raw.parse::<u8>().map_err(|_| CsvError::Malformed {
                line: line_no,
                reason: format!("bad label {raw:?}"),
            })?);
        }
        if fields.len() != names.len() {
            return Err(CsvError::Malformed {
                line: line_no,
                reason: format!("expected {} values, found {}", names.len(), fields.len()),
            });
        }
        let row: Result<Vec<f64>, _> = fields
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| CsvError::Malformed {
                    line: line_no,
                    reason: format!("bad value {f:?}"),
                })
            })
            .collect();
        rows.push(row?);
    }
    if rows.is_empty() {
        return Err(CsvError::Empty);
    }
    Ok(FeatureMatrix { names, rows, labels: if has_label { Some(labels) } else { None } })
}
