use std::path::Path;

use ndarray::Array2;

use super::Dataset;
use crate::error::{Error, Result};

const LABEL_COLUMN: &str = "label";

/// Writes `f0,…,f{d-1},label` with 17 significant digits per feature.
pub fn save_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| csv_to_io(path, e))?;
    let mut header: Vec<String> = (0..data.dim()).map(|j| format!("f{j}")).collect();
    header.push(LABEL_COLUMN.to_string());
    writer.write_record(&header).map_err(|e| csv_to_io(path, e))?;
    for (row, &y) in data.features.outer_iter().zip(&data.labels) {
        let mut record: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        record.push(y.to_string());
        writer.write_record(&record).map_err(|e| csv_to_io(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Reads a dataset written by [`save_csv`] (or by hand). Every column other
/// than `label` is a feature, in header order. When `classes` is `None` the
/// class count is one more than the largest label.
pub fn load_csv(path: impl AsRef<Path>, classes: Option<usize>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_to_io(path, e))?;
    let header = reader
        .headers()
        .map_err(|e| parse_error(path, 1, e.to_string()))?
        .clone();
    let label_col = header
        .iter()
        .position(|h| h.trim() == LABEL_COLUMN)
        .ok_or_else(|| parse_error(path, 1, format!("missing `{LABEL_COLUMN}` column")))?;
    let dim = header.len() - 1;

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(parse_error(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        for (j, field) in record.iter().enumerate() {
            let field = field.trim();
            if j == label_col {
                let y: usize = field
                    .parse()
                    .map_err(|_| parse_error(path, line, format!("bad label `{field}`")))?;
                labels.push(y);
            } else {
                let v: f64 = field.parse().map_err(|_| {
                    parse_error(path, line, format!("bad value `{field}` in `{}`", &header[j]))
                })?;
                if !v.is_finite() {
                    return Err(parse_error(path, line, format!("non-finite value `{field}`")));
                }
                values.push(v);
            }
        }
    }
    let max_label = labels.iter().copied().max();
    let classes = match (classes, max_label) {
        (Some(c), Some(m)) if m >= c => {
            return Err(Error::Validation(format!(
                "{}: label {m} is not below the declared class count {c}",
                path.display()
            )))
        }
        (Some(c), _) => c,
        (None, Some(m)) => m + 1,
        (None, None) => 0,
    };
    let features = Array2::from_shape_vec((labels.len(), dim), values)
        .map_err(|e| Error::Shape(e.to_string()))?;
    let domain = path
        .file_stem()
        .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    Dataset::new(features, labels, domain, classes)
}

fn parse_error(path: &Path, line: u64, message: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    }
}

fn csv_to_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => parse_error(path, 0, format!("{other:?}")),
    }
}
