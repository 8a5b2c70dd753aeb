use std::path::Path;

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Header row, then decimal feature columns and an integer label column last.
pub fn read_csv(path: &Path, split: Split) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let width = reader.headers()?.len();
    if width < 2 {
        return Err(Error::Data(format!(
            "{}: need feature columns and a label",
            path.display()
        )));
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        if record.len() != width {
            return Err(Error::Data(format!(
                "{}: row {} has {} fields, header has {width}",
                path.display(),
                line + 2,
                record.len()
            )));
        }
        for field in record.iter().take(width - 1) {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Data(format!(
                    "{}: row {}: '{field}' is not a number",
                    path.display(),
                    line + 2
                ))
            })?;
            features.push(v);
        }
        let label = record[width - 1].trim();
        labels.push(label.parse::<usize>().map_err(|_| {
            Error::Data(format!(
                "{}: row {}: label '{label}' is not a class index",
                path.display(),
                line + 2
            ))
        })?);
    }
    if labels.is_empty() {
        return Err(Error::Data(format!("{}: no rows", path.display())));
    }
    let classes = labels.iter().max().map_or(2, |m| (m + 1).max(2));
    let features = Tensor::new(vec![labels.len(), width - 1], features)?;
    Dataset::new("csv", split, features, labels, classes)
}
