use std::io::{Read, Write};
use std::path::Path;

use super::{DataError, LabeledDataset};
use crate::nn::Matrix;

/// Parses a CSV with a header row. The column named `label` holds integer
/// classes; every other column is a real-valued feature, in header order.
/// The class count is one more than the largest label (0 for no rows).
/// Rows are numbered from 1, not counting the header.
pub fn read_csv<R: Read>(reader: R) -> Result<LabeledDataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(DataError::MissingHeader),
    };
    let names: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
    if names.iter().all(|s| s.is_empty()) {
        return Err(DataError::MissingHeader);
    }
    let label_col = names
        .iter()
        .position(|s| s == "label")
        .ok_or(DataError::MissingLabel)?;
    let feature_cols: Vec<usize> = (0..names.len()).filter(|&c| c != label_col).collect();

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in records.enumerate() {
        let row = i + 1;
        let rec = rec?;
        if rec.len() != names.len() {
            return Err(DataError::Ragged {
                row,
                expected: names.len(),
                found: rec.len(),
            });
        }
        for &c in &feature_cols {
            let cell = rec[c].trim();
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| DataError::Parse {
                    row,
                    column: names[c].clone(),
                    value: cell.to_string(),
                })?;
            values.push(v);
        }
        let cell = rec[label_col].trim();
        labels.push(cell.parse::<usize>().map_err(|_| DataError::Parse {
            row,
            column: "label".into(),
            value: cell.to_string(),
        })?);
    }
    let n = labels.len();
    let k = labels.iter().max().map_or(0, |m| m + 1);
    LabeledDataset::new(Matrix::from_vec(n, feature_cols.len(), values)?, labels, k)
}

/// Writes `f0..f{d-1},label` with shortest round-trip float formatting and
/// LF line endings.
pub fn write_csv<W: Write>(data: &LabeledDataset, writer: W) -> Result<(), DataError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let mut header: Vec<String> = (0..data.dim()).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for i in 0..data.len() {
        let (x, y) = data.point(i);
        let mut rec: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
        rec.push(y.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_csv(path: &Path) -> Result<LabeledDataset, DataError> {
    read_csv(std::fs::File::open(path)?)
}

pub fn save_csv(data: &LabeledDataset, path: &Path) -> Result<(), DataError> {
    let file = std::fs::File::create(path)?;
    write_csv(data, std::io::BufWriter::new(file))
}
