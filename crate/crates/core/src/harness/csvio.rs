//! Plain comma-separated matrices, one row per line.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::floatsim::{FpFormat, OverflowPolicy};
use crate::matrix::Matrix;

/// Reads a dense matrix and checks every entry is representable in `storage`.
pub fn read_matrix(input: impl Read, storage: FpFormat) -> Result<Matrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, field)| {
                let x: f64 = field.parse().map_err(|_| {
                    Error::Parse(format!(
                        "row {}, column {}: {field:?} is not a number",
                        i + 1,
                        j + 1
                    ))
                })?;
                match storage.round(x, OverflowPolicy::Signal) {
                    Ok(r) if r == x || (x.is_nan() && r.is_nan()) => Ok(x),
                    _ => Err(Error::Parse(format!(
                        "row {}, column {}: {x} is not a {storage} value",
                        i + 1,
                        j + 1
                    ))),
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("empty matrix".into()));
    }
    Matrix::from_rows(&rows)
}

/// Writes `a` with the shortest decimal that round-trips each `f64`.
pub fn write_matrix(a: &Matrix, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for i in 0..a.rows() {
        w.write_record(a.row(i).iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
