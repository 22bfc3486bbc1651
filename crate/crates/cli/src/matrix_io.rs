//! Real matrices as headerless CSV, one row per line.

use std::io::{Read, Write};

use l2pc_core::RealMatrix;

use crate::CliError;

pub fn read_matrix<R: Read>(reader: R, what: &str) -> Result<RealMatrix, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Input(format!("{what}: {e}")))?;
        let row = rec
            .iter()
            .map(|f| {
                let v: f64 = f.parse().map_err(|_| {
                    CliError::Input(format!("{what}: row {}: {f:?} is not a number", i + 1))
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(CliError::Input(format!(
                        "{what}: row {}: {f} is not finite",
                        i + 1
                    )))
                }
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Input(format!("{what}: empty matrix")));
    }
    RealMatrix::from_rows(&rows).map_err(|e| CliError::Input(format!("{what}: {e}")))
}

pub fn write_matrix<W: Write>(writer: W, m: &RealMatrix) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    for i in 0..m.rows() {
        w.write_record((0..m.cols()).map(|j| m.get(i, j).to_string()))
            .map_err(|e| CliError::Input(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
