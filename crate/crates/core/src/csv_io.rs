//! CSV import/export of kernels, marginals and numeric tables.
//!
//! Matrices are written with a header row of column indices and one matrix
//! row per line. Marginals are written as a single-row matrix. Numbers use
//! Rust's shortest round-trip decimal formatting, so re-reading a file
//! recovers the exact values.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::markov_prior::{Marginal, TransitionKernel};
use crate::{Error, Result};

pub fn write_table<W: Write>(
    out: W,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::dims(format!(
                "row has {} fields, header has {}",
                row.len(),
                header.len()
            )));
        }
        w.write_record(row.iter().map(|v| format_number(*v)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_table_file(
    path: impl AsRef<Path>,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_table(std::io::BufWriter::new(f), header, rows)
}

pub fn format_number(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn write_matrix<W: Write>(out: W, m: &DMatrix<f64>) -> Result<()> {
    let header: Vec<String> = (0..m.ncols()).map(|j| j.to_string()).collect();
    write_table(
        out,
        &header,
        m.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()),
    )
}

pub fn read_matrix<R: Read>(input: R) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let ncols = rdr.headers()?.len();
    let mut data = Vec::new();
    let mut nrows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != ncols {
            return Err(Error::dims(format!(
                "line {} has {} fields, header has {ncols}",
                nrows + 2,
                rec.len()
            )));
        }
        for field in rec.iter() {
            data.push(
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("'{field}': {e}")))?,
            );
        }
        nrows += 1;
    }
    Ok(DMatrix::from_row_slice(nrows, ncols, &data))
}

pub fn read_matrix_file(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    read_matrix(std::fs::File::open(path)?)
}

pub fn write_kernel_file(path: impl AsRef<Path>, k: &TransitionKernel) -> Result<()> {
    write_matrix(std::io::BufWriter::new(std::fs::File::create(path)?), k.matrix())
}

pub fn read_kernel_file(path: impl AsRef<Path>, step_duration: f64) -> Result<TransitionKernel> {
    TransitionKernel::new(read_matrix_file(path)?, step_duration)
}

pub fn write_marginal<W: Write>(out: W, p: &Marginal) -> Result<()> {
    write_matrix(out, &DMatrix::from_row_slice(1, p.len(), p.as_vector().as_slice()))
}

/// Reads a one-row (or one-column) table and normalises it to unit mass.
pub fn read_marginal<R: Read>(input: R) -> Result<Marginal> {
    let m = read_matrix(input)?;
    let v: DVector<f64> = if m.nrows() == 1 {
        m.row(0).transpose()
    } else if m.ncols() == 1 {
        m.column(0).into_owned()
    } else {
        return Err(Error::dims(format!(
            "marginal file must hold one row or one column, found {}x{}",
            m.nrows(),
            m.ncols()
        )));
    };
    Marginal::from_weights(v)
}

pub fn read_marginal_file(path: impl AsRef<Path>) -> Result<Marginal> {
    read_marginal(std::fs::File::open(path)?)
}
