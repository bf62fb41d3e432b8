//! Headerless numeric CSV ingestion and group-size parsing.

use std::fs::File;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

fn parse_number(field: &str, row: usize, col: usize) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::Input(format!("row {row}, column {col}: '{}' is not a number", field.trim())))?;
    if !v.is_finite() {
        return Err(Error::Input(format!("row {row}, column {col}: non-finite value")));
    }
    Ok(v)
}

/// Parses a rectangular headerless CSV matrix. Blank lines are skipped.
pub fn parse_matrix<R: std::io::Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Input(format!("malformed CSV: {e}")))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, f)| parse_number(f, i + 1, j + 1))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Dimension(format!(
                    "row {} has {} columns, expected {}",
                    i + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Input("empty CSV".into()));
    }
    let (r, c) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_row_iterator(r, c, rows.into_iter().flatten()))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    parse_matrix(open(path)?).map_err(|e| match e {
        Error::Input(msg) => Error::Input(format!("{}: {msg}", path.display())),
        Error::Dimension(msg) => Error::Dimension(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// A vector stored as a single column or a single row.
pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix(path)?;
    match m.shape() {
        (_, 1) => Ok(m.column(0).into_owned()),
        (1, _) => Ok(m.row(0).transpose()),
        (r, c) => Err(Error::Dimension(format!(
            "{}: expected a vector, got a {r}x{c} matrix",
            path.display()
        ))),
    }
}

/// Parses sizes such as `"2,2"`, `"1 2 3"` or one per line.
pub fn parse_group_sizes(text: &str) -> Result<Vec<usize>> {
    let sizes = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| Error::Input(format!("group size '{t}' is not a positive integer")))
        })
        .collect::<Result<Vec<_>>>()?;
    if sizes.is_empty() {
        return Err(Error::Input("no group sizes given".into()));
    }
    Ok(sizes)
}

pub fn read_group_sizes(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
    parse_group_sizes(&text)
}

/// Comma-separated numbers, e.g. a `--beta` flag.
pub fn parse_number_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .enumerate()
        .map(|(j, t)| parse_number(t, 1, j + 1))
        .collect()
}

/// One value per line, shortest round-trip representation.
pub fn vector_to_csv(v: &DVector<f64>) -> String {
    v.iter().map(|x| format!("{x:?}\n")).collect()
}
