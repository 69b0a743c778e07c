//! Text input: dense numeric CSV designs and response vectors.
//!
//! A CSV design has one sample per row. A first row that does not parse as
//! numbers is taken as a header and skipped. Import makes two passes, one to
//! count rows and one to fill the column-major file, so the text is never
//! held in memory.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matstore::{mean_sd, standardize_columns, ColumnSource, ColumnStore, StoredMatrix};

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

fn parse_record(rec: &csv::StringRecord) -> Option<Vec<f64>> {
    rec.iter().map(|f| f.parse::<f64>().ok()).collect()
}

fn is_blank(rec: &csv::StringRecord) -> bool {
    rec.iter().all(str::is_empty)
}

/// Shape of a CSV design: `(rows, cols, has_header)`.
pub fn csv_shape(path: impl AsRef<Path>) -> Result<(usize, usize, bool)> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let mut rows = 0;
    let mut cols = None;
    let mut header = false;
    let mut rec = csv::StringRecord::new();
    let mut line = 0usize;
    while rdr.read_record(&mut rec).map_err(|e| csv_err(path, e))? {
        line += 1;
        if is_blank(&rec) {
            continue;
        }
        if line == 1 && parse_record(&rec).is_none() {
            header = true;
            continue;
        }
        match cols {
            None => cols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(Error::Format(format!(
                    "{} line {line}: {} fields, expected {c}",
                    path.display(),
                    rec.len()
                )))
            }
            _ => {}
        }
        rows += 1;
    }
    match cols {
        Some(c) => Ok((rows, c, header)),
        None => Err(Error::Format(format!("{} holds no data rows", path.display()))),
    }
}

/// Imports a CSV design into a new matrix file at `dst`, optionally
/// standardizing every column.
pub fn import_csv(src: impl AsRef<Path>, dst: impl AsRef<Path>, standardize: bool) -> Result<StoredMatrix> {
    let src = src.as_ref();
    let (n, p, header) = csv_shape(src)?;
    let mut out = StoredMatrix::create_overwrite(dst, n, p)?;
    let mut rdr = reader(src)?;
    let mut rec = csv::StringRecord::new();
    let mut i = 0;
    let mut line = 0usize;
    while rdr.read_record(&mut rec).map_err(|e| csv_err(src, e))? {
        line += 1;
        if is_blank(&rec) || (header && line == 1) {
            continue;
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Format(format!("{} line {line}: {field:?} is not a number", src.display()))
            })?;
            if !v.is_finite() {
                return Err(Error::Format(format!("{} line {line}: non-finite value", src.display())));
            }
            out.set(i, j, v)?;
        }
        i += 1;
    }
    if standardize {
        standardize_columns(&mut out, 0..p)?;
    }
    out.flush()?;
    Ok(out)
}

/// Reads a response vector: one value per line (first field of each row),
/// with an optional non-numeric header line.
pub fn read_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let field = line.split(',').next().unwrap_or("").trim();
        if field.is_empty() {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            Ok(_) => return Err(Error::Format(format!("{} line {}: non-finite value", path.display(), idx + 1))),
            Err(_) if idx == 0 => {}
            Err(_) => {
                return Err(Error::Format(format!(
                    "{} line {}: {field:?} is not a number",
                    path.display(),
                    idx + 1
                )))
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Format(format!("{} holds no values", path.display())));
    }
    Ok(out)
}

/// Whether every column has mean within `tol` of 0 and sample variance
/// within `tol` of 1.
pub fn is_standardized<M: ColumnSource + ?Sized>(m: &M, tol: f64) -> Result<bool> {
    let mut buf = vec![0.0; m.n_rows()];
    for j in 0..m.n_cols() {
        m.read_column(j, &mut buf)?;
        let (mean, sd) = mean_sd(&buf);
        if mean.abs() > tol || (sd * sd - 1.0).abs() > tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Subtracts the mean in place.
pub fn center(y: &mut [f64]) {
    if y.is_empty() {
        return;
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    y.iter_mut().for_each(|v| *v -= mean);
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.join(name);
        File::create(&path).unwrap().write_all(body.as_bytes()).unwrap();
        path
    }

    #[test]
    fn imports_row_major_text_column_major() {
        let dir = tempfile::tempdir().unwrap();
        let src = write(dir.path(), "x.csv", "a,b,c\n1,2,3\n4,5,6\n\n");
        let m = import_csv(&src, dir.path().join("x.fbm"), false).unwrap();
        assert_eq!((m.n_rows(), m.n_cols()), (2, 3));
        assert_eq!(m.get(0, 2).unwrap(), 3.0);
        assert_eq!(m.get(1, 0).unwrap(), 4.0);
    }

    #[test]
    fn headerless_and_standardized() {
        let dir = tempfile::tempdir().unwrap();
        let src = write(dir.path(), "x.csv", "1,10\n2,20\n4,50\n");
        let m = import_csv(&src, dir.path().join("x.fbm"), true).unwrap();
        assert_eq!(m.n_rows(), 3);
        assert!(is_standardized(&m, 1e-12).unwrap());
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let src = write(dir.path(), "x.csv", "1,2\n3\n");
        assert!(matches!(csv_shape(&src), Err(Error::Format(_))));
    }

    #[test]
    fn bad_cell_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let src = write(dir.path(), "x.csv", "1,2\n3,oops\n");
        assert!(matches!(
            import_csv(&src, dir.path().join("x.fbm"), false),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn vector_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let src = write(dir.path(), "y.csv", "y\n1.5\n-2\n\n3e0\n");
        assert_eq!(read_vector(&src).unwrap(), vec![1.5, -2.0, 3.0]);
        let bad = write(dir.path(), "bad.csv", "1\nx\n");
        assert!(read_vector(&bad).is_err());
    }

    #[test]
    fn centering() {
        let mut y = vec![1.0, 2.0, 6.0];
        center(&mut y);
        assert!(y.iter().sum::<f64>().abs() < 1e-15);
    }
}
