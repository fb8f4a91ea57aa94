//! Plain-text matrix dumps for cross-language comparison: a dimension
//! header line followed by one row of 17-significant-digit numbers per
//! line.

use std::path::Path;

use nalgebra::DMatrix;

use crate::{CliError, Result};

/// Writes `matrix <rows> <cols>` then row-major numbers.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::io(parent.display().to_string(), e))?;
        }
    }
    let file =
        std::fs::File::create(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
    let mut out = std::io::BufWriter::new(file);
    let write = |out: &mut dyn std::io::Write| -> std::io::Result<()> {
        writeln!(out, "matrix {} {}", m.nrows(), m.ncols())?;
        for i in 0..m.nrows() {
            let row: Vec<String> = (0..m.ncols())
                .map(|j| format!("{:.16e}", m[(i, j)]))
                .collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        Ok(())
    };
    write(&mut out).map_err(|e| CliError::io(path.display().to_string(), e))
}

/// Reads a matrix written by [`write_matrix`].
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Config("empty matrix file".into()))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 || parts[0] != "matrix" {
        return Err(CliError::Config(format!("bad matrix header `{header}`")));
    }
    let rows: usize = parts[1]
        .parse()
        .map_err(|e| CliError::Config(format!("bad row count: {e}")))?;
    let cols: usize = parts[2]
        .parse()
        .map_err(|e| CliError::Config(format!("bad col count: {e}")))?;
    let mut data = Vec::with_capacity(rows * cols);
    for line in lines.take(rows) {
        for field in line.split_whitespace() {
            data.push(
                field
                    .parse::<f64>()
                    .map_err(|e| CliError::Config(format!("bad matrix entry: {e}")))?,
            );
        }
    }
    if data.len() != rows * cols {
        return Err(CliError::Config(format!(
            "matrix body has {} entries, expected {}",
            data.len(),
            rows * cols
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}
