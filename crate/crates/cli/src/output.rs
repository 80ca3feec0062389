use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use mesoloc_core::linalg::fmt_f64;
use nalgebra::DMatrix;

/// Writes through a temporary sibling and renames it into place, so readers
/// never see a partial file.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = path.file_name().context("output path has no file name")?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = (|| -> Result<()> {
        let mut out = BufWriter::new(File::create(&tmp)?);
        fill(&mut out)?;
        out.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.with_context(|| format!("writing {}", path.display()))
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, |w| Ok(w.write_all(text.as_bytes())?))
}

/// Long-format `row,col,value` with 1-based indices; `rows` supplies
/// 1-based row labels when given.
pub fn write_matrix_csv(path: &Path, mat: &DMatrix<f64>, header: [&str; 2], rows: Option<&[usize]>) -> Result<()> {
    write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record([header[0], header[1], "value"])?;
        for i in 0..mat.nrows() {
            let row = rows.map_or(i + 1, |r| r[i]);
            for j in 0..mat.ncols() {
                csv.write_record([row.to_string(), (j + 1).to_string(), fmt_f64(mat[(i, j)])])?;
            }
        }
        csv.flush()?;
        Ok(())
    })
}

/// Reads a matrix written by [`write_matrix_csv`] with `rows`
/// mapping the first column back to row indices.
pub fn read_matrix_csv(path: &Path, shape: (usize, usize), rows: Option<&[usize]>) -> Result<DMatrix<f64>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut mat = DMatrix::zeros(shape.0, shape.1);
    for record in reader.records() {
        let record = record.with_context(|| format!("reading {}", path.display()))?;
        let (row, col, value): (usize, usize, f64) = record
            .deserialize(None)
            .with_context(|| format!("malformed row in {}", path.display()))?;
        let i = match rows {
            Some(map) => map.iter().position(|&r| r == row),
            None => row.checked_sub(1).filter(|&i| i < shape.0),
        }
        .with_context(|| format!("{}: row label {row} out of range", path.display()))?;
        if col == 0 || col > shape.1 {
            anyhow::bail!("{}: column {col} out of range", path.display());
        }
        mat[(i, col - 1)] = value;
    }
    Ok(mat)
}
