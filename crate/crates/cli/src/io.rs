//! Matrix files (headerless CSV, binary PGM) and trace tables.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nnd::DenseMatrix;

use crate::error::{CliError, CliResult};

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io { path: path.to_path_buf(), message: e.to_string() }
}

/// Load a matrix by extension: `.pgm` as binary P5 grayscale, anything else
/// as headerless CSV.
pub fn load_matrix(path: &Path) -> CliResult<DenseMatrix> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("pgm") => read_pgm(path),
        _ => read_csv_matrix(path),
    }
}

/// Comma-separated decimal rows, no header, uniform column count.
pub fn read_csv_matrix(path: &Path) -> CliResult<DenseMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| io_err(path, e))?;
        if *cols.get_or_insert(record.len()) != record.len() {
            return Err(io_err(
                path,
                format!("row {} has {} columns, expected {}", i + 1, record.len(), cols.unwrap()),
            ));
        }
        for field in record.iter() {
            let v: f64 =
                field.parse().map_err(|_| io_err(path, format!("row {}: '{field}' is not a number", i + 1)))?;
            if !v.is_finite() {
                return Err(io_err(path, format!("row {}: non-finite value", i + 1)));
            }
            values.push(v);
        }
        rows += 1;
    }
    match cols {
        Some(c) if c > 0 => Ok(DenseMatrix::from_row_slice(rows, c, &values)),
        _ => Err(io_err(path, "empty matrix file")),
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn row_fields(m: &DenseMatrix, r: usize) -> impl Iterator<Item = String> + '_ {
    (0..m.ncols()).map(move |c| m[(r, c)].to_string())
}

pub fn write_csv_matrix(path: &Path, m: &DenseMatrix) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(create(path)?);
    for r in 0..m.nrows() {
        w.write_record(row_fields(m, r)).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// All draws in one file; each row is `draw_index, row of the draw`.
pub fn write_draws_concatenated(path: &Path, draws: &[DenseMatrix]) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).flexible(true).from_writer(create(path)?);
    for (k, d) in draws.iter().enumerate() {
        for r in 0..d.nrows() {
            let row = std::iter::once(k.to_string()).chain(row_fields(d, r));
            w.write_record(row).map_err(|e| io_err(path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// One headerless CSV per draw, `draw_00000.csv`, ... inside `dir`.
pub fn write_draws_per_file(dir: &Path, draws: &[DenseMatrix]) -> CliResult<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    draws
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let p = dir.join(format!("draw_{k:05}.csv"));
            write_csv_matrix(&p, d).map(|_| p)
        })
        .collect()
}

/// Read back a concatenated draws file.
pub fn read_draws_concatenated(path: &Path) -> CliResult<Vec<DenseMatrix>> {
    let table = read_csv_matrix(path)?;
    let mut draws: Vec<Vec<f64>> = Vec::new();
    let mut rows_per = Vec::new();
    for r in 0..table.nrows() {
        let k = table[(r, 0)] as usize;
        if k == draws.len() {
            draws.push(Vec::new());
            rows_per.push(0);
        } else if k + 1 != draws.len() {
            return Err(io_err(path, format!("draw index {k} out of order at row {}", r + 1)));
        }
        draws[k].extend((1..table.ncols()).map(|c| table[(r, c)]));
        rows_per[k] += 1;
    }
    Ok(draws.iter().zip(rows_per).map(|(v, rows)| DenseMatrix::from_row_slice(rows, table.ncols() - 1, v)).collect())
}

/// A column-oriented table written as CSV with a header row.
#[derive(Debug, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub columns: Vec<Vec<String>>,
}

impl Table {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn column<T: ToString>(mut self, name: &str, values: impl IntoIterator<Item = T>) -> Self {
        self.header.push(name.to_string());
        self.columns.push(values.into_iter().map(|v| v.to_string()).collect());
        self
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let rows = self.columns.first().map_or(0, Vec::len);
        if self.columns.iter().any(|c| c.len() != rows) {
            return Err(CliError::Internal("table columns differ in length".into()));
        }
        let mut w = csv::Writer::from_writer(create(path)?);
        w.write_record(&self.header).map_err(|e| io_err(path, e))?;
        for r in 0..rows {
            w.write_record(self.columns.iter().map(|c| c[r].as_str())).map_err(|e| io_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))
    }
}

/// One named column of a CSV file with a header row.
pub fn read_column(path: &Path, name: &str) -> CliResult<Vec<f64>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let headers = reader.headers().map_err(|e| io_err(path, e))?.clone();
    let idx = headers.iter().position(|h| h.trim() == name).ok_or_else(|| {
        io_err(path, format!("no column '{name}' (have: {})", headers.iter().collect::<Vec<_>>().join(", ")))
    })?;
    reader
        .records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| io_err(path, e))?;
            let field = rec.get(idx).unwrap_or("").trim();
            match field {
                "true" => Ok(1.0),
                "false" => Ok(0.0),
                f => f.parse().map_err(|_| io_err(path, format!("row {}: '{f}' is not a number", i + 2))),
            }
        })
        .collect()
}

/// Binary P5 grayscale, intensities rescaled linearly so the image minimum
/// maps to 0 and the maximum to 1 (a constant image maps to 0).
pub fn read_pgm(path: &Path) -> CliResult<DenseMatrix> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    if !bytes.starts_with(b"P5") {
        return Err(io_err(path, "not a binary (P5) PGM file"));
    }
    let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Pnm)
        .map_err(|e| io_err(path, e))?
        .into_luma16();
    let (w, h) = img.dimensions();
    let raw: Vec<f64> = img.pixels().map(|p| p.0[0] as f64).collect();
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let scaled: Vec<f64> = raw.iter().map(|v| (v - lo) / span).collect();
    Ok(DenseMatrix::from_row_slice(h as usize, w as usize, &scaled))
}

/// Persist any serializable value as pretty JSON (trailing newline).
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io_err(path, e))?;
    writeln!(w).map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}
