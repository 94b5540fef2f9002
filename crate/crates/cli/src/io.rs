//! CSV input and output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use lma_gp::{Dataset, Inputs};
use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};

/// A loaded CSV: inputs plus outputs when the file has a trailing `y` column.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub inputs: Inputs,
    pub outputs: Option<Vec<f64>>,
}

impl Table {
    pub fn into_dataset(self, path: &Path) -> CliResult<Dataset> {
        let outputs = self.outputs.ok_or_else(|| CliError::Data {
            path: path.to_path_buf(),
            line: 1,
            msg: "training data needs a `y` column".into(),
        })?;
        Ok(Dataset::new(self.inputs, outputs)?)
    }
}

/// Reads a file with header `x1,...,xd[,y]`. Line numbers in errors count the
/// header as line 1.
pub fn load_csv(path: &Path) -> CliResult<Table> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let data_err = |line: u64, msg: String| CliError::Data {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let header = reader
        .headers()
        .map_err(|e| data_err(1, e.to_string()))?
        .clone();
    let cols = header.len();
    let has_y = header.iter().next_back() == Some("y");
    let dim = if has_y { cols - 1 } else { cols };
    if dim == 0 {
        return Err(data_err(1, "header has no input columns".into()));
    }
    for (i, name) in header.iter().take(dim).enumerate() {
        if name != format!("x{}", i + 1) {
            return Err(data_err(
                1,
                format!("expected column `x{}`, found `{name}`", i + 1),
            ));
        }
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            data_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != cols {
            return Err(data_err(
                line,
                format!("expected {cols} fields, found {}", rec.len()),
            ));
        }
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                data_err(
                    line,
                    format!("`{field}` in column {} is not a number", c + 1),
                )
            })?;
            if !v.is_finite() {
                return Err(data_err(
                    line,
                    format!("non-finite value `{field}` in column {}", c + 1),
                ));
            }
            if c < dim {
                xs.push(v);
            } else {
                ys.push(v);
            }
        }
    }
    let inputs = Inputs::new(xs, dim)?;
    Ok(Table {
        inputs,
        outputs: has_y.then_some(ys),
    })
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

/// Writes a header and rows of numbers. `{:?}` formatting keeps every digit, so
/// values survive a round trip.
pub fn write_rows(
    path: &Path,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let io_err = |e: csv::Error| CliError::io(path, std::io::Error::other(e.to_string()));
    w.write_record(header).map_err(io_err)?;
    for row in rows {
        w.write_record(row.iter().map(|v| format!("{v:?}")))
            .map_err(io_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn input_header(dim: usize) -> Vec<String> {
    (1..=dim).map(|i| format!("x{i}")).collect()
}

pub fn write_dataset(path: &Path, data: &Dataset) -> CliResult<()> {
    let mut header = input_header(data.dim());
    header.push("y".into());
    let rows = (0..data.len()).map(|i| {
        let mut r = data.inputs.row(i).to_vec();
        r.push(data.outputs[i]);
        r
    });
    write_rows(path, &header, rows)
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> CliResult<()> {
    let header: Vec<String> = (0..m.ncols()).map(|j| format!("c{}", j + 1)).collect();
    write_rows(
        path,
        &header,
        m.row_iter().map(|r| r.iter().copied().collect()),
    )
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}
