//! Row-stream files.
//!
//! * CSV: one row per line, `d` comma-separated decimals (scientific
//!   notation accepted). Blank lines are skipped.
//! * Binary: `"FDRW"`, `d` as u64 little-endian, then binary64
//!   little-endian entries, row-major.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::linalg::DenseMatrix;

pub const ROW_MAGIC: &[u8; 4] = b"FDRW";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowFormat {
    Csv,
    Binary,
}

#[derive(Debug, Error)]
pub enum RowStreamError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("binary row stream: {0}")]
    BadBinary(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl RowStreamError {
    /// Whether the failure is in the data rather than the file system.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, RowStreamError::Io(_))
    }
}

/// Streaming reader over either format.
pub struct RowReader<R: BufRead> {
    inner: R,
    format: RowFormat,
    d: Option<usize>,
    line: usize,
    text: String,
}

impl RowReader<BufReader<File>> {
    /// Opens `path`, detecting the binary format by its magic bytes.
    pub fn open(path: &Path) -> Result<Self, RowStreamError> {
        let mut reader = BufReader::new(File::open(path)?);
        let format = if reader.fill_buf()?.starts_with(ROW_MAGIC) { RowFormat::Binary } else { RowFormat::Csv };
        RowReader::new(reader, format)
    }
}

impl<R: BufRead> RowReader<R> {
    pub fn new(mut inner: R, format: RowFormat) -> Result<Self, RowStreamError> {
        let d = match format {
            RowFormat::Csv => None,
            RowFormat::Binary => {
                let mut magic = [0u8; 4];
                inner.read_exact(&mut magic).map_err(|_| RowStreamError::BadBinary("missing header".into()))?;
                if &magic != ROW_MAGIC {
                    return Err(RowStreamError::BadBinary("bad magic".into()));
                }
                let mut d = [0u8; 8];
                inner.read_exact(&mut d).map_err(|_| RowStreamError::BadBinary("missing dimension".into()))?;
                let d = usize::try_from(u64::from_le_bytes(d)).map_err(|_| RowStreamError::BadBinary("dimension overflow".into()))?;
                if d == 0 {
                    return Err(RowStreamError::BadBinary("dimension must be at least 1".into()));
                }
                Some(d)
            }
        };
        Ok(Self { inner, format, d, line: 0, text: String::new() })
    }

    /// Row width, once known (immediately for binary, after the first row
    /// for CSV).
    pub fn dim(&self) -> Option<usize> {
        self.d
    }

    pub fn format(&self) -> RowFormat {
        self.format
    }

    /// Reads the next row into `row`; `Ok(false)` at end of stream.
    pub fn next_row(&mut self, row: &mut Vec<f64>) -> Result<bool, RowStreamError> {
        match self.format {
            RowFormat::Csv => self.next_csv(row),
            RowFormat::Binary => self.next_binary(row),
        }
    }

    fn next_csv(&mut self, row: &mut Vec<f64>) -> Result<bool, RowStreamError> {
        loop {
            self.text.clear();
            if self.inner.read_line(&mut self.text)? == 0 {
                return Ok(false);
            }
            self.line += 1;
            let trimmed = self.text.trim();
            if trimmed.is_empty() {
                continue;
            }
            row.clear();
            for (col, field) in trimmed.split(',').enumerate() {
                let field = field.trim();
                let v: f64 = field.parse().map_err(|_| RowStreamError::Malformed {
                    line: self.line,
                    message: format!("column {}: cannot parse {field:?}", col + 1),
                })?;
                if !v.is_finite() {
                    return Err(RowStreamError::Malformed {
                        line: self.line,
                        message: format!("column {}: non-finite value {field:?}", col + 1),
                    });
                }
                row.push(v);
            }
            match self.d {
                None => self.d = Some(row.len()),
                Some(d) if d != row.len() => {
                    return Err(RowStreamError::Malformed {
                        line: self.line,
                        message: format!("expected {d} values, found {}", row.len()),
                    })
                }
                Some(_) => {}
            }
            return Ok(true);
        }
    }

    fn next_binary(&mut self, row: &mut Vec<f64>) -> Result<bool, RowStreamError> {
        let d = self.d.expect("binary header read");
        row.clear();
        let mut buf = [0u8; 8];
        for c in 0..d {
            match self.inner.read_exact(&mut buf) {
                Ok(()) => {}
                Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
                    if c == 0 && self.inner.fill_buf()?.is_empty() {
                        return Ok(false);
                    }
                    return Err(RowStreamError::BadBinary(format!("row {} truncated", self.line + 1)));
                }
                Err(e) => return Err(e.into()),
            }
            let v = f64::from_le_bytes(buf);
            if !v.is_finite() {
                return Err(RowStreamError::Malformed {
                    line: self.line + 1,
                    message: format!("column {}: non-finite value", c + 1),
                });
            }
            row.push(v);
        }
        self.line += 1;
        Ok(true)
    }

    /// Reads every remaining row. An empty CSV stream yields a `0 × 0`
    /// matrix.
    pub fn read_all(&mut self) -> Result<DenseMatrix, RowStreamError> {
        let mut data = Vec::new();
        let mut row = Vec::new();
        let mut rows = 0;
        while self.next_row(&mut row)? {
            data.extend_from_slice(&row);
            rows += 1;
        }
        let d = self.d.unwrap_or(0);
        Ok(DenseMatrix::from_vec(rows, d, data).expect("validated while reading"))
    }
}

/// Reads a whole row-stream file.
pub fn read_matrix(path: &Path) -> Result<DenseMatrix, RowStreamError> {
    RowReader::open(path)?.read_all()
}

/// Writes `a` as CSV using shortest round-trip formatting.
pub fn write_csv<W: Write>(a: &DenseMatrix, out: W) -> io::Result<()> {
    let mut w = BufWriter::new(out);
    for r in a.row_iter() {
        for (j, v) in r.iter().enumerate() {
            if j > 0 {
                w.write_all(b",")?;
            }
            write!(w, "{v:?}")?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_binary<W: Write>(a: &DenseMatrix, out: W) -> io::Result<()> {
    let mut w = BufWriter::new(out);
    w.write_all(ROW_MAGIC)?;
    w.write_all(&(a.cols() as u64).to_le_bytes())?;
    for v in a.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}

pub fn write_matrix(a: &DenseMatrix, path: &Path, format: RowFormat) -> io::Result<()> {
    let f = File::create(path)?;
    match format {
        RowFormat::Csv => write_csv(a, f),
        RowFormat::Binary => write_binary(a, f),
    }
}

/// Newline-delimited item ids; blank lines are skipped.
pub fn read_items<R: Read>(input: R) -> Result<Vec<u64>, RowStreamError> {
    let mut items = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        items.push(t.parse().map_err(|_| RowStreamError::Malformed {
            line: i + 1,
            message: format!("not an item id: {t:?}"),
        })?);
    }
    Ok(items)
}
