//! Column-wise access to the putative design.
//!
//! The selector only ever needs one putative column at a time, so the
//! matrix sits behind [`ColumnSource`]. Two backings are provided: an
//! in-memory column-major store and a file-backed store that reads single
//! columns on demand through a byte-offset index.
//!
//! File layout: a binary file of little-endian `f64` values, one column
//! after another, plus a JSON sidecar (`<file>.json`) holding the row count
//! and the byte offset of every column.

use std::borrow::Cow;
use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub trait ColumnSource: Send + Sync {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    /// Fetch column `k`. Repeated fetches return identical values.
    fn column(&self, k: usize) -> Result<Cow<'_, [f64]>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct InMemoryColumns {
    n_rows: usize,
    data: Vec<f64>,
}

impl InMemoryColumns {
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let n_rows = columns.first().map(Vec::len).unwrap_or(0);
        let mut data = Vec::with_capacity(n_rows * columns.len());
        for (k, col) in columns.into_iter().enumerate() {
            if col.len() != n_rows {
                return Err(Error::InvalidInput(format!(
                    "putative column {k} has {} rows, expected {n_rows}",
                    col.len()
                )));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "putative column {k} has a non-finite value at row {i}"
                )));
            }
            data.extend(col);
        }
        Ok(Self { n_rows, data })
    }

    /// Copy every column of another source into memory.
    pub fn from_source(source: &dyn ColumnSource) -> Result<Self> {
        let cols = (0..source.n_cols())
            .map(|k| source.column(k).map(Cow::into_owned))
            .collect::<Result<Vec<_>>>()?;
        Self::from_columns(cols)
    }
}

impl ColumnSource for InMemoryColumns {
    fn n_rows(&self) -> usize {
        self.n_rows
    }

    fn n_cols(&self) -> usize {
        if self.n_rows == 0 {
            0
        } else {
            self.data.len() / self.n_rows
        }
    }

    fn column(&self, k: usize) -> Result<Cow<'_, [f64]>> {
        if k >= self.n_cols() {
            return Err(Error::InvalidInput(format!("column {k} out of range")));
        }
        Ok(Cow::Borrowed(&self.data[k * self.n_rows..(k + 1) * self.n_rows]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnIndexEntry {
    pub name: String,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnIndex {
    pub n_rows: usize,
    pub columns: Vec<ColumnIndexEntry>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Write `source` to `path` in the column store format. Returns the index.
pub fn write_column_store(
    path: &Path,
    source: &dyn ColumnSource,
    names: &[String],
) -> Result<ColumnIndex> {
    if names.len() != source.n_cols() {
        return Err(Error::InvalidInput(format!(
            "{} names for {} columns",
            names.len(),
            source.n_cols()
        )));
    }
    let mut out = BufWriter::new(File::create(path)?);
    let mut offset = 0u64;
    let mut columns = Vec::with_capacity(names.len());
    for (k, name) in names.iter().enumerate() {
        let col = source.column(k)?;
        for v in col.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
        columns.push(ColumnIndexEntry {
            name: name.clone(),
            offset,
        });
        offset += (col.len() * 8) as u64;
    }
    out.flush()?;
    let index = ColumnIndex {
        n_rows: source.n_rows(),
        columns,
    };
    std::fs::write(sidecar_path(path), serde_json::to_vec_pretty(&index)?)?;
    Ok(index)
}

/// Reads columns from a store written by [`write_column_store`].
#[derive(Debug)]
pub struct FileColumns {
    index: ColumnIndex,
    file: Mutex<File>,
}

impl FileColumns {
    pub fn open(path: &Path) -> Result<Self> {
        let index: ColumnIndex = serde_json::from_slice(&std::fs::read(sidecar_path(path))?)?;
        let file = File::open(path)?;
        let len = file.metadata()?.len();
        let col_bytes = (index.n_rows * 8) as u64;
        for entry in &index.columns {
            if entry.offset + col_bytes > len {
                return Err(Error::Schema(format!(
                    "column {} at offset {} runs past the end of {}",
                    entry.name,
                    entry.offset,
                    path.display()
                )));
            }
        }
        Ok(Self {
            index,
            file: Mutex::new(file),
        })
    }

    pub fn names(&self) -> Vec<String> {
        self.index.columns.iter().map(|c| c.name.clone()).collect()
    }
}

impl ColumnSource for FileColumns {
    fn n_rows(&self) -> usize {
        self.index.n_rows
    }

    fn n_cols(&self) -> usize {
        self.index.columns.len()
    }

    fn column(&self, k: usize) -> Result<Cow<'_, [f64]>> {
        let entry = self
            .index
            .columns
            .get(k)
            .ok_or_else(|| Error::InvalidInput(format!("column {k} out of range")))?;
        let mut buf = vec![0u8; self.index.n_rows * 8];
        {
            let mut file = self.file.lock().expect("column store lock poisoned");
            file.seek(SeekFrom::Start(entry.offset))?;
            file.read_exact(&mut buf)?;
        }
        let col = buf
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(Cow::Owned(col))
    }
}
