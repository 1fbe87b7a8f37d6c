//! The `STCLEMB1` binary matrix format.
//!
//! Layout: 8-byte magic, u32-LE row count, u32-LE dim, then `count * dim`
//! little-endian f32 values row-major. A companion `<path>.ids` text file
//! holds one id per row in the same order.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: &[u8; 8] = b"STCLEMB1";

/// A row matrix with aligned ids: observations, embeddings, any id-keyed
/// vector data. Values are f64 in memory, f32 on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct IdMatrix {
    pub ids: Vec<String>,
    pub data: Array2<f64>,
}

impl IdMatrix {
    pub fn new(ids: Vec<String>, data: Array2<f64>) -> Result<Self> {
        if ids.len() != data.nrows() {
            return Err(Error::DimMismatch(format!(
                "{} ids vs {} matrix rows",
                ids.len(),
                data.nrows()
            )));
        }
        let mut sorted = ids.clone();
        sorted.sort();
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                return Err(Error::DuplicateId(w[0].clone()));
            }
        }
        Ok(Self { ids, data })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    /// Row index of `id`, if present.
    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// Rows whose id satisfies the predicate, in the original order.
    pub fn subset<F: Fn(&str) -> bool>(&self, keep: F) -> IdMatrix {
        let rows: Vec<usize> =
            (0..self.len()).filter(|&i| keep(&self.ids[i])).collect();
        let mut data = Array2::zeros((rows.len(), self.dim()));
        let mut ids = Vec::with_capacity(rows.len());
        for (r, &i) in rows.iter().enumerate() {
            data.row_mut(r).assign(&self.data.row(i));
            ids.push(self.ids[i].clone());
        }
        IdMatrix { ids, data }
    }
}

fn ids_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".ids");
    PathBuf::from(s)
}

/// Write `matrix` to `path` (f32 truncation) and its ids to `<path>.ids`.
pub fn save_matrix(matrix: &IdMatrix, path: &Path) -> Result<()> {
    let count = matrix.len() as u32;
    let dim = matrix.dim() as u32;
    let mut bytes = Vec::with_capacity(16 + 4 * (count as usize) * (dim as usize));
    bytes.extend_from_slice(EMBEDDING_MAGIC);
    bytes.extend_from_slice(&count.to_le_bytes());
    bytes.extend_from_slice(&dim.to_le_bytes());
    for row in matrix.data.rows() {
        for &v in row {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(path, bytes)?;
    let mut ids_text = String::new();
    for id in &matrix.ids {
        ids_text.push_str(id);
        ids_text.push('\n');
    }
    fs::write(ids_path(path), ids_text)?;
    Ok(())
}

/// Read a matrix written by [`save_matrix`], rejecting a bad magic, a
/// truncated block, or an ids/count mismatch.
pub fn load_matrix(path: &Path) -> Result<IdMatrix> {
    let bytes = fs::read(path)?;
    if bytes.len() < 16 {
        return Err(Error::Format(format!(
            "{}: file too short for header ({} bytes)",
            path.display(),
            bytes.len()
        )));
    }
    if &bytes[0..8] != EMBEDDING_MAGIC {
        return Err(Error::Format(format!("{}: bad magic", path.display())));
    }
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let expect = 16 + 4 * count * dim;
    if bytes.len() != expect {
        return Err(Error::Format(format!(
            "{}: expected {} bytes for {}x{}, found {}",
            path.display(),
            expect,
            count,
            dim,
            bytes.len()
        )));
    }
    let mut values = Vec::with_capacity(count * dim);
    for chunk in bytes[16..].chunks_exact(4) {
        values.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
    }
    let data = Array2::from_shape_vec((count, dim), values)
        .map_err(|e| Error::Format(e.to_string()))?;
    let ids_file = ids_path(path);
    let ids_text = fs::read_to_string(&ids_file)
        .map_err(|e| Error::Format(format!("{}: {}", ids_file.display(), e)))?;
    let ids: Vec<String> = ids_text.lines().map(|s| s.to_string()).collect();
    if ids.len() != count {
        return Err(Error::Format(format!(
            "{}: {} ids but block declares {} rows",
            ids_file.display(),
            ids.len(),
            count
        )));
    }
    IdMatrix::new(ids, data)
}
