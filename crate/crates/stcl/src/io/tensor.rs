//! The `STCLTEN1` tensor file carrying attention matrices or token feature
//! maps produced by an external backbone.
//!
//! Layout: 8-byte magic, u32-LE header length, JSON header, then the f32-LE
//! block in layer-major order. Attention blocks are `layers*heads*N*N`
//! (row-major per matrix); feature blocks are `layers*N*channels`, where
//! `N = rows*cols` plus one leading class token when the flag is set.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 8] = b"STCLTEN1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorKind {
    Attention,
    Features,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorHeader {
    pub kind: TensorKind,
    pub layers: usize,
    /// Attention heads per layer; ignored for feature maps.
    #[serde(default = "one")]
    pub heads: usize,
    pub rows: usize,
    pub cols: usize,
    pub patch_size_px: u32,
    pub class_token: bool,
    /// Feature channels per token; ignored for attention.
    #[serde(default = "one")]
    pub channels: usize,
}

fn one() -> usize {
    1
}

impl TensorHeader {
    /// Token count including the class token when present.
    pub fn tokens(&self) -> usize {
        self.rows * self.cols + usize::from(self.class_token)
    }

    /// Expected f32 count of the data block.
    pub fn block_len(&self) -> usize {
        let n = self.tokens();
        match self.kind {
            TensorKind::Attention => self.layers * self.heads * n * n,
            TensorKind::Features => self.layers * n * self.channels,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub header: TensorHeader,
    /// Flat block in the documented layer-major order, widened to f64.
    pub data: Vec<f64>,
}

impl TensorFile {
    pub fn new(header: TensorHeader, data: Vec<f64>) -> Result<Self> {
        if header.layers == 0 || header.rows == 0 || header.cols == 0 {
            return Err(Error::InvalidInput("tensor dims must be >= 1".into()));
        }
        if data.len() != header.block_len() {
            return Err(Error::DimMismatch(format!(
                "tensor block has {} values, header implies {}",
                data.len(),
                header.block_len()
            )));
        }
        Ok(Self { header, data })
    }
}

pub fn save_tensor_file(t: &TensorFile, path: &Path) -> Result<()> {
    let header = serde_json::to_vec(&t.header)?;
    let mut bytes = Vec::with_capacity(16 + header.len() + 4 * t.data.len());
    bytes.extend_from_slice(TENSOR_MAGIC);
    bytes.extend_from_slice(&(header.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&header);
    for &v in &t.data {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_tensor_file(path: &Path) -> Result<TensorFile> {
    let bytes = fs::read(path)?;
    if bytes.len() < 12 || &bytes[0..8] != TENSOR_MAGIC {
        return Err(Error::Format(format!("{}: not a tensor file", path.display())));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() < 12 + header_len {
        return Err(Error::Format(format!("{}: truncated header", path.display())));
    }
    let header: TensorHeader = serde_json::from_slice(&bytes[12..12 + header_len])?;
    let block = &bytes[12 + header_len..];
    if block.len() != 4 * header.block_len() {
        return Err(Error::Format(format!(
            "{}: block is {} bytes, header implies {}",
            path.display(),
            block.len(),
            4 * header.block_len()
        )));
    }
    let data: Vec<f64> = block
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    TensorFile::new(header, data)
}
