//! On-disk formats: metadata CSV, the `STCLEMB1` embedding binary, the
//! `STCLTEN1` attention/feature tensor binary, and encoder checkpoints.
//!
//! All binary blocks are little-endian 32-bit floats; computation everywhere
//! else is 64-bit. Every format round-trips bitwise.

mod checkpoint;
mod matrix;
mod metadata;
mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use matrix::{load_matrix, save_matrix, IdMatrix, EMBEDDING_MAGIC};
pub use metadata::{load_metadata, save_metadata, METADATA_HEADER};
pub use tensor::{
    load_tensor_file, save_tensor_file, TensorFile, TensorHeader, TensorKind, TENSOR_MAGIC,
};
