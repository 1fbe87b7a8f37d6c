//! Representation diagnostics: attention distance, Fourier delta log
//! amplitude of token feature maps, and metadata-joined top-k retrieval.

mod attention;
mod retrieve;
mod spectrum;

pub use attention::{attention_distance, AttentionDistances, AttentionTensor};
pub use retrieve::{retrieve_topk, RetrievalHit, RetrievalResult};
pub use spectrum::{delta_log_amplitude, FeatureMap, SpectrumConfig};
