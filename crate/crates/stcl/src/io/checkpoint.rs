//! Encoder checkpoints: 8-byte magic, u32-LE header length, a JSON header
//! (layer dims, seed, config echo), then the parameters as little-endian
//! f32 in flatten order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::contrast::{LossConfig, ToyEncoder, TrainConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"STCLCKP1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Layer widths including input and output.
    pub dims: Vec<usize>,
    pub seed: u64,
    pub train_config: TrainConfig,
    pub loss_config: LossConfig,
    pub param_count: usize,
}

pub fn save_checkpoint(
    encoder: &ToyEncoder,
    train_cfg: &TrainConfig,
    loss_cfg: &LossConfig,
    path: &Path,
) -> Result<()> {
    let header = Checkpoint {
        dims: encoder.dims(),
        seed: train_cfg.seed,
        train_config: train_cfg.clone(),
        loss_config: *loss_cfg,
        param_count: encoder.param_count(),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let params = encoder.flatten();
    let mut bytes = Vec::with_capacity(12 + header_bytes.len() + 4 * params.len());
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&header_bytes);
    for v in params {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ToyEncoder, Checkpoint)> {
    let bytes = fs::read(path)?;
    if bytes.len() < 12 || &bytes[0..8] != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!("{}: not a checkpoint file", path.display())));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() < 12 + header_len {
        return Err(Error::Format(format!("{}: truncated header", path.display())));
    }
    let header: Checkpoint = serde_json::from_slice(&bytes[12..12 + header_len])?;
    if header.dims.len() < 2 {
        return Err(Error::Format(format!("{}: header needs >= 2 layer dims", path.display())));
    }
    let block = &bytes[12 + header_len..];
    let params: Vec<f64> = block
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    if block.len() % 4 != 0 || params.len() != header.param_count {
        return Err(Error::Format(format!(
            "{}: parameter block has {} values, header declares {}",
            path.display(),
            params.len(),
            header.param_count
        )));
    }
    let input_dim = header.dims[0];
    let output_dim = *header.dims.last().unwrap();
    let hidden = &header.dims[1..header.dims.len() - 1];
    let mut encoder = ToyEncoder::new(input_dim, hidden, output_dim, 0)?;
    if encoder.param_count() != params.len() {
        return Err(Error::Format(format!(
            "{}: dims imply {} parameters, block has {}",
            path.display(),
            encoder.param_count(),
            params.len()
        )));
    }
    encoder.set_from_flat(&params)?;
    Ok((encoder, header))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bitwise() {
        let cfg = TrainConfig { hidden_widths: vec![7], embed_dim: 4, ..Default::default() };
        let enc_src = ToyEncoder::new(5, &cfg.hidden_widths, cfg.embed_dim, 9).unwrap();
        // Snap to f32 so the in-memory encoder equals the loaded one.
        let mut enc = enc_src.clone();
        let snapped: Vec<f64> = enc_src.flatten().iter().map(|&v| v as f32 as f64).collect();
        enc.set_from_flat(&snapped).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        save_checkpoint(&enc, &cfg, &LossConfig::default(), &p1).unwrap();
        let (loaded, header) = load_checkpoint(&p1).unwrap();
        assert_eq!(loaded, enc);
        assert_eq!(header.dims, vec![5, 7, 4]);
        save_checkpoint(&loaded, &header.train_config, &header.loss_config, &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.ckpt");
        fs::write(&p, b"NOTMAGIC....").unwrap();
        assert!(matches!(load_checkpoint(&p), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_block_rejected() {
        let cfg = TrainConfig { hidden_widths: vec![3], embed_dim: 2, ..Default::default() };
        let enc = ToyEncoder::new(4, &cfg.hidden_widths, cfg.embed_dim, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.ckpt");
        save_checkpoint(&enc, &cfg, &LossConfig::default(), &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(load_checkpoint(&p), Err(Error::Format(_))));
    }
}
