//! Attention distance: the mean distance between query and key token
//! positions, weighted by the self-attention scores. Token positions are
//! patch centers in pixels; larger values mean more global attention.

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::{TensorFile, TensorKind};

/// Row-stochastic attention matrices for every (layer, head).
#[derive(Debug, Clone)]
pub struct AttentionTensor {
    pub layers: usize,
    pub heads: usize,
    pub rows: usize,
    pub cols: usize,
    pub patch_size_px: u32,
    pub class_token: bool,
    /// Indexed `layer * heads + head`, each `tokens x tokens`.
    pub matrices: Vec<Array2<f64>>,
}

impl AttentionTensor {
    pub fn tokens(&self) -> usize {
        self.rows * self.cols + usize::from(self.class_token)
    }

    /// Validate and adopt attention matrices: entries must be non-negative
    /// and every row must sum to 1 within 1e-4.
    pub fn new(
        layers: usize,
        heads: usize,
        rows: usize,
        cols: usize,
        patch_size_px: u32,
        class_token: bool,
        matrices: Vec<Array2<f64>>,
    ) -> Result<Self> {
        let t = Self { layers, heads, rows, cols, patch_size_px, class_token, matrices };
        if t.layers == 0 || t.heads == 0 || t.rows == 0 || t.cols == 0 {
            return Err(Error::InvalidInput("attention tensor dims must be >= 1".into()));
        }
        if t.matrices.len() != t.layers * t.heads {
            return Err(Error::DimMismatch(format!(
                "{} matrices for {} layer-head slots",
                t.matrices.len(),
                t.layers * t.heads
            )));
        }
        let n = t.tokens();
        for (slot, m) in t.matrices.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimMismatch(format!(
                    "attention matrix {slot} is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            for (i, row) in m.rows().into_iter().enumerate() {
                let mut sum = 0.0;
                for &v in row {
                    if v < 0.0 {
                        return Err(Error::InvalidInput(format!(
                            "attention matrix {slot} row {i} has negative entry {v}"
                        )));
                    }
                    sum += v;
                }
                if (sum - 1.0).abs() > 1e-4 {
                    return Err(Error::InvalidInput(format!(
                        "attention matrix {slot} row {i} sums to {sum}, not 1"
                    )));
                }
            }
        }
        Ok(t)
    }

    /// Decode an attention [`TensorFile`].
    pub fn from_tensor_file(t: &TensorFile) -> Result<Self> {
        if t.header.kind != TensorKind::Attention {
            return Err(Error::Format("tensor file does not hold attention matrices".into()));
        }
        let n = t.header.tokens();
        let per = n * n;
        let matrices = (0..t.header.layers * t.header.heads)
            .map(|slot| {
                Array2::from_shape_vec((n, n), t.data[slot * per..(slot + 1) * per].to_vec())
                    .map_err(|e| Error::Format(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            t.header.layers,
            t.header.heads,
            t.header.rows,
            t.header.cols,
            t.header.patch_size_px,
            t.header.class_token,
            matrices,
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AttentionDistances {
    /// `(layer, head, mean distance in pixels)`.
    pub per_head: Vec<(usize, usize, f64)>,
    /// Mean over heads per layer.
    pub per_layer: Vec<(usize, f64)>,
}

/// Mean attention-weighted query-key distance per (layer, head), plus the
/// per-layer mean over heads. The class token, when present, is dropped
/// from both query and key sets and the remaining rows are renormalized.
pub fn attention_distance(attn: &AttentionTensor) -> Result<AttentionDistances> {
    let n_spatial = attn.rows * attn.cols;
    let patch = attn.patch_size_px as f64;
    // Pairwise patch-center distances, shared across heads.
    let mut dist = Array2::zeros((n_spatial, n_spatial));
    for i in 0..n_spatial {
        let (ri, ci) = ((i / attn.cols) as f64, (i % attn.cols) as f64);
        for j in 0..n_spatial {
            let (rj, cj) = ((j / attn.cols) as f64, (j % attn.cols) as f64);
            let dy = (ri - rj) * patch;
            let dx = (ci - cj) * patch;
            dist[[i, j]] = (dx * dx + dy * dy).sqrt();
        }
    }
    let offset = usize::from(attn.class_token);
    let per_head: Vec<(usize, usize, f64)> = (0..attn.layers * attn.heads)
        .into_par_iter()
        .map(|slot| -> Result<(usize, usize, f64)> {
            let m = &attn.matrices[slot];
            let mut total = 0.0;
            for qi in 0..n_spatial {
                let row = m.row(qi + offset);
                let mut weight = 0.0;
                let mut acc = 0.0;
                for kj in 0..n_spatial {
                    let a = row[kj + offset];
                    weight += a;
                    acc += a * dist[[qi, kj]];
                }
                if weight <= 1e-12 {
                    return Err(Error::Degenerate(format!(
                        "attention row {qi} in slot {slot} has no mass outside the class token"
                    )));
                }
                total += acc / weight;
            }
            Ok((slot / attn.heads, slot % attn.heads, total / n_spatial as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    let per_layer: Vec<(usize, f64)> = (0..attn.layers)
        .map(|l| {
            let mean = per_head
                .iter()
                .filter(|(layer, _, _)| *layer == l)
                .map(|(_, _, v)| v)
                .sum::<f64>()
                / attn.heads as f64;
            (l, mean)
        })
        .collect();
    Ok(AttentionDistances { per_head, per_layer })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tensor(rows: usize, cols: usize, patch: u32, matrices: Vec<Array2<f64>>) -> AttentionTensor {
        AttentionTensor::new(1, matrices.len(), rows, cols, patch, false, matrices).unwrap()
    }

    fn random_stochastic(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
        let mut m = Array2::from_shape_fn((n, n), |_| rng.random_range(0.01..1.0f64));
        for mut row in m.rows_mut() {
            let s = row.sum();
            row.mapv_inplace(|v| v / s);
        }
        m
    }

    #[test]
    fn identity_attention_distance_zero() {
        let t = tensor(2, 2, 16, vec![Array2::eye(4)]);
        let d = attention_distance(&t).unwrap();
        assert_eq!(d.per_head[0].2, 0.0);
        assert_eq!(d.per_layer[0].1, 0.0);
    }

    #[test]
    fn uniform_2x2_patch16_closed_form() {
        let m = Array2::from_elem((4, 4), 0.25);
        let t = tensor(2, 2, 16, vec![m]);
        let d = attention_distance(&t).unwrap();
        let expect = 8.0 + 4.0 * 2.0f64.sqrt();
        assert!((d.per_head[0].2 - expect).abs() < 1e-9, "{}", d.per_head[0].2);
    }

    #[test]
    fn random_3x3_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let m = random_stochastic(&mut rng, 9);
            let t = tensor(3, 3, 8, vec![m.clone()]);
            let d = attention_distance(&t).unwrap();
            // Brute force double loop.
            let patch = 8.0;
            let mut total = 0.0;
            for i in 0..9 {
                let (ri, ci) = (i / 3, i % 3);
                let mut acc = 0.0;
                for j in 0..9 {
                    let (rj, cj) = (j / 3, j % 3);
                    let dx = (ci as f64 - cj as f64) * patch;
                    let dy = (ri as f64 - rj as f64) * patch;
                    acc += m[[i, j]] * (dx * dx + dy * dy).sqrt();
                }
                total += acc;
            }
            let expect = total / 9.0;
            assert!((d.per_head[0].2 - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn class_token_dropped_and_renormalized() {
        // 1x2 grid plus class token: spatial tokens attend 50/50 to the
        // class token and one spatial token. After dropping the class token
        // the weight renormalizes onto the spatial tokens.
        let mut m = Array2::zeros((3, 3));
        m[[0, 0]] = 1.0; // class token row, ignored
        m[[1, 0]] = 0.5;
        m[[1, 2]] = 0.5; // -> all mass on the other token after renorm
        m[[2, 0]] = 0.5;
        m[[2, 2]] = 0.5; // -> all mass on itself after renorm
        let t = AttentionTensor::new(1, 1, 1, 2, 10, true, vec![m]).unwrap();
        let d = attention_distance(&t).unwrap();
        // Query 1: all renormalized mass at distance 10; query 2: distance 0.
        assert!((d.per_head[0].2 - 5.0).abs() < 1e-12, "{}", d.per_head[0].2);
    }

    #[test]
    fn non_stochastic_row_rejected() {
        let mut m = Array2::from_elem((4, 4), 0.25);
        m[[2, 0]] = 0.5; // row sums to 1.25
        assert!(AttentionTensor::new(1, 1, 2, 2, 16, false, vec![m]).is_err());
    }

    #[test]
    fn negative_entry_rejected() {
        let mut m = Array2::from_elem((4, 4), 0.25);
        m[[1, 0]] = -0.25;
        m[[1, 1]] = 0.75;
        assert!(AttentionTensor::new(1, 1, 2, 2, 16, false, vec![m]).is_err());
    }

    #[test]
    fn distance_bounded_by_max_pairwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rows = 4;
        let cols = 3;
        let n = rows * cols;
        let patch = 16.0;
        let max_dist = (((rows - 1) as f64 * patch).powi(2)
            + ((cols - 1) as f64 * patch).powi(2))
        .sqrt();
        for _ in 0..10 {
            let m = random_stochastic(&mut rng, n);
            let t = tensor(rows, cols, 16, vec![m]);
            let d = attention_distance(&t).unwrap().per_head[0].2;
            assert!((0.0..=max_dist + 1e-9).contains(&d));
        }
    }

    #[test]
    fn per_layer_is_mean_over_heads() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m1 = random_stochastic(&mut rng, 4);
        let m2 = random_stochastic(&mut rng, 4);
        let t = tensor(2, 2, 16, vec![m1, m2]);
        let d = attention_distance(&t).unwrap();
        let mean = (d.per_head[0].2 + d.per_head[1].2) / 2.0;
        assert!((d.per_layer[0].1 - mean).abs() < 1e-12);
    }
}
