//! Seeded contrastive training: warmup + cosine learning-rate schedule,
//! adaptive-moment updates with decoupled weight decay, and view assembly
//! from a pair manifest.

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::io::IdMatrix;
use crate::pairs::{PairManifest, PairType};

use super::{infonce_grad, LossConfig, ToyEncoder, TrainConfig};

/// Learning rate at a (possibly fractional) epoch: linear ramp from 0 to
/// `base_lr` over the warmup, then cosine decay to 0 at the final epoch.
pub fn lr_at_step(cfg: &TrainConfig, epoch: f64) -> f64 {
    let warmup = cfg.warmup_epochs as f64;
    let total = cfg.epochs as f64;
    let epoch = epoch.clamp(0.0, total);
    if epoch < warmup {
        cfg.base_lr * epoch / warmup
    } else {
        let progress = (epoch - warmup) / (total - warmup);
        cfg.base_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

/// Adaptive-moment optimizer with decoupled weight decay over a flat
/// parameter vector.
pub struct AdamW {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl AdamW {
    pub fn new(n_params: usize) -> Self {
        Self { m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64, weight_decay: f64) {
        debug_assert_eq!(params.len(), grads.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * (m_hat / (v_hat.sqrt() + self.eps) + weight_decay * params[i]);
        }
    }
}

/// Additive Gaussian noise followed by coordinate dropout; the two views of
/// a self pair are two independent draws. Noise is sampled for every
/// coordinate first, then the dropout mask, so the RNG stream is stable.
pub fn augment(x: ArrayView1<f64>, sigma: f64, dropout_p: f64, rng: &mut ChaCha8Rng) -> Array1<f64> {
    let mut out = x.to_owned();
    for v in out.iter_mut() {
        let n: f64 = StandardNormal.sample(rng);
        *v += sigma * n;
    }
    for v in out.iter_mut() {
        if rng.random::<f64>() < dropout_p {
            *v = 0.0;
        }
    }
    out
}

/// A trained encoder plus its per-epoch mean loss curve.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub encoder: ToyEncoder,
    pub loss_curve: Vec<f64>,
}

/// Train a [`ToyEncoder`] on a pair manifest with in-batch negatives.
///
/// Both views pass through the single encoder; self pairs get two augmented
/// views, temporal and spatial pairs use the two records' observations
/// directly. Pairs are reshuffled every epoch; a trailing single-pair batch
/// is dropped, except that a one-pair dataset is trained as a duplicated
/// two-row batch so the loss remains defined. Deterministic given the seed.
pub fn train_contrastive(
    manifest: &PairManifest,
    observations: &IdMatrix,
    cfg: &TrainConfig,
    loss_cfg: &LossConfig,
) -> Result<TrainOutput> {
    cfg.validate()?;
    loss_cfg.validate()?;
    if manifest.pairs.is_empty() {
        return Err(Error::InvalidInput("cannot train on an empty manifest".into()));
    }
    let slot_of: HashMap<&str, usize> =
        observations.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    for p in &manifest.pairs {
        for id in [&p.id_a, &p.id_b] {
            if !slot_of.contains_key(id.as_str()) {
                return Err(Error::MissingObservation(id.clone()));
            }
        }
    }

    let input_dim = observations.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut encoder = ToyEncoder::new(input_dim, &cfg.hidden_widths, cfg.embed_dim, rng.random())?;
    let mut params = encoder.flatten();
    let mut optimizer = AdamW::new(params.len());

    let mut order: Vec<usize> = (0..manifest.pairs.len()).collect();
    let mut loss_curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let chunks: Vec<Vec<usize>> = if order.len() == 1 {
            vec![vec![order[0], order[0]]]
        } else {
            order
                .chunks(cfg.batch_size)
                .filter(|c| c.len() >= 2)
                .map(|c| c.to_vec())
                .collect()
        };
        let n_batches = chunks.len();
        let mut epoch_loss = 0.0;
        for (batch_idx, chunk) in chunks.iter().enumerate() {
            let b = chunk.len();
            let mut xa = Array2::zeros((b, input_dim));
            let mut xb = Array2::zeros((b, input_dim));
            for (row, &pair_idx) in chunk.iter().enumerate() {
                let pair = &manifest.pairs[pair_idx];
                let oa = observations.data.row(slot_of[pair.id_a.as_str()]);
                let ob = observations.data.row(slot_of[pair.id_b.as_str()]);
                match pair.pair_type {
                    PairType::SelfPair => {
                        xa.row_mut(row)
                            .assign(&augment(oa, cfg.aug_noise_sigma, cfg.aug_dropout_p, &mut rng));
                        xb.row_mut(row)
                            .assign(&augment(oa, cfg.aug_noise_sigma, cfg.aug_dropout_p, &mut rng));
                    }
                    PairType::Temporal | PairType::Spatial => {
                        xa.row_mut(row).assign(&oa);
                        xb.row_mut(row).assign(&ob);
                    }
                }
            }
            let cache_a = encoder.forward_batch(xa.view())?;
            let cache_b = encoder.forward_batch(xb.view())?;
            let (loss, d_ya, d_yb) =
                infonce_grad(cache_a.output.view(), cache_b.output.view(), loss_cfg)?;
            let mut grads = encoder.backward(&cache_a, d_ya.view());
            grads.add(&encoder.backward(&cache_b, d_yb.view()));

            let lr = lr_at_step(cfg, epoch as f64 + batch_idx as f64 / n_batches as f64);
            optimizer.step(&mut params, &grads.flatten(), lr, cfg.weight_decay);
            encoder.set_from_flat(&params)?;
            epoch_loss += loss;
        }
        loss_curve.push(epoch_loss / n_batches as f64);
    }
    Ok(TrainOutput { encoder, loss_curve })
}

/// Encode every observation row, preserving id order.
pub fn embed_observations(encoder: &ToyEncoder, observations: &IdMatrix) -> Result<IdMatrix> {
    let cache = encoder.forward_batch(observations.data.view())?;
    IdMatrix::new(observations.ids.clone(), cache.output)
}
