//! InfoNCE: negative log softmax probability of the positive key among
//! negatives, over temperature-scaled dot products. The per-pair form takes
//! an explicit negative set; the batch form treats every other key in the
//! batch as a negative, optionally symmetrized over both directions.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

use super::LossConfig;

/// Scale a vector to unit L2 norm. Rejects the zero vector.
pub fn l2_normalize(v: ArrayView1<f64>) -> Result<Array1<f64>> {
    let norm = v.dot(&v).sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::Degenerate(format!("cannot normalize vector with norm {norm}")));
    }
    Ok(v.mapv(|x| x / norm))
}

/// Normalize every row of a matrix in place. Rejects zero rows.
pub fn l2_normalize_rows(m: &mut Array2<f64>) -> Result<()> {
    for mut row in m.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Degenerate(format!("cannot normalize row with norm {norm}")));
        }
        row.mapv_inplace(|x| x / norm);
    }
    Ok(())
}

fn logsumexp(logits: &[f64]) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|&l| (l - m).exp()).sum::<f64>().ln()
}

/// Per-pair InfoNCE loss of a query against one positive and a list of
/// negatives. With no negatives the softmax is over a single element and
/// the loss is exactly zero.
pub fn infonce_loss(
    query: ArrayView1<f64>,
    key_pos: ArrayView1<f64>,
    negatives: &[ArrayView1<f64>],
    cfg: &LossConfig,
) -> Result<f64> {
    cfg.validate()?;
    let d = query.len();
    if key_pos.len() != d {
        return Err(Error::DimMismatch(format!(
            "query dim {d} vs positive key dim {}",
            key_pos.len()
        )));
    }
    for (i, n) in negatives.iter().enumerate() {
        if n.len() != d {
            return Err(Error::DimMismatch(format!("query dim {d} vs negative {i} dim {}", n.len())));
        }
    }
    if negatives.is_empty() {
        return Ok(0.0);
    }
    let mut logits = Vec::with_capacity(negatives.len() + 1);
    let pos = query.dot(&key_pos) / cfg.temperature;
    logits.push(pos);
    for n in negatives {
        logits.push(query.dot(n) / cfg.temperature);
    }
    Ok(logsumexp(&logits) - pos)
}

fn check_batch(queries: ArrayView2<f64>, keys: ArrayView2<f64>) -> Result<usize> {
    if queries.shape() != keys.shape() {
        return Err(Error::DimMismatch(format!(
            "queries {:?} vs keys {:?}",
            queries.shape(),
            keys.shape()
        )));
    }
    let n = queries.nrows();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "batch of {n} rows has no negatives; need n >= 2"
        )));
    }
    Ok(n)
}

/// Mean one-direction InfoNCE over logits `S = Q K^T / tau`, with row i's
/// positive on the diagonal.
fn directional_mean_loss(logits: &Array2<f64>) -> f64 {
    let n = logits.nrows();
    let mut total = 0.0;
    for i in 0..n {
        let row: Vec<f64> = logits.row(i).to_vec();
        total += logsumexp(&row) - row[i];
    }
    total / n as f64
}

/// Batch InfoNCE with in-batch negatives: row i of `keys` is the positive
/// for row i of `queries`, every other key is a negative. When symmetrized,
/// the mean of both directions. Rows are expected unit-norm.
pub fn infonce_batch(
    queries: ArrayView2<f64>,
    keys: ArrayView2<f64>,
    cfg: &LossConfig,
) -> Result<f64> {
    cfg.validate()?;
    check_batch(queries, keys)?;
    let logits = queries.dot(&keys.t()) / cfg.temperature;
    let forward = directional_mean_loss(&logits);
    if !cfg.symmetrized {
        return Ok(forward);
    }
    let backward = directional_mean_loss(&logits.t().to_owned());
    Ok(0.5 * (forward + backward))
}

/// Row-softmax of a logits matrix, max-subtracted per row.
fn row_softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|x| (x - m).exp());
        let s = row.sum();
        row.mapv_inplace(|x| x / s);
    }
    p
}

/// Batch InfoNCE and its exact gradients with respect to queries and keys.
///
/// For the forward direction with probabilities `P = softmax(S)` and
/// `S = Q K^T / tau`, `dL/dQ = (P - I) K / (n tau)` and
/// `dL/dK = (P - I)^T Q / (n tau)`; the symmetrized loss averages the same
/// expressions on the transposed logits.
pub fn infonce_grad(
    queries: ArrayView2<f64>,
    keys: ArrayView2<f64>,
    cfg: &LossConfig,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    cfg.validate()?;
    let n = check_batch(queries, keys)?;
    let scale = 1.0 / (n as f64 * cfg.temperature);
    let logits = queries.dot(&keys.t()) / cfg.temperature;

    let mut p = row_softmax(&logits);
    let forward = directional_mean_loss(&logits);
    for i in 0..n {
        p[[i, i]] -= 1.0;
    }
    let mut d_queries = p.dot(&keys) * scale;
    let mut d_keys = p.t().dot(&queries) * scale;
    let mut loss = forward;

    if cfg.symmetrized {
        let logits_t = logits.t().to_owned();
        let mut p2 = row_softmax(&logits_t);
        let backward = directional_mean_loss(&logits_t);
        for i in 0..n {
            p2[[i, i]] -= 1.0;
        }
        let d_keys_2 = p2.dot(&queries) * scale;
        let d_queries_2 = p2.t().dot(&keys) * scale;
        d_queries = (d_queries + d_queries_2) * 0.5;
        d_keys = (d_keys + d_keys_2) * 0.5;
        loss = 0.5 * (forward + backward);
    }
    Ok((loss, d_queries, d_keys))
}

/// Mean loss decomposed per row, used by tests comparing the batch form
/// against per-pair calls.
pub fn infonce_batch_rows(
    queries: ArrayView2<f64>,
    keys: ArrayView2<f64>,
    cfg: &LossConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = check_batch(queries, keys)?;
    let logits = queries.dot(&keys.t()) / cfg.temperature;
    Ok((0..n)
        .map(|i| {
            let row: Vec<f64> = logits.row(i).to_vec();
            logsumexp(&row) - row[i]
        })
        .collect())
}

/// Mean row norm deviation from 1, a cheap unit-norm diagnostic.
pub fn max_row_norm_error(m: ArrayView2<f64>) -> f64 {
    m.axis_iter(Axis(0))
        .map(|row| (row.dot(&row).sqrt() - 1.0).abs())
        .fold(0.0, f64::max)
}
