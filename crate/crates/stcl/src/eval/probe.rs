//! Linear probing of frozen embeddings: logistic regression trained by
//! full-batch gradient descent for a fixed number of epochs, scored with
//! exact classification metrics (AUC by pairwise comparison with the tie
//! rule `P(s+ > s-) + 0.5 P(tie)`).

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Binary probe task: features, labels, and the protocol constants
/// (80/20 split, 20 epochs).
#[derive(Debug, Clone)]
pub struct ProbeTask {
    pub features: Array2<f64>,
    pub labels: Vec<bool>,
    pub split_fraction: f64,
    pub epochs: usize,
}

impl ProbeTask {
    pub fn new(features: Array2<f64>, labels: Vec<bool>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimMismatch(format!(
                "{} feature rows vs {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if features.nrows() < 4 {
            return Err(Error::InvalidInput("probe task needs at least 4 samples".into()));
        }
        Ok(Self { features, labels, split_fraction: 0.8, epochs: 20 })
    }

    /// Build a task from continuous scores: below `low` is class 0, above
    /// `high` is class 1, rows in between are dropped.
    pub fn from_scores(
        features: &Array2<f64>,
        scores: &[f64],
        low: f64,
        high: f64,
    ) -> Result<Self> {
        if features.nrows() != scores.len() {
            return Err(Error::DimMismatch(format!(
                "{} feature rows vs {} scores",
                features.nrows(),
                scores.len()
            )));
        }
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (i, &s) in scores.iter().enumerate() {
            if s < low {
                rows.push(i);
                labels.push(false);
            } else if s > high {
                rows.push(i);
                labels.push(true);
            }
        }
        let mut kept = Array2::zeros((rows.len(), features.ncols()));
        for (r, &i) in rows.iter().enumerate() {
            kept.row_mut(r).assign(&features.row(i));
        }
        Self::new(kept, labels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub recall: f64,
    pub f1: f64,
    /// `None` when only one class is present.
    pub auc: Option<f64>,
}

/// Threshold rule: predict positive when `score > threshold`.
pub fn classification_metrics(scores: &[f64], labels: &[bool], threshold: f64) -> Result<Metrics> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::DimMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut tn = 0u64;
    let mut fn_ = 0u64;
    for (&s, &y) in scores.iter().zip(labels) {
        let pred = s > threshold;
        match (pred, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let total = (tp + fp + tn + fn_) as f64;
    let accuracy = (tp + tn) as f64 / total;
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f1 = if 2 * tp + fp + fn_ == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    };
    let auc = auc_exact(scores, labels).ok();
    Ok(Metrics { accuracy, recall, f1, auc })
}

/// Exact AUC: `P(score+ > score-) + 0.5 P(tie)` over all positive-negative
/// pairs. Rejects one-class label sets.
pub fn auc_exact(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let n_pos = labels.iter().filter(|&&y| y).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Degenerate("AUC needs both classes present".into()));
    }
    let mut wins2 = 0u64; // 2*wins + ties
    for (&si, &yi) in scores.iter().zip(labels) {
        if !yi {
            continue;
        }
        for (&sj, &yj) in scores.iter().zip(labels) {
            if yj {
                continue;
            }
            if si > sj {
                wins2 += 2;
            } else if si == sj {
                wins2 += 1;
            }
        }
    }
    Ok(wins2 as f64 / (2 * n_pos * n_neg) as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeOutput {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub train_size: usize,
    pub test_size: usize,
    /// Sigmoid scores on the held-out split.
    pub test_scores: Vec<f64>,
    pub test_labels: Vec<bool>,
    pub metrics: Metrics,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Train a logistic probe: zero-initialized weights, full-batch gradient
/// descent, exactly `task.epochs` epochs. The seed drives only the split.
/// Rejects a single-class training set.
pub fn train_linear_probe(task: &ProbeTask, lr: f64, seed: u64) -> Result<ProbeOutput> {
    if !(lr > 0.0) {
        return Err(Error::InvalidInput("learning rate must be > 0".into()));
    }
    let m = task.features.nrows();
    let mut order: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_train = ((m as f64 * task.split_fraction).round() as usize).clamp(1, m - 1);
    let (train_idx, test_idx) = order.split_at(n_train);

    let gather = |idx: &[usize]| -> (Array2<f64>, Vec<bool>) {
        let mut x = Array2::zeros((idx.len(), task.features.ncols()));
        let mut y = Vec::with_capacity(idx.len());
        for (r, &i) in idx.iter().enumerate() {
            x.row_mut(r).assign(&task.features.row(i));
            y.push(task.labels[i]);
        }
        (x, y)
    };
    let (x_train, y_train) = gather(train_idx);
    let (x_test, y_test) = gather(test_idx);
    let pos = y_train.iter().filter(|&&y| y).count();
    if pos == 0 || pos == y_train.len() {
        return Err(Error::Degenerate(
            "training split contains a single class; cannot fit a probe".into(),
        ));
    }

    let n = x_train.nrows() as f64;
    let y_vec = Array1::from_vec(y_train.iter().map(|&y| if y { 1.0 } else { 0.0 }).collect());
    let mut w = Array1::<f64>::zeros(task.features.ncols());
    let mut b = 0.0f64;
    for _ in 0..task.epochs {
        let z = x_train.dot(&w) + b;
        let p = z.mapv(sigmoid);
        let err = &p - &y_vec;
        let grad_w = x_train.t().dot(&err) / n;
        let grad_b = err.sum() / n;
        w.scaled_add(-lr, &grad_w);
        b -= lr * grad_b;
    }

    let test_scores: Vec<f64> = (x_test.dot(&w) + b).mapv(sigmoid).to_vec();
    let metrics = classification_metrics(&test_scores, &y_test, 0.5)?;
    Ok(ProbeOutput {
        weights: w.to_vec(),
        bias: b,
        train_size: train_idx.len(),
        test_size: test_idx.len(),
        test_scores,
        test_labels: y_test,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn perfect_separation_metrics() {
        let metrics =
            classification_metrics(&[0.9, 0.8, 0.3, 0.1], &[true, true, false, false], 0.5)
                .unwrap();
        assert_eq!(metrics.accuracy, 1.0);
        assert_eq!(metrics.auc, Some(1.0));
        assert_eq!(metrics.recall, 1.0);
        assert_eq!(metrics.f1, 1.0);
    }

    #[test]
    fn auc_three_quarters() {
        let auc = auc_exact(&[0.9, 0.4, 0.6, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(auc, 0.75);
    }

    #[test]
    fn f1_from_hand_confusion_matrix() {
        // TP=2, FP=1, FN=1, TN=1: F1 = 2*2 / (2*2 + 1 + 1) = 2/3.
        let scores = [0.9, 0.8, 0.7, 0.2, 0.1];
        let labels = [true, true, false, true, false];
        let m = classification_metrics(&scores, &labels, 0.5).unwrap();
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.accuracy, 3.0 / 5.0);
    }

    #[test]
    fn auc_rejects_one_class_but_other_metrics_compute() {
        let scores = [0.9, 0.8];
        let labels = [true, true];
        assert!(auc_exact(&scores, &labels).is_err());
        let m = classification_metrics(&scores, &labels, 0.5).unwrap();
        assert_eq!(m.auc, None);
        assert_eq!(m.accuracy, 1.0);
    }

    #[test]
    fn auc_matches_pairwise_oracle_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..50 {
            let n = rng.random_range(5..40usize);
            // Coarse grid of score values forces ties.
            let scores: Vec<f64> =
                (0..n).map(|_| rng.random_range(0..5) as f64 / 4.0).collect();
            let labels: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.5).collect();
            let n_pos = labels.iter().filter(|&&y| y).count();
            if n_pos == 0 || n_pos == n {
                continue;
            }
            let mut total = 0.0f64;
            for i in 0..n {
                for j in 0..n {
                    if labels[i] && !labels[j] {
                        if scores[i] > scores[j] {
                            total += 1.0;
                        } else if scores[i] == scores[j] {
                            total += 0.5;
                        }
                    }
                }
            }
            let oracle = total / (n_pos * (n - n_pos)) as f64;
            assert_eq!(auc_exact(&scores, &labels).unwrap(), oracle);
        }
    }

    #[test]
    fn separable_toy_set_reaches_full_accuracy() {
        // Two clusters on a 2D line, linearly separable with margin.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 40;
        let mut x = Array2::zeros((n, 2));
        let mut labels = Vec::new();
        for i in 0..n {
            let pos = i % 2 == 0;
            let center = if pos { 2.0 } else { -2.0 };
            x[[i, 0]] = center + rng.random_range(-0.5..0.5);
            x[[i, 1]] = rng.random_range(-0.5..0.5);
            labels.push(pos);
        }
        let task = ProbeTask::new(x, labels).unwrap();
        let out = train_linear_probe(&task, 1.0, 3).unwrap();
        assert_eq!(out.metrics.accuracy, 1.0, "metrics {:?}", out.metrics);
    }

    #[test]
    fn random_labels_give_chance_auc() {
        let mut aucs = Vec::new();
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 100;
            let x = Array::from_shape_fn((n, 4), |_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                v
            });
            let labels: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.5).collect();
            let task = ProbeTask::new(x, labels).unwrap();
            match train_linear_probe(&task, 0.1, seed) {
                Ok(out) => {
                    if let Some(auc) = out.metrics.auc {
                        aucs.push(auc);
                    }
                }
                Err(Error::Degenerate(_)) => continue,
                Err(e) => panic!("{e}"),
            }
        }
        let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
        assert!((0.35..=0.65).contains(&mean), "mean AUC {mean}");
    }

    #[test]
    fn zero_epochs_scores_half_auc_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array::from_shape_fn((20, 3), |_| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v
        });
        let labels: Vec<bool> = (0..20).map(|i| i % 2 == 0).collect();
        let mut task = ProbeTask::new(x, labels).unwrap();
        task.epochs = 0;
        let mut saw_both_classes = false;
        for seed in 0..10 {
            let out = train_linear_probe(&task, 0.1, seed).unwrap();
            assert!(out.test_scores.iter().all(|&s| s == 0.5));
            // The tie rule makes AUC exactly 1/2 whenever both classes land
            // in the test split.
            if let Some(auc) = out.metrics.auc {
                assert_eq!(auc, 0.5);
                saw_both_classes = true;
            }
        }
        assert!(saw_both_classes);
    }

    #[test]
    fn single_class_training_rejected() {
        let x = Array2::zeros((10, 2));
        let labels = vec![true; 10];
        let task = ProbeTask::new(x, labels).unwrap();
        assert!(matches!(train_linear_probe(&task, 0.1, 1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn from_scores_thresholds() {
        let features = Array2::zeros((5, 2));
        let scores = [2.0, 3.4, 5.0, 6.6, 9.0];
        let task = ProbeTask::from_scores(&features, &scores, 3.5, 6.5).unwrap();
        assert_eq!(task.labels, vec![false, false, true, true]);
        assert_eq!(task.features.nrows(), 4);
    }
}
