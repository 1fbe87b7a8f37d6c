//! Area-level regression: mean feature aggregation, LASSO via cyclic
//! coordinate descent with soft thresholding, and seeded cross-validation.
//!
//! The LASSO objective is `(1/2m) ||y - b0 - X b||^2 + lambda ||b||_1` with
//! an unpenalized intercept; columns are standardized to zero mean and unit
//! (population) variance before fitting, so lambda values are independent
//! of the dataset size.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geo::ImageRecord;

use super::EmbeddingSet;

/// Mean embedding per area, ordered by area id. Every embedding id must
/// resolve to a record carrying an area id; offenders are listed.
pub fn aggregate_by_area(
    embeddings: &EmbeddingSet,
    records: &[ImageRecord],
) -> Result<(Vec<String>, Array2<f64>)> {
    let area_of: BTreeMap<&str, Option<&str>> =
        records.iter().map(|r| (r.id.as_str(), r.area_id.as_deref())).collect();
    let mut missing: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, id) in embeddings.ids.iter().enumerate() {
        match area_of.get(id.as_str()) {
            Some(Some(area)) => groups.entry(area).or_default().push(i),
            _ => missing.push(id),
        }
    }
    if !missing.is_empty() {
        return Err(Error::RecordsWithoutArea(missing.join(", ")));
    }
    let d = embeddings.dim();
    let mut features = Array2::zeros((groups.len(), d));
    let mut ids = Vec::with_capacity(groups.len());
    for (row, (area, members)) in groups.into_iter().enumerate() {
        let mut mean = Array1::<f64>::zeros(d);
        for &i in &members {
            mean += &embeddings.matrix.row(i);
        }
        mean /= members.len() as f64;
        features.row_mut(row).assign(&mean);
        ids.push(area.to_string());
    }
    Ok((ids, features))
}

/// Standardize columns to zero mean, unit population variance. Constant
/// columns are left as zeros and reported.
pub fn standardize_columns(x: ArrayView2<f64>) -> (Array2<f64>, Array1<f64>, Array1<f64>, Vec<usize>) {
    let m = x.nrows() as f64;
    let means = x.mean_axis(Axis(0)).unwrap();
    let mut out = x.to_owned();
    let mut stds = Array1::zeros(x.ncols());
    let mut constant = Vec::new();
    for j in 0..x.ncols() {
        let mut var = 0.0;
        for i in 0..x.nrows() {
            let c = x[[i, j]] - means[j];
            var += c * c;
        }
        var /= m;
        let std = var.sqrt();
        stds[j] = std;
        if std <= 1e-12 {
            constant.push(j);
            for i in 0..x.nrows() {
                out[[i, j]] = 0.0;
            }
        } else {
            for i in 0..x.nrows() {
                out[[i, j]] = (x[[i, j]] - means[j]) / std;
            }
        }
    }
    (out, means, stds, constant)
}

/// Smallest lambda shrinking every coefficient to zero:
/// `max_j |(1/m) x_j . (y - mean(y))|` after column centering.
pub fn lambda_max(x: ArrayView2<f64>, y: ArrayView1<f64>) -> f64 {
    let m = x.nrows() as f64;
    let y_mean = y.sum() / m;
    let col_means = x.mean_axis(Axis(0)).unwrap();
    let mut best = 0.0f64;
    for j in 0..x.ncols() {
        let mut dot = 0.0;
        for i in 0..x.nrows() {
            dot += (x[[i, j]] - col_means[j]) * (y[i] - y_mean);
        }
        best = best.max((dot / m).abs());
    }
    best
}

/// 50 logarithmically spaced values from `lambda_max` down to
/// `lambda_max * 1e-4`.
pub fn default_lambda_grid(lambda_max: f64) -> Vec<f64> {
    let top = lambda_max.max(1e-12);
    let n = 50;
    (0..n)
        .map(|i| top * 10f64.powf(-4.0 * i as f64 / (n - 1) as f64))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct LassoFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub sweeps: usize,
    pub converged: bool,
    /// Columns with zero variance whose coefficients were pinned at 0.
    pub constant_columns: Vec<usize>,
}

impl LassoFit {
    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let beta = Array1::from_vec(self.coefficients.clone());
        x.dot(&beta) + self.intercept
    }

    pub fn l1_norm(&self) -> f64 {
        self.coefficients.iter().map(|c| c.abs()).sum()
    }
}

fn soft_threshold(v: f64, lambda: f64) -> f64 {
    if v > lambda {
        v - lambda
    } else if v < -lambda {
        v + lambda
    } else {
        0.0
    }
}

/// Cyclic coordinate descent. Converged when the largest coefficient change
/// in a sweep drops below 1e-8, capped at 10,000 sweeps. The intercept is
/// handled exactly by centering, so pre-standardized input gives an
/// intercept equal to the target mean.
pub fn lasso_fit(x: ArrayView2<f64>, y: ArrayView1<f64>, lambda: f64) -> Result<LassoFit> {
    let m = x.nrows();
    if m == 0 || m != y.len() {
        return Err(Error::DimMismatch(format!("{} rows vs {} targets", m, y.len())));
    }
    if lambda < 0.0 {
        return Err(Error::InvalidInput("lambda must be >= 0".into()));
    }
    let mf = m as f64;
    let d = x.ncols();
    let col_means = x.mean_axis(Axis(0)).unwrap();
    let y_mean = y.sum() / mf;
    let xc = &x - &col_means.view().insert_axis(Axis(0));
    let yc = y.mapv(|v| v - y_mean);

    // Per-column (1/m) sum of squares.
    let mut col_norm = Array1::zeros(d);
    let mut constant_columns = Vec::new();
    for j in 0..d {
        let col = xc.column(j);
        let z = col.dot(&col) / mf;
        col_norm[j] = z;
        if z <= 1e-24 {
            constant_columns.push(j);
        }
    }

    let mut beta = Array1::<f64>::zeros(d);
    let mut residual = yc.clone();
    let max_sweeps = 10_000;
    let tol = 1e-8;
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut max_delta = 0.0f64;
        for j in 0..d {
            if col_norm[j] <= 1e-24 {
                continue;
            }
            let col = xc.column(j);
            let rho = col.dot(&residual) / mf + col_norm[j] * beta[j];
            let new = soft_threshold(rho, lambda) / col_norm[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                residual.scaled_add(-delta, &col);
                beta[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < tol {
            converged = true;
            break;
        }
    }
    let intercept = y_mean - beta.dot(&col_means);
    Ok(LassoFit { coefficients: beta.to_vec(), intercept, sweeps, converged, constant_columns })
}

/// Coefficient of determination `1 - SS_res / SS_tot`.
pub fn r2_score(y_true: ArrayView1<f64>, y_pred: ArrayView1<f64>) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::DimMismatch(format!(
            "{} true vs {} predicted",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.len() < 2 {
        return Err(Error::InvalidInput("r2_score needs at least 2 samples".into()));
    }
    let mean = y_true.sum() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Degenerate("r2_score target is constant".into()));
    }
    let ss_res: f64 = y_true.iter().zip(y_pred.iter()).map(|(t, p)| (t - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Area features and targets plus the protocol constants: a 70/30 split and
/// 5-fold cross-validation on the training portion.
#[derive(Debug, Clone)]
pub struct RegressionTask {
    pub features: Array2<f64>,
    pub targets: Array1<f64>,
    pub split_fraction: f64,
    pub folds: usize,
    /// Overrides the default grid derived from the training lambda_max.
    pub lambda_grid: Option<Vec<f64>>,
}

impl RegressionTask {
    pub fn new(features: Array2<f64>, targets: Array1<f64>) -> Result<Self> {
        let task = Self { features, targets, split_fraction: 0.7, folds: 5, lambda_grid: None };
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.nrows() != self.targets.len() {
            return Err(Error::DimMismatch(format!(
                "{} feature rows vs {} targets",
                self.features.nrows(),
                self.targets.len()
            )));
        }
        if self.features.nrows() < self.folds {
            return Err(Error::InvalidInput(format!(
                "{} samples cannot support {} folds",
                self.features.nrows(),
                self.folds
            )));
        }
        if !(0.0 < self.split_fraction && self.split_fraction < 1.0) {
            return Err(Error::InvalidInput("split_fraction must be in (0, 1)".into()));
        }
        if self.folds < 2 {
            return Err(Error::InvalidInput("folds must be >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CvReport {
    pub chosen_lambda: f64,
    pub test_r2: f64,
    pub train_size: usize,
    pub test_size: usize,
    /// Mean validation R^2 per grid value, in grid order.
    pub cv_curve: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

/// 70/30 seeded split, 5-fold cross-validated lambda selection on the
/// training portion (ties favor the larger lambda), a final fit on the full
/// training set, and the held-out test R^2.
pub fn cross_validate(task: &RegressionTask, seed: u64) -> Result<CvReport> {
    task.validate()?;
    let m = task.features.nrows();
    let mut order: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_train =
        ((m as f64 * task.split_fraction).round() as usize).clamp(task.folds, m.saturating_sub(2));
    if n_train < task.folds || m - n_train < 2 {
        return Err(Error::InvalidInput(format!(
            "split leaves train {n_train} / test {} which is too small",
            m - n_train
        )));
    }
    let train_idx = &order[..n_train];
    let test_idx = &order[n_train..];

    let take = |idx: &[usize]| -> (Array2<f64>, Array1<f64>) {
        let mut x = Array2::zeros((idx.len(), task.features.ncols()));
        let mut y = Array1::zeros(idx.len());
        for (row, &i) in idx.iter().enumerate() {
            x.row_mut(row).assign(&task.features.row(i));
            y[row] = task.targets[i];
        }
        (x, y)
    };
    let (x_train_raw, y_train) = take(train_idx);
    let (x_test_raw, y_test) = take(test_idx);

    // Standardize on the training statistics only.
    let (x_train, means, stds, constant) = standardize_columns(x_train_raw.view());
    let mut warnings: Vec<String> = constant
        .iter()
        .map(|j| format!("constant training column {j}: coefficient pinned at 0"))
        .collect();
    let mut x_test = x_test_raw.clone();
    for j in 0..x_test.ncols() {
        for i in 0..x_test.nrows() {
            x_test[[i, j]] =
                if stds[j] <= 1e-12 { 0.0 } else { (x_test_raw[[i, j]] - means[j]) / stds[j] };
        }
    }

    let grid = match &task.lambda_grid {
        Some(g) => g.clone(),
        None => default_lambda_grid(lambda_max(x_train.view(), y_train.view())),
    };

    // Contiguous folds over the (already shuffled) training order.
    let fold_of: Vec<usize> = (0..n_train).map(|i| i * task.folds / n_train).collect();
    let mut cv_curve = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, f64)> = None; // (mean r2, lambda)
    for &lambda in &grid {
        let mut scores = Vec::new();
        for fold in 0..task.folds {
            let tr: Vec<usize> = (0..n_train).filter(|&i| fold_of[i] != fold).collect();
            let va: Vec<usize> = (0..n_train).filter(|&i| fold_of[i] == fold).collect();
            if va.len() < 2 {
                continue;
            }
            let gather = |rows: &[usize]| -> (Array2<f64>, Array1<f64>) {
                let mut x = Array2::zeros((rows.len(), x_train.ncols()));
                let mut y = Array1::zeros(rows.len());
                for (r, &i) in rows.iter().enumerate() {
                    x.row_mut(r).assign(&x_train.row(i));
                    y[r] = y_train[i];
                }
                (x, y)
            };
            let (xf, yf) = gather(&tr);
            let (xv, yv) = gather(&va);
            let fit = lasso_fit(xf.view(), yf.view(), lambda)?;
            match r2_score(yv.view(), fit.predict(xv.view()).view()) {
                Ok(r2) => scores.push(r2),
                Err(Error::Degenerate(_)) => {
                    warnings.push(format!("fold {fold} skipped: constant validation target"));
                }
                Err(e) => return Err(e),
            }
        }
        let mean = if scores.is_empty() {
            f64::NEG_INFINITY
        } else {
            scores.iter().sum::<f64>() / scores.len() as f64
        };
        cv_curve.push((lambda, mean));
        let better = match best {
            None => true,
            Some((best_score, best_lambda)) => {
                mean > best_score || (mean == best_score && lambda > best_lambda)
            }
        };
        if better {
            best = Some((mean, lambda));
        }
    }
    let (_, chosen_lambda) =
        best.ok_or_else(|| Error::Degenerate("no usable cross-validation fold".into()))?;

    let final_fit = lasso_fit(x_train.view(), y_train.view(), chosen_lambda)?;
    let test_r2 = r2_score(y_test.view(), final_fit.predict(x_test.view()).view())?;
    Ok(CvReport {
        chosen_lambda,
        test_r2,
        train_size: n_train,
        test_size: m - n_train,
        cv_curve,
        warnings,
    })
}
