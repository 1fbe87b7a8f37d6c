//! Downstream evaluation protocols: Recall@K place recognition, LASSO
//! regression over area-aggregated features, and a logistic linear probe
//! with exact classification metrics.

mod probe;
mod regress;
mod vpr;

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::io::{load_matrix, save_matrix, IdMatrix};

pub use probe::{
    auc_exact, classification_metrics, train_linear_probe, Metrics, ProbeOutput, ProbeTask,
};
pub use regress::{
    aggregate_by_area, cross_validate, default_lambda_grid, lambda_max, lasso_fit, r2_score,
    standardize_columns, CvReport, LassoFit, RegressionTask,
};
pub use vpr::{recall_at_k, RecallReport, VprTask, DEFAULT_MATCH_THRESHOLD_M};

/// An ordered set of unit-norm embedding rows with aligned ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub ids: Vec<String>,
    pub matrix: Array2<f64>,
}

impl EmbeddingSet {
    /// Normalize the rows of an [`IdMatrix`] into an embedding set. The
    /// returned flag records whether any row needed adjustment beyond 1e-6.
    pub fn from_matrix(m: IdMatrix) -> Result<(Self, bool)> {
        let mut matrix = m.data;
        let mut changed = false;
        for (i, mut row) in matrix.rows_mut().into_iter().enumerate() {
            let norm = row.dot(&row).sqrt();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::Degenerate(format!(
                    "embedding row {i} (`{}`) has norm {norm}",
                    m.ids[i]
                )));
            }
            if (norm - 1.0).abs() > 1e-6 {
                changed = true;
            }
            row.mapv_inplace(|v| v / norm);
        }
        Ok((Self { ids: m.ids, matrix }, changed))
    }

    /// Load from an `STCLEMB1` file, normalizing rows.
    pub fn load(path: &Path) -> Result<(Self, bool)> {
        Self::from_matrix(load_matrix(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_matrix(&IdMatrix { ids: self.ids.clone(), data: self.matrix.clone() }, path)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }
}
