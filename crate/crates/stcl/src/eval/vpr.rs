//! Visual place recognition scored by Recall@K.
//!
//! A query counts as recalled at K when at least one of its top-K database
//! rows by cosine similarity is a correct match. Correctness is geographic
//! (within `match_threshold_m` of the query's true position) or, when an
//! explicit match list is supplied, membership in that list. Queries with
//! no correct match anywhere in the database are excluded from the
//! denominator and reported separately.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geo::{haversine_m, GeoPoint, ImageRecord};

use super::EmbeddingSet;

/// Default geographic ground-truth threshold in meters.
pub const DEFAULT_MATCH_THRESHOLD_M: f64 = 25.0;

#[derive(Debug, Clone)]
pub struct VprTask {
    pub queries: EmbeddingSet,
    pub query_positions: Vec<GeoPoint>,
    pub database: EmbeddingSet,
    pub db_positions: Vec<GeoPoint>,
    pub match_threshold_m: f64,
    /// Explicit ground truth: query id -> correct database ids. When set,
    /// it replaces the geographic threshold.
    pub explicit_matches: Option<BTreeMap<String, BTreeSet<String>>>,
}

impl VprTask {
    pub fn new(
        queries: EmbeddingSet,
        query_positions: Vec<GeoPoint>,
        database: EmbeddingSet,
        db_positions: Vec<GeoPoint>,
        match_threshold_m: f64,
    ) -> Result<Self> {
        if queries.dim() != database.dim() {
            return Err(Error::DimMismatch(format!(
                "query dim {} vs database dim {}",
                queries.dim(),
                database.dim()
            )));
        }
        if queries.len() != query_positions.len() || database.len() != db_positions.len() {
            return Err(Error::DimMismatch(
                "embedding count does not match position count".into(),
            ));
        }
        if !(match_threshold_m > 0.0) {
            return Err(Error::InvalidInput("match_threshold_m must be > 0".into()));
        }
        Ok(Self {
            queries,
            query_positions,
            database,
            db_positions,
            match_threshold_m,
            explicit_matches: None,
        })
    }

    /// Build a task by joining embedding ids against metadata records.
    pub fn from_records(
        queries: EmbeddingSet,
        query_records: &[ImageRecord],
        database: EmbeddingSet,
        db_records: &[ImageRecord],
        match_threshold_m: f64,
    ) -> Result<Self> {
        let lookup = |records: &[ImageRecord]| -> HashMap<String, GeoPoint> {
            records.iter().map(|r| (r.id.clone(), r.pos)).collect()
        };
        let q_pos_by_id = lookup(query_records);
        let d_pos_by_id = lookup(db_records);
        let resolve = |set: &EmbeddingSet, map: &HashMap<String, GeoPoint>| -> Result<Vec<GeoPoint>> {
            set.ids
                .iter()
                .map(|id| map.get(id).copied().ok_or_else(|| Error::UnknownId(id.clone())))
                .collect()
        };
        let query_positions = resolve(&queries, &q_pos_by_id)?;
        let db_positions = resolve(&database, &d_pos_by_id)?;
        Self::new(queries, query_positions, database, db_positions, match_threshold_m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecallReport {
    pub k: usize,
    pub recall: f64,
    /// Queries with at least one correct match in the database.
    pub evaluated: usize,
    /// Queries excluded because no correct match exists anywhere.
    pub excluded_no_valid_match: usize,
}

/// Top-K database row indices for one query, ranked by descending cosine
/// similarity with ties broken by database id.
fn ranked_indices(task: &VprTask, query_idx: usize) -> Vec<usize> {
    let q = task.queries.matrix.row(query_idx);
    let sims = task.database.matrix.dot(&q);
    let mut order: Vec<usize> = (0..task.database.len()).collect();
    order.sort_by(|&a, &b| {
        sims[b]
            .partial_cmp(&sims[a])
            .unwrap()
            .then_with(|| task.database.ids[a].cmp(&task.database.ids[b]))
    });
    order
}

pub fn recall_at_k(task: &VprTask, k: usize) -> Result<RecallReport> {
    if k == 0 {
        return Err(Error::InvalidInput("K must be >= 1".into()));
    }
    if task.database.is_empty() || task.queries.is_empty() {
        return Err(Error::InvalidInput("VPR task needs non-empty queries and database".into()));
    }
    let is_match = |query_idx: usize, db_idx: usize| -> bool {
        match &task.explicit_matches {
            Some(map) => map
                .get(&task.queries.ids[query_idx])
                .map(|set| set.contains(&task.database.ids[db_idx]))
                .unwrap_or(false),
            None => {
                haversine_m(task.query_positions[query_idx], task.db_positions[db_idx])
                    <= task.match_threshold_m
            }
        }
    };
    let outcomes: Vec<Option<bool>> = (0..task.queries.len())
        .into_par_iter()
        .map(|qi| {
            let order = ranked_indices(task, qi);
            let any_valid = order.iter().any(|&di| is_match(qi, di));
            if !any_valid {
                return None;
            }
            Some(order.iter().take(k).any(|&di| is_match(qi, di)))
        })
        .collect();
    let excluded = outcomes.iter().filter(|o| o.is_none()).count();
    let evaluated = outcomes.len() - excluded;
    let hits = outcomes.iter().filter(|o| **o == Some(true)).count();
    let recall = if evaluated == 0 { 0.0 } else { hits as f64 / evaluated as f64 };
    Ok(RecallReport { k, recall, evaluated, excluded_no_valid_match: excluded })
}
