//! Top-k nearest-neighbor retrieval over unit-norm embeddings by cosine
//! distance, with capture metadata joined onto every hit.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::EmbeddingSet;
use crate::geo::{haversine_m, ImageRecord};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalHit {
    pub rank: usize,
    pub id: String,
    /// `1 - cosine similarity`; 0 for an exact duplicate.
    pub cosine_distance: f64,
    /// Great-circle distance from the query record in meters.
    pub geo_distance_m: f64,
    pub capture_year: i32,
    pub heading_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalResult {
    pub query_id: String,
    pub hits: Vec<RetrievalHit>,
}

/// Retrieve the `k` nearest neighbors of `query_id` (excluding itself) by
/// cosine distance, ties broken by id. On unit-norm rows this ranking
/// coincides with the Euclidean one since `|a-b|^2 = 2 - 2 a.b`.
pub fn retrieve_topk(
    query_id: &str,
    embeddings: &EmbeddingSet,
    records: &[ImageRecord],
    k: usize,
) -> Result<RetrievalResult> {
    let q_idx = embeddings
        .position(query_id)
        .ok_or_else(|| Error::UnknownId(query_id.to_string()))?;
    let by_id: HashMap<&str, &ImageRecord> =
        records.iter().map(|r| (r.id.as_str(), r)).collect();
    let q_rec = *by_id
        .get(query_id)
        .ok_or_else(|| Error::UnknownId(format!("{query_id} (no metadata record)")))?;
    let q = embeddings.matrix.row(q_idx);
    let mut scored: Vec<(f64, usize)> = (0..embeddings.len())
        .filter(|&i| i != q_idx)
        .map(|i| (1.0 - embeddings.matrix.row(i).dot(&q), i))
        .collect();
    scored.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then_with(|| embeddings.ids[a.1].cmp(&embeddings.ids[b.1]))
    });
    let mut hits = Vec::new();
    for (rank, (dist, i)) in scored.into_iter().take(k).enumerate() {
        let id = &embeddings.ids[i];
        let rec = *by_id
            .get(id.as_str())
            .ok_or_else(|| Error::UnknownId(format!("{id} (no metadata record)")))?;
        hits.push(RetrievalHit {
            rank: rank + 1,
            id: id.clone(),
            cosine_distance: dist,
            geo_distance_m: haversine_m(q_rec.pos, rec.pos),
            capture_year: rec.capture_year,
            heading_deg: rec.heading_deg,
        });
    }
    Ok(RetrievalResult { query_id: query_id.to_string(), hits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contrast::l2_normalize_rows;
    use crate::geo::GeoPoint;
    use ndarray::{Array, Array2};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn records(n: usize) -> Vec<ImageRecord> {
        (0..n)
            .map(|i| ImageRecord {
                id: format!("r{i:03}"),
                pos: GeoPoint::new(0.001 * i as f64, 0.0).unwrap(),
                heading_deg: (i as f64 * 30.0) % 360.0,
                capture_year: 2015 + (i % 5) as i32,
                capture_month: 6,
                city: "t".into(),
                area_id: None,
            })
            .collect()
    }

    fn embeddings(n: usize, d: usize, seed: u64) -> EmbeddingSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Array::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0f64));
        l2_normalize_rows(&mut m).unwrap();
        EmbeddingSet { ids: (0..n).map(|i| format!("r{i:03}")).collect(), matrix: m }
    }

    #[test]
    fn exact_duplicate_ranks_first_with_zero_distance() {
        let mut set = embeddings(6, 4, 1);
        let dup = set.matrix.row(0).to_owned();
        set.matrix.row_mut(3).assign(&dup);
        let recs = records(6);
        let out = retrieve_topk("r000", &set, &recs, 5).unwrap();
        assert_eq!(out.hits[0].id, "r003");
        assert!(out.hits[0].cosine_distance.abs() < 1e-12);
        assert_eq!(out.hits[0].rank, 1);
        // Metadata joined from the records.
        assert_eq!(out.hits[0].capture_year, 2018);
    }

    #[test]
    fn k_at_least_n_minus_one_returns_everything_sorted() {
        let set = embeddings(8, 5, 2);
        let recs = records(8);
        let out = retrieve_topk("r002", &set, &recs, 20).unwrap();
        assert_eq!(out.hits.len(), 7);
        for w in out.hits.windows(2) {
            assert!(w[0].cosine_distance <= w[1].cosine_distance);
        }
        assert!(out.hits.iter().all(|h| h.id != "r002"));
    }

    #[test]
    fn unknown_query_rejected() {
        let set = embeddings(4, 3, 3);
        let recs = records(4);
        assert!(matches!(retrieve_topk("zzz", &set, &recs, 3), Err(Error::UnknownId(_))));
    }

    #[test]
    fn cosine_ranking_equals_euclidean_ranking() {
        let set = embeddings(60, 8, 4);
        let recs = records(60);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let qi = rng.random_range(0..set.len());
            let query_id = set.ids[qi].clone();
            let out = retrieve_topk(&query_id, &set, &recs, 10).unwrap();
            // Euclidean oracle with the same id tie-break.
            let q = set.matrix.row(qi);
            let mut scored: Vec<(f64, usize)> = (0..set.len())
                .filter(|&i| i != qi)
                .map(|i| {
                    let diff = &set.matrix.row(i) - &q;
                    (diff.dot(&diff).sqrt(), i)
                })
                .collect();
            scored.sort_by(|a, b| {
                a.0.partial_cmp(&b.0).unwrap().then_with(|| set.ids[a.1].cmp(&set.ids[b.1]))
            });
            let euclid_ids: Vec<&str> =
                scored.iter().take(10).map(|(_, i)| set.ids[*i].as_str()).collect();
            let cosine_ids: Vec<&str> = out.hits.iter().map(|h| h.id.as_str()).collect();
            assert_eq!(cosine_ids, euclid_ids);
        }
    }

    #[test]
    fn results_are_stable_across_runs() {
        let set = embeddings(20, 6, 6);
        let recs = records(20);
        let a = retrieve_topk("r001", &set, &recs, 5).unwrap();
        let b = retrieve_topk("r001", &set, &recs, 5).unwrap();
        assert_eq!(a, b);
    }
}
