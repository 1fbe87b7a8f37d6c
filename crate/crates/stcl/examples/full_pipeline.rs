//! The whole pipeline on one synthetic city: mine self / temporal / spatial
//! manifests with equal budgets, train three encoders with identical
//! settings, and evaluate each on the three downstream protocols.
//!
//! Expected orderings: the temporal encoder wins place recognition, the
//! spatial encoder wins area-indicator regression, the self encoder wins
//! the per-capture perception probe.
//!
//! ```bash
//! cargo run -p stcl --example full_pipeline
//! ```

use ndarray::Array1;
use stcl::contrast::{embed_observations, train_contrastive, LossConfig, TrainConfig};
use stcl::eval::{
    aggregate_by_area, cross_validate, recall_at_k, train_linear_probe, EmbeddingSet, ProbeTask,
    RegressionTask, VprTask,
};
use stcl::geo::{GridIndex, DEFAULT_CELL_SIZE_DEG};
use stcl::io::IdMatrix;
use stcl::pairs::{
    mine_self_pairs, mine_spatial_pairs, mine_temporal_pairs, PairManifest, SpatialMineParams,
    TemporalMineParams,
};
use stcl::synth::{generate_city, SynthCity, SynthConfig};

fn train(city: &SynthCity, manifest: &PairManifest, cfg: &TrainConfig) -> stcl::Result<IdMatrix> {
    let out = train_contrastive(manifest, &city.observations, cfg, &LossConfig::default())?;
    embed_observations(&out.encoder, &city.observations)
}

struct Scores {
    recall_at_1: f64,
    area_r2: f64,
    probe_accuracy: f64,
}

fn evaluate(city: &SynthCity, embeddings: &IdMatrix) -> stcl::Result<Scores> {
    // Place recognition: capture 0 queries the later captures; locations
    // are 10 m apart so a 5 m threshold admits only the true place.
    let queries = EmbeddingSet::from_matrix(embeddings.subset(|id| id.ends_with("_c00")))?.0;
    let database = EmbeddingSet::from_matrix(embeddings.subset(|id| !id.ends_with("_c00")))?.0;
    let vpr = VprTask::from_records(queries, &city.records, database, &city.records, 5.0)?;
    let recall_at_1 = recall_at_k(&vpr, 1)?.recall;

    // Area-indicator regression over mean-aggregated embeddings.
    let set = EmbeddingSet::from_matrix(embeddings.clone())?.0;
    let (area_ids, features) = aggregate_by_area(&set, &city.records)?;
    let targets = Array1::from_vec(area_ids.iter().map(|a| city.truth.y_area[a]).collect());
    let area_r2 = cross_validate(&RegressionTask::new(features, targets)?, 7)?.test_r2;

    // Perception probe on thresholded per-capture scores.
    let scores: Vec<f64> = set.ids.iter().map(|id| city.truth.capture_score[id]).collect();
    let probe = ProbeTask::from_scores(&set.matrix, &scores, 3.5, 6.5)?;
    let probe_accuracy = train_linear_probe(&probe, 0.5, 7)?.metrics.accuracy;

    Ok(Scores { recall_at_1, area_r2, probe_accuracy })
}

fn main() -> stcl::Result<()> {
    let city = generate_city(&SynthConfig {
        n_areas: 100,
        locations_per_area: 3,
        captures_per_location: 4,
        static_scale: 2.0,
        dyn_scale: 1.25,
        seed: 4,
        ..Default::default()
    })?;
    let n = city.records.len();
    println!("city: {n} records over 100 areas");

    // Equal pair budgets for the three contrast types.
    let index = GridIndex::build(&city.records, DEFAULT_CELL_SIZE_DEG)?;
    let temporal = mine_temporal_pairs(
        &city.records,
        &index,
        &TemporalMineParams { pairs_per_location: 4, ..Default::default() },
        11,
        "synth_city",
    )?;
    let spatial = mine_spatial_pairs(
        &city.records,
        None,
        &SpatialMineParams { pairs_per_area: 12, max_year_gap: None },
        11,
        "synth_city",
    )?;
    let selfp = mine_self_pairs(&city.records, n, 11, "synth_city")?;
    println!(
        "pairs: temporal {} / spatial {} / self {}",
        temporal.len(),
        spatial.len(),
        selfp.len()
    );

    let cfg = TrainConfig {
        batch_size: 64,
        epochs: 50,
        warmup_epochs: 5,
        hidden_widths: vec![48, 24],
        embed_dim: 6,
        seed: 23,
        ..Default::default()
    };
    let emb_self = train(&city, &selfp, &cfg)?;
    let emb_temporal = train(&city, &temporal, &cfg)?;
    let emb_spatial = train(&city, &spatial, &cfg)?;

    println!("\nencoder    recall@1   area R2   probe acc");
    let mut results = Vec::new();
    for (name, emb) in
        [("self", &emb_self), ("temporal", &emb_temporal), ("spatial", &emb_spatial)]
    {
        let s = evaluate(&city, emb)?;
        println!(
            "{name:<10} {:>7.4}   {:>7.4}   {:>8.4}",
            s.recall_at_1, s.area_r2, s.probe_accuracy
        );
        results.push((name, s));
    }

    let by = |name: &str| results.iter().find(|(n, _)| *n == name).unwrap();
    println!("\norderings:");
    println!(
        "  place recognition: temporal best? {}",
        by("temporal").1.recall_at_1 > by("self").1.recall_at_1
            && by("temporal").1.recall_at_1 > by("spatial").1.recall_at_1
    );
    println!(
        "  area regression:   spatial best?  {}",
        by("spatial").1.area_r2 > by("self").1.area_r2
            && by("spatial").1.area_r2 > by("temporal").1.area_r2
    );
    println!(
        "  perception probe:  self best?     {}",
        by("self").1.probe_accuracy > by("temporal").1.probe_accuracy
            && by("self").1.probe_accuracy > by("spatial").1.probe_accuracy
    );
    Ok(())
}
