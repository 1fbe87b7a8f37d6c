//! Place recognition with Recall@K: queries are one capture per location,
//! the database holds the remaining captures. A temporally trained encoder
//! must match a place across years despite dynamic content.
//!
//! ```bash
//! cargo run -p stcl --example place_recognition
//! ```

use stcl::contrast::{embed_observations, train_contrastive, LossConfig, TrainConfig};
use stcl::eval::{recall_at_k, EmbeddingSet, VprTask};
use stcl::geo::{GridIndex, DEFAULT_CELL_SIZE_DEG};
use stcl::pairs::{mine_temporal_pairs, TemporalMineParams};
use stcl::synth::{generate_city, SynthConfig};

fn main() -> stcl::Result<()> {
    let city = generate_city(&SynthConfig {
        n_areas: 8,
        locations_per_area: 10,
        captures_per_location: 3,
        seed: 2,
        ..Default::default()
    })?;
    let index = GridIndex::build(&city.records, DEFAULT_CELL_SIZE_DEG)?;
    let manifest = mine_temporal_pairs(
        &city.records,
        &index,
        &TemporalMineParams { pairs_per_location: 3, ..Default::default() },
        3,
        "synth_city",
    )?;
    let cfg = TrainConfig {
        batch_size: 64,
        epochs: 40,
        warmup_epochs: 4,
        hidden_widths: vec![48, 24],
        embed_dim: 8,
        seed: 3,
        ..Default::default()
    };
    let trained = train_contrastive(&manifest, &city.observations, &cfg, &LossConfig::default())?;
    let embeddings = embed_observations(&trained.encoder, &city.observations)?;

    // Capture 0 of each location queries the database of later captures.
    let queries = EmbeddingSet::from_matrix(embeddings.subset(|id| id.ends_with("_c00")))?.0;
    let database = EmbeddingSet::from_matrix(embeddings.subset(|id| !id.ends_with("_c00")))?.0;
    // Locations are 10 m apart, so a 5 m threshold admits only the true place.
    let task = VprTask::from_records(queries, &city.records, database, &city.records, 5.0)?;

    println!("queries: {}  database: {}", task.queries.len(), task.database.len());
    println!("\n  K   recall");
    for k in [1, 5, 10, 15, 20, 25] {
        let r = recall_at_k(&task, k)?;
        println!("{k:>3}   {:.4}  ({} evaluated)", r.recall, r.evaluated);
    }
    Ok(())
}
