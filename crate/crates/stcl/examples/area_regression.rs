//! Socioeconomic-style regression: aggregate embeddings to area means,
//! then LASSO with a 70/30 split and 5-fold cross-validated lambda.
//!
//! ```bash
//! cargo run -p stcl --example area_regression
//! ```

use ndarray::Array1;
use stcl::contrast::{embed_observations, train_contrastive, LossConfig, TrainConfig};
use stcl::eval::{aggregate_by_area, cross_validate, EmbeddingSet, RegressionTask};
use stcl::pairs::{mine_spatial_pairs, SpatialMineParams};
use stcl::synth::{generate_city, SynthConfig};

fn main() -> stcl::Result<()> {
    let city = generate_city(&SynthConfig {
        n_areas: 30,
        locations_per_area: 8,
        captures_per_location: 2,
        seed: 4,
        ..Default::default()
    })?;
    let manifest = mine_spatial_pairs(
        &city.records,
        None,
        &SpatialMineParams { pairs_per_area: 10, max_year_gap: None },
        5,
        "synth_city",
    )?;
    let cfg = TrainConfig {
        batch_size: 64,
        epochs: 40,
        warmup_epochs: 4,
        hidden_widths: vec![48, 24],
        embed_dim: 8,
        seed: 6,
        ..Default::default()
    };
    let trained = train_contrastive(&manifest, &city.observations, &cfg, &LossConfig::default())?;
    let embeddings =
        EmbeddingSet::from_matrix(embed_observations(&trained.encoder, &city.observations)?)?.0;

    let (area_ids, features) = aggregate_by_area(&embeddings, &city.records)?;
    let targets = Array1::from_vec(area_ids.iter().map(|a| city.truth.y_area[a]).collect());
    println!("{} areas, {} features each", area_ids.len(), features.ncols());

    let task = RegressionTask::new(features, targets)?;
    let report = cross_validate(&task, 9)?;
    println!(
        "train {} / test {}, chosen lambda {:.4e}",
        report.train_size, report.test_size, report.chosen_lambda
    );
    println!("held-out test R2: {:.4}", report.test_r2);
    for w in &report.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
