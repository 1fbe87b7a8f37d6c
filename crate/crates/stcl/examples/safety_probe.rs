//! Perception-style classification: threshold per-capture scores into
//! binary labels, train a logistic probe on frozen embeddings for 20
//! epochs, report accuracy / recall / F1 / AUC.
//!
//! ```bash
//! cargo run -p stcl --example safety_probe
//! ```

use stcl::contrast::{embed_observations, train_contrastive, LossConfig, TrainConfig};
use stcl::eval::{train_linear_probe, EmbeddingSet, ProbeTask};
use stcl::pairs::mine_self_pairs;
use stcl::synth::{generate_city, SynthConfig};

fn main() -> stcl::Result<()> {
    let city = generate_city(&SynthConfig {
        n_areas: 12,
        locations_per_area: 10,
        captures_per_location: 3,
        seed: 8,
        ..Default::default()
    })?;
    let manifest = mine_self_pairs(&city.records, city.records.len(), 9, "synth_city")?;
    let cfg = TrainConfig {
        batch_size: 64,
        epochs: 40,
        warmup_epochs: 4,
        hidden_widths: vec![48, 24],
        embed_dim: 8,
        seed: 10,
        ..Default::default()
    };
    let trained = train_contrastive(&manifest, &city.observations, &cfg, &LossConfig::default())?;
    let embeddings =
        EmbeddingSet::from_matrix(embed_observations(&trained.encoder, &city.observations)?)?.0;

    // Scores sit on a 0-10 scale; below 3.5 -> class 0, above 6.5 -> class 1.
    let scores: Vec<f64> =
        embeddings.ids.iter().map(|id| city.truth.capture_score[id]).collect();
    let task = ProbeTask::from_scores(&embeddings.matrix, &scores, 3.5, 6.5)?;
    println!(
        "{} captures scored, {} kept after thresholding ({} positive)",
        scores.len(),
        task.labels.len(),
        task.labels.iter().filter(|&&y| y).count()
    );

    let out = train_linear_probe(&task, 0.5, 12)?;
    println!("train {} / test {}", out.train_size, out.test_size);
    println!("accuracy {:.4}", out.metrics.accuracy);
    println!("recall   {:.4}", out.metrics.recall);
    println!("f1       {:.4}", out.metrics.f1);
    match out.metrics.auc {
        Some(auc) => println!("auc      {auc:.4}"),
        None => println!("auc      undefined (one class in test split)"),
    }
    Ok(())
}
