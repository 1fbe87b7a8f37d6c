//! Train a toy encoder on temporal pairs and watch the loss curve and the
//! learning-rate schedule (linear warmup, cosine decay).
//!
//! ```bash
//! cargo run -p stcl --example train_encoder
//! ```

use stcl::contrast::{lr_at_step, train_contrastive, LossConfig, TrainConfig};
use stcl::geo::{GridIndex, DEFAULT_CELL_SIZE_DEG};
use stcl::pairs::{mine_temporal_pairs, TemporalMineParams};
use stcl::synth::{generate_city, SynthConfig};

fn main() -> stcl::Result<()> {
    let city = generate_city(&SynthConfig {
        n_areas: 8,
        locations_per_area: 10,
        captures_per_location: 3,
        seed: 5,
        ..Default::default()
    })?;
    let index = GridIndex::build(&city.records, DEFAULT_CELL_SIZE_DEG)?;
    let manifest = mine_temporal_pairs(
        &city.records,
        &index,
        &TemporalMineParams { pairs_per_location: 3, ..Default::default() },
        11,
        "synth_city",
    )?;

    let cfg = TrainConfig {
        batch_size: 64,
        epochs: 30,
        warmup_epochs: 3,
        hidden_widths: vec![48, 24],
        embed_dim: 8,
        seed: 11,
        ..Default::default()
    };
    println!("training on {} temporal pairs", manifest.len());
    println!(
        "schedule: lr(0) = {:.2e}, lr(warmup) = {:.2e}, lr(mid-decay) = {:.2e}, lr(end) = {:.2e}",
        lr_at_step(&cfg, 0.0),
        lr_at_step(&cfg, cfg.warmup_epochs as f64),
        lr_at_step(&cfg, (cfg.warmup_epochs + cfg.epochs) as f64 / 2.0),
        lr_at_step(&cfg, cfg.epochs as f64),
    );

    let out = train_contrastive(&manifest, &city.observations, &cfg, &LossConfig::default())?;
    println!("\nepoch  mean loss");
    for (epoch, loss) in out.loss_curve.iter().enumerate() {
        if epoch % 5 == 0 || epoch + 1 == out.loss_curve.len() {
            println!("{epoch:>5}  {loss:.4}");
        }
    }
    println!(
        "\nencoder: dims {:?}, {} parameters",
        out.encoder.dims(),
        out.encoder.param_count()
    );
    Ok(())
}
