//! Mine the three positive-pair manifests from a synthetic city and audit
//! every pair against the raw records.
//!
//! ```bash
//! cargo run -p stcl --example mine_pairs
//! ```

use stcl::geo::{GridIndex, DEFAULT_CELL_SIZE_DEG};
use stcl::pairs::{
    audit_manifest, mine_self_pairs, mine_spatial_pairs, mine_temporal_pairs, subsample_pairs,
    SpatialMineParams, TemporalMineParams,
};
use stcl::synth::{generate_city, SynthConfig};

fn main() -> stcl::Result<()> {
    let city = generate_city(&SynthConfig::default())?;
    let index = GridIndex::build(&city.records, DEFAULT_CELL_SIZE_DEG)?;

    let temporal = mine_temporal_pairs(
        &city.records,
        &index,
        &TemporalMineParams::default(),
        42,
        "synth_city",
    )?;
    let spatial = mine_spatial_pairs(
        &city.records,
        None,
        &SpatialMineParams { pairs_per_area: 20, max_year_gap: None },
        42,
        "synth_city",
    )?;
    let selfp = mine_self_pairs(&city.records, 200, 42, "synth_city")?;

    for (name, manifest) in [("temporal", &temporal), ("spatial", &spatial), ("self", &selfp)] {
        let audit = audit_manifest(manifest, &city.records);
        println!(
            "{name:>8}: {:4} pairs from {:3} groups ({} skipped)  audit: {}",
            manifest.len(),
            manifest.summary.groups_total,
            manifest.summary.groups_skipped,
            if audit.passed() { "clean" } else { "VIOLATIONS" }
        );
    }

    println!("\nfirst temporal pairs:");
    for p in temporal.pairs.iter().take(3) {
        println!(
            "  {} <-> {}  dist {:.2} m  years {}/{}  heading {}",
            p.id_a, p.id_b, p.dist_m, p.year_a, p.year_b, p.heading_a
        );
    }

    // Standardizing dataset sizes: uniform seeded subsample.
    let sub = subsample_pairs(&spatial, temporal.len().min(spatial.len()), 7)?;
    println!("\nsubsampled spatial manifest to {} pairs (seed 7)", sub.len());
    Ok(())
}
