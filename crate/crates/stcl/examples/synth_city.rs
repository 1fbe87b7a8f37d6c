//! Generate a synthetic city and inspect its layout and ground truth.
//!
//! ```bash
//! cargo run -p stcl --example synth_city
//! ```

use stcl::geo::haversine_m;
use stcl::synth::{generate_city, SynthConfig};

fn main() -> stcl::Result<()> {
    let cfg = SynthConfig { n_areas: 6, locations_per_area: 9, captures_per_location: 3, ..Default::default() };
    let city = generate_city(&cfg)?;

    println!(
        "generated {} records: {} areas x {} locations x {} captures",
        city.records.len(),
        cfg.n_areas,
        cfg.locations_per_area,
        cfg.captures_per_location
    );
    println!("observation dim: {}", city.observations.dim());

    let r0 = &city.records[0];
    let r1 = &city.records[1];
    println!(
        "first record: {} at ({:.5}, {:.5}) heading {} year {}",
        r0.id, r0.pos.lat, r0.pos.lon, r0.heading_deg, r0.capture_year
    );
    println!(
        "same-location captures are {:.2} m apart (always 0)",
        haversine_m(r0.pos, r1.pos)
    );

    // Area indicators are a noiseless linear functional of the area latent.
    println!("\nper-area indicator y_area:");
    for (area, y) in &city.truth.y_area {
        println!("  {area}: {y:+.4}");
    }

    // Per-capture scores live on a 0-10 scale for the perception probe.
    let scores: Vec<f64> = city.truth.capture_score.values().copied().collect();
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    println!("\ncapture score mean {mean:.2} (target 5.0), n = {}", scores.len());
    Ok(())
}
