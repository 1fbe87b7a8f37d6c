//! Delta log amplitude of feature-map spectra: smooth maps score strongly
//! negative (energy at low frequencies), a checkerboard scores positive
//! (energy at the Nyquist corner), white noise sits near zero.
//!
//! ```bash
//! cargo run -p stcl --example frequency_spectrum
//! ```

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use stcl::analysis::{delta_log_amplitude, FeatureMap, SpectrumConfig};

fn map_from(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Array2<f64> {
    let mut m = Array2::zeros((rows * cols, 1));
    for r in 0..rows {
        for c in 0..cols {
            m[[r * cols + c, 0]] = f(r, c);
        }
    }
    m
}

fn main() -> stcl::Result<()> {
    let rows = 16;
    let cols = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    let smooth = map_from(rows, cols, |r, c| {
        ((r as f64 / rows as f64) * std::f64::consts::PI).sin()
            + 0.5 * ((c as f64 / cols as f64) * std::f64::consts::PI).cos()
    });
    let checkerboard = map_from(rows, cols, |r, c| if (r + c) % 2 == 0 { 1.0 } else { -1.0 });
    let noise = map_from(rows, cols, |_, _| StandardNormal.sample(&mut rng));

    let fmap = FeatureMap::new(rows, cols, 1, vec![smooth, checkerboard, noise])?;
    let deltas = delta_log_amplitude(&fmap, &SpectrumConfig::default())?;

    let names = ["smooth", "checkerboard", "white noise"];
    println!("map            delta log amplitude");
    for ((_, v), name) in deltas.iter().zip(names) {
        println!("{name:<14} {v:+8.3}");
    }
    println!("\nvalues nearer 0 keep more high-frequency content; very negative");
    println!("values concentrate energy in low frequencies");
    Ok(())
}
