//! Attention distance on constructed attention tensors: identity attention
//! scores 0, uniform attention reaches the closed-form mean, and a local
//! window lands in between.
//!
//! ```bash
//! cargo run -p stcl --example attention_distance
//! ```

use ndarray::Array2;
use stcl::analysis::{attention_distance, AttentionTensor};

fn local_window(rows: usize, cols: usize, radius: i64) -> Array2<f64> {
    let n = rows * cols;
    let mut m = Array2::zeros((n, n));
    for i in 0..n {
        let (ri, ci) = ((i / cols) as i64, (i % cols) as i64);
        let mut hits = Vec::new();
        for j in 0..n {
            let (rj, cj) = ((j / cols) as i64, (j % cols) as i64);
            if (ri - rj).abs() <= radius && (ci - cj).abs() <= radius {
                hits.push(j);
            }
        }
        for &j in &hits {
            m[[i, j]] = 1.0 / hits.len() as f64;
        }
    }
    m
}

fn main() -> stcl::Result<()> {
    let rows = 6;
    let cols = 6;
    let n = rows * cols;
    let patch = 16;

    let identity = Array2::eye(n);
    let uniform = Array2::from_elem((n, n), 1.0 / n as f64);
    let local = local_window(rows, cols, 1);

    // Three "layers" with one head each: local, then wider, then uniform,
    // mimicking the usual shallow-to-deep broadening.
    let tensor = AttentionTensor::new(
        3,
        2,
        rows,
        cols,
        patch,
        false,
        vec![
            identity.clone(),
            local.clone(),
            local_window(rows, cols, 2),
            uniform.clone(),
            uniform.clone(),
            uniform.clone(),
        ],
    )?;
    let d = attention_distance(&tensor)?;

    println!("per head (layer, head, mean px):");
    for (layer, head, v) in &d.per_head {
        println!("  layer {layer} head {head}: {v:8.3}");
    }
    println!("\nper layer (mean over heads):");
    for (layer, v) in &d.per_layer {
        println!("  depth {layer}: {v:8.3}");
    }
    println!("\nidentity = 0; uniform on this grid has the largest mean distance");
    Ok(())
}
