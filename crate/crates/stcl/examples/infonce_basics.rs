//! InfoNCE loss values on hand-checkable inputs, plus a gradient check
//! against central finite differences.
//!
//! ```bash
//! cargo run -p stcl --example infonce_basics
//! ```

use ndarray::{array, Array, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stcl::contrast::{
    infonce_batch, infonce_grad, infonce_loss, l2_normalize_rows, LossConfig,
};

fn main() -> stcl::Result<()> {
    let tau1 = LossConfig { temperature: 1.0, symmetrized: true };

    // Softmax over a single element: no negatives means zero loss.
    let q = array![1.0, 0.0];
    let k = array![1.0, 0.0];
    println!("no negatives          -> {}", infonce_loss(q.view(), k.view(), &[], &tau1)?);

    // All four logits equal: uniform softmax over 4, loss = ln 4.
    let q4 = array![1.0, 0.0, 0.0, 0.0];
    let k4 = array![0.0, 1.0, 0.0, 0.0];
    let negs = [
        array![0.0, 0.0, 1.0, 0.0],
        array![0.0, 0.0, 0.0, 1.0],
        array![0.0, 0.0, 0.0, -1.0],
    ];
    let views: Vec<_> = negs.iter().map(|n| n.view()).collect();
    println!(
        "uniform over 4        -> {:.7} (ln 4 = {:.7})",
        infonce_loss(q4.view(), k4.view(), &views, &tau1)?,
        4.0f64.ln()
    );

    // One negative at similarity 0, positive at 1: ln(1 + e^-1).
    let neg = array![0.0, 1.0];
    println!(
        "single negative       -> {:.7} (ln(1+e^-1) = {:.7})",
        infonce_loss(q.view(), k.view(), &[neg.view()], &tau1)?,
        (1.0 + (-1.0f64).exp()).ln()
    );

    // Batch form with in-batch negatives.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut queries: Array2<f64> = Array::from_shape_fn((8, 16), |_| rng.random_range(-1.0..1.0));
    let mut keys: Array2<f64> = Array::from_shape_fn((8, 16), |_| rng.random_range(-1.0..1.0));
    l2_normalize_rows(&mut queries)?;
    l2_normalize_rows(&mut keys)?;
    let cfg = LossConfig::default();
    let batch = infonce_batch(queries.view(), keys.view(), &cfg)?;
    println!("random batch n=8      -> {batch:.6} (tau {})", cfg.temperature);

    // Analytic gradient vs central finite differences.
    let (loss, dq, _dk) = infonce_grad(queries.view(), keys.view(), &cfg)?;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..queries.nrows() {
        for j in 0..queries.ncols() {
            let mut plus = queries.clone();
            let mut minus = queries.clone();
            plus[[i, j]] += h;
            minus[[i, j]] -= h;
            let numeric = (infonce_batch(plus.view(), keys.view(), &cfg)?
                - infonce_batch(minus.view(), keys.view(), &cfg)?)
                / (2.0 * h);
            let denom = numeric.abs().max(dq[[i, j]].abs()).max(1e-6);
            worst = worst.max((numeric - dq[[i, j]]).abs() / denom);
        }
    }
    println!("gradient check        -> loss {loss:.6}, max rel err vs finite differences {worst:.2e}");
    Ok(())
}
