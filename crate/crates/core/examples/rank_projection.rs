//! Hard singular-value thresholding via the thin SVD and the Gram route.
//!
//! ```text
//! cargo run --release --example rank_projection
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use txlr::svt::{singular_values, svt_with};
use txlr::{Matrix, SvdRoute, C64};

fn fro(m: &Matrix) -> f64 {
    m.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

fn main() -> txlr::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = Matrix::from_shape_fn((40, 300), |_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let s = singular_values(&m)?;
    for r in [1, 5, 20, 39] {
        let tail: f64 = s[r..].iter().map(|v| v * v).sum::<f64>().sqrt();
        let thin = svt_with(&m, r, SvdRoute::Thin)?;
        let gram = svt_with(&m, r, SvdRoute::Gram)?;
        println!(
            "r = {r:2}: |m - G(m)| = {:.6}  tail energy = {:.6}  routes differ by {:.1e}",
            fro(&(&m - &thin)),
            tail,
            fro(&(&thin - &gram))
        );
    }
    Ok(())
}
