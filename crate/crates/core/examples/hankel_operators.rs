//! Lifting k-space to a block-Hankel tensor and back.
//!
//! ```text
//! cargo run --release --example hankel_operators
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use txlr::{hankel_adjoint, hankel_pinv, hankel_transform, multiplicity, KSpaceTensor, Kernel, Unfolding, C64};

fn main() -> txlr::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let dims = (8, 7, 3, 2);
    let kernel = Kernel::new(3, 2)?;
    let d = KSpaceTensor::from_fn(dims, |_| C64::new(rng.random(), rng.random()))?;

    let h = hankel_transform(&d, kernel)?;
    let s = h.shape();
    println!("T(d): N1 = {}, N2 = {}, tensor {:?}", s.n1(), s.n2(), s.tensor_dims());
    for u in [Unfolding::VirtualCoil, Unfolding::TxStacked, Unfolding::RxStacked] {
        println!("  {u}: {:?}", u.matrix_dims(s));
    }

    // T* sums overlapping copies, so T*T multiplies by the overlap count
    let c = multiplicity((8, 7), kernel)?;
    let back = hankel_adjoint(&h, (8, 7))?;
    let worst = back
        .data()
        .indexed_iter()
        .map(|((x, y, r, t), v)| (v - d[[x, y, r, t]] * c.get(x, y) as f64).norm())
        .fold(0.0, f64::max);
    println!("max |T*T d - c.d| = {worst:.2e}");
    println!("overlap counts along kx at ky = 3: {:?}", (0..8).map(|x| c.get(x, 3)).collect::<Vec<_>>());

    // T† averages them instead
    let round = hankel_pinv(&h, (8, 7))?;
    println!("relative |T+T d - d| = {:.2e}", txlr::rmse(&round, &d)?);
    Ok(())
}
