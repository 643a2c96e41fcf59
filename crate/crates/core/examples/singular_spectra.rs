//! Singular spectra of the Tx- and Rx-stacked unfoldings against an i.i.d.
//! Gaussian tensor of the same shape.
//!
//! ```text
//! cargo run --release --example singular_spectra
//! ```

use txlr::metrics::random_baseline_spectrum;
use txlr::phantom::{generate_slice, DatasetSpec};
use txlr::{singular_spectrum, Kernel, Unfolding};

fn main() -> txlr::Result<()> {
    let d = generate_slice(&DatasetSpec::default(), 0)?.kspace;
    let kernel = Kernel::default();
    for u in [Unfolding::TxStacked, Unfolding::RxStacked, Unfolding::VirtualCoil] {
        let data = singular_spectrum(&d, kernel, u)?;
        let random = random_baseline_spectrum(d.dims(), kernel, u, 1)?;
        println!("{u} {:?}", data.shape);
        let (a, b) = (data.normalized(), random.normalized());
        for k in [0, 10, 25, 48, 49, 50, 80, 150] {
            if k < a.len() {
                println!("  s[{k:3}] data {:.2e}   random {:.3}", a[k], b[k]);
            }
        }
    }
    Ok(())
}
