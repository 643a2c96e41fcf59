//! PSNR-defined complex Gaussian noise and per-channel noise estimation.
//!
//! ```text
//! cargo run --release --example noise_model
//! ```

use txlr::phantom::{generate_slice, DatasetSpec};
use txlr::{add_noise, estimate_sigma, NoiseSpec};

fn main() -> txlr::Result<()> {
    let clean = generate_slice(&DatasetSpec::default(), 0)?.kspace;
    for psnr in [70.0, 60.0, 50.0, 40.0] {
        let spec = NoiseSpec::new(psnr, 1);
        let (noisy, _) = add_noise(&clean, &spec)?;
        // noise-only samples per receive channel
        let (_, _, nrx, _) = clean.dims();
        let samples: Vec<Vec<_>> = (0..nrx)
            .map(|r| {
                noisy
                    .data()
                    .indexed_iter()
                    .filter(|((_, _, rx, _), _)| *rx == r)
                    .map(|((x, y, rx, tx), v)| v - clean[[x, y, rx, tx]])
                    .collect()
            })
            .collect();
        let est = estimate_sigma(&samples)?;
        println!(
            "PSNR {psnr:>4} dB: sigma = {:.3e}, estimated (rx 0) = {:.3e}",
            spec.sigma_for(&clean),
            est.sigma()[0]
        );
    }
    Ok(())
}
