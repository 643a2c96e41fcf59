//! Stopping TxLR with the chi-square rule instead of a fixed iteration count.
//!
//! ```text
//! cargo run --release --example chi_square_stopping -- 40
//! ```

use txlr::phantom::{generate_slice, DatasetSpec};
use txlr::solver::admm_reconstruct_traced;
use txlr::{add_noise, apply_mask, mask_variants_per_tx, MaskOptions, Method, NoiseSpec, SolverConfig, Stopping};

fn main() -> txlr::Result<()> {
    let psnr: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(40.0);
    let truth = generate_slice(&DatasetSpec::default(), 4)?.kspace;
    let mask = mask_variants_per_tx(truth.kspace_dims(), 4.0, truth.dims().3, 7, &MaskOptions::default())?;
    let (noisy, noise) = add_noise(&truth, &NoiseSpec::new(psnr, 11))?;
    let d = apply_mask(&noisy, &mask)?;

    let mut cfg = SolverConfig::new(Method::TxLr);
    cfg.stopping = Stopping::ChiSquare;
    cfg.max_iters = 150;
    let rep = admm_reconstruct_traced(&d, &mask, &cfg, noise.as_ref(), Some(&truth))?;
    for (i, (e, chi)) in rep.rmse_trace.iter().zip(&rep.chi_trace).enumerate() {
        if (i + 1) % 10 == 0 {
            println!("iter {:3}: RMSE {e:.4}  chi2 {chi:.3}", i + 1);
        }
    }
    let best = rep.rmse_trace.iter().copied().fold(f64::INFINITY, f64::min);
    println!(
        "stopped by {} after {} iterations: RMSE {:.4}, best along the run {best:.4}",
        rep.stop_reason,
        rep.iterations_used,
        rep.rmse_trace.last().unwrap()
    );
    Ok(())
}
