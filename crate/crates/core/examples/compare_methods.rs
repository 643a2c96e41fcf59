//! VC, PRIMO and TxLR on one synthetic slice with a shared mask and noise draw.
//!
//! ```text
//! cargo run --release --example compare_methods -- 8 60
//! ```

use txlr::phantom::{generate_slice, DatasetSpec};
use txlr::solver::admm_reconstruct_traced;
use txlr::{add_noise, apply_mask, mask_variants_per_tx, MaskOptions, Method, NoiseSpec, SolverConfig};

fn main() -> txlr::Result<()> {
    let mut args = std::env::args().skip(1);
    let r: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(8.0);
    let psnr: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(60.0);

    let truth = generate_slice(&DatasetSpec::default(), 0)?.kspace;
    let mask = mask_variants_per_tx(truth.kspace_dims(), r, truth.dims().3, 7, &MaskOptions::default())?;
    let (noisy, noise) = add_noise(&truth, &NoiseSpec::new(psnr, 11))?;
    let d = apply_mask(&noisy, &mask)?;
    println!("R = {:.2}, PSNR = {psnr} dB", mask.r_achieved());

    for method in Method::ALL {
        let cfg = SolverConfig::new(method);
        let rep = admm_reconstruct_traced(&d, &mask, &cfg, noise.as_ref(), Some(&truth))?;
        let every = (cfg.max_iters / 5).max(1);
        let trace: Vec<String> = rep
            .rmse_trace
            .iter()
            .enumerate()
            .filter(|(i, _)| (i + 1) % every == 0)
            .map(|(i, v)| format!("{}:{v:.3}", i + 1))
            .collect();
        println!(
            "{method:>6}: RMSE {:.4} after {} iterations ({:.1} s)   {}",
            rep.rmse_trace.last().copied().unwrap_or(f64::NAN),
            rep.iterations_used,
            rep.wall_time.as_secs_f64(),
            trace.join(" ")
        );
    }
    Ok(())
}
