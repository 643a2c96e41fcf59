//! Relative transmit maps from a TxLR reconstruction, compared with the maps
//! of the fully sampled data.
//!
//! ```text
//! cargo run --release --example relative_maps
//! ```

use txlr::phantom::{generate_slice, DatasetSpec};
use txlr::{
    admm_reconstruct, apply_mask, map_rmse, mask_variants_per_tx, relative_tx_maps, MaskOptions, Method,
    SolverConfig,
};

fn main() -> txlr::Result<()> {
    let truth = generate_slice(&DatasetSpec::default(), 0)?.kspace;
    let reference = relative_tx_maps(&truth, 0.1)?;
    println!("map support: {} pixels", reference.support_size());

    for r in [4.0, 8.0] {
        let mask = mask_variants_per_tx(truth.kspace_dims(), r, truth.dims().3, 7, &MaskOptions::default())?;
        let d = apply_mask(&truth, &mask)?;
        let zero_filled = relative_tx_maps(&d, 0.1)?;
        let rep = admm_reconstruct(&d, &mask, &SolverConfig::new(Method::TxLr), None)?;
        let est = relative_tx_maps(&rep.z_final, 0.1)?;
        println!(
            "R = {r}: map RMSE zero-filled {:.3}, TxLR {:.3}",
            map_rmse(&zero_filled, &reference)?,
            map_rmse(&est, &reference)?
        );
    }
    Ok(())
}
