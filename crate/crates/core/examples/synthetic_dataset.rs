//! Synthetic phantom, smooth transmit/receive sensitivities and cropped
//! k-space, written to a KTEN file.
//!
//! ```text
//! cargo run --release --example synthetic_dataset -- /tmp/slice0.kten
//! ```

use serde_json::json;
use txlr::kten::{read_kten, write_kten};
use txlr::phantom::{generate_slice, DatasetSpec};
use txlr::Unfolding;

fn main() -> txlr::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "slice0.kten".into());
    let spec = DatasetSpec::default();
    let slice = generate_slice(&spec, 0)?;

    let p = &slice.phantom;
    let support = p.iter().filter(|&&v| v > 0.0).count() as f64 / p.len() as f64;
    println!("phantom {:?}, support {:.0}% of the field of view", p.dim(), 100.0 * support);
    println!("k-space {:?}, |D| = {:.3}", slice.kspace.dims(), slice.kspace.norm());
    for u in [Unfolding::TxStacked, Unfolding::RxStacked, Unfolding::VirtualCoil] {
        let s = txlr::singular_spectrum(&slice.kspace, Default::default(), u)?.normalized();
        let rank = s.iter().filter(|&&v| v > 1e-10).count();
        println!("{u}: numerical rank {rank} of {}", s.len());
    }

    let meta = json!({ "dataset": spec, "slice": 0 });
    write_kten(&slice.kspace, &out, meta.as_object().unwrap())?;
    let (back, header) = read_kten(&out)?;
    assert_eq!(back, slice.kspace);
    println!("wrote {out} ({:?}, {:?})", header.dims, header.dtype);
    Ok(())
}
