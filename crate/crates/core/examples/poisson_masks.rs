//! Poisson-disc undersampling masks, one pattern per transmit mode.
//!
//! ```text
//! cargo run --release --example poisson_masks -- 6
//! ```

use txlr::{mask_variants_per_tx, MaskOptions};

fn main() -> txlr::Result<()> {
    let r: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4.0);
    let mask = mask_variants_per_tx((24, 24), r, 4, 7, &MaskOptions::default())?;
    println!("target R = {r}, achieved R = {:.3}", mask.r_achieved());
    for p in 0..mask.n_patterns() {
        println!("pattern {p}: R = {:.3}, exclusion radius {:.2}", mask.pattern_r(p), mask.radii()[p]);
    }
    println!("union of all patterns covers {:.0}% of k-space", 100.0 * mask.union_coverage());
    println!();
    for y in 0..24 {
        let row: String = (0..24)
            .map(|x| match (mask.is_sampled(x, y, 0), mask.is_sampled(x, y, 1)) {
                (true, true) => '#',
                (true, false) => 'o',
                (false, true) => '+',
                (false, false) => '.',
            })
            .collect();
        println!("{row}");
    }
    println!("\no: tx 0 only, +: tx 1 only, #: both");
    Ok(())
}
