//! A small parameter sweep written to CSV.
//!
//! ```text
//! cargo run --release --example sweep -- /tmp/sweep
//! ```

use txlr::experiment::{read_results_csv, run_experiment, ExperimentConfig};

const CONFIG: &str = r#"
methods = ["primo", "txlr"]
r = [4.0, 8.0]
psnr_db = [60.0]
write_traces = true

[dataset]
slices = 2
"#;

fn main() -> txlr::Result<()> {
    let mut cfg = ExperimentConfig::from_toml_str(CONFIG)?;
    cfg.output_dir = std::env::args().nth(1).unwrap_or_else(|| "sweep-out".into()).into();
    let out = run_experiment(&cfg)?;
    for row in read_results_csv(&out.results_csv)? {
        println!(
            "slice {} {:>5} R={} rmse={:.4} map_rmse={:.4} iters={}",
            row.slice,
            row.method,
            row.r,
            row.rmse.unwrap_or(f64::NAN),
            row.map_rmse.unwrap_or(f64::NAN),
            row.iterations_used.unwrap_or(0)
        );
    }
    println!("results in {}", out.results_csv.display());
    Ok(())
}
