use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Map, Value};

use txlr::experiment::{run_experiment, spectrum_rows, write_config_snapshot, write_spectra_csv, ExperimentConfig};
use txlr::kten::{read_kten, read_mask, write_kten, write_kten_as, write_mask, Dtype};
use txlr::metrics::random_baseline_spectrum;
use txlr::phantom::{generate_slice, DatasetSpec, PhantomKind};
use txlr::solver::{admm_reconstruct_traced, Ranks};
use txlr::{
    add_noise, apply_mask, map_rmse, mask_variants_per_tx, relative_tx_maps, rmse, singular_spectrum, Error,
    KSpaceTensor, Kernel, MaskOptions, Method, NoiseModel, NoiseSpec, Result, SolverConfig, Stopping, Unfolding,
};

#[derive(Parser)]
#[command(name = "txlr", version, about = "Low-rank completion of undersampled parallel-transmit k-space")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic slices as KTEN files.
    Generate(GenerateArgs),
    /// Write a Poisson-disc sampling mask as a KTEN file.
    Mask(MaskArgs),
    /// Reconstruct one undersampled tensor.
    Recon(ReconArgs),
    /// Run a parameter sweep described by a TOML file.
    Sweep(SweepArgs),
    /// Write singular spectra of the unfoldings as CSV.
    Spectrum(SpectrumArgs),
    /// Estimate relative transmit maps from complete k-space.
    Maps(MapsArgs),
}

fn parse_pair(s: &str) -> std::result::Result<[usize; 2], String> {
    let k: Kernel = s.parse().map_err(|e: Error| e.to_string())?;
    Ok([k.m, k.n])
}

/// `R` or `R1,R2` as given on the command line.
#[derive(Clone, Debug, Serialize)]
struct RankSpec(Vec<usize>);

fn parse_ranks(s: &str) -> std::result::Result<RankSpec, String> {
    let ranks: std::result::Result<Vec<usize>, _> = s.split(',').map(|t| t.trim().parse::<usize>()).collect();
    match ranks {
        Ok(r) if (1..=2).contains(&r.len()) && r.iter().all(|&v| v > 0) => Ok(RankSpec(r)),
        _ => Err(format!("expected R or R1,R2 with positive integers, got {s:?}")),
    }
}

#[derive(Args, Serialize)]
struct GenerateArgs {
    /// Output directory; slices are written as sliceNNN.kten.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    slices: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Image grid before cropping, NXxNY.
    #[arg(long, default_value = "48x48", value_parser = parse_pair)]
    image_size: [usize; 2],
    /// Central k-space crop, CXxCY.
    #[arg(long, default_value = "24x24", value_parser = parse_pair)]
    crop: [usize; 2],
    #[arg(long, default_value_t = 8)]
    nrx: usize,
    #[arg(long, default_value_t = 8)]
    ntx: usize,
    /// Harmonics per axis in every sensitivity map.
    #[arg(long, default_value_t = 3)]
    order: usize,
    #[arg(long, default_value = "shepp_like")]
    phantom: String,
    #[arg(long, default_value = "c128", value_parser = ["c64", "c128"])]
    dtype: String,
}

#[derive(Args, Serialize)]
struct MaskArgs {
    #[arg(long)]
    out: PathBuf,
    /// K-space grid, NKXxNKY.
    #[arg(long, default_value = "24x24", value_parser = parse_pair)]
    dims: [usize; 2],
    /// Target acceleration factor.
    #[arg(long)]
    r: f64,
    /// Number of transmit modes, one pattern each.
    #[arg(long, default_value_t = 8)]
    ntx: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// One pattern for all transmit modes.
    #[arg(long)]
    shared: bool,
    /// Do not force the k-space centre into the pattern.
    #[arg(long)]
    no_center: bool,
}

#[derive(Args, Serialize)]
struct ReconArgs {
    /// K-space to undersample; unsampled entries are ignored.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "txlr")]
    method: String,
    #[arg(long, default_value = "5x5")]
    kernel: String,
    /// Rank threshold, or R1,R2 for the U1 (or U0) and U2 unfoldings.
    #[arg(long, default_value = "50", value_parser = parse_ranks)]
    rank: RankSpec,
    /// Iteration cap; 50 for txlr and 100 otherwise when absent.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long, default_value = "fixed", value_parser = ["fixed", "chisq"])]
    stop: String,
    /// Add noise at this peak SNR (dB) before undersampling.
    #[arg(long)]
    psnr: Option<f64>,
    #[arg(long, default_value_t = 11)]
    noise_seed: u64,
    /// Per-receiver noise standard deviation for the chi-square rule: one
    /// value, or one per receive channel separated by commas.
    #[arg(long, value_delimiter = ',')]
    sigma: Option<Vec<f64>>,
    /// Fully sampled reference for reporting RMSE.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    rho0: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args, Serialize)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `workers`.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides `dataset.slices`.
    #[arg(long)]
    slices: Option<usize>,
    /// Also write per-iteration traces.
    #[arg(long)]
    traces: bool,
}

#[derive(Args, Serialize)]
struct SpectrumArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "5x5")]
    kernel: String,
    /// Unfoldings to analyse: any of vc, tc, rc.
    #[arg(long, value_delimiter = ',', default_value = "tc,rc")]
    unfoldings: Vec<String>,
    /// Seed of the i.i.d. Gaussian baseline; no baseline when absent.
    #[arg(long)]
    baseline_seed: Option<u64>,
    /// Slice index written to the CSV.
    #[arg(long, default_value_t = 0)]
    slice: usize,
}

#[derive(Args, Serialize)]
struct MapsArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Support threshold relative to the peak combined magnitude.
    #[arg(long, default_value_t = 0.1)]
    threshold: f64,
    /// Fully sampled reference; prints the map RMSE against it.
    #[arg(long)]
    truth: Option<PathBuf>,
}

fn echo(command: &str, args: &impl Serialize) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("command".into(), command.into());
    m.insert("args".into(), serde_json::to_value(args).unwrap_or(Value::Null));
    m
}

fn write_sidecar(out: &Path, meta: &Map<String, Value>) -> Result<()> {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta.json");
    fs::write(PathBuf::from(name), serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

fn generate(a: &GenerateArgs) -> Result<()> {
    let spec = DatasetSpec {
        image_size: a.image_size,
        crop: a.crop,
        nrx: a.nrx,
        ntx: a.ntx,
        order: a.order,
        phantom: a.phantom.parse::<PhantomKind>()?,
        slices: a.slices,
        seed: a.seed,
    };
    if spec.slices == 0 {
        return Err(Error::Config("--slices must be >= 1".into()));
    }
    let dtype = if a.dtype == "c64" { Dtype::C64 } else { Dtype::C128 };
    fs::create_dir_all(&a.out)?;
    for i in 0..spec.slices {
        let slice = generate_slice(&spec, i)?;
        let mut meta = echo("generate", a);
        meta.insert("slice".into(), i.into());
        meta.insert("dataset".into(), serde_json::to_value(&spec)?);
        let path = a.out.join(format!("slice{i:03}.kten"));
        write_kten_as(&slice.kspace, &path, dtype, &meta)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn mask(a: &MaskArgs) -> Result<()> {
    let opts = MaskOptions { force_center: !a.no_center, shared: a.shared };
    let m = mask_variants_per_tx((a.dims[0], a.dims[1]), a.r, a.ntx, a.seed, &opts)?;
    write_mask(&m, &a.out, &echo("mask", a))?;
    println!("{}", json!({"out": a.out, "R_target": a.r, "R_achieved": m.r_achieved(), "patterns": m.n_patterns()}));
    Ok(())
}

fn recon(a: &ReconArgs) -> Result<()> {
    faer::set_global_parallelism(faer::Par::Seq);
    let method: Method = a.method.parse()?;
    let mut cfg = SolverConfig::new(method);
    cfg.kernel = a.kernel.parse()?;
    cfg.ranks = match a.rank.0.as_slice() {
        [r] => Ranks::uniform(*r),
        [r1, r2] => Ranks { r0: *r1, r1: *r1, r2: *r2 },
        _ => unreachable!("validated by the parser"),
    };
    cfg.stopping = a.stop.parse::<Stopping>()?;
    if let Some(n) = a.iters {
        cfg.max_iters = n;
    }
    if let Some(v) = a.rho0 {
        cfg.rho0 = v;
    }
    if let Some(v) = a.tau {
        cfg.tau = v;
    }
    if let Some(v) = a.alpha {
        cfg.alpha = v;
    }

    let (input, _) = read_kten(&a.input)?;
    let (m, _) = read_mask(&a.mask)?;
    let (noisy, mut noise) = match a.psnr {
        Some(p) => add_noise(&input, &NoiseSpec::new(p, a.noise_seed))?,
        None => (input.clone(), None),
    };
    if let Some(s) = &a.sigma {
        let nrx = input.dims().2;
        noise = Some(match s.as_slice() {
            [v] => NoiseModel::uniform(*v, nrx)?,
            many => NoiseModel::new(many.to_vec())?,
        });
    }
    let d = apply_mask(&noisy, &m)?;
    let truth: Option<KSpaceTensor> = match &a.truth {
        Some(p) => Some(read_kten(p)?.0),
        None => None,
    };
    let report = admm_reconstruct_traced(&d, &m, &cfg, noise.as_ref(), truth.as_ref())?;

    let mut meta = echo("recon", a);
    meta.insert("solver".into(), serde_json::to_value(&cfg)?);
    meta.insert("iterations_used".into(), report.iterations_used.into());
    meta.insert("stop_reason".into(), report.stop_reason.to_string().into());
    meta.insert("chi_final".into(), json!(report.final_chi()));
    let err = match &truth {
        Some(t) => Some(rmse(&report.z_final, t)?),
        None => None,
    };
    meta.insert("rmse".into(), json!(err));
    write_kten(&report.z_final, &a.out, &meta)?;
    println!(
        "{}",
        json!({
            "out": a.out,
            "method": method,
            "iterations_used": report.iterations_used,
            "stop_reason": report.stop_reason.to_string(),
            "chi_final": report.final_chi(),
            "rmse": err,
            "wall_ms": report.wall_time.as_secs_f64() * 1e3,
        })
    );
    Ok(())
}

fn sweep(a: &SweepArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::from_toml_file(&a.config)?;
    if let Some(o) = &a.out {
        cfg.output_dir = o.clone();
    }
    if a.workers.is_some() {
        cfg.workers = a.workers;
    }
    if let Some(n) = a.slices {
        cfg.dataset.slices = n;
    }
    cfg.write_traces |= a.traces;
    write_config_snapshot(&cfg)?;
    let out = run_experiment(&cfg)?;
    write_sidecar(&out.results_csv, &echo("sweep", a))?;
    let failed = out.rows.iter().filter(|r| r.error.is_some()).count();
    println!(
        "{}",
        json!({"results": out.results_csv, "traces": out.traces_csv, "rows": out.rows.len(), "failed": failed})
    );
    Ok(())
}

fn spectrum(a: &SpectrumArgs) -> Result<()> {
    let kernel: Kernel = a.kernel.parse()?;
    let (d, _) = read_kten(&a.input)?;
    let mut rows = Vec::new();
    for name in &a.unfoldings {
        let u: Unfolding = name.parse()?;
        rows.extend(spectrum_rows(a.slice, "data", &singular_spectrum(&d, kernel, u)?));
        if let Some(seed) = a.baseline_seed {
            let base = random_baseline_spectrum(d.dims(), kernel, u, seed)?;
            rows.extend(spectrum_rows(a.slice, "random", &base));
        }
    }
    write_spectra_csv(&a.out, &rows)?;
    write_sidecar(&a.out, &echo("spectrum", a))?;
    println!("{}", json!({"out": a.out, "rows": rows.len()}));
    Ok(())
}

fn maps(a: &MapsArgs) -> Result<()> {
    let (z, _) = read_kten(&a.input)?;
    let est = relative_tx_maps(&z, a.threshold)?;
    let (nx, ny, ntx) = est.maps.dim();
    let t = KSpaceTensor::from_fn((nx, ny, 1, ntx), |(x, y, _, k)| est.maps[[x, y, k]])?;
    let mut meta = echo("maps", a);
    meta.insert("kind".into(), "relative_tx_maps".into());
    meta.insert("support_pixels".into(), est.support_size().into());
    let err = match &a.truth {
        Some(p) => Some(map_rmse(&est, &relative_tx_maps(&read_kten(p)?.0, a.threshold)?)?),
        None => None,
    };
    meta.insert("map_rmse".into(), json!(err));
    write_kten(&t, &a.out, &meta)?;
    println!("{}", json!({"out": a.out, "support_pixels": est.support_size(), "map_rmse": err}));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Mask(a) => mask(a),
        Command::Recon(a) => recon(a),
        Command::Sweep(a) => sweep(a),
        Command::Spectrum(a) => spectrum(a),
        Command::Maps(a) => maps(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
