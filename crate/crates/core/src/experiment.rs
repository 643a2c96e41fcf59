//! Sweep runner: every `(slice, R, PSNR, method)` cell of an
//! [`ExperimentConfig`] is reconstructed and reported as one [`ResultRow`].
//!
//! Within a cell all methods share the same mask and noise draw. Cells run on
//! a worker pool; rows are written in cell order by a single writer and
//! flushed as soon as they are contiguous, so an interrupted run keeps every
//! completed prefix.
//!
//! CSV schemas written here:
//!
//! * results: [`RESULT_COLUMNS`]
//! * traces: [`TRACE_COLUMNS`], one row per iteration
//! * spectra: [`SPECTRUM_COLUMNS`] (see [`write_spectra_csv`])

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::kten::{read_kten, write_kten};
use crate::metrics::{map_rmse, relative_tx_maps, rmse, SingularSpectrum};
use crate::phantom::{crop_kspace, generate_slice, DatasetSpec};
use crate::sampling::{add_noise, apply_mask, mask_variants_per_tx, MaskOptions, NoiseSpec, SamplingMask};
use crate::solver::{admm_reconstruct_traced, Method, Ranks, ReconReport, SolverConfig, Stopping};
use crate::svt::SvdRoute;
use crate::tensor::{KSpaceTensor, Kernel};
use crate::unfold::Unfolding;

pub const RESULT_COLUMNS: [&str; 14] = [
    "slice",
    "method",
    "R",
    "psnr_db",
    "kernel",
    "r1",
    "r2",
    "iterations_used",
    "stop_reason",
    "rmse",
    "map_rmse",
    "chi_final",
    "wall_ms",
    "error",
];

pub const TRACE_COLUMNS: [&str; 8] = ["slice", "method", "R", "psnr_db", "iteration", "rmse", "chi", "residual"];

pub const SPECTRUM_COLUMNS: [&str; 6] = ["slice", "unfolding", "source", "index", "value", "normalized"];

/// Where ground-truth k-space comes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    /// Synthetic slices from [`ExperimentConfig::dataset`].
    #[default]
    Generate,
    /// Fully sampled KTEN files, one per slice, from [`ExperimentConfig::load`].
    Load,
}

/// Sweep definition, usually read from TOML.
///
/// ```toml
/// source = "generate"
/// methods = ["vc", "primo", "txlr"]
/// r = [2.0, 4.0, 6.0, 8.0]
/// psnr_db = [60.0]
/// kernel = "5x5"
/// output_dir = "out"
///
/// [dataset]
/// slices = 8
/// ```
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: Source,
    pub dataset: DatasetSpec,
    /// KTEN files used when `source = "load"`.
    pub load: Vec<PathBuf>,
    /// Central crop applied to loaded data.
    pub crop: Option<[usize; 2]>,
    pub methods: Vec<Method>,
    pub r: Vec<f64>,
    /// Peak SNR values in dB; `inf` disables noise.
    pub psnr_db: Vec<f64>,
    #[serde(with = "kernel_str")]
    pub kernel: Kernel,
    pub ranks: Ranks,
    /// Iteration cap; each method's default when absent.
    pub iters: Option<usize>,
    pub stopping: Stopping,
    pub svd_route: SvdRoute,
    pub mask: MaskOptions,
    pub mask_seed: u64,
    pub noise_seed: u64,
    /// Support threshold for relative transmit maps.
    pub map_threshold: f64,
    /// Worker threads; all available cores when absent.
    pub workers: Option<usize>,
    pub output_dir: PathBuf,
    pub write_traces: bool,
    /// Save every reconstruction as KTEN under `output_dir/recon`.
    pub write_recon: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            source: Source::Generate,
            dataset: DatasetSpec::default(),
            load: Vec::new(),
            crop: None,
            methods: Method::ALL.to_vec(),
            r: vec![2.0, 4.0, 6.0, 8.0],
            psnr_db: vec![60.0],
            kernel: Kernel::default(),
            ranks: Ranks::default(),
            iters: None,
            stopping: Stopping::FixedIterations,
            svd_route: SvdRoute::Gram,
            mask: MaskOptions::default(),
            mask_seed: 7,
            noise_seed: 11,
            map_threshold: 0.1,
            workers: None,
            output_dir: PathBuf::from("results"),
            write_traces: false,
            write_recon: false,
        }
    }
}

mod kernel_str {
    use super::Kernel;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(k: &Kernel, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(k)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Kernel, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.r.is_empty() || self.psnr_db.is_empty() {
            return Err(Error::Config("methods, r and psnr_db must all be non-empty".into()));
        }
        if let Some(r) = self.r.iter().find(|&&r| !(r >= 1.0 && r.is_finite())) {
            return Err(Error::Config(format!("acceleration factors must be finite and >= 1, got {r}")));
        }
        if self.psnr_db.iter().any(|p| p.is_nan() || *p == f64::NEG_INFINITY) {
            return Err(Error::Config("psnr_db values must be numbers or inf".into()));
        }
        if self.iters == Some(0) {
            return Err(Error::Config("iters must be >= 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.map_threshold) {
            return Err(Error::Config(format!("map_threshold must lie in [0, 1), got {}", self.map_threshold)));
        }
        match self.source {
            Source::Generate if self.dataset.slices == 0 => {
                Err(Error::Config("dataset.slices must be >= 1".into()))
            }
            Source::Load if self.load.is_empty() => {
                Err(Error::Config("source = \"load\" needs at least one path in `load`".into()))
            }
            Source::Load => match self.load.iter().find(|p| !p.exists()) {
                Some(p) => Err(Error::Config(format!("input {} does not exist", p.display()))),
                None => Ok(()),
            },
            Source::Generate => Ok(()),
        }
    }

    /// Solver settings for one method under this sweep.
    pub fn solver_config(&self, method: Method) -> SolverConfig {
        let mut cfg = SolverConfig::new(method);
        cfg.kernel = self.kernel;
        cfg.ranks = self.ranks;
        cfg.stopping = self.stopping;
        cfg.svd_route = self.svd_route;
        if let Some(n) = self.iters {
            cfg.max_iters = n;
        }
        cfg
    }

    pub fn n_slices(&self) -> usize {
        match self.source {
            Source::Generate => self.dataset.slices,
            Source::Load => self.load.len(),
        }
    }

    /// All cells in output order: slice, then R, then PSNR, then method.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for slice in 0..self.n_slices() {
            for &r in &self.r {
                for &psnr_db in &self.psnr_db {
                    for &method in &self.methods {
                        out.push(Cell { slice, r, psnr_db, method });
                    }
                }
            }
        }
        out
    }

    /// Ground-truth k-space for every slice.
    pub fn load_slices(&self) -> Result<Vec<KSpaceTensor>> {
        match self.source {
            Source::Generate => (0..self.dataset.slices)
                .map(|i| generate_slice(&self.dataset, i).map(|s| s.kspace))
                .collect(),
            Source::Load => self
                .load
                .iter()
                .map(|p| {
                    let (t, _) = read_kten(p)?;
                    match self.crop {
                        Some([cx, cy]) => crop_kspace(&t, (cx, cy)),
                        None => Ok(t),
                    }
                })
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub slice: usize,
    pub r: f64,
    pub psnr_db: f64,
    pub method: Method,
}

fn mix(a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over a combined word
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mask seed for a slice and acceleration, shared by all methods and PSNRs.
pub fn cell_mask_seed(base: u64, slice: usize, r: f64) -> u64 {
    mix(mix(base, slice as u64), r.to_bits())
}

/// Noise seed for a slice and PSNR, shared by all methods and accelerations.
pub fn cell_noise_seed(base: u64, slice: usize, psnr_db: f64) -> u64 {
    mix(mix(base, slice as u64), psnr_db.to_bits())
}

/// One line of the results CSV. Columns follow [`RESULT_COLUMNS`].
///
/// `r1` holds the threshold on the `U0` or `U1` unfolding and `r2` the one on
/// `U2`; a column is empty when the method has no such constraint.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ResultRow {
    pub slice: usize,
    pub method: Method,
    #[serde(rename = "R")]
    pub r: f64,
    pub psnr_db: f64,
    pub kernel: String,
    pub r1: Option<usize>,
    pub r2: Option<usize>,
    pub iterations_used: Option<usize>,
    pub stop_reason: Option<String>,
    pub rmse: Option<f64>,
    pub map_rmse: Option<f64>,
    pub chi_final: Option<f64>,
    pub wall_ms: f64,
    pub error: Option<String>,
}

impl ResultRow {
    fn empty(cell: &Cell, cfg: &SolverConfig) -> Self {
        let (mut r1, mut r2) = (None, None);
        for &u in cfg.method.unfoldings() {
            let r = cfg.ranks.for_unfolding(u);
            match u {
                Unfolding::VirtualCoil | Unfolding::TxStacked => r1 = Some(r),
                Unfolding::RxStacked => r2 = Some(r),
            }
        }
        Self {
            slice: cell.slice,
            method: cell.method,
            r: cell.r,
            psnr_db: cell.psnr_db,
            kernel: cfg.kernel.to_string(),
            r1,
            r2,
            iterations_used: None,
            stop_reason: None,
            rmse: None,
            map_rmse: None,
            chi_final: None,
            wall_ms: 0.0,
            error: None,
        }
    }

    /// The row with its timing column cleared, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        Self { wall_ms: 0.0, ..self.clone() }
    }
}

/// One line of the traces CSV. Columns follow [`TRACE_COLUMNS`].
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TraceRow {
    pub slice: usize,
    pub method: Method,
    #[serde(rename = "R")]
    pub r: f64,
    pub psnr_db: f64,
    pub iteration: usize,
    pub rmse: Option<f64>,
    pub chi: Option<f64>,
    pub residual: f64,
}

/// One line of the spectra CSV. Columns follow [`SPECTRUM_COLUMNS`].
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SpectrumRow {
    pub slice: usize,
    pub unfolding: String,
    /// `data` or `random`.
    pub source: String,
    pub index: usize,
    pub value: f64,
    pub normalized: f64,
}

pub fn spectrum_rows(slice: usize, source: &str, s: &SingularSpectrum) -> Vec<SpectrumRow> {
    s.values
        .iter()
        .zip(s.normalized())
        .enumerate()
        .map(|(index, (&value, normalized))| SpectrumRow {
            slice,
            unfolding: s.unfolding.label().to_string(),
            source: source.to_string(),
            index,
            value,
            normalized,
        })
        .collect()
}

pub fn write_spectra_csv(path: impl AsRef<Path>, rows: &[SpectrumRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(SPECTRUM_COLUMNS)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Everything a cell produces.
#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub row: ResultRow,
    pub traces: Vec<TraceRow>,
    pub recon: Option<KSpaceTensor>,
}

/// Mask and noisy undersampled data for a cell, exactly as the sweep builds them.
pub fn prepare_cell(
    cfg: &ExperimentConfig,
    truth: &KSpaceTensor,
    cell: &Cell,
) -> Result<(SamplingMask, KSpaceTensor, Option<crate::solver::NoiseModel>)> {
    let (_, _, _, ntx) = truth.dims();
    let mask = mask_variants_per_tx(
        truth.kspace_dims(),
        cell.r,
        ntx,
        cell_mask_seed(cfg.mask_seed, cell.slice, cell.r),
        &cfg.mask,
    )?;
    let noise = NoiseSpec::new(cell.psnr_db, cell_noise_seed(cfg.noise_seed, cell.slice, cell.psnr_db));
    let (noisy, model) = add_noise(truth, &noise)?;
    let d = apply_mask(&noisy, &mask)?;
    Ok((mask, d, model))
}

fn reconstruct_cell(cfg: &ExperimentConfig, truth: &KSpaceTensor, cell: &Cell) -> Result<(ReconReport, f64)> {
    let (mask, d, noise) = prepare_cell(cfg, truth, cell)?;
    let solver = cfg.solver_config(cell.method);
    let report = admm_reconstruct_traced(&d, &mask, &solver, noise.as_ref(), Some(truth))?;
    let truth_maps = relative_tx_maps(truth, cfg.map_threshold)?;
    let maps = relative_tx_maps(&report.z_final, cfg.map_threshold)?;
    let m = map_rmse(&maps, &truth_maps)?;
    Ok((report, m))
}

/// Runs one cell. Failures are reported in the row's `error` column.
pub fn run_cell(cfg: &ExperimentConfig, truth: &KSpaceTensor, cell: &Cell) -> CellOutcome {
    let solver = cfg.solver_config(cell.method);
    let mut row = ResultRow::empty(cell, &solver);
    let start = std::time::Instant::now();
    let result = reconstruct_cell(cfg, truth, cell);
    row.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    match result {
        Ok((report, m)) => {
            row.iterations_used = Some(report.iterations_used);
            row.stop_reason = Some(report.stop_reason.to_string());
            row.rmse = rmse(&report.z_final, truth).ok();
            row.map_rmse = Some(m);
            row.chi_final = report.final_chi();
            let traces = if cfg.write_traces {
                (0..report.iterations_used)
                    .map(|i| TraceRow {
                        slice: cell.slice,
                        method: cell.method,
                        r: cell.r,
                        psnr_db: cell.psnr_db,
                        iteration: i + 1,
                        rmse: report.rmse_trace.get(i).copied(),
                        chi: report.chi_trace.get(i).copied(),
                        residual: report.residual_trace[i],
                    })
                    .collect()
            } else {
                Vec::new()
            };
            let recon = cfg.write_recon.then_some(report.z_final);
            CellOutcome { row, traces, recon }
        }
        Err(e) => {
            row.error = Some(e.to_string());
            CellOutcome { row, traces: Vec::new(), recon: None }
        }
    }
}

/// Paths written by [`run_experiment`].
#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub results_csv: PathBuf,
    pub traces_csv: Option<PathBuf>,
    pub rows: Vec<ResultRow>,
}

fn recon_name(cell: &Cell) -> String {
    format!("slice{:03}_{}_R{}_psnr{}.kten", cell.slice, cell.method, cell.r, cell.psnr_db)
}

fn recon_meta(cfg: &ExperimentConfig, cell: &Cell, row: &ResultRow) -> Map<String, Value> {
    let v = json!({
        "slice": cell.slice,
        "method": cell.method,
        "R": cell.r,
        "psnr_db": cell.psnr_db,
        "kernel": row.kernel,
        "r1": row.r1,
        "r2": row.r2,
        "iterations_used": row.iterations_used,
        "stop_reason": row.stop_reason,
        "mask_seed": cell_mask_seed(cfg.mask_seed, cell.slice, cell.r),
        "noise_seed": cell_noise_seed(cfg.noise_seed, cell.slice, cell.psnr_db),
    });
    v.as_object().cloned().unwrap_or_default()
}

fn csv_with_header(path: &Path, header: &[&str]) -> Result<csv::Writer<fs::File>> {
    // rows are serialized without serde's automatic header
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    w.flush()?;
    Ok(w)
}

struct Sink {
    results: csv::Writer<fs::File>,
    traces: Option<csv::Writer<fs::File>>,
    recon_dir: Option<PathBuf>,
}

impl Sink {
    fn write(&mut self, cfg: &ExperimentConfig, cell: &Cell, out: CellOutcome) -> Result<ResultRow> {
        self.results.serialize(&out.row)?;
        self.results.flush()?;
        if let Some(w) = self.traces.as_mut() {
            for t in &out.traces {
                w.serialize(t)?;
            }
            w.flush()?;
        }
        if let (Some(dir), Some(z)) = (&self.recon_dir, &out.recon) {
            write_kten(z, dir.join(recon_name(cell)), &recon_meta(cfg, cell, &out.row))?;
        }
        Ok(out.row)
    }
}

/// Runs the whole sweep and writes `results.csv` (plus `traces.csv` and KTEN
/// reconstructions when enabled) into `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    // parallelism comes from the cell pool; nested BLAS threads only contend
    faer::set_global_parallelism(faer::Par::Seq);
    fs::create_dir_all(&cfg.output_dir)?;
    let slices = cfg.load_slices()?;
    let cells = cfg.cells();

    let results_csv = cfg.output_dir.join("results.csv");
    let traces_csv = cfg.write_traces.then(|| cfg.output_dir.join("traces.csv"));
    let recon_dir = cfg.write_recon.then(|| cfg.output_dir.join("recon"));
    if let Some(dir) = &recon_dir {
        fs::create_dir_all(dir)?;
    }
    let mut sink = Sink {
        results: csv_with_header(&results_csv, &RESULT_COLUMNS)?,
        traces: traces_csv.as_ref().map(|p| csv_with_header(p, &TRACE_COLUMNS)).transpose()?,
        recon_dir,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;

    let (tx, rx) = mpsc::channel::<(usize, CellOutcome)>();
    let rows = std::thread::scope(|scope| -> Result<Vec<ResultRow>> {
        let cells_ref = &cells;
        let slices_ref = &slices;
        scope.spawn(move || {
            pool.install(|| {
                cells_ref.par_iter().enumerate().for_each_with(tx, |tx, (i, cell)| {
                    let out = run_cell(cfg, &slices_ref[cell.slice], cell);
                    // the receiver only disappears after a write error
                    let _ = tx.send((i, out));
                });
            });
        });
        let mut pending = BTreeMap::new();
        let mut next = 0;
        let mut rows = Vec::with_capacity(cells.len());
        for (i, out) in rx {
            pending.insert(i, out);
            while let Some(out) = pending.remove(&next) {
                rows.push(sink.write(cfg, &cells[next], out)?);
                next += 1;
            }
        }
        Ok(rows)
    })?;

    Ok(ExperimentOutput { results_csv, traces_csv, rows })
}

/// Reads a results CSV written by [`run_experiment`], checking the header.
pub fn read_results_csv(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != RESULT_COLUMNS {
        return Err(Error::Config(format!("unexpected results header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Writes `cfg` next to the results so a sweep can be rerun exactly.
pub fn write_config_snapshot(cfg: &ExperimentConfig) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join("config.toml");
    let mut f = fs::File::create(&path)?;
    f.write_all(cfg.to_toml_string()?.as_bytes())?;
    Ok(path)
}
