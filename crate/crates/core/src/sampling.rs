//! Retrospective undersampling and noise.
//!
//! Masks are uniform-density Poisson-disc patterns on the Cartesian `(kx, ky)`
//! grid. Darts are thrown at seeded random real-valued positions, kept when
//! they respect the exclusion radius, and snapped to the nearest grid cell.
//! The radius is bisected until the number of kept darts gives the requested
//! acceleration.

use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::solver::NoiseModel;
use crate::tensor::KSpaceTensor;
use crate::C64;

/// Largest allowed relative deviation between achieved and requested R.
pub const R_TOLERANCE: f64 = 0.05;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MaskOptions {
    /// Always sample the k-space centre `(⌊Nkx/2⌋, ⌊Nky/2⌋)`.
    pub force_center: bool,
    /// One pattern shared by every transmit mode instead of one per mode.
    pub shared: bool,
}

impl Default for MaskOptions {
    fn default() -> Self {
        Self {
            force_center: true,
            shared: false,
        }
    }
}

/// Binary sampling pattern over `(kx, ky)`, optionally one per transmit mode.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMask {
    /// `(kx, ky, pattern)`; a single pattern is broadcast over all tx modes.
    bits: Array3<bool>,
    r_target: f64,
    r_achieved: f64,
    seed: u64,
    radii: Vec<f64>,
}

impl SamplingMask {
    /// Wraps explicit bits. Fails if nothing is sampled.
    pub fn from_bits(bits: Array3<bool>, r_target: f64, seed: u64) -> Result<Self> {
        let sampled = bits.iter().filter(|&&b| b).count();
        if sampled == 0 {
            return Err(Error::Parameter("mask samples no points".into()));
        }
        let r_achieved = bits.len() as f64 / sampled as f64;
        let radii = vec![0.0; bits.dim().2];
        Ok(Self {
            bits,
            r_target,
            r_achieved,
            seed,
            radii,
        })
    }

    /// Fully sampled mask.
    pub fn full(dims: (usize, usize)) -> Self {
        Self::from_bits(Array3::from_elem((dims.0, dims.1, 1), true), 1.0, 0)
            .expect("non-empty")
    }

    pub fn bits(&self) -> &Array3<bool> {
        &self.bits
    }

    pub fn dims(&self) -> (usize, usize) {
        let (x, y, _) = self.bits.dim();
        (x, y)
    }

    pub fn n_patterns(&self) -> usize {
        self.bits.dim().2
    }

    pub fn r_target(&self) -> f64 {
        self.r_target
    }

    pub fn r_achieved(&self) -> f64 {
        self.r_achieved
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Exclusion radius between the unsnapped darts of each pattern, in grid
    /// units. Snapped samples are at least `radius − √2` apart.
    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    /// Whether `(kx, ky)` is sampled for transmit mode `tx`.
    #[inline]
    pub fn is_sampled(&self, kx: usize, ky: usize, tx: usize) -> bool {
        let p = if self.n_patterns() == 1 { 0 } else { tx };
        self.bits[[kx, ky, p]]
    }

    /// Sampled-point count of one pattern.
    pub fn pattern_count(&self, pattern: usize) -> usize {
        self.bits
            .index_axis(ndarray::Axis(2), pattern)
            .iter()
            .filter(|&&b| b)
            .count()
    }

    /// Acceleration of one pattern.
    pub fn pattern_r(&self, pattern: usize) -> f64 {
        let (x, y) = self.dims();
        (x * y) as f64 / self.pattern_count(pattern) as f64
    }

    /// Complement: sampled where this mask is not.
    pub fn complement(&self) -> Self {
        Self {
            bits: self.bits.mapv(|b| !b),
            r_target: f64::NAN,
            r_achieved: f64::NAN,
            seed: self.seed,
            radii: self.radii.clone(),
        }
    }

    /// Checks that this mask can be applied to data of `dims`.
    pub fn check_compatible(&self, dims: (usize, usize, usize, usize)) -> Result<()> {
        let (nkx, nky, _, ntx) = dims;
        let (mx, my, np) = self.bits.dim();
        if (mx, my) != (nkx, nky) || (np != 1 && np != ntx) {
            return Err(Error::dim(format!(
                "mask {mx}x{my}x{np} does not match k-space {nkx}x{nky} with {ntx} tx modes"
            )));
        }
        Ok(())
    }

    /// Number of sampled complex entries in a tensor of `dims`.
    pub fn sampled_entries(&self, dims: (usize, usize, usize, usize)) -> usize {
        let (nkx, nky, nrx, ntx) = dims;
        let mut n = 0;
        for tx in 0..ntx {
            for y in 0..nky {
                for x in 0..nkx {
                    n += usize::from(self.is_sampled(x, y, tx));
                }
            }
        }
        n * nrx
    }

    /// Fraction of `(kx, ky)` locations sampled by at least one pattern.
    pub fn union_coverage(&self) -> f64 {
        let (x, y, np) = self.bits.dim();
        let mut covered = 0;
        for i in 0..x {
            for j in 0..y {
                covered += usize::from((0..np).any(|p| self.bits[[i, j, p]]));
            }
        }
        covered as f64 / (x * y) as f64
    }
}

/// Seed of the pattern for transmit mode `tx`. Mode 0 uses `seed` itself.
pub fn tx_seed(seed: u64, tx: usize) -> u64 {
    seed.wrapping_add((tx as u64).wrapping_mul(GOLDEN))
}

/// Poisson-disc mask with acceleration `r` over a `(Nkx, Nky)` grid.
pub fn poisson_disc_mask(dims: (usize, usize), r: f64, seed: u64) -> Result<SamplingMask> {
    poisson_disc_mask_with(dims, r, seed, &MaskOptions::default())
}

pub fn poisson_disc_mask_with(
    dims: (usize, usize),
    r: f64,
    seed: u64,
    opts: &MaskOptions,
) -> Result<SamplingMask> {
    let (bits, radius) = poisson_pattern(dims, r, seed, opts.force_center)?;
    let mut mask = SamplingMask::from_bits(bits.insert_axis(ndarray::Axis(2)), r, seed)?;
    mask.radii = vec![radius];
    Ok(mask)
}

/// One independent Poisson-disc pattern per transmit mode (or a single shared
/// pattern when `opts.shared`).
pub fn mask_variants_per_tx(
    dims: (usize, usize),
    r: f64,
    ntx: usize,
    seed: u64,
    opts: &MaskOptions,
) -> Result<SamplingMask> {
    if ntx == 0 {
        return Err(Error::Parameter("need at least one transmit mode".into()));
    }
    if opts.shared || ntx == 1 {
        return poisson_disc_mask_with(dims, r, seed, opts);
    }
    let mut bits = Array3::from_elem((dims.0, dims.1, ntx), false);
    let mut radii = Vec::with_capacity(ntx);
    for tx in 0..ntx {
        let (pattern, radius) = poisson_pattern(dims, r, tx_seed(seed, tx), opts.force_center)?;
        bits.index_axis_mut(ndarray::Axis(2), tx).assign(&pattern);
        radii.push(radius);
    }
    let mut mask = SamplingMask::from_bits(bits, r, seed)?;
    mask.radii = radii;
    Ok(mask)
}

fn within_tolerance(total: usize, count: usize, r: f64) -> bool {
    count > 0 && ((total as f64 / count as f64) - r).abs() / r <= R_TOLERANCE
}

/// Candidate darts thrown per grid cell.
const DARTS_PER_CELL: usize = 16;

fn poisson_pattern(
    dims: (usize, usize),
    r: f64,
    seed: u64,
    force_center: bool,
) -> Result<(Array2<bool>, f64)> {
    let (nkx, nky) = dims;
    let total = nkx * nky;
    if total == 0 {
        return Err(Error::Parameter("empty sampling grid".into()));
    }
    if !r.is_finite() || r < 1.0 || r > total as f64 {
        return Err(Error::Parameter(format!(
            "acceleration {r} unreachable on a {nkx}x{nky} grid (must lie in [1, {total}])"
        )));
    }
    let target = ((total as f64 / r).round() as usize).max(1);
    if target == total {
        return Ok((Array2::from_elem(dims, true), 0.0));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = (nkx / 2, nky / 2);
    let mut darts: Vec<(f64, f64)> = Vec::with_capacity(DARTS_PER_CELL * total + 1);
    if force_center {
        darts.push((center.0 as f64, center.1 as f64));
    }
    for _ in 0..DARTS_PER_CELL * total {
        darts.push((
            rng.random::<f64>() * nkx as f64 - 0.5,
            rng.random::<f64>() * nky as f64 - 0.5,
        ));
    }

    let mut lo = 0.0_f64;
    let mut hi = (nkx.max(nky)) as f64;
    let mut best: Option<(Array2<bool>, usize, f64)> = None;
    let mut dense: Option<(Array2<bool>, usize, f64)> = None;
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let (bits, count) = dart_throw(dims, &darts, mid, target);
        let err = count.abs_diff(target);
        if best.as_ref().is_none_or(|(_, c, _)| err < c.abs_diff(target)) {
            best = Some((bits.clone(), count, mid));
        }
        if count >= target {
            lo = mid;
            dense = Some((bits, count, mid));
        } else {
            hi = mid;
        }
        if count == target {
            break;
        }
    }

    let (bits, count, radius) = best.expect("bisection ran");
    if within_tolerance(total, count, r) {
        return Ok((bits, radius));
    }

    // Discrete jumps in the saturated count can skip the target window. Start
    // from the densest pattern above target and drop random points; removal
    // keeps every pairwise distance.
    let (mut bits, count, radius) = dense.unwrap_or_else(|| {
        let (b, c) = dart_throw(dims, &darts, 0.0, total);
        (b, c, 0.0)
    });
    let mut removable: Vec<(usize, usize)> = bits
        .indexed_iter()
        .filter(|&(p, &b)| b && !(force_center && p == center))
        .map(|(p, _)| p)
        .collect();
    removable.shuffle(&mut rng);
    for &p in removable.iter().take(count.saturating_sub(target)) {
        bits[p] = false;
    }
    let count = bits.iter().filter(|&&b| b).count();
    if !within_tolerance(total, count, r) {
        return Err(Error::Parameter(format!(
            "cannot reach R = {r} within {:.0}% on a {nkx}x{nky} grid",
            100.0 * R_TOLERANCE
        )));
    }
    Ok((bits, radius))
}

/// Throws `darts` in order. A dart is kept when no kept dart lies within
/// `radius` of it and its nearest grid cell is still free; kept darts are
/// snapped to that cell. Stops once 1.5·`cap` cells are taken.
fn dart_throw(dims: (usize, usize), darts: &[(f64, f64)], radius: f64, cap: usize) -> (Array2<bool>, usize) {
    let (nkx, nky) = dims;
    let limit = cap + cap / 2 + 1;
    // continuous position of the dart owning each cell
    let mut owner: Array2<Option<(f64, f64)>> = Array2::from_elem(dims, None);
    let reach = (radius + 1.0).ceil() as isize;
    let r2 = radius * radius;
    let mut count = 0;
    for &(x, y) in darts {
        let cx = (x.round().max(0.0) as usize).min(nkx - 1);
        let cy = (y.round().max(0.0) as usize).min(nky - 1);
        if owner[[cx, cy]].is_some() {
            continue;
        }
        let mut free = true;
        'scan: for dy in -reach..=reach {
            let yy = cy as isize + dy;
            if yy < 0 || yy >= nky as isize {
                continue;
            }
            for dx in -reach..=reach {
                let xx = cx as isize + dx;
                if xx < 0 || xx >= nkx as isize {
                    continue;
                }
                if let Some((px, py)) = owner[[xx as usize, yy as usize]] {
                    if (px - x).powi(2) + (py - y).powi(2) < r2 {
                        free = false;
                        break 'scan;
                    }
                }
            }
        }
        if free {
            owner[[cx, cy]] = Some((x, y));
            count += 1;
            if count >= limit {
                break;
            }
        }
    }
    (owner.mapv(|o| o.is_some()), count)
}

/// Zeroes every unsampled entry; sampled entries are copied unchanged.
pub fn apply_mask(d: &KSpaceTensor, m: &SamplingMask) -> Result<KSpaceTensor> {
    m.check_compatible(d.dims())?;
    let mut out = d.clone();
    for ((x, y, _, tx), v) in out.data_mut().indexed_iter_mut() {
        if !m.is_sampled(x, y, tx) {
            *v = C64::new(0.0, 0.0);
        }
    }
    Ok(out)
}

/// Noise level given as peak SNR in amplitude decibels.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseSpec {
    pub psnr_db: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(psnr_db: f64, seed: u64) -> Self {
        Self { psnr_db, seed }
    }

    /// `σ = max|D| / 10^(PSNR/20)`
    pub fn sigma_for(&self, d: &KSpaceTensor) -> f64 {
        d.max_abs() / 10f64.powf(self.psnr_db / 20.0)
    }
}

/// Adds i.i.d. circular complex Gaussian noise of total standard deviation
/// `σ` (so each of the real and imaginary parts has `σ/√2`).
///
/// Returns `None` for the noise model when the PSNR is infinite.
pub fn add_noise(d: &KSpaceTensor, spec: &NoiseSpec) -> Result<(KSpaceTensor, Option<NoiseModel>)> {
    if d.max_abs() == 0.0 {
        return Err(Error::Parameter("cannot set a PSNR on all-zero data".into()));
    }
    if spec.psnr_db.is_infinite() && spec.psnr_db > 0.0 {
        return Ok((d.clone(), None));
    }
    let sigma = spec.sigma_for(d);
    let model = NoiseModel::uniform(sigma, d.dims().2)?;
    let normal = Normal::new(0.0, sigma / std::f64::consts::SQRT_2)
        .map_err(|e| Error::Parameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = d.clone();
    for v in out.data_mut().iter_mut() {
        *v += C64::new(normal.sample(&mut rng), normal.sample(&mut rng));
    }
    Ok((out, Some(model)))
}

/// Minimum number of noise samples per channel for [`estimate_sigma`].
pub const MIN_NOISE_SAMPLES: usize = 100;

/// Per-channel standard deviation `sqrt(mean |x − x̄|²)` of noise-only samples.
pub fn estimate_sigma(samples: &[Vec<C64>]) -> Result<NoiseModel> {
    if samples.is_empty() {
        return Err(Error::Estimation("no receive channels supplied".into()));
    }
    let mut sigma = Vec::with_capacity(samples.len());
    for (ch, s) in samples.iter().enumerate() {
        if s.len() < MIN_NOISE_SAMPLES {
            return Err(Error::Estimation(format!(
                "channel {ch} has {} samples, need at least {MIN_NOISE_SAMPLES}",
                s.len()
            )));
        }
        let n = s.len() as f64;
        let mean = s.iter().sum::<C64>() / n;
        let var = s.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / n;
        if var <= 0.0 {
            return Err(Error::Estimation(format!("channel {ch} has zero variance")));
        }
        sigma.push(var.sqrt());
    }
    NoiseModel::new(sigma).map_err(|e| Error::Estimation(e.to_string()))
}
