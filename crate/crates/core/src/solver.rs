//! Rank-constrained k-space completion by ADMM.
//!
//! For every rank constraint `i` (an unfolding `U_i` with threshold `r_i`) the
//! iteration keeps an auxiliary low-rank matrix `X_i` and a scaled dual `ψ_i`
//! stored in the Hankel domain. One iteration is
//!
//! ```text
//! X_i   ← Γ_{r_i}( U_i(T(z) − ψ_i) )
//! X̂_i   ← α·U_i*(X_i) + (1 − α)·T(z)                       (over-relaxation)
//! z     ← argmin ½‖Mz − D‖² + ρ/2 Σ_i ‖X̂_i + ψ_i − T(z)‖²
//! ψ_i   ← ψ_i + X̂_i − T(z)
//! ρ     ← τ·ρ
//! ```
//!
//! The `z` step has the closed form in [`z_update`] because `T*T` is diagonal
//! (the multiplicity map) and the mask is binary.

use std::fmt;
use std::time::{Duration, Instant};

use faer::Mat;
use ndarray::{Array4, Zip};

use crate::error::{Error, Result};
use crate::metrics::rmse;
use crate::sampling::SamplingMask;
use crate::svt::{project_with_spectrum, SvdRoute};
use crate::tensor::{hankel_adjoint, multiplicity, HankelShape, HankelTensor, KSpaceTensor, Kernel, MultiplicityMap};
use crate::unfold::Unfolding;
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Virtual coils: one constraint on `U0`.
    Vc,
    /// One constraint on the Rx-stacked unfolding `U2`.
    Primo,
    /// Joint constraints on `U1` (Tx-stacked) and `U2` (Rx-stacked).
    #[serde(rename = "txlr")]
    TxLr,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Vc, Method::Primo, Method::TxLr];

    pub fn unfoldings(&self) -> &'static [Unfolding] {
        match self {
            Method::Vc => &[Unfolding::VirtualCoil],
            Method::Primo => &[Unfolding::RxStacked],
            Method::TxLr => &[Unfolding::TxStacked, Unfolding::RxStacked],
        }
    }

    /// Fixed iteration counts used for synthetic sweeps: 50 for TxLR, 100 for
    /// the single-constraint methods.
    pub fn default_iters(&self) -> usize {
        match self {
            Method::TxLr => 50,
            Method::Vc | Method::Primo => 100,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Vc => "vc",
            Method::Primo => "primo",
            Method::TxLr => "txlr",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vc" => Ok(Method::Vc),
            "primo" => Ok(Method::Primo),
            "txlr" => Ok(Method::TxLr),
            _ => Err(Error::Config(format!("unknown method {s:?} (vc, primo, txlr)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stopping {
    #[default]
    #[serde(alias = "fixed")]
    FixedIterations,
    #[serde(alias = "chisq")]
    ChiSquare,
}

impl std::str::FromStr for Stopping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fixed" | "fixediterations" => Ok(Stopping::FixedIterations),
            "chisq" | "chisquare" | "chi2" => Ok(Stopping::ChiSquare),
            _ => Err(Error::Config(format!("unknown stopping rule {s:?} (fixed, chisq)"))),
        }
    }
}

/// Rank thresholds: `r0` for `U0`, `r1` for `U1`, `r2` for `U2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct Ranks {
    pub r0: usize,
    pub r1: usize,
    pub r2: usize,
}

impl Ranks {
    pub fn uniform(r: usize) -> Self {
        Self { r0: r, r1: r, r2: r }
    }

    pub fn for_unfolding(&self, u: Unfolding) -> usize {
        match u {
            Unfolding::VirtualCoil => self.r0,
            Unfolding::TxStacked => self.r1,
            Unfolding::RxStacked => self.r2,
        }
    }
}

impl Default for Ranks {
    fn default() -> Self {
        Self::uniform(50)
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    pub kernel: Kernel,
    pub ranks: Ranks,
    pub max_iters: usize,
    /// Initial penalty `ρ⁰`.
    pub rho0: f64,
    /// Per-iteration penalty growth `τ`.
    pub tau: f64,
    /// Over-relaxation `α ∈ (0, 2)`.
    pub alpha: f64,
    pub stopping: Stopping,
    pub svd_route: SvdRoute,
    /// Divide the scaled duals by `τ` whenever `ρ` grows, keeping the unscaled
    /// multipliers fixed across the penalty change.
    pub rescale_duals: bool,
}

impl SolverConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            kernel: Kernel::default(),
            ranks: Ranks::default(),
            max_iters: method.default_iters(),
            rho0: 1e-6,
            tau: 1.1,
            alpha: 1.5,
            stopping: Stopping::FixedIterations,
            svd_route: SvdRoute::Gram,
            rescale_duals: false,
        }
    }

    /// Checks scalar parameters and rank thresholds against the unfoldings
    /// implied by `dims`.
    pub fn validate(&self, dims: (usize, usize, usize, usize)) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be >= 1".into()));
        }
        if !(self.rho0 > 0.0 && self.rho0.is_finite()) {
            return Err(Error::Config(format!("rho0 must be positive, got {}", self.rho0)));
        }
        if !(self.tau >= 1.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be >= 1, got {}", self.tau)));
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 2), got {}", self.alpha)));
        }
        let shape = HankelShape::new(dims, self.kernel)?;
        for &u in self.method.unfoldings() {
            let r = self.ranks.for_unfolding(u);
            let (rows, cols) = u.matrix_dims(&shape);
            if r == 0 || r > rows.min(cols) {
                return Err(Error::Config(format!(
                    "rank threshold {r} for {u} must lie in [1, {}] for a {rows}x{cols} unfolding",
                    rows.min(cols)
                )));
            }
        }
        Ok(())
    }

    /// `(unfolding, rank)` pairs that actually constrain the solution. A
    /// threshold equal to the short side of its unfolding is no constraint and
    /// is dropped, unless nothing else would remain.
    pub fn active_constraints(&self, shape: &HankelShape) -> Vec<(Unfolding, usize)> {
        let all: Vec<(Unfolding, usize)> = self
            .method
            .unfoldings()
            .iter()
            .map(|&u| (u, self.ranks.for_unfolding(u)))
            .collect();
        let binding: Vec<_> = all
            .iter()
            .copied()
            .filter(|&(u, r)| {
                let (rows, cols) = u.matrix_dims(shape);
                r < rows.min(cols)
            })
            .collect();
        if binding.is_empty() {
            all
        } else {
            binding
        }
    }
}

/// Per-receive-channel noise standard deviation (complex, k-space units).
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseModel {
    sigma: Vec<f64>,
}

impl NoiseModel {
    pub fn new(sigma: Vec<f64>) -> Result<Self> {
        if sigma.is_empty() || sigma.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Config(format!(
                "noise standard deviations must be positive and finite: {sigma:?}"
            )));
        }
        Ok(Self { sigma })
    }

    pub fn uniform(sigma: f64, nrx: usize) -> Result<Self> {
        Self::new(vec![sigma; nrx])
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }
}

/// Exact minimizer of `½‖Mz − D‖² + ρ/2 Σ_i ‖C_i − T(z)‖²` over `z`, where
/// each `C_i` in `consensus` is a Hankel-domain target (`U_i*(X_i) + ψ_i`).
///
/// Elementwise:
/// `z = (M·D + ρ·Σ_i T*(C_i)) / (M + n·ρ·c)` with `c` the multiplicity map.
pub fn z_update(
    d: &KSpaceTensor,
    mask: &SamplingMask,
    consensus: &[HankelTensor],
    rho: f64,
) -> Result<KSpaceTensor> {
    let first = consensus
        .first()
        .ok_or_else(|| Error::Config("z update needs at least one consensus term".into()))?;
    if !(rho > 0.0) {
        return Err(Error::Config(format!("rho must be positive, got {rho}")));
    }
    mask.check_compatible(d.dims())?;
    let kdims = d.kspace_dims();
    let shape = *first.shape();
    if shape.kspace_dims() != d.dims() {
        return Err(Error::dim("consensus tensors do not match the data dimensions"));
    }
    let mut acc = hankel_adjoint(first, kdims)?;
    for h in &consensus[1..] {
        if *h.shape() != shape {
            return Err(Error::dim("consensus tensors have inconsistent shapes"));
        }
        let adj = hankel_adjoint(h, kdims)?;
        *acc.data_mut() += adj.data();
    }
    let c = multiplicity(kdims, shape.kernel)?;
    Ok(solve_z(d, mask, acc, consensus.len(), &c, rho))
}

/// Closed-form z step given `acc = Σ_i T*(consensus_i)`.
fn solve_z(
    d: &KSpaceTensor,
    mask: &SamplingMask,
    mut acc: KSpaceTensor,
    terms: usize,
    c: &MultiplicityMap,
    rho: f64,
) -> KSpaceTensor {
    let n = terms as f64;
    Zip::indexed(acc.data_mut())
        .and(d.data())
        .for_each(|(x, y, _, tx), z, &dv| {
            let m = if mask.is_sampled(x, y, tx) { 1.0 } else { 0.0 };
            *z = (dv * m + *z * rho) / (m + n * rho * c.get(x, y) as f64);
        });
    acc
}

/// `Σ_rx ‖M z_rx − D_rx‖² / σ_rx²`, divided by the number of sampled entries.
pub fn chi_square_stat(
    z: &KSpaceTensor,
    d: &KSpaceTensor,
    mask: &SamplingMask,
    noise: &NoiseModel,
) -> Result<f64> {
    if z.dims() != d.dims() {
        return Err(Error::dim("estimate and data dimensions differ"));
    }
    mask.check_compatible(d.dims())?;
    let nrx = d.dims().2;
    if noise.sigma().len() != nrx {
        return Err(Error::Config(format!(
            "noise model has {} channels, data has {nrx}",
            noise.sigma().len()
        )));
    }
    let nu = mask.sampled_entries(d.dims());
    if nu == 0 {
        return Err(Error::Config("no sampled data points".into()));
    }
    let mut per_rx = vec![0.0; nrx];
    Zip::indexed(z.data())
        .and(d.data())
        .for_each(|(x, y, rx, tx), a, b| {
            if mask.is_sampled(x, y, tx) {
                per_rx[rx] += (a - b).norm_sqr();
            }
        });
    let total: f64 = per_rx
        .iter()
        .zip(noise.sigma())
        .map(|(r, s)| r / (s * s))
        .sum();
    Ok(total / nu as f64)
}

fn data_residual(z: &KSpaceTensor, d: &KSpaceTensor, mask: &SamplingMask) -> f64 {
    let mut acc = 0.0;
    Zip::indexed(z.data())
        .and(d.data())
        .for_each(|(x, y, _, tx), a, b| {
            if mask.is_sampled(x, y, tx) {
                acc += (a - b).norm_sqr();
            }
        });
    acc.sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum StopReason {
    IterCap,
    ChiSquare,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::IterCap => "iter_cap",
            StopReason::ChiSquare => "chi_square",
        })
    }
}

/// Per-constraint ADMM variables, kept in the unfolded matrix layout.
#[derive(Clone, Debug)]
struct ConstraintState {
    unfolding: Unfolding,
    rank: usize,
    /// Source offset in `z` of every matrix entry of `U(T(z))`.
    gather: Vec<usize>,
    dual: Mat<C64>,
    relaxed: Mat<C64>,
}

/// Mutable state of one reconstruction.
#[derive(Clone, Debug)]
pub struct ReconState<'a> {
    data: &'a KSpaceTensor,
    mask: &'a SamplingMask,
    cfg: &'a SolverConfig,
    shape: HankelShape,
    counts: MultiplicityMap,
    constraints: Vec<(Unfolding, usize)>,
    vars: Vec<ConstraintState>,
    /// Current estimate `z`.
    pub z: KSpaceTensor,
    /// Singular values of each constraint's pre-threshold matrix from the
    /// latest iteration.
    pub spectra: Vec<Vec<f64>>,
    pub rho: f64,
    pub iter: usize,
}

impl<'a> ReconState<'a> {
    /// All variables start at zero.
    pub fn new(data: &'a KSpaceTensor, mask: &'a SamplingMask, cfg: &'a SolverConfig) -> Result<Self> {
        cfg.validate(data.dims())?;
        mask.check_compatible(data.dims())?;
        let shape = HankelShape::new(data.dims(), cfg.kernel)?;
        let constraints = cfg.active_constraints(&shape);
        let vars = constraints
            .iter()
            .map(|&(unfolding, rank)| {
                let (rows, cols) = unfolding.matrix_dims(&shape);
                ConstraintState {
                    unfolding,
                    rank,
                    gather: unfolding.gather_map(&shape),
                    dual: Mat::zeros(rows, cols),
                    relaxed: Mat::zeros(rows, cols),
                }
            })
            .collect();
        Ok(Self {
            data,
            mask,
            cfg,
            shape,
            counts: multiplicity(data.kspace_dims(), cfg.kernel)?,
            spectra: vec![Vec::new(); constraints.len()],
            constraints,
            vars,
            z: KSpaceTensor::zeros(data.dims())?,
            rho: cfg.rho0,
            iter: 0,
        })
    }

    /// Constraints in effect after dropping non-binding thresholds.
    pub fn constraints(&self) -> &[(Unfolding, usize)] {
        &self.constraints
    }

    /// Scaled dual `ψ_k` of constraint `k` in Hankel form.
    pub fn dual(&self, k: usize) -> Result<HankelTensor> {
        let v = self.vars.get(k).ok_or_else(|| Error::Config(format!("no constraint {k}")))?;
        v.unfolding.refold_faer(v.dual.as_ref(), &self.shape)
    }

    /// Over-relaxed projection `X̂_k` of constraint `k` in Hankel form.
    pub fn relaxed(&self, k: usize) -> Result<HankelTensor> {
        let v = self.vars.get(k).ok_or_else(|| Error::Config(format!("no constraint {k}")))?;
        v.unfolding.refold_faer(v.relaxed.as_ref(), &self.shape)
    }

    /// Runs one ADMM iteration.
    pub fn step(&mut self) -> Result<()> {
        let alpha = self.cfg.alpha;
        let mut acc = Array4::<C64>::zeros(self.shape.kspace_dims());
        {
            let z = self.z.data().as_standard_layout();
            let zs = z.as_slice().expect("standard layout");
            let sum = acc.as_slice_mut().expect("fresh array");
            for (k, v) in self.vars.iter_mut().enumerate() {
                let (rows, cols) = (v.dual.nrows(), v.dual.ncols());
                let target = Mat::from_fn(rows, cols, |r, c| zs[v.gather[r + rows * c]] - v.dual[(r, c)]);
                let (mut x, spectrum) = project_with_spectrum(target, v.rank, self.cfg.svd_route)?;
                for c in 0..cols {
                    let (xc, dc) = (x.col_as_slice_mut(c), v.dual.col_as_slice(c));
                    let gc = &v.gather[rows * c..rows * (c + 1)];
                    for ((xv, &dv), &g) in xc.iter_mut().zip(dc).zip(gc) {
                        *xv = *xv * alpha + zs[g] * (1.0 - alpha);
                        sum[g] += *xv + dv;
                    }
                }
                v.relaxed = x;
                self.spectra[k] = spectrum;
            }
        }
        let acc = KSpaceTensor::from_array(acc)?;
        self.z = solve_z(self.data, self.mask, acc, self.vars.len(), &self.counts, self.rho);
        let scale = if self.cfg.rescale_duals { 1.0 / self.cfg.tau } else { 1.0 };
        let z = self.z.data().as_standard_layout();
        let zs = z.as_slice().expect("standard layout");
        for v in &mut self.vars {
            let rows = v.dual.nrows();
            for c in 0..v.dual.ncols() {
                let (dc, xc) = (v.dual.col_as_slice_mut(c), v.relaxed.col_as_slice(c));
                let gc = &v.gather[rows * c..rows * (c + 1)];
                for ((p, &x), &g) in dc.iter_mut().zip(xc).zip(gc) {
                    *p = (*p + x - zs[g]) * scale;
                }
            }
        }
        self.rho *= self.cfg.tau;
        self.iter += 1;
        Ok(())
    }
}

/// Outcome of [`admm_reconstruct`].
#[derive(Clone, Debug)]
pub struct ReconReport {
    pub z_final: KSpaceTensor,
    pub iterations_used: usize,
    pub stop_reason: StopReason,
    /// Chi-square statistic after every iteration (empty without a noise model).
    pub chi_trace: Vec<f64>,
    /// RMSE against the ground truth after every iteration (empty without one).
    pub rmse_trace: Vec<f64>,
    /// `‖Mz − D‖` after every iteration.
    pub residual_trace: Vec<f64>,
    /// Iterations after the fifth at which the data residual increased.
    pub residual_increases: Vec<usize>,
    /// Constraints that were enforced, with their thresholds.
    pub constraints: Vec<(Unfolding, usize)>,
    /// Final singular spectrum of each enforced unfolding before thresholding.
    pub spectra: Vec<Vec<f64>>,
    pub wall_time: Duration,
}

impl ReconReport {
    pub fn final_chi(&self) -> Option<f64> {
        self.chi_trace.get(self.iterations_used.checked_sub(1)?).copied()
    }
}

/// Whether a chi-square value calls for stopping.
///
/// The fit is accepted while the normalized residual stays within the noise
/// floor; the first iterate that overshoots it ends the run and the previous
/// iterate is returned.
pub fn chi_square_exceeded(stat: f64) -> bool {
    stat > 1.0
}

/// Reconstructs undersampled k-space `d` (zero where unsampled).
pub fn admm_reconstruct(
    d: &KSpaceTensor,
    mask: &SamplingMask,
    cfg: &SolverConfig,
    noise: Option<&NoiseModel>,
) -> Result<ReconReport> {
    admm_reconstruct_traced(d, mask, cfg, noise, None)
}

/// [`admm_reconstruct`] that also records the RMSE against `truth` per iteration.
pub fn admm_reconstruct_traced(
    d: &KSpaceTensor,
    mask: &SamplingMask,
    cfg: &SolverConfig,
    noise: Option<&NoiseModel>,
    truth: Option<&KSpaceTensor>,
) -> Result<ReconReport> {
    let start = Instant::now();
    if cfg.stopping == Stopping::ChiSquare && noise.is_none() {
        return Err(Error::Config("chi-square stopping needs a noise model".into()));
    }
    if let Some(t) = truth {
        if t.dims() != d.dims() {
            return Err(Error::dim("ground truth and data dimensions differ"));
        }
    }
    let mut state = ReconState::new(d, mask, cfg)?;
    let data_norm = data_residual(&KSpaceTensor::zeros(d.dims())?, d, mask);

    let mut chi_trace = Vec::new();
    let mut rmse_trace = Vec::new();
    let mut residual_trace: Vec<f64> = Vec::new();
    let mut residual_increases = Vec::new();
    let mut min_residual = f64::INFINITY;
    let mut previous: Option<KSpaceTensor> = None;
    let mut stop_reason = StopReason::IterCap;

    while state.iter < cfg.max_iters {
        if cfg.stopping == Stopping::ChiSquare {
            previous = Some(state.z.clone());
        }
        state.step()?;
        let it = state.iter;

        let residual = data_residual(&state.z, d, mask);
        if !residual.is_finite() {
            return Err(Error::Numerical(format!("non-finite estimate at iteration {it}")));
        }
        min_residual = min_residual.min(residual);
        let threshold = 10.0 * min_residual.max(0.1 * data_norm);
        if residual > threshold {
            return Err(Error::Diverged {
                iteration: it,
                residual,
                threshold,
            });
        }
        if it > 5 && residual > residual_trace[it - 2] {
            residual_increases.push(it);
        }
        residual_trace.push(residual);

        if let Some(t) = truth {
            rmse_trace.push(rmse(&state.z, t)?);
        }
        if let Some(noise) = noise {
            let chi = chi_square_stat(&state.z, d, mask, noise)?;
            chi_trace.push(chi);
            if cfg.stopping == Stopping::ChiSquare && chi_square_exceeded(chi) {
                stop_reason = StopReason::ChiSquare;
                break;
            }
        }
    }

    let (z_final, iterations_used) = match stop_reason {
        // the overshooting iterate is discarded; at least one iteration is kept
        StopReason::ChiSquare if state.iter > 1 => (previous.expect("saved before step"), state.iter - 1),
        _ => (state.z.clone(), state.iter),
    };
    chi_trace.truncate(iterations_used);
    rmse_trace.truncate(iterations_used);
    residual_trace.truncate(iterations_used);
    residual_increases.retain(|&i| i <= iterations_used);

    Ok(ReconReport {
        z_final,
        iterations_used,
        stop_reason,
        chi_trace,
        rmse_trace,
        residual_trace,
        residual_increases,
        constraints: state.constraints.clone(),
        spectra: state.spectra.clone(),
        wall_time: start.elapsed(),
    })
}
