//! Error metrics, unfolding spectra and relative transmit maps.

use ndarray::{s, Array2, Array3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fft::idft2_centered;
use crate::svt::singular_values;
use crate::tensor::{hankel_transform, KSpaceTensor, Kernel};
use crate::unfold::Unfolding;
use crate::C64;

/// `‖ẑ − z‖ / ‖z‖` over all entries.
pub fn rmse(z_hat: &KSpaceTensor, z_true: &KSpaceTensor) -> Result<f64> {
    if z_hat.dims() != z_true.dims() {
        return Err(Error::dim(format!(
            "rmse of {:?} against {:?}",
            z_hat.dims(),
            z_true.dims()
        )));
    }
    let denom = z_true.norm();
    if denom == 0.0 {
        return Err(Error::Parameter("rmse against an all-zero ground truth".into()));
    }
    let num: f64 = z_hat
        .data()
        .iter()
        .zip(z_true.data())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    Ok(num.sqrt() / denom)
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct SingularSpectrum {
    pub unfolding: Unfolding,
    /// `(rows, cols)` of the unfolded matrix.
    pub shape: (usize, usize),
    /// Nonincreasing.
    pub values: Vec<f64>,
}

impl SingularSpectrum {
    /// Values divided by the largest one.
    pub fn normalized(&self) -> Vec<f64> {
        let s1 = self.values.first().copied().unwrap_or(0.0);
        if s1 == 0.0 {
            return self.values.clone();
        }
        self.values.iter().map(|v| v / s1).collect()
    }
}

/// Singular values of `unfolding(T(d))`.
pub fn singular_spectrum(d: &KSpaceTensor, kernel: Kernel, unfolding: Unfolding) -> Result<SingularSpectrum> {
    let h = hankel_transform(d, kernel)?;
    let m = unfolding.unfold(&h);
    Ok(SingularSpectrum {
        unfolding,
        shape: m.dim(),
        values: singular_values(&m)?,
    })
}

/// Spectrum of an i.i.d. complex Gaussian tensor with the same dimensions,
/// passed through the same lifting and unfolding.
pub fn random_baseline_spectrum(
    dims: (usize, usize, usize, usize),
    kernel: Kernel,
    unfolding: Unfolding,
    seed: u64,
) -> Result<SingularSpectrum> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = KSpaceTensor::from_fn(dims, |_| {
        C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
    })?;
    singular_spectrum(&d, kernel, unfolding)
}

/// Relative transmit maps, indexed `(x, y, tx)`, valid on `support`.
#[derive(Clone, Debug, PartialEq)]
pub struct RelativeTxMaps {
    pub maps: Array3<C64>,
    pub support: Array2<bool>,
}

impl RelativeTxMaps {
    pub fn support_size(&self) -> usize {
        self.support.iter().filter(|&&b| b).count()
    }
}

fn masked_maps(s: Array3<C64>, threshold: f64) -> RelativeTxMaps {
    let (nx, ny, _) = s.dim();
    let rss = Array2::from_shape_fn((nx, ny), |(x, y)| {
        s.slice(s![x, y, ..]).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    });
    let peak = rss.iter().copied().fold(0.0, f64::max);
    let support = rss.mapv(|v| v > 0.0 && v >= threshold * peak);
    let mut maps = s;
    for ((x, y, _), v) in maps.indexed_iter_mut() {
        *v = if support[[x, y]] { *v / rss[[x, y]] } else { C64::new(0.0, 0.0) };
    }
    RelativeTxMaps { maps, support }
}

/// Receive-combined relative transmit maps from complete k-space.
///
/// With `x_{rx,tx}` the channel images, the per-pixel reference for each
/// receiver is `ref_rx = Σ_tx x_{rx,tx}`, the combination is
/// `s_tx = Σ_rx x_{rx,tx}·conj(ref_rx)`, and `b_tx = s_tx / √(Σ_tx |s_tx|²)`.
/// Pixels where the root-sum-of-squares is below `threshold` times its
/// maximum are masked.
pub fn relative_tx_maps(z: &KSpaceTensor, threshold: f64) -> Result<RelativeTxMaps> {
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::Parameter(format!("map threshold must lie in [0, 1), got {threshold}")));
    }
    let (nx, ny, nrx, ntx) = z.dims();
    let mut images = ndarray::Array4::<C64>::zeros(z.dims());
    for r in 0..nrx {
        for t in 0..ntx {
            let img = idft2_centered(z.data().slice(s![.., .., r, t]));
            images.slice_mut(s![.., .., r, t]).assign(&img);
        }
    }
    let reference = images.sum_axis(Axis(3));
    let s = Array3::from_shape_fn((nx, ny, ntx), |(x, y, t)| {
        (0..nrx)
            .map(|r| images[[x, y, r, t]] * reference[[x, y, r]].conj())
            .sum()
    });
    Ok(masked_maps(s, threshold))
}

/// Normalizes ground-truth transmit maps `(x, y, tx)` the same way
/// [`relative_tx_maps`] normalizes its estimate: `t·e^{−i·arg Σt} / √(Σ|t|²)`.
/// The support is where `weight·√(Σ|t|²)` reaches `threshold` of its maximum.
pub fn normalize_tx_maps(tx_maps: &Array3<C64>, weight: &Array2<f64>, threshold: f64) -> Result<RelativeTxMaps> {
    let (nx, ny, ntx) = tx_maps.dim();
    if weight.dim() != (nx, ny) {
        return Err(Error::dim("weight image does not match the map grid"));
    }
    let s = Array3::from_shape_fn((nx, ny, ntx), |(x, y, t)| {
        let total: C64 = tx_maps.slice(s![x, y, ..]).sum();
        let phase = if total.norm() > 0.0 { total.conj() / total.norm() } else { C64::new(1.0, 0.0) };
        tx_maps[[x, y, t]] * phase * weight[[x, y]]
    });
    Ok(masked_maps(s, threshold))
}

/// Complex RMSE `‖m̂ − m‖ / ‖m‖` over pixels in both supports.
pub fn map_rmse(m_hat: &RelativeTxMaps, m_true: &RelativeTxMaps) -> Result<f64> {
    if m_hat.maps.dim() != m_true.maps.dim() {
        return Err(Error::dim(format!(
            "map_rmse of {:?} against {:?}",
            m_hat.maps.dim(),
            m_true.maps.dim()
        )));
    }
    let (mut num, mut den, mut n) = (0.0, 0.0, 0usize);
    for ((x, y, t), b) in m_true.maps.indexed_iter() {
        if m_true.support[[x, y]] && m_hat.support[[x, y]] {
            num += (m_hat.maps[[x, y, t]] - b).norm_sqr();
            den += b.norm_sqr();
            n += 1;
        }
    }
    if n == 0 || den == 0.0 {
        return Err(Error::Parameter("map_rmse over an empty support".into()));
    }
    Ok((num / den).sqrt())
}
