//! Synthetic multi-channel data: an analytic proton-density phantom, smooth
//! complex transmit/receive sensitivities built from a few spatial harmonics,
//! and their centered k-space.

use std::f64::consts::PI;
use std::fmt;

use ndarray::{s, Array2, Array3, Array4, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fft::dft2_centered;
use crate::tensor::KSpaceTensor;
use crate::C64;

pub const MIN_PHANTOM_SIZE: usize = 16;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    /// Uniform disc of radius `0.4·FOV`.
    Disc,
    /// Modified Shepp-Logan head.
    #[default]
    SheppLike,
    /// Torso-like ellipse with a handful of organ-like inclusions.
    BodyEllipses,
}

impl fmt::Display for PhantomKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhantomKind::Disc => "disc",
            PhantomKind::SheppLike => "shepp_like",
            PhantomKind::BodyEllipses => "body_ellipses",
        })
    }
}

impl std::str::FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "disc" => Ok(PhantomKind::Disc),
            "shepp_like" | "shepp" => Ok(PhantomKind::SheppLike),
            "body_ellipses" | "body" => Ok(PhantomKind::BodyEllipses),
            _ => Err(Error::Config(format!("unknown phantom kind {s:?}"))),
        }
    }
}

/// Normalized coordinates in `[-1, 1)` with 0 at index `floor(N/2)`.
fn coord(i: usize, n: usize) -> f64 {
    (i as f64 - (n / 2) as f64) / (n as f64 / 2.0)
}

struct Ellipse {
    value: f64,
    a: f64,
    b: f64,
    x0: f64,
    y0: f64,
    theta: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (c, s) = (self.theta.cos(), self.theta.sin());
        let (dx, dy) = (x - self.x0, y - self.y0);
        let u = (c * dx + s * dy) / self.a;
        let v = (-s * dx + c * dy) / self.b;
        u * u + v * v <= 1.0
    }
}

fn shepp_ellipses(rng: &mut ChaCha8Rng) -> Vec<Ellipse> {
    const TABLE: [(f64, f64, f64, f64, f64, f64); 10] = [
        (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
        (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
        (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
        (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
        (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
        (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
        (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
        (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
        (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
        (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
    ];
    TABLE
        .iter()
        .enumerate()
        .map(|(k, &(value, a, b, x0, y0, deg))| {
            // the outer two ellipses stay fixed so the support is seed-independent
            let j = if k < 2 { 0.0 } else { 0.02 };
            Ellipse {
                value,
                a: a * 0.95,
                b: b * 0.95,
                x0: x0 * 0.95 + j * (rng.random::<f64>() - 0.5),
                y0: y0 * 0.95 + j * (rng.random::<f64>() - 0.5),
                theta: deg.to_radians(),
            }
        })
        .collect()
}

fn body_ellipses(rng: &mut ChaCha8Rng) -> Vec<Ellipse> {
    fn jitter(rng: &mut ChaCha8Rng, x: f64, amount: f64) -> f64 {
        x * (1.0 + amount * (2.0 * rng.random::<f64>() - 1.0))
    }
    let (a, b) = (jitter(rng, 0.85, 0.05), jitter(rng, 0.62, 0.05));
    let mut e = vec![
        Ellipse { value: 0.6, a, b, x0: 0.0, y0: 0.0, theta: 0.0 },
        // subcutaneous layer is brighter than the interior
        Ellipse { value: 0.4, a, b, x0: 0.0, y0: 0.0, theta: 0.0 },
        Ellipse { value: -0.4, a: a - 0.08, b: b - 0.08, x0: 0.0, y0: 0.0, theta: 0.0 },
    ];
    let organs = [
        (0.5, 0.28, 0.22, -0.3, 0.05),
        (0.35, 0.22, 0.3, 0.32, -0.05),
        (-0.3, 0.12, 0.12, 0.05, -0.32),
        (0.25, 0.08, 0.1, 0.0, 0.35),
        (0.2, 0.1, 0.06, -0.45, -0.25),
    ];
    for (value, oa, ob, x0, y0) in organs {
        e.push(Ellipse {
            value,
            a: jitter(rng, oa, 0.1),
            b: jitter(rng, ob, 0.1),
            x0: x0 + 0.04 * (rng.random::<f64>() - 0.5),
            y0: y0 + 0.04 * (rng.random::<f64>() - 0.5),
            theta: PI * (rng.random::<f64>() - 0.5) / 3.0,
        });
    }
    e
}

/// Non-negative phantom image indexed `(x, y)`.
pub fn generate_phantom(dims: (usize, usize), kind: PhantomKind, seed: u64) -> Result<Array2<f64>> {
    let (nx, ny) = dims;
    if nx < MIN_PHANTOM_SIZE || ny < MIN_PHANTOM_SIZE {
        return Err(Error::dim(format!(
            "phantom needs at least {MIN_PHANTOM_SIZE}x{MIN_PHANTOM_SIZE} pixels, got {nx}x{ny}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ellipses = match kind {
        PhantomKind::Disc => vec![Ellipse { value: 1.0, a: 0.8, b: 0.8, x0: 0.0, y0: 0.0, theta: 0.0 }],
        PhantomKind::SheppLike => shepp_ellipses(&mut rng),
        PhantomKind::BodyEllipses => body_ellipses(&mut rng),
    };
    Ok(Array2::from_shape_fn(dims, |(i, j)| {
        let (x, y) = (coord(i, nx), coord(j, ny));
        let v: f64 = ellipses.iter().filter(|e| e.contains(x, y)).map(|e| e.value).sum();
        v.max(0.0)
    }))
}

/// Complex transmit and receive sensitivity maps.
#[derive(Clone, Debug, PartialEq)]
pub struct SensitivitySet {
    /// Indexed `(x, y, tx)`.
    pub tx_maps: Array3<C64>,
    /// Indexed `(x, y, rx)`.
    pub rx_maps: Array3<C64>,
    /// Number of harmonic frequencies per axis in every map.
    pub order: usize,
}

impl SensitivitySet {
    pub fn image_dims(&self) -> (usize, usize) {
        let (nx, ny, _) = self.tx_maps.dim();
        (nx, ny)
    }

    pub fn nrx(&self) -> usize {
        self.rx_maps.len_of(Axis(2))
    }

    pub fn ntx(&self) -> usize {
        self.tx_maps.len_of(Axis(2))
    }
}

/// Integer frequencies used along each axis: `order` consecutive values
/// around zero, e.g. `{0}`, `{0, 1}`, `{-1, 0, 1}`.
pub fn harmonic_range(order: usize) -> std::ops::RangeInclusive<i64> {
    let lo = -((order as i64 - 1) / 2);
    lo..=lo + order as i64 - 1
}

/// `ℓ1` weight of the non-DC harmonics relative to the unit DC term. Values
/// well above 1 give maps with strong spatial variation and occasional nulls,
/// as real transmit and receive fields have.
pub const HARMONIC_SPREAD: f64 = 6.0;

/// One channel: `Σ c_pq·exp(2πi(p·x + q·y)/N)` over `p, q` in
/// [`harmonic_range`], with a unit-modulus DC term and the remaining
/// coefficients drawn uniformly and scaled to [`HARMONIC_SPREAD`] in `ℓ1`.
fn harmonic_map(dims: (usize, usize), order: usize, rng: &mut ChaCha8Rng) -> Array2<C64> {
    let (nx, ny) = dims;
    let mut terms = Vec::new();
    for p in harmonic_range(order) {
        for q in harmonic_range(order) {
            if p == 0 && q == 0 {
                continue;
            }
            let c = C64::from_polar(rng.random::<f64>(), 2.0 * PI * rng.random::<f64>());
            terms.push((p as f64, q as f64, c));
        }
    }
    let l1: f64 = terms.iter().map(|t| t.2.norm()).sum();
    if l1 > 0.0 {
        for t in &mut terms {
            t.2 *= HARMONIC_SPREAD / l1;
        }
    }
    let dc = C64::from_polar(1.0, 2.0 * PI * rng.random::<f64>());
    Array2::from_shape_fn(dims, |(i, j)| {
        let (x, y) = (i as f64 - (nx / 2) as f64, j as f64 - (ny / 2) as f64);
        terms.iter().fold(dc, |acc, &(p, q, c)| {
            acc + c * C64::from_polar(1.0, 2.0 * PI * (p * x / nx as f64 + q * y / ny as f64))
        })
    })
}

pub fn generate_sensitivities(
    dims: (usize, usize),
    nrx: usize,
    ntx: usize,
    order: usize,
    seed: u64,
) -> Result<SensitivitySet> {
    if order == 0 {
        return Err(Error::Parameter("sensitivity order must be >= 1".into()));
    }
    if nrx == 0 || ntx == 0 || dims.0 == 0 || dims.1 == 0 {
        return Err(Error::dim("sensitivity dimensions must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stack = |n: usize| {
        let mut a = Array3::zeros((dims.0, dims.1, n));
        for c in 0..n {
            a.index_axis_mut(Axis(2), c).assign(&harmonic_map(dims, order, &mut rng));
        }
        a
    };
    let tx_maps = stack(ntx);
    let rx_maps = stack(nrx);
    Ok(SensitivitySet { tx_maps, rx_maps, order })
}

/// Image-domain signal per receive/transmit pair.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageStack {
    /// Indexed `(x, y, rx, tx)`.
    pub data: Array4<C64>,
}

impl ImageStack {
    pub fn new(phantom: &Array2<f64>, sens: &SensitivitySet) -> Result<Self> {
        if phantom.dim() != sens.image_dims() {
            return Err(Error::dim(format!(
                "phantom is {:?} but sensitivities are {:?}",
                phantom.dim(),
                sens.image_dims()
            )));
        }
        let (nx, ny) = phantom.dim();
        let data = Array4::from_shape_fn((nx, ny, sens.nrx(), sens.ntx()), |(x, y, r, t)| {
            sens.tx_maps[[x, y, t]] * sens.rx_maps[[x, y, r]] * phantom[[x, y]]
        });
        Ok(Self { data })
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        self.data.dim()
    }
}

/// Centered DFT of every channel image.
pub fn kspace_of(images: &ImageStack) -> Result<KSpaceTensor> {
    let mut out = Array4::zeros(images.dims());
    let (_, _, nrx, ntx) = images.dims();
    for r in 0..nrx {
        for t in 0..ntx {
            let img = images.data.slice(s![.., .., r, t]);
            out.slice_mut(s![.., .., r, t]).assign(&dft2_centered(img));
        }
    }
    KSpaceTensor::from_array(out)
}

/// `D[:, :, rx, tx] = DFT(phantom ⊙ tx_map ⊙ rx_map)`.
pub fn simulate_kspace(phantom: &Array2<f64>, sens: &SensitivitySet) -> Result<KSpaceTensor> {
    kspace_of(&ImageStack::new(phantom, sens)?)
}

/// Central `cx × cy` block, keeping the DC sample at index `floor(c/2)`.
pub fn crop_kspace(d: &KSpaceTensor, size: (usize, usize)) -> Result<KSpaceTensor> {
    let (nx, ny, _, _) = d.dims();
    let (cx, cy) = size;
    if cx == 0 || cy == 0 || cx > nx || cy > ny {
        return Err(Error::dim(format!("cannot crop {nx}x{ny} k-space to {cx}x{cy}")));
    }
    let x0 = nx / 2 - cx / 2;
    let y0 = ny / 2 - cy / 2;
    KSpaceTensor::from_array(d.data().slice(s![x0..x0 + cx, y0..y0 + cy, .., ..]).to_owned())
}

/// Parameters of a synthetic multi-slice dataset.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub image_size: [usize; 2],
    pub crop: [usize; 2],
    pub nrx: usize,
    pub ntx: usize,
    pub order: usize,
    pub phantom: PhantomKind,
    pub slices: usize,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            image_size: [48, 48],
            crop: [24, 24],
            nrx: 8,
            ntx: 8,
            order: 3,
            phantom: PhantomKind::SheppLike,
            slices: 8,
            seed: 1,
        }
    }
}

/// One generated slice with its ground truth.
#[derive(Clone, Debug)]
pub struct Slice {
    pub index: usize,
    pub phantom: Array2<f64>,
    pub sens: SensitivitySet,
    /// Cropped, noise-free k-space.
    pub kspace: KSpaceTensor,
}

fn slice_seed(seed: u64, slice: usize, stream: u64) -> u64 {
    seed.wrapping_mul(0x2545_F491_4F6C_DD1D)
        .wrapping_add((slice as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(stream)
}

/// Generates one slice of `spec`. Each slice has its own phantom and
/// sensitivity draw.
pub fn generate_slice(spec: &DatasetSpec, index: usize) -> Result<Slice> {
    let dims = (spec.image_size[0], spec.image_size[1]);
    let phantom = generate_phantom(dims, spec.phantom, slice_seed(spec.seed, index, 0))?;
    let sens = generate_sensitivities(dims, spec.nrx, spec.ntx, spec.order, slice_seed(spec.seed, index, 1))?;
    let full = simulate_kspace(&phantom, &sens)?;
    let kspace = crop_kspace(&full, (spec.crop[0], spec.crop[1]))?;
    Ok(Slice { index, phantom, sens, kspace })
}

pub fn generate_dataset(spec: &DatasetSpec) -> Result<Vec<Slice>> {
    if spec.slices == 0 {
        return Err(Error::Config("dataset needs at least one slice".into()));
    }
    (0..spec.slices).map(|i| generate_slice(spec, i)).collect()
}
