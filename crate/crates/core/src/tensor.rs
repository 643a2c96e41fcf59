//! K-space tensors and the block-Hankel lifting operator.
//!
//! Index conventions are fixed so that results are reproducible at the file
//! level: kernel placements are raster-scanned with `kx` varying fastest, and
//! the elements of each `m × n` patch are vectorized with `kx` varying fastest.

use std::fmt;

use ndarray::{Array2, Array4, Zip};

use crate::error::{Error, Result};
use crate::C64;

/// Multi-channel k-space indexed `(kx, ky, rx, tx)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KSpaceTensor {
    data: Array4<C64>,
}

impl KSpaceTensor {
    pub fn zeros(dims: (usize, usize, usize, usize)) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self {
            data: Array4::zeros(dims),
        })
    }

    pub fn from_array(data: Array4<C64>) -> Result<Self> {
        check_dims(data.dim())?;
        Ok(Self { data })
    }

    pub fn from_fn<F>(dims: (usize, usize, usize, usize), f: F) -> Result<Self>
    where
        F: FnMut((usize, usize, usize, usize)) -> C64,
    {
        check_dims(dims)?;
        Ok(Self {
            data: Array4::from_shape_fn(dims, f),
        })
    }

    /// `(Nkx, Nky, NRx, NTx)`
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        self.data.dim()
    }

    pub fn kspace_dims(&self) -> (usize, usize) {
        let (nkx, nky, _, _) = self.dims();
        (nkx, nky)
    }

    pub fn data(&self) -> &Array4<C64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array4<C64> {
        &mut self.data
    }

    pub fn into_array(self) -> Array4<C64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Squared Frobenius norm over the vectorized tensor.
    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `⟨self, other⟩ = Σ conj(self)·other`
    pub fn inner(&self, other: &Self) -> C64 {
        assert_eq!(self.dims(), other.dims());
        Zip::from(&self.data)
            .and(&other.data)
            .fold(C64::new(0.0, 0.0), |acc, a, b| acc + a.conj() * b)
    }

    /// Swap the receive and transmit axes.
    pub fn swap_rx_tx(&self) -> Self {
        let mut data = self.data.clone();
        data.swap_axes(2, 3);
        Self {
            data: data.as_standard_layout().into_owned(),
        }
    }

    /// The `(kx, ky, rx)` block for a single transmit mode.
    pub fn select_tx(&self, tx: usize) -> Self {
        let (nkx, nky, nrx, _) = self.dims();
        Self {
            data: Array4::from_shape_fn((nkx, nky, nrx, 1), |(x, y, r, _)| {
                self.data[[x, y, r, tx]]
            }),
        }
    }
}

impl std::ops::Index<[usize; 4]> for KSpaceTensor {
    type Output = C64;

    fn index(&self, idx: [usize; 4]) -> &C64 {
        &self.data[idx]
    }
}

impl std::ops::IndexMut<[usize; 4]> for KSpaceTensor {
    fn index_mut(&mut self, idx: [usize; 4]) -> &mut C64 {
        &mut self.data[idx]
    }
}

fn check_dims(dims: (usize, usize, usize, usize)) -> Result<()> {
    let (a, b, c, d) = dims;
    if a == 0 || b == 0 || c == 0 || d == 0 {
        return Err(Error::dim(format!(
            "all tensor dimensions must be >= 1, got {a}x{b}x{c}x{d}"
        )));
    }
    Ok(())
}

/// Rectangular kernel of `m` samples along `kx` and `n` along `ky`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Kernel {
    pub m: usize,
    pub n: usize,
}

impl Kernel {
    pub fn new(m: usize, n: usize) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::dim(format!("kernel extents must be >= 1, got {m}x{n}")));
        }
        Ok(Self { m, n })
    }

    pub fn square(size: usize) -> Result<Self> {
        Self::new(size, size)
    }

    /// Kernel area `N1 = m·n`.
    pub fn area(&self) -> usize {
        self.m * self.n
    }

    /// Number of kernel placements along each axis for a `(nkx, nky)` grid.
    pub fn placements(&self, kdims: (usize, usize)) -> Result<(usize, usize)> {
        let (nkx, nky) = kdims;
        if self.m > nkx || self.n > nky {
            return Err(Error::dim(format!(
                "kernel {self} does not fit in {nkx}x{nky} k-space"
            )));
        }
        Ok((nkx - self.m + 1, nky - self.n + 1))
    }
}

impl Default for Kernel {
    fn default() -> Self {
        Self { m: 5, n: 5 }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.m, self.n)
    }
}

impl std::str::FromStr for Kernel {
    type Err = Error;

    /// Accepts `MxN`, `M,N` or a single `M` for a square kernel.
    fn from_str(s: &str) -> Result<Self> {
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("invalid kernel extent {t:?}")))
        };
        let parts: Vec<&str> = s.split(['x', 'X', ',']).collect();
        match parts.as_slice() {
            [a] => Kernel::square(parse(a)?),
            [a, b] => Kernel::new(parse(a)?, parse(b)?),
            _ => Err(Error::Config(format!("invalid kernel spec {s:?}"))),
        }
    }
}

/// Everything needed to interpret a block-Hankel tensor: the kernel and the
/// source k-space dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HankelShape {
    pub kernel: Kernel,
    pub nkx: usize,
    pub nky: usize,
    pub nrx: usize,
    pub ntx: usize,
}

impl HankelShape {
    pub fn new(dims: (usize, usize, usize, usize), kernel: Kernel) -> Result<Self> {
        check_dims(dims)?;
        kernel.placements((dims.0, dims.1))?;
        Ok(Self {
            kernel,
            nkx: dims.0,
            nky: dims.1,
            nrx: dims.2,
            ntx: dims.3,
        })
    }

    pub fn n1(&self) -> usize {
        self.kernel.area()
    }

    pub fn n2(&self) -> usize {
        (self.nkx - self.kernel.m + 1) * (self.nky - self.kernel.n + 1)
    }

    /// Number of placements along `kx`.
    pub fn px(&self) -> usize {
        self.nkx - self.kernel.m + 1
    }

    pub fn kspace_dims(&self) -> (usize, usize, usize, usize) {
        (self.nkx, self.nky, self.nrx, self.ntx)
    }

    /// `(N1, N2, NRx, NTx)`
    pub fn tensor_dims(&self) -> (usize, usize, usize, usize) {
        (self.n1(), self.n2(), self.nrx, self.ntx)
    }

    /// Same shape with the receive and transmit counts exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            nrx: self.ntx,
            ntx: self.nrx,
            ..*self
        }
    }

    /// Source k-space location of Hankel entry `(i, j)`.
    #[inline]
    pub fn source(&self, i: usize, j: usize) -> (usize, usize) {
        let (a, b) = (i % self.kernel.m, i / self.kernel.m);
        let px = self.px();
        let (x0, y0) = (j % px, j / px);
        (x0 + a, y0 + b)
    }
}

/// Tensor `(N1, N2, NRx, NTx)` whose frontal slices are block-Hankel.
#[derive(Clone, Debug, PartialEq)]
pub struct HankelTensor {
    shape: HankelShape,
    data: Array4<C64>,
}

impl HankelTensor {
    pub fn zeros(shape: HankelShape) -> Self {
        Self {
            shape,
            data: Array4::zeros(shape.tensor_dims()),
        }
    }

    /// Wraps raw `(N1, N2, NRx, NTx)` data. The block-Hankel structure is not
    /// enforced: adjoint-side operators accept arbitrary tensors of this shape.
    pub fn from_array(shape: HankelShape, data: Array4<C64>) -> Result<Self> {
        if data.dim() != shape.tensor_dims() {
            return Err(Error::dim(format!(
                "hankel data has shape {:?}, expected {:?}",
                data.dim(),
                shape.tensor_dims()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &HankelShape {
        &self.shape
    }

    pub fn data(&self) -> &Array4<C64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array4<C64> {
        &mut self.data
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn inner(&self, other: &Self) -> C64 {
        assert_eq!(self.shape, other.shape);
        Zip::from(&self.data)
            .and(&other.data)
            .fold(C64::new(0.0, 0.0), |acc, a, b| acc + a.conj() * b)
    }

    /// Exchanges the Rx and Tx axes. Frontal slices are untouched.
    pub fn swap_rx_tx(&self) -> Self {
        let mut data = self.data.clone();
        data.swap_axes(2, 3);
        Self {
            shape: self.shape.swapped(),
            data: data.as_standard_layout().into_owned(),
        }
    }

    /// `self·a + other·b`, elementwise.
    pub fn axpby(&self, a: f64, other: &Self, b: f64) -> Self {
        assert_eq!(self.shape, other.shape);
        let mut data = self.data.clone();
        Zip::from(&mut data)
            .and(&other.data)
            .for_each(|x, &y| *x = *x * a + y * b);
        Self {
            shape: self.shape,
            data,
        }
    }

    /// True when every pair of entries drawn from the same k-space location
    /// agrees to within `tol`.
    pub fn is_block_hankel(&self, tol: f64) -> bool {
        let s = self.shape;
        for tx in 0..s.ntx {
            for rx in 0..s.nrx {
                let mut first: Array2<Option<C64>> = Array2::from_elem((s.nkx, s.nky), None);
                for j in 0..s.n2() {
                    for i in 0..s.n1() {
                        let (x, y) = s.source(i, j);
                        let v = self.data[[i, j, rx, tx]];
                        match first[[x, y]] {
                            None => first[[x, y]] = Some(v),
                            Some(w) if (w - v).norm() > tol => return false,
                            Some(_) => {}
                        }
                    }
                }
            }
        }
        true
    }
}

/// Per-location count of kernel placements covering `(kx, ky)`: the diagonal
/// of `T*T`.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiplicityMap {
    counts: Array2<u32>,
}

impl MultiplicityMap {
    pub fn counts(&self) -> &Array2<u32> {
        &self.counts
    }

    pub fn get(&self, kx: usize, ky: usize) -> u32 {
        self.counts[[kx, ky]]
    }
}

/// Number of placements of `kernel` covering each location of a `dims` grid.
pub fn multiplicity(dims: (usize, usize), kernel: Kernel) -> Result<MultiplicityMap> {
    kernel.placements(dims)?;
    let (nkx, nky) = dims;
    let cover = |i: usize, len: usize, k: usize| (i + 1).min(k).min(len - i).min(len + 1 - k);
    let counts = Array2::from_shape_fn(dims, |(x, y)| {
        (cover(x, nkx, kernel.m) * cover(y, nky, kernel.n)) as u32
    });
    Ok(MultiplicityMap { counts })
}

/// Lifts `d` to the block-Hankel tensor `T(d)`.
pub fn hankel_transform(d: &KSpaceTensor, kernel: Kernel) -> Result<HankelTensor> {
    let shape = HankelShape::new(d.dims(), kernel)?;
    let src = d.data();
    let (n1, n2) = (shape.n1(), shape.n2());
    let mut data = Array4::zeros(shape.tensor_dims());
    for i in 0..n1 {
        for j in 0..n2 {
            let (x, y) = shape.source(i, j);
            for rx in 0..shape.nrx {
                for tx in 0..shape.ntx {
                    data[[i, j, rx, tx]] = src[[x, y, rx, tx]];
                }
            }
        }
    }
    Ok(HankelTensor { shape, data })
}

fn check_kspace_dims(h: &HankelTensor, dims: (usize, usize)) -> Result<()> {
    let s = h.shape();
    if (s.nkx, s.nky) != dims {
        return Err(Error::dim(format!(
            "hankel tensor was lifted from {}x{} k-space, not {}x{}",
            s.nkx, s.nky, dims.0, dims.1
        )));
    }
    Ok(())
}

/// `T*(h)`: scatters every Hankel entry back to its source location, summing
/// overlaps.
pub fn hankel_adjoint(h: &HankelTensor, dims: (usize, usize)) -> Result<KSpaceTensor> {
    check_kspace_dims(h, dims)?;
    let s = *h.shape();
    let mut out = Array4::<C64>::zeros(s.kspace_dims());
    let hd = h.data();
    for i in 0..s.n1() {
        for j in 0..s.n2() {
            let (x, y) = s.source(i, j);
            for rx in 0..s.nrx {
                for tx in 0..s.ntx {
                    out[[x, y, rx, tx]] += hd[[i, j, rx, tx]];
                }
            }
        }
    }
    KSpaceTensor::from_array(out)
}

/// `T†(h)`: like [`hankel_adjoint`] but averages overlapping entries.
pub fn hankel_pinv(h: &HankelTensor, dims: (usize, usize)) -> Result<KSpaceTensor> {
    let mut z = hankel_adjoint(h, dims)?;
    let c = multiplicity(dims, h.shape().kernel)?;
    for ((x, y, _, _), v) in z.data_mut().indexed_iter_mut() {
        *v /= c.get(x, y) as f64;
    }
    Ok(z)
}
