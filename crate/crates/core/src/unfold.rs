//! Matricizations of a block-Hankel tensor `H ∈ C^{N1×N2×NRx×NTx}`.
//!
//! | unfolding                   | rows          | cols          |
//! |-----------------------------|---------------|---------------|
//! | [`Unfolding::VirtualCoil`]  | `N1·NRx·NTx`  | `N2`          |
//! | [`Unfolding::TxStacked`]    | `N1·NTx`      | `N2·NRx`      |
//! | [`Unfolding::RxStacked`]    | `N1·NRx`      | `N2·NTx`      |
//!
//! Vertically stacked blocks put `rx` fastest (then `tx`); horizontally
//! concatenated blocks are ordered by the remaining channel index. Each
//! unfolding is a permutation, so its refold is both inverse and adjoint.

use std::fmt;

use faer::MatRef;
use ndarray::{Array2, Array4};

use crate::error::{Error, Result};
use crate::tensor::{HankelShape, HankelTensor};
use crate::C64;

pub type Matrix = Array2<C64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Unfolding {
    /// `U0`: the virtual-coil matrix `Vc`.
    VirtualCoil,
    /// `U1`: transmit blocks stacked vertically, `Tc`.
    TxStacked,
    /// `U2`: receive blocks stacked vertically, `Rc` (PRIMO calibration layout).
    RxStacked,
}

impl Unfolding {
    pub fn label(&self) -> &'static str {
        match self {
            Unfolding::VirtualCoil => "Vc",
            Unfolding::TxStacked => "Tc",
            Unfolding::RxStacked => "Rc",
        }
    }

    /// Matrix shape produced for tensors of `shape`.
    pub fn matrix_dims(&self, shape: &HankelShape) -> (usize, usize) {
        let (n1, n2, nrx, ntx) = shape.tensor_dims();
        match self {
            Unfolding::VirtualCoil => (n1 * nrx * ntx, n2),
            Unfolding::TxStacked => (n1 * ntx, n2 * nrx),
            Unfolding::RxStacked => (n1 * nrx, n2 * ntx),
        }
    }

    /// Matrix position of tensor entry `(i, j, rx, tx)`.
    #[inline]
    fn position(&self, shape: &HankelShape, i: usize, j: usize, rx: usize, tx: usize) -> (usize, usize) {
        let (n1, n2) = (shape.n1(), shape.n2());
        match self {
            Unfolding::VirtualCoil => (i + n1 * (rx + shape.nrx * tx), j),
            Unfolding::TxStacked => (i + n1 * tx, j + n2 * rx),
            Unfolding::RxStacked => (i + n1 * rx, j + n2 * tx),
        }
    }

    pub fn unfold(&self, h: &HankelTensor) -> Matrix {
        let shape = h.shape();
        let mut m = Matrix::zeros(self.matrix_dims(shape));
        for ((i, j, rx, tx), &v) in h.data().indexed_iter() {
            m[self.position(shape, i, j, rx, tx)] = v;
        }
        m
    }

    /// For every entry of the unfolded `T(z)`, in column-major order, the
    /// offset of its source in a standard-layout k-space array.
    pub(crate) fn gather_map(&self, shape: &HankelShape) -> Vec<usize> {
        let (rows, cols) = self.matrix_dims(shape);
        let (_, nky, nrx, ntx) = shape.kspace_dims();
        let mut map = vec![0; rows * cols];
        for i in 0..shape.n1() {
            for j in 0..shape.n2() {
                let (x, y) = shape.source(i, j);
                for rx in 0..nrx {
                    for tx in 0..ntx {
                        let (r, c) = self.position(shape, i, j, rx, tx);
                        map[r + rows * c] = ((x * nky + y) * nrx + rx) * ntx + tx;
                    }
                }
            }
        }
        map
    }

    pub(crate) fn refold_faer(&self, m: MatRef<'_, C64>, shape: &HankelShape) -> Result<HankelTensor> {
        if (m.nrows(), m.ncols()) != self.matrix_dims(shape) {
            return Err(Error::dim(format!("{} refold got a {}x{} matrix", self.label(), m.nrows(), m.ncols())));
        }
        let data = Array4::from_shape_fn(shape.tensor_dims(), |(i, j, rx, tx)| {
            m[self.position(shape, i, j, rx, tx)]
        });
        HankelTensor::from_array(*shape, data)
    }

    pub fn refold(&self, m: &Matrix, shape: &HankelShape) -> Result<HankelTensor> {
        let expected = self.matrix_dims(shape);
        if m.dim() != expected {
            return Err(Error::dim(format!(
                "{} refold expects a {}x{} matrix, got {}x{}",
                self.label(),
                expected.0,
                expected.1,
                m.nrows(),
                m.ncols()
            )));
        }
        let data = Array4::from_shape_fn(shape.tensor_dims(), |(i, j, rx, tx)| {
            m[self.position(shape, i, j, rx, tx)]
        });
        HankelTensor::from_array(*shape, data)
    }
}

impl fmt::Display for Unfolding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Unfolding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vc" | "u0" => Ok(Unfolding::VirtualCoil),
            "tc" | "u1" | "tx" => Ok(Unfolding::TxStacked),
            "rc" | "u2" | "rx" => Ok(Unfolding::RxStacked),
            _ => Err(Error::Config(format!("unknown unfolding {s:?}"))),
        }
    }
}

/// `U0`
pub fn unfold_vc(h: &HankelTensor) -> Matrix {
    Unfolding::VirtualCoil.unfold(h)
}

/// `U1`
pub fn unfold_tx(h: &HankelTensor) -> Matrix {
    Unfolding::TxStacked.unfold(h)
}

/// `U2`
pub fn unfold_rx(h: &HankelTensor) -> Matrix {
    Unfolding::RxStacked.unfold(h)
}

pub fn refold_vc(m: &Matrix, shape: &HankelShape) -> Result<HankelTensor> {
    Unfolding::VirtualCoil.refold(m, shape)
}

pub fn refold_tx(m: &Matrix, shape: &HankelShape) -> Result<HankelTensor> {
    Unfolding::TxStacked.refold(m, shape)
}

pub fn refold_rx(m: &Matrix, shape: &HankelShape) -> Result<HankelTensor> {
    Unfolding::RxStacked.refold(m, shape)
}
