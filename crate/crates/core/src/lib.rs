//! Calibrationless reconstruction of undersampled parallel-transmit k-space.
//!
//! Multi-channel k-space `D ∈ C^{Nkx×Nky×NRx×NTx}` is lifted to a tensor with
//! block-Hankel frontal slices. Missing samples are recovered by ADMM with
//! hard rank constraints on one or two unfoldings of that tensor:
//!
//! * [`Method::Vc`]: every Rx/Tx pair stacked as a virtual coil (`U0`),
//! * [`Method::Primo`]: Rx blocks stacked vertically, Tx blocks horizontally (`U2`),
//! * [`Method::TxLr`]: both the Rx-stacked (`U2`) and Tx-stacked (`U1`) unfoldings.
//!
//! Around the solver sit a Poisson-disc undersampling generator, a synthetic
//! phantom and sensitivity simulator, error metrics, the KTEN tensor file
//! format and a sweep runner that writes results as CSV.

pub mod error;
pub mod experiment;
pub mod fft;
pub mod kten;
pub mod metrics;
pub mod phantom;
pub mod sampling;
pub mod solver;
pub mod svt;
pub mod tensor;
pub mod unfold;

pub use error::{Error, Result};
pub use metrics::{map_rmse, relative_tx_maps, rmse, singular_spectrum, RelativeTxMaps, SingularSpectrum};
pub use sampling::{
    add_noise, apply_mask, estimate_sigma, mask_variants_per_tx, poisson_disc_mask, MaskOptions,
    NoiseSpec, SamplingMask,
};
pub use solver::{
    admm_reconstruct, chi_square_stat, z_update, Method, NoiseModel, ReconReport, SolverConfig,
    StopReason, Stopping,
};
pub use svt::{svt, SvdRoute};
pub use tensor::{
    hankel_adjoint, hankel_pinv, hankel_transform, multiplicity, HankelShape, HankelTensor,
    KSpaceTensor, Kernel, MultiplicityMap,
};
pub use unfold::{Matrix, Unfolding};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
