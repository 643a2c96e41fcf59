#![allow(dead_code)]

use ndarray::{Array2, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use txlr::{KSpaceTensor, Kernel, Matrix, C64};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cplx(r: &mut ChaCha8Rng) -> C64 {
    C64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
}

pub fn random_kspace(dims: (usize, usize, usize, usize), seed: u64) -> KSpaceTensor {
    let mut r = rng(seed);
    KSpaceTensor::from_fn(dims, |_| cplx(&mut r)).unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut r = rng(seed);
    Array2::from_shape_fn((rows, cols), |_| cplx(&mut r))
}

pub fn random_array4(dims: (usize, usize, usize, usize), seed: u64) -> Array4<C64> {
    let mut r = rng(seed);
    Array4::from_shape_fn(dims, |_| cplx(&mut r))
}

pub fn dot4(a: &Array4<C64>, b: &Array4<C64>) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn dot2(a: &Matrix, b: &Matrix) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Kernel placements listed as `(x0, y0)` with `x0` fastest, then offsets
/// `(a, b)` with `a` fastest: the reference layout of the lift.
pub fn placements(nkx: usize, nky: usize, k: Kernel) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for y0 in 0..=nky - k.n {
        for x0 in 0..=nkx - k.m {
            v.push((x0, y0));
        }
    }
    v
}

pub fn offsets(k: Kernel) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for b in 0..k.n {
        for a in 0..k.m {
            v.push((a, b));
        }
    }
    v
}

/// Hankel lift written directly from its definition.
pub fn naive_lift(d: &Array4<C64>, k: Kernel) -> Array4<C64> {
    let (nkx, nky, nrx, ntx) = d.dim();
    let p = placements(nkx, nky, k);
    let o = offsets(k);
    let mut h = Array4::zeros((o.len(), p.len(), nrx, ntx));
    for (j, &(x0, y0)) in p.iter().enumerate() {
        for (i, &(a, b)) in o.iter().enumerate() {
            for rx in 0..nrx {
                for tx in 0..ntx {
                    h[[i, j, rx, tx]] = d[[x0 + a, y0 + b, rx, tx]];
                }
            }
        }
    }
    h
}

/// Adjoint of [`naive_lift`].
pub fn naive_scatter(h: &Array4<C64>, nkx: usize, nky: usize, k: Kernel) -> Array4<C64> {
    let (_, _, nrx, ntx) = h.dim();
    let p = placements(nkx, nky, k);
    let o = offsets(k);
    let mut d = Array4::zeros((nkx, nky, nrx, ntx));
    for (j, &(x0, y0)) in p.iter().enumerate() {
        for (i, &(a, b)) in o.iter().enumerate() {
            for rx in 0..nrx {
                for tx in 0..ntx {
                    d[[x0 + a, y0 + b, rx, tx]] += h[[i, j, rx, tx]];
                }
            }
        }
    }
    d
}

/// Overlap counts by enumerating every kernel placement.
pub fn brute_counts(nkx: usize, nky: usize, k: Kernel) -> Array2<u32> {
    let mut c = Array2::zeros((nkx, nky));
    for (x0, y0) in placements(nkx, nky, k) {
        for (a, b) in offsets(k) {
            c[[x0 + a, y0 + b]] += 1;
        }
    }
    c
}

/// Block matrix with block `(r, c)` equal to `f(r, c)`, each `bh × bw`.
pub fn block_matrix(nr: usize, nc: usize, bh: usize, bw: usize, f: impl Fn(usize, usize) -> Array2<C64>) -> Matrix {
    let mut m = Matrix::zeros((nr * bh, nc * bw));
    for r in 0..nr {
        for c in 0..nc {
            let b = f(r, c);
            m.slice_mut(ndarray::s![r * bh..(r + 1) * bh, c * bw..(c + 1) * bw]).assign(&b);
        }
    }
    m
}

pub fn to_na(m: &Matrix) -> nalgebra::DMatrix<C64> {
    nalgebra::DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

/// Singular values from nalgebra's SVD, nonincreasing.
pub fn oracle_singular_values(m: &Matrix) -> Vec<f64> {
    let mut s: Vec<f64> = to_na(m).singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

pub fn frob(m: &Matrix) -> f64 {
    m.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Conjugate gradients on a Hermitian positive definite operator.
pub fn conjugate_gradient(
    apply: impl Fn(&Array4<C64>) -> Array4<C64>,
    b: &Array4<C64>,
    tol: f64,
    max_iter: usize,
) -> Array4<C64> {
    let mut x = Array4::<C64>::zeros(b.dim());
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = dot4(&r, &r).re;
    let b_norm = rr.sqrt();
    for _ in 0..max_iter {
        if rr.sqrt() <= tol * b_norm {
            break;
        }
        let ap = apply(&p);
        let alpha = rr / dot4(&p, &ap).re;
        x.zip_mut_with(&p, |xi, pi| *xi += pi * alpha);
        r.zip_mut_with(&ap, |ri, api| *ri -= api * alpha);
        let rr_new = dot4(&r, &r).re;
        let beta = rr_new / rr;
        p.zip_mut_with(&r, |pi, ri| *pi = ri + *pi * beta);
        rr = rr_new;
    }
    x
}

/// Sampled-mask indicator broadcast to `(kx, ky, rx, tx)`.
pub fn mask_weights(mask: &txlr::SamplingMask, dims: (usize, usize, usize, usize)) -> Array4<f64> {
    Array4::from_shape_fn(dims, |(x, y, _, tx)| if mask.is_sampled(x, y, tx) { 1.0 } else { 0.0 })
}

/// `½‖Mz − D‖² + ρ/2 Σ_i ‖C_i − T z‖²`
pub fn z_objective(
    z: &Array4<C64>,
    d: &Array4<C64>,
    w: &Array4<f64>,
    consensus: &[Array4<C64>],
    rho: f64,
    k: Kernel,
) -> f64 {
    let mut f = 0.0;
    for ((zi, di), wi) in z.iter().zip(d.iter()).zip(w.iter()) {
        f += 0.5 * wi * (zi - di).norm_sqr();
    }
    let tz = naive_lift(z, k);
    for c in consensus {
        f += 0.5 * rho * c.iter().zip(tz.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
    }
    f
}
