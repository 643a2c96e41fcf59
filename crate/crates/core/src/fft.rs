//! Orthonormal centered 2-D DFT.
//!
//! The DC sample sits at index `floor(N/2)` along each axis, both in image
//! space and in k-space. Scaling is `1/√(NxNy)` in each direction, so the
//! transform is unitary.

use ndarray::{Array2, ArrayView2, Axis};
use rustfft::FftPlanner;

use crate::C64;

fn shift(a: &mut Array2<C64>, inverse: bool) {
    for ax in 0..2 {
        let n = a.len_of(Axis(ax));
        let k = if inverse { n - n / 2 } else { n / 2 };
        for mut lane in a.lanes_mut(Axis(ax)) {
            let mut v = lane.to_vec();
            v.rotate_left(k);
            lane.iter_mut().zip(v).for_each(|(d, s)| *d = s);
        }
    }
}

fn transform(x: ArrayView2<'_, C64>, forward: bool) -> Array2<C64> {
    let mut a = x.to_owned();
    // move the centre sample to index 0
    shift(&mut a, false);
    let mut planner = FftPlanner::new();
    for ax in 0..2 {
        let n = a.len_of(Axis(ax));
        let fft = if forward { planner.plan_fft_forward(n) } else { planner.plan_fft_inverse(n) };
        let mut buf = vec![C64::new(0.0, 0.0); n];
        for mut lane in a.lanes_mut(Axis(ax)) {
            buf.iter_mut().zip(lane.iter()).for_each(|(b, v)| *b = *v);
            fft.process(&mut buf);
            lane.iter_mut().zip(&buf).for_each(|(d, s)| *d = *s);
        }
    }
    shift(&mut a, true);
    let scale = 1.0 / ((a.len()) as f64).sqrt();
    a.mapv_inplace(|v| v * scale);
    a
}

pub fn dft2_centered(x: ArrayView2<'_, C64>) -> Array2<C64> {
    transform(x, true)
}

pub fn idft2_centered(x: ArrayView2<'_, C64>) -> Array2<C64> {
    transform(x, false)
}
