mod common;

use common::*;
use proptest::prelude::*;
use txlr::sampling::{poisson_disc_mask_with, R_TOLERANCE};
use txlr::{
    add_noise, apply_mask, estimate_sigma, mask_variants_per_tx, poisson_disc_mask, KSpaceTensor, MaskOptions,
    NoiseSpec, SamplingMask, C64,
};

const FACTORS: [f64; 5] = [2.0, 4.0, 6.0, 8.0, 12.0];

fn sampled_points(mask: &SamplingMask, pattern: usize) -> Vec<(f64, f64)> {
    let (nx, ny) = mask.dims();
    let mut v = Vec::new();
    for x in 0..nx {
        for y in 0..ny {
            if mask.bits()[[x, y, pattern]] {
                v.push((x as f64, y as f64));
            }
        }
    }
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn achieved_factor_is_within_tolerance(seed in any::<u64>(), big in any::<bool>(), ntx in 1usize..=3) {
        let n = if big { 48 } else { 24 };
        for r in FACTORS {
            let m = mask_variants_per_tx((n, n), r, ntx, seed, &MaskOptions::default()).unwrap();
            prop_assert_eq!(m.n_patterns(), ntx);
            for p in 0..ntx {
                let achieved = m.pattern_r(p);
                prop_assert!((achieved - r).abs() / r <= R_TOLERANCE, "R {r} got {achieved} on {n}x{n}");
                prop_assert!(m.pattern_count(p) >= 1);
                prop_assert_eq!(achieved, (n * n) as f64 / m.pattern_count(p) as f64);
            }
        }
    }

    #[test]
    fn masks_are_deterministic(seed in any::<u64>(), ri in 0usize..5) {
        let r = FACTORS[ri];
        let a = mask_variants_per_tx((24, 24), r, 4, seed, &MaskOptions::default()).unwrap();
        let b = mask_variants_per_tx((24, 24), r, 4, seed, &MaskOptions::default()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn snapped_samples_respect_the_exclusion_radius(seed in any::<u64>(), ri in 0usize..5) {
        let m = mask_variants_per_tx((24, 24), FACTORS[ri], 3, seed, &MaskOptions::default()).unwrap();
        for p in 0..3 {
            let pts = sampled_points(&m, p);
            let bound = m.radii()[p] - std::f64::consts::SQRT_2;
            for i in 0..pts.len() {
                for j in i + 1..pts.len() {
                    let d = ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt();
                    prop_assert!(d >= bound - 1e-12, "pattern {p}: {d} < {bound}");
                }
            }
        }
    }
}

#[test]
fn per_tx_patterns_differ_and_shared_patterns_do_not() {
    let own = mask_variants_per_tx((24, 24), 6.0, 4, 3, &MaskOptions::default()).unwrap();
    assert_eq!(own.n_patterns(), 4);
    assert_ne!(sampled_points(&own, 0), sampled_points(&own, 1));
    let shared = mask_variants_per_tx((24, 24), 6.0, 4, 3, &MaskOptions { shared: true, ..Default::default() }).unwrap();
    assert_eq!(shared.n_patterns(), 1);
    for tx in 0..4 {
        assert_eq!(shared.is_sampled(5, 7, tx), shared.is_sampled(5, 7, 0));
    }
}

#[test]
fn centre_is_sampled_unless_disabled() {
    for seed in 0..10 {
        let m = poisson_disc_mask((24, 24), 8.0, seed).unwrap();
        assert!(m.is_sampled(12, 12, 0));
    }
    let off = MaskOptions { force_center: false, ..Default::default() };
    let hits = (0..20).filter(|&s| poisson_disc_mask_with((24, 24), 8.0, s, &off).unwrap().is_sampled(12, 12, 0)).count();
    assert!(hits < 20);
}

#[test]
fn different_seeds_give_different_masks() {
    let a = poisson_disc_mask((24, 24), 4.0, 1).unwrap();
    let b = poisson_disc_mask((24, 24), 4.0, 2).unwrap();
    assert_ne!(a, b);
}

#[test]
fn apply_mask_keeps_sampled_entries_only() {
    let d = random_kspace((12, 12, 2, 3), 4);
    let m = mask_variants_per_tx((12, 12), 3.0, 3, 5, &MaskOptions::default()).unwrap();
    let md = apply_mask(&d, &m).unwrap();
    for ((x, y, rx, tx), v) in md.data().indexed_iter() {
        if m.is_sampled(x, y, tx) {
            assert_eq!(*v, d.data()[[x, y, rx, tx]]);
        } else {
            assert_eq!(*v, C64::new(0.0, 0.0));
        }
    }
    assert!(apply_mask(&random_kspace((12, 12, 2, 2), 0), &m).is_err());
}

#[test]
fn complement_partitions_the_grid() {
    let m = mask_variants_per_tx((12, 12), 3.0, 2, 5, &MaskOptions::default()).unwrap();
    let c = m.complement();
    for tx in 0..2 {
        for x in 0..12 {
            for y in 0..12 {
                assert_ne!(m.is_sampled(x, y, tx), c.is_sampled(x, y, tx));
            }
        }
    }
}

#[test]
fn impossible_factors_are_rejected() {
    assert!(poisson_disc_mask((8, 8), 0.5, 0).is_err());
    assert!(poisson_disc_mask((8, 8), 1000.0, 0).is_err());
    assert!(mask_variants_per_tx((8, 8), 2.0, 0, 0, &MaskOptions::default()).is_err());
}

fn constant_tensor(dims: (usize, usize, usize, usize), v: f64) -> KSpaceTensor {
    KSpaceTensor::from_fn(dims, |_| C64::new(v, 0.0)).unwrap()
}

#[test]
fn noise_level_follows_the_peak_convention() {
    let mut d = constant_tensor((16, 16, 2, 2), 0.5);
    d[[3, 4, 1, 0]] = C64::new(0.0, 2.0);
    for psnr in [40.0, 60.0] {
        let spec = NoiseSpec::new(psnr, 1);
        let sigma = spec.sigma_for(&d);
        assert!(rel_err(sigma, 2.0 / 10f64.powf(psnr / 20.0)) < 1e-15);
        let (_, model) = add_noise(&d, &spec).unwrap();
        assert_eq!(model.unwrap().sigma(), &[sigma, sigma]);
    }
    let (same, model) = add_noise(&d, &NoiseSpec::new(f64::INFINITY, 1)).unwrap();
    assert_eq!(same, d);
    assert!(model.is_none());
}

#[test]
fn noise_is_zero_mean_with_the_stated_spread() {
    let clean = constant_tensor((64, 64, 2, 4), 1.0);
    let (noisy, model) = add_noise(&clean, &NoiseSpec::new(20.0, 77)).unwrap();
    let sigma = model.unwrap().sigma()[0];
    let diff: Vec<C64> = noisy.data().iter().zip(clean.data().iter()).map(|(a, b)| a - b).collect();
    let n = diff.len() as f64;
    let mean = diff.iter().sum::<C64>() / n;
    let se = sigma / n.sqrt();
    assert!(mean.norm() < 3.0 * se, "mean {mean} vs se {se}");
    let var_re = diff.iter().map(|v| v.re * v.re).sum::<f64>() / n;
    let var_im = diff.iter().map(|v| v.im * v.im).sum::<f64>() / n;
    assert!(rel_err(var_re.sqrt(), sigma / std::f64::consts::SQRT_2) < 0.02);
    assert!(rel_err(var_im.sqrt(), sigma / std::f64::consts::SQRT_2) < 0.02);
    let (again, _) = add_noise(&clean, &NoiseSpec::new(20.0, 77)).unwrap();
    assert_eq!(again, noisy);
}

#[test]
fn sigma_estimate_from_noise_samples() {
    let clean = constant_tensor((100, 100, 2, 1), 0.0);
    let mut peak = clean.clone();
    peak[[0, 0, 0, 0]] = C64::new(2.0 * 10f64.powf(1.0), 0.0);
    // peak 20 at 20 dB gives sigma = 2
    let (noisy, _) = add_noise(&peak, &NoiseSpec::new(20.0, 5)).unwrap();
    let ch = |rx: usize, skip: usize| -> Vec<C64> {
        noisy.data().iter().skip(rx).step_by(2).skip(skip).copied().collect()
    };
    let a = ch(0, 1);
    let b = ch(1, 0);
    assert!(a.len() >= 9_999);
    let model = estimate_sigma(&[a.clone(), b.clone()]).unwrap();
    for s in model.sigma() {
        assert!(rel_err(*s, 2.0) < 0.05, "{s}");
    }
    let scaled: Vec<C64> = b.iter().map(|v| v * 10.0).collect();
    let other = estimate_sigma(&[a.clone(), scaled]).unwrap();
    assert_eq!(other.sigma()[0], model.sigma()[0]);
    assert!(estimate_sigma(&[a[..50].to_vec()]).is_err());
    assert!(estimate_sigma(&[]).is_err());
}
