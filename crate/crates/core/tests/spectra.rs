use std::f64::consts::PI;

use beamcap::linalg::{hermitian_eig, sample_gaussian_matrix};
use beamcap::spectra::{
    integrate, lambda_of_t_y, mp_cdf, mp_density_y, support_for_y, t_density_y, SystemDims,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const YS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

#[test]
fn change_of_variables_is_consistent() {
    let tests: [fn(f64) -> f64; 3] = [|l| l, |l| (1.0 + 3.0 * l).ln(), |l| 1.0 / (1.0 + l)];
    for y in YS {
        let s = support_for_y(y);
        for a in [0.1, 0.5, 1.0, 2.0, 3.0] {
            let la = lambda_of_t_y(a, y).unwrap();
            for g in tests {
                let by_lambda = integrate(|l| g(l) * mp_density_y(l, y), la, s.lambda_plus, 1e-11).unwrap();
                let by_angle =
                    integrate(|t| g(lambda_of_t_y(t, y).unwrap()) * t_density_y(t, y), a, PI, 1e-11).unwrap();
                assert!((by_lambda - by_angle).abs() < 2e-8, "y={y} a={a}: {by_lambda} vs {by_angle}");
            }
        }
    }
}

#[test]
fn angle_map_spans_the_support() {
    // (1 + y ∓ 2√y)/y = (1/√y ∓ 1)²
    for y in YS {
        let s = support_for_y(y);
        assert!((lambda_of_t_y(0.0, y).unwrap() - s.lambda_minus).abs() < 1e-12);
        assert!((lambda_of_t_y(PI, y).unwrap() - s.lambda_plus).abs() < 1e-12);
        let tau = 1.0 / y;
        assert!((s.lambda_plus - (tau.sqrt() + 1.0).powi(2)).abs() < 1e-12);
    }
}

#[test]
fn angle_density_is_even_and_normalized() {
    for y in YS {
        for t in [0.1, 0.7, 1.9, 3.0] {
            assert!((t_density_y(t, y) - t_density_y(-t, y)).abs() < 1e-15);
        }
        let total = integrate(|t| t_density_y(t, y), 0.0, PI, 1e-12).unwrap();
        assert!((total - 1.0).abs() < 1e-10);
    }
}

#[test]
fn sampled_spectrum_is_close_to_the_limit() {
    let dims = SystemDims::new(64, 64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let h = sample_gaussian_matrix(64, 64, &mut rng);
    let w = h.gram_outer().scale(1.0 / dims.m as f64);
    let mut vals = hermitian_eig(&w).unwrap().values;
    vals.sort_by(f64::total_cmp);
    let n = vals.len() as f64;
    let mut ks: f64 = 0.0;
    for (i, &v) in vals.iter().enumerate() {
        let f = mp_cdf(v, dims.y).unwrap();
        ks = ks.max((f - i as f64 / n).abs()).max((f - (i + 1) as f64 / n).abs());
    }
    assert!(ks < 0.08, "KS distance {ks}");
}

#[test]
fn eigenvalues_stay_near_the_support() {
    let dims = SystemDims::new(32, 16).unwrap();
    let s = support_for_y(dims.y);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut outside = 0;
    let mut total = 0;
    for _ in 0..20 {
        let h = sample_gaussian_matrix(dims.rx, dims.tx, &mut rng);
        let w = h.gram_outer().scale(1.0 / dims.m as f64);
        for v in hermitian_eig(&w).unwrap().values {
            total += 1;
            if v < s.lambda_minus - 0.3 || v > s.lambda_plus + 0.3 {
                outside += 1;
            }
        }
    }
    assert!((outside as f64) < 0.01 * total as f64, "{outside} of {total} outside");
}

proptest! {
    #[test]
    fn density_is_non_negative(y in 0.01f64..=1.0, l in -1.0f64..40.0, t in 0.0f64..=PI) {
        prop_assert!(mp_density_y(l, y) >= 0.0);
        prop_assert!(t_density_y(t, y) >= -1e-16);
    }

    #[test]
    fn cdf_is_monotone(y in 0.05f64..=1.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let s = support_for_y(y);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let at = |x: f64| mp_cdf(s.lambda_minus + x * (s.lambda_plus - s.lambda_minus), y).unwrap();
        prop_assert!(at(lo) <= at(hi) + 1e-12);
    }
}
