//! Marchenko–Pastur spectrum and adaptive quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};

/// Antenna geometry with the derived ratios used by the large-system formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemDims {
    pub tx: usize,
    pub rx: usize,
    pub m: usize,
    pub n: usize,
    pub y: f64,
    pub tau: f64,
    pub r: f64,
}

impl SystemDims {
    pub fn new(tx: usize, rx: usize) -> Result<Self> {
        if tx == 0 || rx == 0 {
            return Err(invalid("antenna counts must be at least 1"));
        }
        let m = tx.min(rx);
        let n = tx.max(rx);
        let y = m as f64 / n as f64;
        Ok(Self {
            tx,
            rx,
            m,
            n,
            y,
            tau: n as f64 / m as f64,
            r: y.sqrt(),
        })
    }
}

pub(crate) fn check_y(y: f64) -> Result<()> {
    if y > 0.0 && y <= 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("y must lie in (0, 1], got {y}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralSupport {
    pub lambda_minus: f64,
    pub lambda_plus: f64,
}

pub fn mp_support(dims: &SystemDims) -> SpectralSupport {
    support_for_y(dims.y)
}

/// Support endpoints `(1/√y ∓ 1)²`.
pub fn support_for_y(y: f64) -> SpectralSupport {
    let s = 1.0 / y.sqrt();
    SpectralSupport {
        lambda_minus: (s - 1.0) * (s - 1.0),
        lambda_plus: (s + 1.0) * (s + 1.0),
    }
}

/// Limiting eigenvalue density of `W`.
pub fn mp_density(lambda: f64, dims: &SystemDims) -> f64 {
    mp_density_y(lambda, dims.y)
}

pub fn mp_density_y(lambda: f64, y: f64) -> f64 {
    let s = support_for_y(y);
    if lambda <= s.lambda_minus || lambda >= s.lambda_plus || lambda <= 0.0 {
        return 0.0;
    }
    let prod = ((s.lambda_plus - lambda) * (lambda - s.lambda_minus)).max(0.0);
    prod.sqrt() / (2.0 * PI * lambda)
}

/// Eigenvalue as a function of the angle `t`; increasing on `[0, π]`.
pub fn lambda_of_t(t: f64, dims: &SystemDims) -> Result<f64> {
    lambda_of_t_y(t, dims.y)
}

pub fn lambda_of_t_y(t: f64, y: f64) -> Result<f64> {
    if !(0.0..=PI).contains(&t) {
        return Err(invalid(format!("angle {t} outside [0, pi]")));
    }
    Ok(lambda_at(t, y))
}

pub(crate) fn lambda_at(t: f64, y: f64) -> f64 {
    (1.0 + y - 2.0 * y.sqrt() * t.cos()) / y
}

/// Inverse of [`lambda_of_t_y`], clamped to the support.
pub fn t_of_lambda(lambda: f64, y: f64) -> f64 {
    let c = (1.0 + y - y * lambda) / (2.0 * y.sqrt());
    c.clamp(-1.0, 1.0).acos()
}

/// Density of the angle `t` induced by the eigenvalue density.
pub fn t_density(t: f64, dims: &SystemDims) -> f64 {
    t_density_y(t, dims.y)
}

pub fn t_density_y(t: f64, y: f64) -> f64 {
    if y == 1.0 {
        (1.0 + t.cos()) / PI
    } else {
        (1.0 - (2.0 * t).cos()) / (1.0 + y - 2.0 * y.sqrt() * t.cos()) / PI
    }
}

/// Limiting eigenvalue CDF, by quadrature of the angle density.
pub fn mp_cdf(lambda: f64, y: f64) -> Result<f64> {
    let s = support_for_y(y);
    if lambda <= s.lambda_minus {
        return Ok(0.0);
    }
    if lambda >= s.lambda_plus {
        return Ok(1.0);
    }
    let t = t_of_lambda(lambda, y);
    integrate(|x| t_density_y(x, y), 0.0, t, 1e-12)
}

// 15-point Kronrod nodes and weights with the embedded 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> (f64, f64) {
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let pair = f(c - x) + f(c + x);
        kron += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
    depth: u32,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

const MAX_DEPTH: u32 = 60;
const MAX_SEGMENTS: usize = 5000;

/// Globally adaptive Gauss–Kronrod quadrature with absolute tolerance `tol`.
///
/// The segment with the largest error estimate is bisected until the summed
/// estimate falls below `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if !(lo <= hi) {
        return Err(invalid(format!("integration bounds out of order: [{lo}, {hi}]")));
    }
    if lo == hi {
        return Ok(0.0);
    }
    let (value, error) = gk15(&f, lo, hi);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { lo, hi, value, error, depth: 0 });
    let mut total_err = error;
    let mut frozen_value = 0.0;
    let mut frozen_err = 0.0;

    loop {
        if total_err + frozen_err <= tol {
            // confirm with a fresh sum before stopping
            total_err = heap.iter().map(|s| s.error).sum();
            if total_err + frozen_err <= tol {
                break;
            }
        }
        if heap.len() >= MAX_SEGMENTS {
            break;
        }
        let Some(seg) = heap.pop() else { break };
        if seg.depth >= MAX_DEPTH {
            frozen_value += seg.value;
            frozen_err += seg.error;
            total_err -= seg.error;
            continue;
        }
        let mid = 0.5 * (seg.lo + seg.hi);
        let (v1, e1) = gk15(&f, seg.lo, mid);
        let (v2, e2) = gk15(&f, mid, seg.hi);
        total_err += e1 + e2 - seg.error;
        heap.push(Segment { lo: seg.lo, hi: mid, value: v1, error: e1, depth: seg.depth + 1 });
        heap.push(Segment { lo: mid, hi: seg.hi, value: v2, error: e2, depth: seg.depth + 1 });
    }

    let value: f64 = heap.iter().map(|s| s.value).sum::<f64>() + frozen_value;
    let err: f64 = heap.iter().map(|s| s.error).sum::<f64>() + frozen_err;
    if !value.is_finite() {
        return Err(Error::Numeric {
            message: "integrand produced a non-finite value".into(),
            estimate: value,
        });
    }
    if err > tol {
        return Err(Error::Numeric {
            message: format!("quadrature error estimate {err:e} exceeds tolerance {tol:e}"),
            estimate: value,
        });
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn support_values() {
        let s = mp_support(&SystemDims::new(4, 4).unwrap());
        assert_eq!((s.lambda_minus, s.lambda_plus), (0.0, 4.0));
        let s = mp_support(&SystemDims::new(4, 1).unwrap());
        assert!((s.lambda_minus - 1.0).abs() < 1e-15 && (s.lambda_plus - 9.0).abs() < 1e-14);
        let s = support_for_y(0.5);
        let q = 2f64.sqrt();
        assert!((s.lambda_minus - (q - 1.0).powi(2)).abs() < 1e-15);
        assert!((s.lambda_plus - (q + 1.0).powi(2)).abs() < 1e-14);
    }

    #[test]
    fn dims_invariants() {
        let d = SystemDims::new(2, 4).unwrap();
        assert_eq!((d.m, d.n), (2, 4));
        assert!((d.y * d.tau - 1.0).abs() < 1e-15);
        assert!((d.r * d.r - d.y).abs() < 1e-15);
        assert!(SystemDims::new(0, 3).is_err());
    }

    #[test]
    fn lambda_of_t_values() {
        assert_eq!(lambda_of_t_y(0.0, 1.0).unwrap(), 0.0);
        assert_eq!(lambda_of_t_y(PI, 1.0).unwrap(), 4.0);
        assert!((lambda_of_t_y(PI / 2.0, 0.5).unwrap() - 3.0).abs() < 1e-15);
        assert!(lambda_of_t_y(-0.1, 0.5).is_err());
        assert!(lambda_of_t_y(3.2, 0.5).is_err());
    }

    #[test]
    fn angle_endpoints_match_support() {
        for y in [0.1, 0.25, 0.5, 0.75, 1.0] {
            let s = support_for_y(y);
            assert!((lambda_at(0.0, y) - s.lambda_minus).abs() < 1e-12);
            assert!((lambda_at(PI, y) - s.lambda_plus).abs() < 1e-12);
        }
    }

    #[test]
    fn t_density_values() {
        assert!((t_density_y(0.0, 1.0) - 2.0 / PI).abs() < 1e-15);
        assert!(t_density_y(PI, 0.5).abs() < 1e-15);
        for y in [0.25, 0.5, 1.0] {
            let total = integrate(|t| t_density_y(t, y), 0.0, PI, 1e-12).unwrap();
            assert!((total - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn density_normalizes() {
        for y in [0.25, 0.5, 0.75, 1.0] {
            let s = support_for_y(y);
            let total = integrate(|l| mp_density_y(l, y), s.lambda_minus, s.lambda_plus, 1e-10).unwrap();
            assert!((total - 1.0).abs() < 1e-8, "y={y} total={total}");
            assert_eq!(mp_density_y(s.lambda_plus + 0.1, y), 0.0);
        }
    }

    #[test]
    fn density_matches_angle_parameterization() {
        // f(λ) dλ = f_T(t) dt with dλ/dt = 2 sin t / √y
        let y = 1.0;
        let t = t_of_lambda(2.0, y);
        let jac = 2.0 * t.sin() / y.sqrt();
        assert!((mp_density_y(2.0, y) * jac - t_density_y(t, y)).abs() < 1e-14);
        assert!((mp_density_y(2.0, y) - 1.0 / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn quadrature_basics() {
        assert!((integrate(f64::sin, 0.0, PI, 1e-13).unwrap() - 2.0).abs() < 1e-12);
        assert!((integrate(|x| x * x, 0.0, 1.0, 1e-13).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(integrate(|x| x, 1.0, 1.0, 1e-10).unwrap(), 0.0);
        assert!(integrate(|x| x, 1.0, 0.0, 1e-10).is_err());
    }

    #[test]
    fn quadrature_edge_singularity() {
        let v = integrate(|x| 1.0 / x.sqrt(), 0.0, 1.0, 1e-10).unwrap();
        assert!((v - 2.0).abs() < 1e-9);
    }

    #[test]
    fn quadrature_failure_carries_estimate() {
        match integrate(|x| 1.0 / x, 0.0, 1.0, 1e-10) {
            Err(Error::Numeric { .. }) => {}
            other => panic!("expected numeric failure, got {other:?}"),
        }
    }

    #[test]
    fn cdf_endpoints() {
        assert_eq!(mp_cdf(-1.0, 0.5).unwrap(), 0.0);
        assert_eq!(mp_cdf(100.0, 0.5).unwrap(), 1.0);
        let mid = mp_cdf(1.0, 1.0).unwrap();
        assert!(mid > 0.0 && mid < 1.0);
    }
}
