//! Dilogarithm, the double series `Sr1`/`Sr2`, Gamma, and the auxiliary
//! constants shared by the on/off closed forms.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

const PI2_6: f64 = PI * PI / 6.0;

// B_{2k} for k = 1..15
const BERNOULLI_EVEN: [f64; 15] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
    854513.0 / 138.0,
    -236364091.0 / 2730.0,
    8553103.0 / 6.0,
    -23749461029.0 / 870.0,
    8615841276005.0 / 14322.0,
];

/// Dilogarithm `Li2(z) = Σ zⁿ/n²` on the closed unit disk.
pub fn dilog(z: Complex64) -> Result<Complex64> {
    if !(z.norm() <= 1.0 + 1e-12) {
        return Err(Error::Domain(format!("dilog argument |z| = {} exceeds 1", z.norm())));
    }
    Ok(dilog_unchecked(z))
}

fn dilog_unchecked(z: Complex64) -> Complex64 {
    if z == Complex64::new(0.0, 0.0) {
        return z;
    }
    if z == Complex64::new(1.0, 0.0) {
        return Complex64::new(PI2_6, 0.0);
    }
    if z.re > 0.5 {
        // Li2(z) = π²/6 − ln z ln(1−z) − Li2(1−z)
        let w = Complex64::new(1.0, 0.0) - z;
        return Complex64::new(PI2_6, 0.0) - z.ln() * w.ln() - bernoulli_series(w);
    }
    bernoulli_series(z)
}

// Li2(z) = Σ B_n uⁿ⁺¹/(n+1)! with u = −ln(1−z); needs |u| well inside 2π.
fn bernoulli_series(z: Complex64) -> Complex64 {
    let u = -(Complex64::new(1.0, 0.0) - z).ln();
    let u2 = u * u;
    let mut sum = u - u2 * 0.25;
    let mut power = u; // u^{2k+1}
    let mut fact = 1.0; // (2k+1)!
    for (k, b) in BERNOULLI_EVEN.iter().enumerate() {
        let n = 2 * (k + 1);
        power *= u2;
        fact *= (n as f64) * (n as f64 + 1.0);
        let term = power * (b / fact);
        sum += term;
        if term.norm() < 1e-17 * sum.norm() {
            break;
        }
    }
    sum
}

const SERIES_TINY: f64 = 1e-14;
const SERIES_PATIENCE: usize = 5;
const SERIES_MAX_TERMS: usize = 50_000_000;

// Outer terms needed so that r^l/l · bound < 1e-18.
fn outer_length(r: f64, bound: f64) -> Result<usize> {
    let mut l = 1usize;
    let mut rl = r;
    while rl / l as f64 * bound > 1e-18 {
        l += 1;
        rl *= r;
        if l > SERIES_MAX_TERMS {
            return Err(Error::Numeric {
                message: format!("double series with r = {r} needs too many terms"),
                estimate: f64::NAN,
            });
        }
    }
    Ok(l)
}

// T(l) = Σ_{j≥0} x^j/(l+j) for l = 1..=len, via T(l) = 1/l + x T(l+1).
fn tail_sums(x: f64, len: usize) -> Vec<f64> {
    let mut t = vec![0.0; len + 2];
    // seed beyond the end by direct summation
    let top = len + 1;
    let mut seed = 0.0;
    let mut xj = 1.0;
    let mut j = 0usize;
    loop {
        let term = xj / (top + j) as f64;
        seed += term;
        if term < 1e-18 * seed || xj == 0.0 {
            break;
        }
        xj *= x;
        j += 1;
    }
    t[top] = seed;
    for l in (1..top).rev() {
        t[l] = 1.0 / l as f64 + x * t[l + 1];
    }
    t
}

fn sum_outer(r: f64, t: f64, len: usize, inner: impl Fn(usize) -> f64) -> Complex64 {
    let mut sum = Complex64::new(0.0, 0.0);
    let mut rl = 1.0;
    let mut quiet = 0;
    for l in 1..=len {
        rl *= r;
        let phase = Complex64::from_polar(1.0, l as f64 * t);
        let term = phase * (rl / l as f64 * inner(l));
        sum += term;
        if term.norm() < SERIES_TINY * (sum.norm() + 1.0) {
            quiet += 1;
            if quiet >= SERIES_PATIENCE {
                break;
            }
        } else {
            quiet = 0;
        }
    }
    sum
}

/// The double series
/// `Σ_l (rˡ e^{ilt}/l)(Σ_{k<l} (u/r)ᵏ/k + r^{−2l} Σ_{k≥l} r^{2k}(u/r)ᵏ/k)`.
///
/// The second inner sum is rewritten as `(u/r)ˡ Σ_j (ur)ʲ/(l+j)` so that no
/// negative power of `r` is formed.
pub fn sr1(u: f64, r: f64, t: f64) -> Result<Complex64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::Domain(format!("sr1 needs 0 < r < 1, got r = {r}")));
    }
    if !(u.abs() < 1.0 && u.abs() < r) {
        return Err(Error::Domain(format!("sr1 needs |u| < r < 1, got u = {u}, r = {r}")));
    }
    if u == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let q = u / r;
    let x = u * r;
    let bound = -(1.0 - q.abs()).ln() + 1.0 / (1.0 - x.abs());
    let len = outer_length(r, bound)?;
    let tails = tail_sums(x, len);
    // partial[l] = Σ_{k<l} q^k/k ; qpow[l] = q^l
    let mut partial = vec![0.0; len + 1];
    let mut qpow = vec![1.0; len + 1];
    for l in 1..=len {
        qpow[l] = qpow[l - 1] * q;
        if l >= 2 {
            partial[l] = partial[l - 1] + qpow[l - 1] / (l - 1) as f64;
        }
    }
    Ok(sum_outer(r, t, len, |l| partial[l] + qpow[l] * tails[l]))
}

/// The double series `Σ_l (rˡ e^{ilt}/l) r^{−2l} Σ_{k≥l} r^{2k}/k`.
pub fn sr2(r: f64, t: f64) -> Result<Complex64> {
    if !(r.abs() < 1.0) {
        return Err(Error::Domain(format!("sr2 needs |r| < 1, got r = {r}")));
    }
    if r == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let x = r * r;
    let bound = 1.0 / (1.0 - x);
    let len = outer_length(r.abs(), bound)?;
    let tails = tail_sums(x, len);
    Ok(sum_outer(r, t, len, |l| tails[l]))
}

/// Gamma function, Lanczos approximation (g = 7) with reflection.
pub fn gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma(1.0 - x));
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

/// Constants of the angular change of variables for one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxQuantities {
    pub r: f64,
    pub alpha: f64,
    pub w: f64,
    pub u: f64,
    pub theta_r: f64,
    pub theta_u: f64,
}

impl AuxQuantities {
    pub fn new(y: f64, sbar: f64, rho: f64, a: f64) -> Result<Self> {
        if !(y > 0.0 && y <= 1.0) {
            return Err(invalid(format!("y must lie in (0, 1], got {y}")));
        }
        if !(0.0..=PI).contains(&a) {
            return Err(invalid(format!("threshold angle {a} outside [0, pi]")));
        }
        if !(sbar > 0.0) || !(rho > 0.0) {
            return Err(Error::Degenerate(format!(
                "alpha undefined for sbar = {sbar}, rho = {rho}"
            )));
        }
        let r = y.sqrt();
        let alpha = sbar * y / rho;
        let b = 1.0 + y + alpha;
        // b² − 4y = (b − 2r)(b + 2r) avoids cancellation when α is small
        let disc = ((b - 2.0 * r) * (b + 2.0 * r)).max(0.0).sqrt();
        let w = 0.5 * (b + disc);
        let u = r / w;
        Ok(Self {
            r,
            alpha,
            w,
            u,
            theta_r: theta(r, a),
            theta_u: theta(u, a),
        })
    }

    /// `θ_u / u`, with the small-`u` limit handled.
    pub fn theta_u_over_u(&self, a: f64) -> f64 {
        theta_over(self.u, a)
    }
}

/// `atan(x sin a / (1 − x cos a))` on the principal branch for `0 ≤ x ≤ 1`.
pub(crate) fn theta(x: f64, a: f64) -> f64 {
    (x * a.sin()).atan2(1.0 - x * a.cos())
}

pub(crate) fn theta_over(x: f64, a: f64) -> f64 {
    if x < 1e-8 {
        // θ ≈ x sin a + x² sin a cos a
        a.sin() * (1.0 + x * a.cos())
    } else {
        theta(x, a) / x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    // plain power series, only for |z| comfortably below 1
    fn dilog_direct(z: Complex64) -> Complex64 {
        let mut s = c(0.0, 0.0);
        let mut p = z;
        for n in 1..4000 {
            s += p / (n as f64 * n as f64);
            p *= z;
        }
        s
    }

    #[test]
    fn dilog_special_values() {
        assert_eq!(dilog(c(0.0, 0.0)).unwrap(), c(0.0, 0.0));
        assert!((dilog(c(1.0, 0.0)).unwrap() - c(PI2_6, 0.0)).norm() < 1e-12);
        assert!((dilog(c(-1.0, 0.0)).unwrap() - c(-PI * PI / 12.0, 0.0)).norm() < 1e-12);
        // Li2(1/2) = π²/12 − ln²2/2
        let half = PI * PI / 12.0 - 0.5 * 2f64.ln().powi(2);
        assert!((dilog(c(0.5, 0.0)).unwrap().re - half).abs() < 1e-14);
        // Li2(i) = −π²/48 + i G
        let catalan = 0.915_965_594_177_219;
        assert!((dilog(c(0.0, 1.0)).unwrap() - c(-PI * PI / 48.0, catalan)).norm() < 1e-13);
    }

    #[test]
    fn dilog_reflection_identity() {
        let z = c(0.3, 0.0);
        let w = c(0.7, 0.0);
        let lhs = dilog(z).unwrap() + dilog(w).unwrap();
        let rhs = c(PI2_6, 0.0) - z.ln() * w.ln();
        assert!((lhs - rhs).norm() < 1e-10);
    }

    #[test]
    fn dilog_matches_power_series_inside_disk() {
        for &(re, im) in &[(0.3, 0.4), (-0.6, 0.2), (0.55, -0.5), (0.1, 0.85), (-0.2, -0.7)] {
            let z = c(re, im);
            assert!((dilog(z).unwrap() - dilog_direct(z)).norm() < 1e-13, "z={z}");
        }
    }

    #[test]
    fn dilog_unit_circle_real_part() {
        // Re Li2(e^{iθ}) = π²/6 − θ(2π−θ)/4
        for th in [0.1, 0.7, 1.5, 2.5, 3.1] {
            let v = dilog(Complex64::from_polar(1.0, th)).unwrap();
            let want = PI2_6 - th * (2.0 * PI - th) / 4.0;
            assert!((v.re - want).abs() < 1e-13, "theta={th}");
        }
    }

    #[test]
    fn dilog_domain() {
        assert!(matches!(dilog(c(1.1, 0.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn sr_symmetry_and_zero() {
        assert_eq!(sr1(0.0, 0.7, 1.0).unwrap(), c(0.0, 0.0));
        let a = sr1(0.3, 0.7, 1.2).unwrap();
        let b = sr1(0.3, 0.7, -1.2).unwrap();
        assert!((a - b.conj()).norm() < 1e-14);
        let a = sr2(0.6, 0.9).unwrap();
        let b = sr2(0.6, -0.9).unwrap();
        assert!((a - b.conj()).norm() < 1e-14);
        // leading term is l = k = 1, which is r e^{it}
        let small = sr2(1e-4, 1.0).unwrap();
        assert!((small - Complex64::from_polar(1e-4, 1.0)).norm() < 1e-8);
    }

    #[test]
    fn sr_domain() {
        assert!(matches!(sr1(0.8, 0.7, 0.0), Err(Error::Domain(_))));
        assert!(matches!(sr1(0.3, 1.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(sr2(1.0, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn sr2_at_zero_angle_closed_form() {
        // Σ_l rˡ/l Σ_j r^{2j}/(l+j) = Σ_k r^{2k}/k Σ_{l≤k} r^{-l}/l, checked by direct sum
        let r: f64 = 0.5;
        let mut want = 0.0;
        for k in 1..200 {
            let mut inner = 0.0;
            for l in 1..=k {
                inner += r.powi(k as i32 * 2 - l as i32) / (l as f64);
            }
            want += inner / k as f64;
        }
        assert!((sr2(r, 0.0).unwrap().re - want).abs() < 1e-13);
    }

    #[test]
    fn gamma_values() {
        assert!((gamma(1.0) - 1.0).abs() < 1e-13);
        assert!((gamma(5.0) - 24.0).abs() < 1e-11);
        assert!((gamma(0.5) - PI.sqrt()).abs() < 1e-13);
        assert!((gamma(1.0 / 3.0) - 2.678_938_534_707_747_6).abs() < 1e-12);
        assert!((gamma(0.25) - 3.625_609_908_221_908_3).abs() < 1e-12);
    }

    #[test]
    fn aux_hand_values() {
        let x = AuxQuantities::new(1.0, 1.0, 1.0, PI / 2.0).unwrap();
        assert!((x.alpha - 1.0).abs() < 1e-15);
        assert!((x.w - 0.5 * (3.0 + 5f64.sqrt())).abs() < 1e-14);
        assert!((x.u - 0.5 * (3.0 - 5f64.sqrt())).abs() < 1e-14);
        assert!((x.theta_r - PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn aux_factorization_identity() {
        for &(y, sbar, rho, a) in &[(1.0, 1.0, 1.0, 0.5), (0.5, 0.3, 10.0, 1.1), (0.25, 0.9, 0.01, 2.0)] {
            let x = AuxQuantities::new(y, sbar, rho, a).unwrap();
            for t in [0.0, PI / 2.0, PI] {
                let lhs = x.w * (1.0 + x.u * x.u - 2.0 * x.u * f64::cos(t));
                let rhs = 1.0 + y + x.alpha - 2.0 * y.sqrt() * f64::cos(t);
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn aux_degenerate() {
        assert!(matches!(AuxQuantities::new(0.5, 0.0, 1.0, 1.0), Err(Error::Degenerate(_))));
        assert!(matches!(AuxQuantities::new(0.5, 0.5, 0.0, 1.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn theta_over_small_limit() {
        let a = 1.3;
        let direct = theta(1e-7, a) / 1e-7;
        assert!((theta_over(1e-9, a) - direct).abs() < 1e-6);
        assert!((theta_over(1e-7, a) - direct).abs() < 1e-15);
    }
}
