//! Large-system power on/off beamforming: on-beam fraction, information
//! rate, its derivative in the threshold angle, and the optimal threshold.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::special_fn::{dilog, sr1, theta, AuxQuantities};
use crate::spectra::{check_y, integrate, lambda_at, t_density_y};

/// Below this on-beam fraction the rate formulas are treated as degenerate.
pub const SBAR_FLOOR: f64 = 1e-12;

const IMAG_RESIDUE: f64 = 1e-9;

/// An operating point of the on/off strategy in normalized units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignPoint {
    pub a: f64,
    pub sbar: f64,
    pub pbar_on: f64,
    pub rate: f64,
    pub rho: f64,
    pub y: f64,
}

impl DesignPoint {
    /// Eigenvalue threshold `λ(a)` in the normalization of `W`.
    pub fn kappa(&self) -> f64 {
        lambda_at(self.a, self.y)
    }
}

fn check_angle(a: f64) -> Result<()> {
    if (0.0..=PI).contains(&a) {
        Ok(())
    } else {
        Err(invalid(format!("threshold angle {a} outside [0, pi]")))
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("rho must be positive and finite, got {rho}")))
    }
}

/// Real part of `z`, refusing values whose imaginary residue is not roundoff.
pub(crate) fn real_part(z: Complex64, what: &str) -> Result<f64> {
    if z.im.abs() > IMAG_RESIDUE * (1.0 + z.re.abs()) {
        return Err(Error::Numeric {
            message: format!("{what} has imaginary residue {:e}", z.im),
            estimate: z.re,
        });
    }
    Ok(z.re)
}

/// Limiting fraction of eigenvalues above `λ(a)`.
pub fn sbar_infinity(a: f64, y: f64) -> f64 {
    let r = y.sqrt();
    let v = if y == 1.0 {
        (PI - a - a.sin()) / PI
    } else {
        (PI - a - a.sin() / r + (1.0 - y) / y * theta(r, a)) / PI
    };
    v.clamp(0.0, 1.0)
}

/// Normalized information rate with all eigenvalues above `λ(a)` switched on
/// at power `ρ/s̄`.
pub fn info_rate_infinity(a: f64, y: f64, rho: f64) -> Result<f64> {
    check_y(y)?;
    check_angle(a)?;
    check_rho(rho)?;
    let sbar = sbar_infinity(a, y);
    if sbar < SBAR_FLOOR {
        return Err(Error::Degenerate(format!(
            "on-beam fraction {sbar:e} at a = {a} is too small"
        )));
    }
    let x = AuxQuantities::new(y, sbar, rho, a)?;
    let (r, u) = (x.r, x.u);
    let (sa, ca) = a.sin_cos();

    let j0 = (sa * (1.0 - (1.0 + u * u - 2.0 * u * ca).ln())
        - u * (PI - a)
        - (1.0 - u * u) * x.theta_u_over_u(a))
        / (PI * r);

    let e = Complex64::from_polar(1.0, a);
    let li = Complex64::i() * (dilog(u * e.conj())? - dilog(u * e)?);
    let j1 = (1.0 + y) / (2.0 * PI * y) * real_part(li, "dilogarithm combination")?;

    let mut rate = (x.w.ln() - x.alpha.ln()) * sbar + j0 + j1;
    if y < 1.0 {
        let s = Complex64::i() * (sr1(u, r, a)? - sr1(u, r, -a)?);
        let s = real_part(s, "Sr1 combination")?;
        let j2 = (1.0 - y) / (2.0 * PI * y)
            * (-2.0 * (1.0 - u * r).ln() * (PI - a - x.theta_r) + s);
        rate += j2;
    }
    Ok(rate.max(0.0))
}

/// Derivative of [`info_rate_infinity`] with respect to `a`.
pub fn dinfo_da(a: f64, y: f64, rho: f64) -> Result<f64> {
    check_y(y)?;
    check_rho(rho)?;
    if !(a > 0.0 && a < PI) {
        return Err(invalid(format!("derivative needs 0 < a < pi, got {a}")));
    }
    let sbar = sbar_infinity(a, y);
    if sbar < SBAR_FLOOR {
        return Err(Error::Degenerate(format!(
            "on-beam fraction {sbar:e} at a = {a} is too small"
        )));
    }
    let x = AuxQuantities::new(y, sbar, rho, a)?;
    let (r, u, w) = (x.r, x.u, x.w);
    let ca = a.cos();
    let tu = x.theta_u_over_u(a);

    let (j3, id) = if y == 1.0 {
        let j3 = 1.0 + ca;
        let id = (PI - a) / (PI * w * (1.0 - u)) - (1.0 + u) * tu / (PI * w * (1.0 - u));
        (j3, id)
    } else {
        let j3 = (1.0 - (2.0 * a).cos()) / (1.0 + y - 2.0 * r * ca);
        let id = (PI - a - (1.0 - u * u) / (r - u) * tu + (1.0 - y) / (r * (r - u)) * x.theta_r)
            / (PI * w * (1.0 - u * r));
        (j3, id)
    };
    let log_term = (1.0 + rho / (sbar * y) * (1.0 + y - 2.0 * r * ca)).ln();
    Ok(j3 / PI * (1.0 - log_term - y / rho * id))
}

/// Smallest angle the solver evaluates, and the smallest on-beam fraction
/// it will trade rate against.
const A_MIN: f64 = 1e-6;
const SOLVER_SBAR_MIN: f64 = 1e-10;
const SCAN_POINTS: usize = 64;
const A_TOL: f64 = 1e-10;

/// Angle at which `sbar_infinity(a, y) = target`, by bisection.
pub(crate) fn invert_sbar_unchecked(target: f64, y: f64) -> f64 {
    if target >= 1.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, PI);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sbar_infinity(mid, y) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn design_point(a: f64, y: f64, rho: f64) -> Result<DesignPoint> {
    let sbar = sbar_infinity(a, y);
    Ok(DesignPoint {
        a,
        sbar,
        pbar_on: rho / sbar,
        rate: info_rate_infinity(a, y, rho)?,
        rho,
        y,
    })
}

/// Threshold angle maximizing the large-system rate at SNR `rho`.
///
/// The derivative changes sign at most once, from positive to negative, so
/// a coarse sign scan followed by bisection finds the root. When the
/// derivative is already non-positive at the left edge every beam stays on.
pub fn solve_optimal_a(y: f64, rho: f64) -> Result<DesignPoint> {
    check_y(y)?;
    check_rho(rho)?;
    let hi = (PI - 1e-6).min(invert_sbar_unchecked(SOLVER_SBAR_MIN, y));
    let g = |a: f64| dinfo_da(a, y, rho);

    if g(A_MIN)? <= 0.0 {
        return design_point(0.0, y, rho);
    }
    let step = (hi - A_MIN) / (SCAN_POINTS - 1) as f64;
    let mut left = A_MIN;
    let mut right = None;
    for i in 1..SCAN_POINTS {
        let a = if i == SCAN_POINTS - 1 { hi } else { A_MIN + step * i as f64 };
        if g(a)? <= 0.0 {
            right = Some(a);
            break;
        }
        left = a;
    }
    let Some(mut right) = right else {
        // the root sits where the on-beam fraction is negligible
        return design_point(hi, y, rho);
    };
    while right - left > A_TOL {
        let mid = 0.5 * (left + right);
        if g(mid)? > 0.0 {
            left = mid;
        } else {
            right = mid;
        }
    }
    design_point(0.5 * (left + right), y, rho)
}

/// Optimal design at each SNR of a strictly increasing grid.
pub fn sweep_rho(y: f64, rho_grid: &[f64]) -> Result<Vec<DesignPoint>> {
    check_y(y)?;
    if rho_grid.iter().any(|&r| !(r > 0.0)) {
        return Err(invalid("SNR grid must be positive"));
    }
    if rho_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("SNR grid must be strictly increasing"));
    }
    rho_grid.par_iter().map(|&rho| solve_optimal_a(y, rho)).collect()
}

/// Reference value of [`sbar_infinity`] by quadrature.
pub fn sbar_quadrature(a: f64, y: f64, tol: f64) -> Result<f64> {
    check_y(y)?;
    check_angle(a)?;
    integrate(|t| t_density_y(t, y), a, PI, tol)
}

/// Reference value of [`info_rate_infinity`] by quadrature.
pub fn info_rate_quadrature(a: f64, y: f64, rho: f64, tol: f64) -> Result<f64> {
    check_y(y)?;
    check_angle(a)?;
    check_rho(rho)?;
    let sbar = sbar_quadrature(a, y, tol * 1e-2)?;
    if sbar < SBAR_FLOOR {
        return Err(Error::Degenerate(format!("on-beam fraction {sbar:e} too small")));
    }
    let pbar = rho / sbar;
    integrate(
        |t| (1.0 + pbar * lambda_at(t, y)).ln() * t_density_y(t, y),
        a,
        PI,
        tol,
    )
}
