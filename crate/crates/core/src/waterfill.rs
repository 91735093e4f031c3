//! Large-system water-filling with channel knowledge at both ends.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::onoff::{real_part, sbar_infinity};
use crate::special_fn::{dilog, sr2, theta};
use crate::spectra::{check_y, integrate, lambda_at, support_for_y, t_density_y};

/// Smallest threshold angle used on the square-system branch.
const A_FLOOR_SQUARE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaterfillSolution {
    pub nu: f64,
    pub a: f64,
    pub rho: f64,
    pub capacity: f64,
}

fn check_nu(nu: f64, y: f64) -> Result<()> {
    check_y(y)?;
    let edge = 1.0 / support_for_y(y).lambda_plus;
    if !(nu > edge) || !nu.is_finite() {
        return Err(Error::Infeasible(format!(
            "water level {nu} is not above 1/lambda_plus = {edge}"
        )));
    }
    Ok(())
}

/// Threshold angle of the weakest eigenchannel still above water.
pub fn a_of_nu(nu: f64, y: f64) -> Result<f64> {
    check_nu(nu, y)?;
    let s = support_for_y(y);
    if y < 1.0 && 1.0 / nu < s.lambda_minus {
        return Ok(0.0);
    }
    let c = (1.0 + y - y / nu) / (2.0 * y.sqrt());
    let a = c.clamp(-1.0, 1.0).acos();
    Ok(if y == 1.0 { a.max(A_FLOOR_SQUARE) } else { a })
}

/// Average normalized power spent at water level `nu`.
pub fn power_of_nu(nu: f64, y: f64) -> Result<f64> {
    let a = a_of_nu(nu, y)?;
    let sbar = sbar_infinity(a, y);
    let rho = if y == 1.0 {
        nu * sbar + (PI - a - 2.0 / (a / 2.0).tan()) / (2.0 * PI)
    } else {
        let r = y.sqrt();
        let e = Complex64::from_polar(1.0, a);
        let one = Complex64::new(1.0, 0.0);
        let z = Complex64::i() * 0.5 * (one / (one - r * e.conj()) - one / (one - r * e));
        let z = real_part(z, "power correction")?;
        let j4 = (y / (1.0 - y) * (PI - a) - (1.0 + y) / (1.0 - y) * theta(r, a) + z) / PI;
        nu * sbar - j4
    };
    Ok(rho.max(0.0))
}

/// Normalized capacity at water level `nu`.
pub fn capacity_of_nu(nu: f64, y: f64) -> Result<f64> {
    let a = a_of_nu(nu, y)?;
    let sbar = sbar_infinity(a, y);
    let r = y.sqrt();
    let (sa, ca) = a.sin_cos();
    let th = theta(r, a);
    let i = Complex64::i();
    let e = Complex64::from_polar(1.0, a);

    let j5 = (sa * (1.0 - (1.0 + y - 2.0 * r * ca).ln()) - r * (PI - a) - (1.0 / r - r) * th)
        / (PI * r);
    let li = i * (dilog(r * e.conj())? - dilog(r * e)?);
    let j6 = (1.0 + y) / (2.0 * PI * y) * real_part(li, "dilogarithm combination")?;

    let mut cap = (nu / y).ln() * sbar + j5 + j6;
    if y < 1.0 {
        let one = Complex64::new(1.0, 0.0);
        let lm = (one - r * e.conj()).ln();
        let lp = (one - r * e).ln();
        let sq = real_part(i * 0.5 * (lm * lm - lp * lp), "squared-log combination")?;
        let sr = real_part(i * (sr2(r, -a)? - sr2(r, a)?), "Sr2 combination")?;
        let j7 = -(1.0 - y) / (2.0 * PI * y)
            * (sq + 2.0 * (1.0 - y).ln() * (PI - a - th) + sr);
        cap += j7;
    }
    Ok(cap.max(0.0))
}

/// Water level meeting the average power constraint `rho`.
pub fn solve_nu(rho: f64, y: f64) -> Result<WaterfillSolution> {
    check_y(y)?;
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(invalid(format!("rho must be positive and finite, got {rho}")));
    }
    let edge = 1.0 / support_for_y(y).lambda_plus;
    let mut lo = edge * (1.0 + 1e-12);
    let mut hi = edge.max(1.0);
    while power_of_nu(hi, y)? <= rho {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Numeric {
                message: "water level search diverged".into(),
                estimate: hi,
            });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if power_of_nu(mid, y)? < rho {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let nu = 0.5 * (lo + hi);
    Ok(WaterfillSolution {
        nu,
        a: a_of_nu(nu, y)?,
        rho: power_of_nu(nu, y)?,
        capacity: capacity_of_nu(nu, y)?,
    })
}

/// Reference value of [`power_of_nu`] by quadrature.
pub fn power_quadrature(nu: f64, y: f64, tol: f64) -> Result<f64> {
    let a = a_of_nu(nu, y)?;
    integrate(|t| (nu - 1.0 / lambda_at(t, y)) * t_density_y(t, y), a, PI, tol)
}

/// Reference value of [`capacity_of_nu`] by quadrature.
pub fn capacity_quadrature(nu: f64, y: f64, tol: f64) -> Result<f64> {
    let a = a_of_nu(nu, y)?;
    integrate(|t| (nu * lambda_at(t, y)).ln() * t_density_y(t, y), a, PI, tol)
}
