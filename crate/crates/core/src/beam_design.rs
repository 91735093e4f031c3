//! Turning the large-system optimum into a strategy for a concrete antenna
//! count.

use crate::error::{invalid, Result};
use crate::onoff::{info_rate_infinity, invert_sbar_unchecked, sbar_infinity, solve_optimal_a};
use crate::spectra::{check_y, lambda_at, SystemDims};

/// On-beam fraction below which the transmitter is treated as off.
pub const OFF_SBAR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyKind {
    /// Always transmit on the `s` strongest eigenchannels.
    ConstantBeams,
    /// Transmit on the strongest eigenchannel only when it exceeds `kappa`.
    GatedSingleBeam,
    Off,
}

/// A complete transmission strategy.
///
/// `p_on` is the physical per-beam power; the normalized on-power used with
/// eigenvalues of `W` is `m · p_on` (see [`StrategySpec::pbar_on`]).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    pub s: usize,
    pub p_on: f64,
    /// Eigenvalue threshold on `W`; zero unless gated.
    pub kappa: f64,
    /// Large-system rate prediction in nats per dimension.
    pub predicted_rate: f64,
    pub m: usize,
}

impl StrategySpec {
    pub fn pbar_on(&self) -> f64 {
        self.m as f64 * self.p_on
    }

    pub fn constant(dims: &SystemDims, s: usize, rho: f64) -> Result<Self> {
        if s == 0 || s > dims.m {
            return Err(invalid(format!("beam count {s} outside 1..={}", dims.m)));
        }
        if !(rho > 0.0) {
            return Err(invalid(format!("rho must be positive, got {rho}")));
        }
        let a = invert_sbar_unchecked(s as f64 / dims.m as f64, dims.y);
        Ok(Self {
            kind: StrategyKind::ConstantBeams,
            s,
            p_on: rho / s as f64,
            kappa: 0.0,
            predicted_rate: info_rate_infinity(a, dims.y, rho)?,
            m: dims.m,
        })
    }
}

/// Angle at which the limiting on-beam fraction equals `target_sbar`.
pub fn invert_sbar(target_sbar: f64, y: f64) -> Result<f64> {
    check_y(y)?;
    if !(target_sbar > 0.0 && target_sbar <= 1.0) {
        return Err(invalid(format!("on-beam fraction {target_sbar} outside (0, 1]")));
    }
    Ok(invert_sbar_unchecked(target_sbar, y))
}

/// Finite-antenna strategy from the large-system optimum.
///
/// With `s̄∞ ≥ 1/m` the two integer beam counts adjacent to `m s̄∞` are
/// compared by their predicted rate. Below that a single gated beam is used
/// with the asymptotic threshold.
pub fn finite_design(dims: &SystemDims, rho: f64) -> Result<StrategySpec> {
    let opt = solve_optimal_a(dims.y, rho)?;
    let m = dims.m as f64;
    if opt.sbar < OFF_SBAR {
        return Ok(StrategySpec {
            kind: StrategyKind::Off,
            s: 0,
            p_on: 0.0,
            kappa: f64::INFINITY,
            predicted_rate: 0.0,
            m: dims.m,
        });
    }
    if opt.sbar < 1.0 / m {
        return Ok(StrategySpec {
            kind: StrategyKind::GatedSingleBeam,
            s: 1,
            p_on: rho / (m * opt.sbar),
            kappa: lambda_at(opt.a, dims.y),
            predicted_rate: opt.rate,
            m: dims.m,
        });
    }
    let ms = m * opt.sbar;
    // guard against m·s̄ landing a hair off an integer
    let up = ((ms - 1e-9).ceil() as usize).clamp(1, dims.m);
    let down = ((ms + 1e-9).floor() as usize).clamp(1, dims.m);
    let first = StrategySpec::constant(dims, up, rho)?;
    if down == up {
        return Ok(first);
    }
    let second = StrategySpec::constant(dims, down, rho)?;
    Ok(if second.predicted_rate > first.predicted_rate { second } else { first })
}

/// Best constant beam count over every `s ∈ 1..=m`, by predicted rate.
pub fn full_scan_design(dims: &SystemDims, rho: f64) -> Result<StrategySpec> {
    let mut best: Option<StrategySpec> = None;
    for s in 1..=dims.m {
        let cand = StrategySpec::constant(dims, s, rho)?;
        if best.is_none_or(|b| cand.predicted_rate > b.predicted_rate) {
            best = Some(cand);
        }
    }
    Ok(best.expect("m is at least 1"))
}

/// Normalized on-beam fraction realized by a strategy in the large system.
pub fn strategy_sbar(spec: &StrategySpec, y: f64) -> f64 {
    match spec.kind {
        StrategyKind::ConstantBeams => spec.s as f64 / spec.m as f64,
        StrategyKind::GatedSingleBeam => {
            sbar_infinity(crate::spectra::t_of_lambda(spec.kappa, y), y)
        }
        StrategyKind::Off => 0.0,
    }
}
