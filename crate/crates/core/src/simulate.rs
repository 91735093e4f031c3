//! Seeded Monte Carlo evaluation of every transmission strategy.
//!
//! Trial `i` draws its channel from a ChaCha stream selected by `i`, and
//! per-trial results are reduced in trial order, so every estimate is
//! independent of how rayon schedules the work.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::beam_design::{invert_sbar, StrategyKind, StrategySpec};
use crate::error::{invalid, Error, Result};
use crate::grassmann::{design_codebook, select_unchecked, Codebook, DesignParams};
use crate::linalg::{hermitian_eig, logdet_identity_plus, sample_gaussian_matrix, CMatrix};
use crate::onoff::info_rate_infinity;
use crate::spectra::SystemDims;
use crate::waterfill::solve_nu;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dims: SystemDims,
    pub rho: f64,
    pub trials: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(dims: SystemDims, rho: f64, trials: usize, seed: u64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(invalid(format!("rho must be positive, got {rho}")));
        }
        if trials == 0 {
            return Err(invalid("need at least one trial"));
        }
        Ok(Self { dims, rho, trials, seed })
    }

    fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }
}

/// Mean of a per-trial quantity with its standard error. Rates are total
/// nats per channel use, not per dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    pub mean_rate: f64,
    pub std_error: f64,
    pub trials: usize,
    pub mean_power_used: f64,
    pub power_std_error: f64,
}

/// Generator for trial `index` of the run seeded with `seed`.
pub fn trial_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Channel matrix of trial `index`: `rx × tx` with CN(0, 1) entries.
pub fn trial_channel(dims: &SystemDims, seed: u64, index: usize) -> CMatrix {
    sample_gaussian_matrix(dims.rx, dims.tx, &mut trial_rng(seed, index))
}

/// Descending eigenvalues of `W`, the `m × m` Gram matrix of `H` over `m`.
pub fn w_eigenvalues(h: &CMatrix, dims: &SystemDims) -> Vec<f64> {
    let g = if dims.rx < dims.tx { h.gram_outer() } else { h.gram_inner() };
    let e = hermitian_eig(&g).expect("Gram matrices are Hermitian");
    e.values.iter().map(|v| v.max(0.0) / dims.m as f64).collect()
}

fn mean_and_error(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = values.clone().sum::<f64>() / nf;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0);
    (mean, (var / nf).sqrt())
}

/// Runs `per_trial` for every trial and reduces `(rate, power)` pairs in
/// trial order.
pub fn run_trials<F>(config: &SimConfig, per_trial: F) -> RateEstimate
where
    F: Fn(&CMatrix) -> (f64, f64) + Sync,
{
    let samples: Vec<(f64, f64)> = (0..config.trials)
        .into_par_iter()
        .map(|i| per_trial(&trial_channel(&config.dims, config.seed, i)))
        .collect();
    let n = samples.len();
    let (mean_rate, std_error) = mean_and_error(samples.iter().map(|s| s.0), n);
    let (mean_power_used, power_std_error) = mean_and_error(samples.iter().map(|s| s.1), n);
    RateEstimate {
        mean_rate,
        std_error,
        trials: n,
        mean_power_used,
        power_std_error,
    }
}

/// On/off transmission with the true eigenvectors at the transmitter.
pub fn rate_perfect_onoff(config: &SimConfig, strategy: &StrategySpec) -> Result<RateEstimate> {
    let dims = config.dims;
    if strategy.m != dims.m || strategy.s > dims.m {
        return Err(invalid("strategy does not match the system dimensions"));
    }
    let pbar = strategy.pbar_on();
    let spec = *strategy;
    Ok(run_trials(config, move |h| {
        let lam = w_eigenvalues(h, &dims);
        match spec.kind {
            StrategyKind::ConstantBeams => {
                let r = lam[..spec.s].iter().map(|l| (1.0 + pbar * l).ln()).sum();
                (r, spec.s as f64 * spec.p_on)
            }
            StrategyKind::GatedSingleBeam if lam[0] >= spec.kappa => {
                ((1.0 + pbar * lam[0]).ln(), spec.p_on)
            }
            _ => (0.0, 0.0),
        }
    }))
}

/// Leading `s` right singular vectors of `H` and the Gram matrix `H†H`.
fn transmit_eigenspace(h: &CMatrix, s: usize) -> (CMatrix, CMatrix) {
    let g = h.gram_inner();
    let e = hermitian_eig(&g).expect("Gram matrices are Hermitian");
    (e.vectors.leading_columns(s), g)
}

fn beam_rate(g: &CMatrix, q: &CMatrix, p_on: f64) -> f64 {
    logdet_identity_plus(&q.adjoint_mul(&g.mul(q)), p_on)
}

/// Constant-rank transmission where the beamformer is chosen from the
/// leading eigenvectors by `select`.
pub fn rate_with_selector<S>(config: &SimConfig, s: usize, p_on: f64, select: S) -> Result<RateEstimate>
where
    S: Fn(&CMatrix) -> CMatrix + Sync,
{
    if s == 0 || s > config.dims.tx {
        return Err(invalid(format!("rank {s} outside 1..={}", config.dims.tx)));
    }
    Ok(run_trials(config, |h| {
        let (vs, g) = transmit_eigenspace(h, s);
        (beam_rate(&g, &select(&vs), p_on), s as f64 * p_on)
    }))
}

/// Constant-rank transmission with codebook feedback.
pub fn rate_with_codebook(config: &SimConfig, codebook: &Codebook, p_on: f64) -> Result<RateEstimate> {
    if codebook.ltx != config.dims.tx {
        return Err(invalid(format!(
            "codebook is for {} antennas, system has {}",
            codebook.ltx, config.dims.tx
        )));
    }
    rate_with_selector(config, codebook.rank, p_on, |vs| {
        codebook.matrices[select_unchecked(vs, &codebook.matrices)].clone()
    })
}

/// Single-beam codebook transmission, gated by the strongest eigenvalue of
/// `W` against `kappa`.
pub fn rate_gated_codebook(config: &SimConfig, codebook: &Codebook, p_on: f64, kappa: f64) -> Result<RateEstimate> {
    if codebook.ltx != config.dims.tx || codebook.rank != 1 {
        return Err(invalid("gated transmission needs a rank-1 codebook for the transmit array"));
    }
    let m = config.dims.m as f64;
    Ok(run_trials(config, |h| {
        let (vs, g) = transmit_eigenspace(h, 1);
        let lambda1 = g.mul(&vs).frobenius_norm() / m;
        if lambda1 < kappa {
            return (0.0, 0.0);
        }
        let q = &codebook.matrices[select_unchecked(&vs, &codebook.matrices)];
        (beam_rate(&g, q, p_on), p_on)
    }))
}

/// Water-filling over the eigenchannels at the large-system water level.
pub fn rate_csitr_waterfill(config: &SimConfig) -> Result<RateEstimate> {
    let dims = config.dims;
    let nu = solve_nu(config.rho, dims.y)?.nu;
    Ok(run_trials(config, move |h| {
        let lam = w_eigenvalues(h, &dims);
        let mut rate = 0.0;
        let mut power = 0.0;
        for &l in lam.iter().filter(|&&l| l > 0.0 && l >= 1.0 / nu) {
            rate += (nu * l).ln();
            power += nu - 1.0 / l;
        }
        (rate, power / dims.m as f64)
    }))
}

/// Equal power on every transmit antenna, no transmitter knowledge.
pub fn rate_csir(config: &SimConfig) -> Result<RateEstimate> {
    let c = config.rho / config.dims.tx as f64;
    let rho = config.rho;
    Ok(run_trials(config, move |h| (logdet_identity_plus(&h.gram_outer(), c), rho)))
}

/// Large-system rate per dimension with finite-feedback loss modelled as
/// scaling the on-power by `mu`.
pub fn capacity_approx(dims: &SystemDims, s: usize, mu: f64, rho: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(invalid(format!("mu must lie in [0, 1], got {mu}")));
    }
    if s == 0 || s > dims.m {
        return Err(invalid(format!("beam count {s} outside 1..={}", dims.m)));
    }
    if mu == 0.0 {
        return Ok(0.0);
    }
    let a = invert_sbar(s as f64 / dims.m as f64, dims.y)?;
    info_rate_infinity(a, dims.y, mu * rho)
}

/// Union of codebooks of different ranks; rank 0 stands for "transmitter
/// off" and is present when `off_entries > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiRankCodebook {
    pub ltx: usize,
    pub off_entries: usize,
    /// Indexed by rank; entry 0 is always `None`.
    pub subcodes: Vec<Option<Codebook>>,
}

impl MultiRankCodebook {
    pub fn new(ltx: usize, off_entries: usize, codebooks: Vec<Codebook>) -> Result<Self> {
        let mut subcodes = vec![None; ltx + 1];
        for cb in codebooks {
            if cb.ltx != ltx || cb.rank == 0 || cb.rank > ltx {
                return Err(invalid(format!(
                    "sub-code of rank {} for {} antennas does not fit",
                    cb.rank, cb.ltx
                )));
            }
            let slot = &mut subcodes[cb.rank];
            if slot.is_some() {
                return Err(invalid(format!("two sub-codes of rank {}", cb.rank)));
            }
            *slot = Some(cb);
        }
        if off_entries == 0 && subcodes.iter().all(Option::is_none) {
            return Err(invalid("multi-rank codebook is empty"));
        }
        Ok(Self { ltx, off_entries, subcodes })
    }

    /// `K_s` for every rank `s = 0..=ltx`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.subcodes.iter().map(|c| c.as_ref().map_or(0, Codebook::len)).collect();
        out[0] = self.off_entries;
        out
    }

    pub fn total_size(&self) -> usize {
        self.sizes().iter().sum()
    }

    fn max_rank(&self) -> usize {
        (0..=self.ltx).rev().find(|&s| self.sizes()[s] > 0).unwrap_or(0)
    }

    fn min_rank(&self) -> usize {
        (0..=self.ltx).find(|&s| self.sizes()[s] > 0).unwrap_or(0)
    }
}

/// Best achievable rate and codeword within each nonempty rank; `None`
/// where the rank has no codewords. Rank 0 carries rate 0.
pub fn rank_rates(gram: &CMatrix, mcb: &MultiRankCodebook, p_on: f64) -> Vec<Option<(f64, usize)>> {
    let mut out = vec![None; mcb.ltx + 1];
    if mcb.off_entries > 0 {
        out[0] = Some((0.0, 0));
    }
    for (s, cb) in mcb.subcodes.iter().enumerate() {
        let Some(cb) = cb else { continue };
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, q) in cb.matrices.iter().enumerate() {
            let r = beam_rate(gram, q, p_on);
            if r > best.0 {
                best = (r, i);
            }
        }
        out[s] = Some(best);
    }
    out
}

/// Largest nonempty rank `s` with `I_s − I_t ≥ (s − t)κ` for every smaller
/// nonempty rank `t`.
pub fn select_rank(rates: &[Option<f64>], kappa: f64) -> usize {
    let ranks: Vec<usize> = (0..rates.len()).filter(|&s| rates[s].is_some()).collect();
    for &s in ranks.iter().rev() {
        let is = rates[s].unwrap();
        let ok = ranks
            .iter()
            .take_while(|&&t| t < s)
            .all(|&t| is - rates[t].unwrap() >= (s - t) as f64 * kappa);
        if ok {
            return s;
        }
    }
    ranks[0]
}

/// Rank and codeword fed back for channel `h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MultiRankChoice {
    pub s_tilde: usize,
    /// Codeword index within the rank-`s_tilde` sub-code; `None` when off.
    pub index: Option<usize>,
}

pub fn multirank_feedback(h: &CMatrix, mcb: &MultiRankCodebook, p_on: f64, kappa: f64) -> Result<MultiRankChoice> {
    if !(kappa >= 0.0) {
        return Err(invalid(format!("kappa must be non-negative, got {kappa}")));
    }
    if h.cols() != mcb.ltx {
        return Err(invalid("channel and codebook disagree on transmit antennas"));
    }
    if mcb.total_size() == 0 {
        return Err(invalid("multi-rank codebook is empty"));
    }
    let rates = rank_rates(&h.gram_inner(), mcb, p_on);
    let s = select_rank(&rates.iter().map(|r| r.map(|x| x.0)).collect::<Vec<_>>(), kappa);
    Ok(MultiRankChoice {
        s_tilde: s,
        index: if s == 0 { None } else { rates[s].map(|x| x.1) },
    })
}

const POWER_TOL: f64 = 0.01;

/// Rank rates for every trial channel of `config`.
fn batch_rank_rates(config: &SimConfig, mcb: &MultiRankCodebook, p_on: f64) -> Vec<Vec<Option<f64>>> {
    (0..config.trials)
        .into_par_iter()
        .map(|i| {
            let g = trial_channel(&config.dims, config.seed, i).gram_inner();
            rank_rates(&g, mcb, p_on).iter().map(|r| r.map(|x| x.0)).collect()
        })
        .collect()
}

/// Thresholds at which `s̃` drops as `κ` grows, with the size of each drop.
///
/// `s̃(κ)` follows the upper concave hull of the points `(s, I_s)`: past the
/// smallest slope to a lower rank the choice falls to the lowest rank
/// attaining that slope.
fn kappa_events(rates: &[Option<f64>], out: &mut Vec<(f64, usize)>) {
    let mut s = select_rank(rates, 0.0);
    loop {
        let mut best: Option<(f64, usize)> = None;
        for t in (0..s).filter(|&t| rates[t].is_some()) {
            let slope = (rates[s].unwrap() - rates[t].unwrap()) / (s - t) as f64;
            // ties keep the lowest rank, which the ascending scan visits first
            if best.is_none_or(|b| slope < b.0) {
                best = Some((slope, t));
            }
        }
        let Some((slope, t)) = best else { break };
        out.push((slope.max(0.0), s - t));
        s = t;
    }
}

/// Threshold meeting `E[s̃] p_on = ρ` on a batch of precomputed rank rates.
///
/// `E[s̃]` is a non-increasing step function of `κ`; the breakpoints are
/// swept in order and the midpoint of the first step not above the budget
/// is returned. When a step jumps over the target the step on the
/// low-power side is used.
pub fn calibrate_on_batch(batch: &[Vec<Option<f64>>], p_on: f64, rho: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(invalid("calibration batch is empty"));
    }
    let n = batch.len() as f64;
    let target = rho / p_on;
    let mut total: usize = batch.iter().map(|r| select_rank(r, 0.0)).sum();
    let at_zero = total as f64 / n;
    if at_zero < target * (1.0 - POWER_TOL) {
        return Err(Error::Infeasible(format!(
            "on-power {p_on} reaches only {} of the budget {rho}",
            at_zero * p_on
        )));
    }
    let ceiling = target * (1.0 + 1e-12);
    if at_zero <= ceiling {
        return Ok(0.0);
    }
    let mut events = Vec::new();
    for r in batch {
        kappa_events(r, &mut events);
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut i = 0;
    while i < events.len() {
        let k = events[i].0;
        while i < events.len() && events[i].0 == k {
            total -= events[i].1;
            i += 1;
        }
        if (total as f64 / n) <= ceiling {
            let next = events.get(i).map_or(k + 1.0, |e| e.0);
            return Ok(0.5 * (k + next));
        }
    }
    Err(Error::Infeasible(format!(
        "on-power {p_on} exceeds the budget {rho} even at the lowest rank"
    )))
}

/// Threshold `κ` meeting the power budget on the trial channels of `config`.
pub fn calibrate_kappa(mcb: &MultiRankCodebook, p_on: f64, config: &SimConfig) -> Result<f64> {
    if !(p_on > 0.0) {
        return Err(invalid(format!("on-power must be positive, got {p_on}")));
    }
    if config.rho > mcb.max_rank() as f64 * p_on * (1.0 + POWER_TOL) {
        return Err(Error::Infeasible(format!(
            "rho = {} exceeds {} beams at on-power {p_on}",
            config.rho,
            mcb.max_rank()
        )));
    }
    calibrate_on_batch(&batch_rank_rates(config, mcb, p_on), p_on, config.rho)
}

/// Multi-rank transmission at fixed `p_on` and `kappa`.
pub fn rate_multirank_fixed(config: &SimConfig, mcb: &MultiRankCodebook, p_on: f64, kappa: f64) -> RateEstimate {
    run_trials(config, |h| {
        let rates = rank_rates(&h.gram_inner(), mcb, p_on);
        let s = select_rank(&rates.iter().map(|r| r.map(|x| x.0)).collect::<Vec<_>>(), kappa);
        (rates[s].map_or(0.0, |x| x.0), s as f64 * p_on)
    })
}

/// Which partitions `[K_0, …, K_ltx]` of the feedback budget to try.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PartitionSearch {
    Given(Vec<usize>),
    /// Every partition using the whole budget with at most one "off" entry
    /// and at most one full-rank entry.
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiRankResult {
    pub estimate: RateEstimate,
    pub partition: Vec<usize>,
    pub p_on: f64,
    pub kappa: f64,
    pub codebook: MultiRankCodebook,
}

/// Deterministic designed codebooks keyed by `(rank, size)`.
pub struct CodebookCache {
    ltx: usize,
    seed: u64,
    params: DesignParams,
    books: HashMap<(usize, usize), Codebook>,
}

impl CodebookCache {
    pub fn new(ltx: usize, seed: u64, params: DesignParams) -> Self {
        Self {
            ltx,
            seed,
            params,
            books: HashMap::new(),
        }
    }

    fn rng_for(&self, rank: usize, size: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_c0de_b00c_0001);
        rng.set_stream((rank * 1_000_003 + size) as u64);
        rng
    }

    /// Designs every missing `(rank, size)` pair in parallel.
    pub fn prepare(&mut self, keys: &[(usize, usize)]) -> Result<()> {
        let mut missing: Vec<(usize, usize)> = keys
            .iter()
            .copied()
            .filter(|k| k.1 > 0 && !self.books.contains_key(k))
            .collect();
        missing.sort_unstable();
        missing.dedup();
        let built: Vec<Result<((usize, usize), Codebook)>> = missing
            .par_iter()
            .map(|&(rank, size)| {
                let mut rng = self.rng_for(rank, size);
                let cb = if rank == self.ltx {
                    // every full-rank codeword spans the same space
                    Codebook::new(vec![CMatrix::identity(self.ltx); 1])?
                } else {
                    design_codebook(self.ltx, rank, size, &mut rng, self.params)?
                };
                Ok(((rank, size), cb))
            })
            .collect();
        for b in built {
            let (k, cb) = b?;
            self.books.insert(k, cb);
        }
        Ok(())
    }

    pub fn get(&mut self, rank: usize, size: usize) -> Result<Codebook> {
        self.prepare(&[(rank, size)])?;
        Ok(self.books[&(rank, size)].clone())
    }

    pub fn multirank(&mut self, partition: &[usize]) -> Result<MultiRankCodebook> {
        if partition.len() != self.ltx + 1 {
            return Err(invalid(format!(
                "partition needs {} entries, got {}",
                self.ltx + 1,
                partition.len()
            )));
        }
        let keys: Vec<(usize, usize)> = (1..=self.ltx).map(|s| (s, partition[s])).collect();
        self.prepare(&keys)?;
        let books = keys
            .iter()
            .filter(|k| k.1 > 0)
            .map(|k| self.books[k].clone())
            .collect();
        MultiRankCodebook::new(self.ltx, partition[0], books)
    }
}

/// Every partition of `budget` codewords over ranks `0..=ltx` with
/// `K_0 ≤ 1` and `K_ltx ≤ 1` and at least one beamforming codeword.
pub fn enumerate_partitions(ltx: usize, budget: usize) -> Vec<Vec<usize>> {
    fn fill(slot: usize, ltx: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slot == ltx {
            cur[ltx] = left;
            if left <= 1 && cur[1..].iter().any(|&k| k > 0) {
                out.push(cur.clone());
            }
            return;
        }
        let max = if slot == 0 { left.min(1) } else { left };
        for k in 0..=max {
            cur[slot] = k;
            fill(slot + 1, ltx, left - k, cur, out);
        }
    }
    let mut out = Vec::new();
    if ltx == 0 {
        return out;
    }
    fill(0, ltx, budget, &mut vec![0; ltx + 1], &mut out);
    out
}

/// On-power candidates: `ρ/s` for every rank plus a log grid from `ρ/ltx`
/// up to `16ρ`.
pub fn p_on_grid(rho: f64, ltx: usize) -> Vec<f64> {
    let mut grid: Vec<f64> = (1..=ltx).map(|s| rho / s as f64).collect();
    let (lo, hi) = ((1.0 / ltx as f64).ln(), 16f64.ln());
    for i in 0..12 {
        grid.push(rho * (lo + (hi - lo) * i as f64 / 11.0).exp());
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * *b);
    grid
}

const SCREEN_TRIALS: usize = 400;
const SCREEN_KEEP: usize = 4;

struct Scored {
    rate: f64,
    p_on: f64,
    partition: Vec<usize>,
}

// Best (rate, p_on) of one partition on precomputed per-trial rank rates.
fn best_on_batch(
    partition: &[usize],
    per_p: &[(f64, Vec<Vec<Vec<f64>>>)],
    rho: f64,
) -> Option<(f64, f64, f64)> {
    let mut best: Option<(f64, f64, f64)> = None;
    for (p_on, table) in per_p {
        // table[trial][rank] holds I_s for the sub-code of size partition[rank]
        let batch: Vec<Vec<Option<f64>>> = table
            .iter()
            .map(|row| {
                (0..partition.len())
                    .map(|s| {
                        if partition[s] == 0 {
                            None
                        } else if s == 0 {
                            Some(0.0)
                        } else {
                            Some(row[s][partition[s]])
                        }
                    })
                    .collect()
            })
            .collect();
        let max_rank = (0..partition.len()).rev().find(|&s| partition[s] > 0).unwrap_or(0);
        if rho > max_rank as f64 * p_on * (1.0 + POWER_TOL) {
            continue;
        }
        let Ok(kappa) = calibrate_on_batch(&batch, *p_on, rho) else { continue };
        let rate = batch
            .iter()
            .map(|r| r[select_rank(r, kappa)].unwrap_or(0.0))
            .sum::<f64>()
            / batch.len() as f64;
        if best.is_none_or(|b| rate > b.0) {
            best = Some((rate, *p_on, kappa));
        }
    }
    best
}

/// Multi-rank search: design sub-codes, grid-search the on-power,
/// calibrate the threshold and keep the best rate.
///
/// Candidates are screened on a small batch; the best few are re-run with
/// the full trial count, calibrating on an independent batch.
pub fn rate_multirank(
    config: &SimConfig,
    search: &PartitionSearch,
    feedback_bits: u32,
    params: DesignParams,
) -> Result<MultiRankResult> {
    let ltx = config.dims.tx;
    let budget = 1usize
        .checked_shl(feedback_bits)
        .ok_or_else(|| invalid("too many feedback bits"))?;
    let candidates = match search {
        PartitionSearch::Given(p) => {
            if p.len() != ltx + 1 {
                return Err(invalid(format!("partition needs {} entries", ltx + 1)));
            }
            if p.iter().sum::<usize>() > budget {
                return Err(invalid(format!("partition uses more than {budget} codewords")));
            }
            vec![p.clone()]
        }
        PartitionSearch::All => {
            if ltx > 4 || feedback_bits > 6 {
                return Err(invalid(
                    "exhaustive partition search is limited to 4 antennas and 6 bits",
                ));
            }
            enumerate_partitions(ltx, budget)
        }
    };
    let mut cache = CodebookCache::new(ltx, config.seed, params);
    let keys: Vec<(usize, usize)> = candidates
        .iter()
        .flat_map(|p| (1..=ltx).map(move |s| (s, p[s])))
        .collect();
    cache.prepare(&keys)?;

    let grid = p_on_grid(config.rho, ltx);
    // each survivor carries the on-power that screened best, if screened
    let shortlist: Vec<(Vec<usize>, Option<f64>)> = if candidates.len() <= SCREEN_KEEP {
        candidates.into_iter().map(|p| (p, None)).collect()
    } else {
        let screen = SimConfig {
            trials: SCREEN_TRIALS.min(config.trials),
            ..config.with_seed(config.seed ^ 0x0005_c4ee_a000_0001)
        };
        let max_size: Vec<usize> = (0..=ltx)
            .map(|s| candidates.iter().map(|p| p[s]).max().unwrap_or(0))
            .collect();
        let books: Vec<Vec<Option<Codebook>>> = (0..=ltx)
            .map(|s| {
                (0..=max_size[s])
                    .map(|k| if s == 0 || k == 0 { None } else { cache.books.get(&(s, k)).cloned() })
                    .collect()
            })
            .collect();
        // I_s for every rank, sub-code size, trial and on-power
        let grams: Vec<CMatrix> = (0..screen.trials)
            .map(|i| trial_channel(&screen.dims, screen.seed, i).gram_inner())
            .collect();
        let per_p: Vec<(f64, Vec<Vec<Vec<f64>>>)> = grid
            .par_iter()
            .map(|&p| {
                let table = grams
                    .iter()
                    .map(|g| {
                        (0..=ltx)
                            .map(|s| {
                                books[s]
                                    .iter()
                                    .map(|cb| {
                                        cb.as_ref().map_or(0.0, |cb| {
                                            cb.matrices
                                                .iter()
                                                .map(|q| beam_rate(g, q, p))
                                                .fold(f64::NEG_INFINITY, f64::max)
                                        })
                                    })
                                    .collect()
                            })
                            .collect()
                    })
                    .collect();
                (p, table)
            })
            .collect();
        let mut scored: Vec<Scored> = candidates
            .par_iter()
            .filter_map(|p| {
                best_on_batch(p, &per_p, screen.rho).map(|(rate, p_on, _)| Scored {
                    rate,
                    p_on,
                    partition: p.clone(),
                })
            })
            .collect();
        scored.sort_by(|a, b| b.rate.total_cmp(&a.rate).then_with(|| a.partition.cmp(&b.partition)));
        scored.into_iter().take(SCREEN_KEEP).map(|s| (s.partition, Some(s.p_on))).collect()
    };

    let calibration = config.with_seed(config.seed ^ 0x00ca_11b0_0000_0001);
    let mut best: Option<MultiRankResult> = None;
    for (partition, screened) in shortlist {
        let mcb = cache.multirank(&partition)?;
        let powers: &[f64] = match screened.and_then(|p| grid.iter().position(|&g| g == p)) {
            Some(i) => &grid[i.saturating_sub(1)..(i + 2).min(grid.len())],
            None => &grid,
        };
        for &p_on in powers {
            if config.rho > mcb.max_rank() as f64 * p_on * (1.0 + POWER_TOL) {
                continue;
            }
            if (mcb.min_rank() as f64) * p_on > config.rho * (1.0 + POWER_TOL) {
                continue;
            }
            let kappa = match calibrate_kappa(&mcb, p_on, &calibration) {
                Ok(k) => k,
                Err(Error::Infeasible(_)) => continue,
                Err(e) => return Err(e),
            };
            let estimate = rate_multirank_fixed(config, &mcb, p_on, kappa);
            if best.as_ref().is_none_or(|b| estimate.mean_rate > b.estimate.mean_rate) {
                best = Some(MultiRankResult {
                    estimate,
                    partition: partition.clone(),
                    p_on,
                    kappa,
                    codebook: mcb.clone(),
                });
            }
        }
    }
    best.ok_or_else(|| Error::Infeasible("no partition meets the power budget".into()))
}

/// Best constant-rank codebook transmission with the whole budget in one
/// rank `s ≤ m` and `p_on = ρ/s`.
pub fn best_single_rank(
    config: &SimConfig,
    feedback_bits: u32,
    params: DesignParams,
) -> Result<(RateEstimate, usize)> {
    let budget = 1usize << feedback_bits;
    let mut cache = CodebookCache::new(config.dims.tx, config.seed, params);
    let mut best: Option<(RateEstimate, usize)> = None;
    for s in 1..=config.dims.m {
        let cb = cache.get(s, budget)?;
        let est = rate_with_codebook(config, &cb, config.rho / s as f64)?;
        if best.is_none_or(|b| est.mean_rate > b.0.mean_rate) {
            best = Some((est, s));
        }
    }
    Ok(best.expect("m is at least 1"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam_design::finite_design;

    fn cfg(tx: usize, rx: usize, rho: f64, trials: usize) -> SimConfig {
        SimConfig::new(SystemDims::new(tx, rx).unwrap(), rho, trials, 17).unwrap()
    }

    #[test]
    fn trial_streams_are_reproducible() {
        let d = SystemDims::new(4, 2).unwrap();
        assert_eq!(trial_channel(&d, 3, 5), trial_channel(&d, 3, 5));
        assert_ne!(trial_channel(&d, 3, 5), trial_channel(&d, 3, 6));
    }

    #[test]
    fn normalized_and_physical_eigenvalues_agree() {
        // P̄_on λ(W) = P_on λ(H†H)
        let d = SystemDims::new(4, 2).unwrap();
        let h = trial_channel(&d, 1, 0);
        let lw = w_eigenvalues(&h, &d);
        let lg = hermitian_eig(&h.gram_inner()).unwrap().values;
        let p_on = 0.7;
        for i in 0..d.m {
            assert!((d.m as f64 * p_on * lw[i] - p_on * lg[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_all_on_matches_selector_with_true_eigenvectors() {
        let c = cfg(4, 2, 10.0, 300);
        let spec = StrategySpec::constant(&c.dims, 2, 10.0).unwrap();
        let a = rate_perfect_onoff(&c, &spec).unwrap();
        let b = rate_with_selector(&c, 2, 5.0, |vs| vs.clone()).unwrap();
        assert!((a.mean_rate - b.mean_rate).abs() < 1e-9);
        assert!((a.mean_power_used - 10.0).abs() < 1e-12);
    }

    #[test]
    fn gated_power_stays_within_budget() {
        let c = cfg(4, 2, 0.05, 4000);
        let spec = finite_design(&c.dims, 0.05).unwrap();
        assert_eq!(spec.kind, StrategyKind::GatedSingleBeam);
        let est = rate_perfect_onoff(&c, &spec).unwrap();
        assert!(est.mean_power_used <= 0.05 + 3.0 * est.power_std_error + 0.05 * 0.05);
    }

    #[test]
    fn scalar_rayleigh_csir() {
        // E[ln(1 + |h|²)] = e·E1(1)
        let est = rate_csir(&cfg(1, 1, 1.0, 40_000)).unwrap();
        assert!((est.mean_rate - 0.596_347_362_323_194).abs() < 4.0 * est.std_error);
    }

    #[test]
    fn select_rank_is_largest_lagrangian_maximizer() {
        let rates = [Some(0.0), Some(1.0), None, Some(2.5), Some(2.6)];
        for kappa in [0.0, 0.1, 0.5, 0.8, 1.2, 5.0] {
            let s = select_rank(&rates, kappa);
            let best = (0..rates.len())
                .filter(|&t| rates[t].is_some())
                .map(|t| rates[t].unwrap() - kappa * t as f64)
                .fold(f64::NEG_INFINITY, f64::max);
            let largest = (0..rates.len())
                .filter(|&t| rates[t].is_some_and(|r| r - kappa * t as f64 == best))
                .max()
                .unwrap();
            assert_eq!(s, largest, "kappa={kappa}");
        }
        assert_eq!(select_rank(&rates, 0.0), 4);
        assert_eq!(select_rank(&rates, 100.0), 0);
    }

    #[test]
    fn partitions_use_whole_budget() {
        let parts = enumerate_partitions(4, 16);
        assert!(parts.iter().all(|p| p.iter().sum::<usize>() == 16 && p[0] <= 1 && p[4] <= 1));
        assert!(parts.contains(&vec![0, 16, 0, 0, 0]));
        assert!(parts.contains(&vec![1, 15, 0, 0, 0]));
        assert!(!parts.contains(&vec![16, 0, 0, 0, 0]));
    }

    #[test]
    fn capacity_approx_limits() {
        let d = SystemDims::new(4, 2).unwrap();
        assert_eq!(capacity_approx(&d, 1, 0.0, 10.0).unwrap(), 0.0);
        let a = invert_sbar(0.5, d.y).unwrap();
        let want = info_rate_infinity(a, d.y, 10.0).unwrap();
        assert_eq!(capacity_approx(&d, 1, 1.0, 10.0).unwrap(), want);
        assert!(capacity_approx(&d, 3, 1.0, 10.0).is_err());
    }

    #[test]
    fn single_rank_calibration_plateau() {
        let c = cfg(4, 2, 2.0, 200);
        let mut cache = CodebookCache::new(4, 1, DesignParams { restarts: 1, steps: 50 });
        let mcb = cache.multirank(&[0, 0, 4, 0, 0]).unwrap();
        assert_eq!(calibrate_kappa(&mcb, 1.0, &c).unwrap(), 0.0);
        assert!(matches!(calibrate_kappa(&mcb, 0.5, &c), Err(Error::Infeasible(_))));
    }
}
