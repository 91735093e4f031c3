//! Subspace quantization on the Grassmann manifold.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{invalid, Result};
use crate::linalg::{orthonormalize, sample_gaussian_matrix, CMatrix};
use crate::special_fn::gamma;

/// Squared chordal distance `s − ‖Q1†Q2‖_F²` between the column spaces.
pub fn chordal_distance_sq(q1: &CMatrix, q2: &CMatrix) -> Result<f64> {
    if (q1.rows(), q1.cols()) != (q2.rows(), q2.cols()) {
        return Err(invalid(format!(
            "shape mismatch: {}x{} vs {}x{}",
            q1.rows(),
            q1.cols(),
            q2.rows(),
            q2.cols()
        )));
    }
    Ok(dc2_unchecked(q1, q2))
}

fn overlap(q1: &CMatrix, q2: &CMatrix) -> f64 {
    // ‖Q1†Q2‖_F² without allocating
    let (n, s1, s2) = (q1.rows(), q1.cols(), q2.cols());
    let mut acc = 0.0;
    for i in 0..s1 {
        for j in 0..s2 {
            let mut z = Complex64::new(0.0, 0.0);
            for k in 0..n {
                z += q1[(k, i)].conj() * q2[(k, j)];
            }
            acc += z.norm_sqr();
        }
    }
    acc
}

fn dc2_unchecked(q1: &CMatrix, q2: &CMatrix) -> f64 {
    (q1.cols() as f64 - overlap(q1, q2)).max(0.0)
}

/// `½‖Q1Q1† − Q2Q2†‖_F²`, the projector form of the same distance.
pub fn projector_distance_sq(q1: &CMatrix, q2: &CMatrix) -> f64 {
    let d = q1.gram_outer().sub(&q2.gram_outer()).frobenius_norm();
    0.5 * d * d
}

/// Draw from the invariant measure on the Stiefel manifold.
pub fn sample_uniform_stiefel<R: Rng + ?Sized>(ltx: usize, rank: usize, rng: &mut R) -> CMatrix {
    assert!(rank >= 1 && rank <= ltx, "rank must lie in 1..=ltx");
    loop {
        // rank deficiency has probability zero
        if let Ok(q) = orthonormalize(&sample_gaussian_matrix(ltx, rank, rng)) {
            return q;
        }
    }
}

/// A set of `ltx × rank` matrices with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub ltx: usize,
    pub rank: usize,
    pub matrices: Vec<CMatrix>,
    pub min_pairwise_dc2: f64,
    pub measured_mean_dc2: Option<f64>,
}

impl Codebook {
    pub fn new(matrices: Vec<CMatrix>) -> Result<Self> {
        let first = matrices.first().ok_or_else(|| invalid("codebook must be nonempty"))?;
        let (ltx, rank) = (first.rows(), first.cols());
        if rank > ltx {
            return Err(invalid(format!("rank {rank} exceeds {ltx} antennas")));
        }
        for q in &matrices {
            if (q.rows(), q.cols()) != (ltx, rank) {
                return Err(invalid("codebook entries have different shapes"));
            }
            let defect = q.gram_inner().sub(&CMatrix::identity(rank)).frobenius_norm();
            if defect > 1e-10 {
                return Err(invalid(format!("codebook entry is not orthonormal ({defect:e})")));
            }
        }
        let min_pairwise_dc2 = min_pairwise(&matrices);
        Ok(Self {
            ltx,
            rank,
            matrices,
            min_pairwise_dc2,
            measured_mean_dc2: None,
        })
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    /// Text form: a header line, then one block of `ltx` rows per matrix with
    /// entries written as `re,im`. Leading `#` comment lines are skipped when
    /// reading.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "grassmann-codebook v1 ltx={} rank={} size={}\n",
            self.ltx,
            self.rank,
            self.len()
        );
        for q in &self.matrices {
            out.push('\n');
            for i in 0..q.rows() {
                let row: Vec<String> = (0..q.cols())
                    .map(|j| format!("{:.16e},{:.16e}", q[(i, j)].re, q[(i, j)].im))
                    .collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().skip_while(|l| l.starts_with('#'));
        let header = lines.next().ok_or_else(|| invalid("empty codebook file"))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("grassmann-codebook") || fields.next() != Some("v1") {
            return Err(invalid(format!("unrecognized codebook header: {header}")));
        }
        let mut get = |key: &str| -> Result<usize> {
            let f = fields.next().ok_or_else(|| invalid(format!("header lacks {key}")))?;
            f.strip_prefix(key)
                .and_then(|v| v.strip_prefix('='))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| invalid(format!("bad header field {f}, expected {key}=<int>")))
        };
        let ltx = get("ltx")?;
        let rank = get("rank")?;
        let size = get("size")?;
        if ltx == 0 || rank == 0 || size == 0 {
            return Err(invalid("codebook dimensions must be positive"));
        }

        let rows: Vec<&str> = lines.map(str::trim).filter(|l| !l.is_empty()).collect();
        if rows.len() != ltx * size {
            return Err(invalid(format!(
                "expected {} matrix rows, found {}",
                ltx * size,
                rows.len()
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| invalid(format!("bad number {s}")))
        };
        let mut matrices = Vec::with_capacity(size);
        for block in rows.chunks(ltx) {
            let mut data = Vec::with_capacity(ltx * rank);
            for row in block {
                let entries: Vec<&str> = row.split_whitespace().collect();
                if entries.len() != rank {
                    return Err(invalid(format!("expected {rank} entries in row: {row}")));
                }
                for e in entries {
                    let (re, im) = e
                        .split_once(',')
                        .ok_or_else(|| invalid(format!("entry {e} is not re,im")))?;
                    data.push(Complex64::new(parse(re)?, parse(im)?));
                }
            }
            matrices.push(CMatrix::from_vec(ltx, rank, data)?);
        }
        Self::new(matrices)
    }
}

fn min_pairwise(matrices: &[CMatrix]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..matrices.len() {
        for j in i + 1..matrices.len() {
            best = best.min(dc2_unchecked(&matrices[i], &matrices[j]));
        }
    }
    best
}

/// Random restarts and refinement steps for [`design_codebook`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DesignParams {
    pub restarts: usize,
    pub steps: usize,
}

impl Default for DesignParams {
    fn default() -> Self {
        Self {
            restarts: 8,
            steps: 2000,
        }
    }
}

/// Max-min codebook design by random restarts and repulsion.
///
/// Each step moves one endpoint of the closest pair, either to a fresh
/// uniform draw or to a small random perturbation of itself, and keeps the
/// move when the minimum distance does not shrink.
pub fn design_codebook<R: Rng + ?Sized>(
    ltx: usize,
    rank: usize,
    size: usize,
    rng: &mut R,
    params: DesignParams,
) -> Result<Codebook> {
    if rank == 0 || rank > ltx {
        return Err(invalid(format!("rank {rank} outside 1..={ltx}")));
    }
    if size == 0 {
        return Err(invalid("codebook size must be at least 1"));
    }
    if size == 1 {
        return Codebook::new(vec![sample_uniform_stiefel(ltx, rank, rng)]);
    }
    let mut best: Option<(f64, Vec<CMatrix>)> = None;
    for _ in 0..params.restarts.max(1) {
        let (score, set) = refine(ltx, rank, size, rng, params.steps);
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, set));
        }
    }
    let (_, set) = best.expect("at least one restart");
    Codebook::new(set)
}

fn refine<R: Rng + ?Sized>(
    ltx: usize,
    rank: usize,
    size: usize,
    rng: &mut R,
    steps: usize,
) -> (f64, Vec<CMatrix>) {
    let mut set: Vec<CMatrix> = (0..size).map(|_| sample_uniform_stiefel(ltx, rank, rng)).collect();
    let mut dist = vec![vec![f64::INFINITY; size]; size];
    for i in 0..size {
        for j in i + 1..size {
            let d = dc2_unchecked(&set[i], &set[j]);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let global_min = |dist: &[Vec<f64>]| -> (f64, usize, usize) {
        let mut best = (f64::INFINITY, 0, 1);
        for i in 0..size {
            for j in i + 1..size {
                if dist[i][j] < best.0 {
                    best = (dist[i][j], i, j);
                }
            }
        }
        best
    };
    let second_nearest = |dist: &[Vec<f64>], i: usize, skip: usize| -> f64 {
        (0..size)
            .filter(|&k| k != i && k != skip)
            .map(|k| dist[i][k])
            .fold(f64::INFINITY, f64::min)
    };

    let mut sigma = 0.3;
    let mut candidate = vec![0.0; size];
    for step in 0..steps {
        let (dmin, i, j) = global_min(&dist);
        // move the endpoint whose other neighbours are closer
        let mover = if second_nearest(&dist, i, j) <= second_nearest(&dist, j, i) { i } else { j };
        let old_nearest = (0..size)
            .filter(|&k| k != mover)
            .map(|k| dist[mover][k])
            .fold(f64::INFINITY, f64::min);

        let proposal = if step % 4 == 0 {
            sample_uniform_stiefel(ltx, rank, rng)
        } else {
            let g = sample_gaussian_matrix(ltx, rank, rng);
            let moved = CMatrix::from_fn(ltx, rank, |a, b| set[mover][(a, b)] + g[(a, b)] * sigma);
            match orthonormalize(&moved) {
                Ok(q) => q,
                Err(_) => continue,
            }
        };
        let mut nearest = f64::INFINITY;
        for k in 0..size {
            if k != mover {
                candidate[k] = dc2_unchecked(&proposal, &set[k]);
                nearest = nearest.min(candidate[k]);
            }
        }
        // the rest of the configuration is unchanged, so the new global
        // minimum is min(nearest, minimum over pairs not touching `mover`)
        let mut others = f64::INFINITY;
        for a in 0..size {
            for b in a + 1..size {
                if a != mover && b != mover {
                    others = others.min(dist[a][b]);
                }
            }
        }
        let new_min = nearest.min(others);
        if new_min > dmin || (new_min == dmin && nearest > old_nearest) {
            set[mover] = proposal;
            for k in 0..size {
                if k != mover {
                    dist[mover][k] = candidate[k];
                    dist[k][mover] = candidate[k];
                }
            }
        } else {
            sigma = (sigma * 0.995).max(0.01);
        }
    }
    (global_min(&dist).0, set)
}

/// Index of the codeword closest to the column space of `vs`; lowest index
/// on ties.
pub fn select_beamforming(vs: &CMatrix, codebook: &Codebook) -> Result<usize> {
    if codebook.is_empty() {
        return Err(invalid("empty codebook"));
    }
    if (vs.rows(), vs.cols()) != (codebook.ltx, codebook.rank) {
        return Err(invalid(format!(
            "query is {}x{}, codebook holds {}x{}",
            vs.rows(),
            vs.cols(),
            codebook.ltx,
            codebook.rank
        )));
    }
    Ok(select_unchecked(vs, &codebook.matrices))
}

pub(crate) fn select_unchecked(vs: &CMatrix, matrices: &[CMatrix]) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, q) in matrices.iter().enumerate() {
        let v = overlap(vs, q);
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    best
}

/// Feedback of a gated codebook: either a codeword index or the reserved
/// "off" message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feedback {
    Off,
    Beam(usize),
}

/// Gated selection: off when the strongest eigenvalue is below `kappa`.
pub fn select_gated(vs: &CMatrix, lambda1: f64, kappa: f64, codebook: &Codebook) -> Result<Feedback> {
    if lambda1 < kappa {
        return Ok(Feedback::Off);
    }
    select_beamforming(vs, codebook).map(Feedback::Beam)
}

/// Monte Carlo estimate of the power efficiency factor and isotropy
/// diagnostics of `E[Vs† Q Q† Vs]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuEstimate {
    pub mu_hat: f64,
    pub mean_dc2: f64,
    pub offdiag_max: f64,
    pub diag_spread: f64,
    pub trials: usize,
}

pub fn estimate_mu<R: Rng + ?Sized>(codebook: &Codebook, trials: usize, rng: &mut R) -> Result<MuEstimate> {
    if trials == 0 {
        return Err(invalid("need at least one trial"));
    }
    let queries = (0..trials).map(|_| sample_uniform_stiefel(codebook.ltx, codebook.rank, rng));
    accumulate_mu(codebook, queries)
}

/// Same estimate over an explicit list of query planes.
pub fn estimate_mu_from_queries(codebook: &Codebook, queries: &[CMatrix]) -> Result<MuEstimate> {
    if queries.is_empty() {
        return Err(invalid("need at least one query"));
    }
    accumulate_mu(codebook, queries.iter().cloned())
}

fn accumulate_mu(codebook: &Codebook, queries: impl Iterator<Item = CMatrix>) -> Result<MuEstimate> {
    let s = codebook.rank;
    let mut acc = CMatrix::zeros(s, s);
    let mut total_dc2 = 0.0;
    let mut count = 0usize;
    for vs in queries {
        let idx = select_beamforming(&vs, codebook)?;
        let g = vs.adjoint_mul(&codebook.matrices[idx]);
        let m = g.gram_outer();
        total_dc2 += (s as f64 - m.trace().re).max(0.0);
        for a in 0..s {
            for b in 0..s {
                acc[(a, b)] += m[(a, b)];
            }
        }
        count += 1;
    }
    let n = count as f64;
    let mean = acc.scale(1.0 / n);
    let mut offdiag_max = 0.0f64;
    let (mut dmin, mut dmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for a in 0..s {
        dmin = dmin.min(mean[(a, a)].re);
        dmax = dmax.max(mean[(a, a)].re);
        for b in 0..s {
            if a != b {
                offdiag_max = offdiag_max.max(mean[(a, b)].norm());
            }
        }
    }
    let mean_dc2 = total_dc2 / n;
    Ok(MuEstimate {
        mu_hat: 1.0 - mean_dc2 / s as f64,
        mean_dc2,
        offdiag_max,
        diag_spread: dmax - dmin,
        trials: count,
    })
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Volume constant of the Grassmann manifold used by the distortion bounds.
pub fn eta(ltx: usize, rank: usize) -> Result<f64> {
    if rank == 0 || rank > ltx {
        return Err(invalid(format!("rank {rank} outside 1..={ltx}")));
    }
    let t = rank * (ltx - rank);
    let k = if 2 * rank <= ltx { rank } else { ltx - rank };
    let (top, bottom) = if 2 * rank <= ltx { (ltx, rank) } else { (ltx, ltx - rank) };
    let prod: f64 = (1..=k).map(|i| factorial(top - i) / factorial(bottom - i)).product();
    Ok(prod / factorial(t))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionBounds {
    pub t: usize,
    pub eta: f64,
    pub lower: f64,
    pub upper: f64,
    pub mu_lower: f64,
    pub mu_upper: f64,
}

/// Large-codebook bounds on the smallest achievable mean squared chordal
/// distance with `2^feedback_bits` codewords.
pub fn distortion_bounds(ltx: usize, rank: usize, feedback_bits: u32) -> Result<DistortionBounds> {
    if feedback_bits == 0 {
        return Err(invalid("need at least one feedback bit"));
    }
    distortion_bounds_for_size(ltx, rank, 2f64.powi(feedback_bits as i32))
}

/// As [`distortion_bounds`] for an arbitrary codebook size `k`.
pub fn distortion_bounds_for_size(ltx: usize, rank: usize, k: f64) -> Result<DistortionBounds> {
    if rank == 0 || rank >= ltx {
        return Err(invalid(format!(
            "bounds need 1 <= rank < ltx, got rank {rank} with {ltx} antennas"
        )));
    }
    if !(k >= 1.0) {
        return Err(invalid(format!("codebook size {k} must be at least 1")));
    }
    let t = rank * (ltx - rank);
    let tf = t as f64;
    let eta = eta(ltx, rank)?;
    let base = eta.powf(-1.0 / tf) * k.powf(-1.0 / tf);
    let lower = tf / (tf + 1.0) * base;
    let upper = gamma(1.0 / tf) / tf * base;
    let s = rank as f64;
    Ok(DistortionBounds {
        t,
        eta,
        lower,
        upper,
        mu_lower: (1.0 - upper / s).max(0.0),
        mu_upper: (1.0 - lower / s).max(0.0),
    })
}
