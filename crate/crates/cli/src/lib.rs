//! Command implementations behind the `beamcap` binary.
//!
//! Every command writes `#`-prefixed manifest lines followed by a CSV body
//! (or a codebook file for `codebook`).

use std::f64::consts::LN_2;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use beamcap::beam_design::{finite_design, StrategyKind, StrategySpec};
use beamcap::grassmann::{design_codebook, distortion_bounds_for_size, estimate_mu, Codebook, DesignParams};
use beamcap::onoff::{info_rate_infinity, sweep_rho};
use beamcap::simulate::{
    best_single_rank, capacity_approx, rate_csir, rate_csitr_waterfill, rate_gated_codebook, rate_multirank,
    rate_perfect_onoff, rate_with_codebook, CodebookCache, PartitionSearch, RateEstimate, SimConfig,
};
use beamcap::spectra::t_of_lambda;
use beamcap::waterfill::{capacity_quadrature, power_quadrature, solve_nu};
use beamcap::SystemDims;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Infeasible(_) | CliError::Numeric(_) => 3,
            CliError::Io(_) | CliError::Csv(_) => 1,
        }
    }
}

impl From<beamcap::Error> for CliError {
    fn from(e: beamcap::Error) -> Self {
        use beamcap::Error as E;
        match e {
            E::InvalidArgument(_) | E::Degenerate(_) | E::Domain(_) => CliError::Usage(e.to_string()),
            E::Infeasible(_) => CliError::Infeasible(e.to_string()),
            E::Numeric { .. } => CliError::Numeric(e.to_string()),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "beamcap", version, about = "MIMO on/off beamforming rates with finite-rate feedback")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal on/off threshold and rate in the large-system limit over an SNR sweep.
    #[command(allow_negative_numbers = true)]
    Asymptotic(AsymptoticArgs),
    /// Large-system water-filling capacity over an SNR grid.
    #[command(allow_negative_numbers = true)]
    Waterfill(WaterfillArgs),
    /// Monte Carlo rates of a transmission strategy.
    #[command(allow_negative_numbers = true)]
    Simulate(SimulateArgs),
    /// Design (or load) a Grassmann codebook and report its distortion.
    Codebook(CodebookArgs),
}

#[derive(Debug, Args)]
pub struct AsymptoticArgs {
    /// Dimension ratio m/n in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    pub y: f64,
    /// Lowest SNR in dB.
    #[arg(long, default_value_t = -10.0)]
    pub rho_min: f64,
    /// Highest SNR in dB.
    #[arg(long, default_value_t = 20.0)]
    pub rho_max: f64,
    #[arg(long, default_value_t = 31)]
    pub points: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Oracle {
    /// Closed-form expressions.
    Closed,
    /// Adaptive quadrature of the defining integrals.
    Quad,
}

#[derive(Debug, Args)]
pub struct WaterfillArgs {
    #[arg(long, default_value_t = 1.0)]
    pub y: f64,
    /// Comma-separated SNR values in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-10,-5,0,5,10,15,20")]
    pub rho_grid: Vec<f64>,
    #[arg(long, value_enum, default_value_t = Oracle::Closed)]
    pub oracle: Oracle,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Strategy {
    /// On/off with perfect eigenvector knowledge at the transmitter.
    Perfect,
    /// On/off with a designed finite-rate codebook.
    Codebook,
    /// Water-filling with full channel knowledge at both ends.
    Csitr,
    /// Equal power on every transmit antenna.
    Csir,
    /// Multi-rank codebook with threshold rank selection.
    Multirank,
}

impl Strategy {
    fn name(self) -> &'static str {
        match self {
            Strategy::Perfect => "perfect",
            Strategy::Codebook => "codebook",
            Strategy::Csitr => "csitr",
            Strategy::Csir => "csir",
            Strategy::Multirank => "multirank",
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub tx: usize,
    #[arg(long)]
    pub rx: usize,
    /// Comma-separated SNR values in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub rho_db: Vec<f64>,
    #[arg(long, value_enum)]
    pub strategy: Strategy,
    /// Feedback bits; required by the codebook and multirank strategies.
    #[arg(long)]
    pub rfb: Option<u32>,
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Refinement steps per restart of the codebook design.
    #[arg(long, default_value_t = 2000)]
    pub design_iters: usize,
    /// Fixed multi-rank partition `K_0,K_1,...,K_tx` instead of a search.
    #[arg(long, value_delimiter = ',')]
    pub partition: Option<Vec<usize>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CodebookArgs {
    #[arg(long)]
    pub tx: usize,
    #[arg(long)]
    pub rank: usize,
    #[arg(long, default_value_t = 4)]
    pub bits: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2000)]
    pub design_iters: usize,
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
    /// Draws used to measure the distortion.
    #[arg(long, default_value_t = 100_000)]
    pub mu_trials: usize,
    /// Read the codebook from this file instead of designing one.
    #[arg(long)]
    pub load: Option<PathBuf>,
    /// Where to write the codebook; omitted means no file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Provenance written at the top of every output file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub parameters: Vec<(String, String)>,
    pub seed: u64,
    pub tool_version: String,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(command: &str, parameters: Vec<(String, String)>, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            parameters,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        }
    }

    pub fn write_to(&self, w: &mut dyn Write) -> io::Result<()> {
        writeln!(w, "# command: {}", self.command)?;
        for (k, v) in &self.parameters {
            writeln!(w, "# {k}: {v}")?;
        }
        writeln!(w, "# seed: {}", self.seed)?;
        writeln!(w, "# tool_version: {}", self.tool_version)?;
        writeln!(w, "# timestamp: {}", self.timestamp)
    }
}

fn param(k: &str, v: impl ToString) -> (String, String) {
    (k.to_string(), v.to_string())
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn open_output(out: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn db_to_linear(db: f64) -> CliResult<f64> {
    if !db.is_finite() {
        return Err(usage(format!("SNR {db} dB is not finite")));
    }
    Ok(10f64.powf(db / 10.0))
}

fn check_y(y: f64) -> CliResult<()> {
    if y > 0.0 && y <= 1.0 {
        Ok(())
    } else {
        Err(usage(format!("--y must lie in (0, 1], got {y}")))
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.10e}")
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Asymptotic(a) => cmd_asymptotic(&a),
        Command::Waterfill(a) => cmd_waterfill(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Codebook(a) => cmd_codebook(&a),
    }
}

pub fn cmd_asymptotic(args: &AsymptoticArgs) -> CliResult<()> {
    check_y(args.y)?;
    if args.points == 0 {
        return Err(usage("--points must be at least 1"));
    }
    if !(args.rho_min.is_finite() && args.rho_max.is_finite()) {
        return Err(usage("SNR limits must be finite"));
    }
    if args.points > 1 && args.rho_max <= args.rho_min {
        return Err(usage("--rho-max must exceed --rho-min"));
    }
    let dbs: Vec<f64> = (0..args.points)
        .map(|i| {
            if args.points == 1 {
                args.rho_min
            } else {
                args.rho_min + (args.rho_max - args.rho_min) * i as f64 / (args.points - 1) as f64
            }
        })
        .collect();
    let rhos = dbs.iter().map(|&d| db_to_linear(d)).collect::<CliResult<Vec<_>>>()?;
    let points = sweep_rho(args.y, &rhos)?;

    let manifest = RunManifest::new(
        "asymptotic",
        vec![
            param("y", args.y),
            param("rho_min_db", args.rho_min),
            param("rho_max_db", args.rho_max),
            param("points", args.points),
        ],
        0,
    );
    let mut out = open_output(args.out.as_deref())?;
    manifest.write_to(&mut out)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rho_db", "a_opt", "sbar", "pbar_on", "rate_nats_per_dim", "rate_bits_per_dim"])?;
    for (db, p) in dbs.iter().zip(&points) {
        w.write_record([fmt(*db), fmt(p.a), fmt(p.sbar), fmt(p.pbar_on), fmt(p.rate), fmt(p.rate / LN_2)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_waterfill(args: &WaterfillArgs) -> CliResult<()> {
    check_y(args.y)?;
    if args.rho_grid.is_empty() {
        return Err(usage("--rho-grid is empty"));
    }
    let mut rows = Vec::with_capacity(args.rho_grid.len());
    for &db in &args.rho_grid {
        let rho = db_to_linear(db)?;
        let sol = solve_nu(rho, args.y)?;
        let capacity = match args.oracle {
            Oracle::Closed => sol.capacity,
            Oracle::Quad => {
                let p = power_quadrature(sol.nu, args.y, 1e-12)?;
                if (p - rho).abs() > 1e-8 * rho.max(1.0) {
                    return Err(CliError::Numeric(format!(
                        "quadrature power {p} disagrees with the target {rho}"
                    )));
                }
                capacity_quadrature(sol.nu, args.y, 1e-12)?
            }
        };
        rows.push([fmt(db), fmt(sol.nu), fmt(sol.a), fmt(capacity), fmt(capacity / LN_2)]);
    }
    let oracle = match args.oracle {
        Oracle::Closed => "closed",
        Oracle::Quad => "quad",
    };
    let manifest = RunManifest::new(
        "waterfill",
        vec![param("y", args.y), param("rho_grid_db", join(&args.rho_grid)), param("oracle", oracle)],
        0,
    );
    let mut out = open_output(args.out.as_deref())?;
    manifest.write_to(&mut out)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rho_db", "nu", "a", "capacity_nats_per_dim", "capacity_bits_per_dim"])?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

struct SimRow {
    db: f64,
    strategy: &'static str,
    est: RateEstimate,
    predicted: Option<f64>,
    detail: String,
}

fn strategy_detail(spec: &StrategySpec) -> String {
    match spec.kind {
        StrategyKind::ConstantBeams => format!("constant s={} p_on={}", spec.s, fmt(spec.p_on)),
        StrategyKind::GatedSingleBeam => {
            format!("gated s=1 p_on={} kappa={}", fmt(spec.p_on), fmt(spec.kappa))
        }
        StrategyKind::Off => "off".to_string(),
    }
}

fn codebook_row(config: &SimConfig, bits: u32, params: DesignParams) -> CliResult<(RateEstimate, Option<f64>, String)> {
    let dims = config.dims;
    let spec = finite_design(&dims, config.rho)?;
    let budget = 1usize << bits;
    let mut cache = CodebookCache::new(dims.tx, config.seed, params);
    let mut mu_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6d75_0000_0000_0001);
    match spec.kind {
        StrategyKind::ConstantBeams => {
            let cb = cache.get(spec.s, budget)?;
            let mu = estimate_mu(&cb, 20_000, &mut mu_rng)?.mu_hat;
            let est = rate_with_codebook(config, &cb, spec.p_on)?;
            let predicted = capacity_approx(&dims, spec.s, mu, config.rho)?;
            Ok((est, Some(predicted), format!("{} mu={}", strategy_detail(&spec), fmt(mu))))
        }
        StrategyKind::GatedSingleBeam => {
            // one index is reserved for "off"
            if budget < 2 {
                return Err(usage("gated transmission needs at least 2 feedback messages"));
            }
            let cb = cache.get(1, budget - 1)?;
            let mu = estimate_mu(&cb, 20_000, &mut mu_rng)?.mu_hat;
            let est = rate_gated_codebook(config, &cb, spec.p_on, spec.kappa)?;
            let a = t_of_lambda(spec.kappa, dims.y);
            let predicted = info_rate_infinity(a, dims.y, mu * config.rho)?;
            Ok((est, Some(predicted), format!("{} mu={}", strategy_detail(&spec), fmt(mu))))
        }
        StrategyKind::Off => Ok((zero_estimate(config.trials), Some(0.0), "off".into())),
    }
}

fn zero_estimate(trials: usize) -> RateEstimate {
    RateEstimate {
        mean_rate: 0.0,
        std_error: 0.0,
        trials,
        mean_power_used: 0.0,
        power_std_error: 0.0,
    }
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let dims = SystemDims::new(args.tx, args.rx)?;
    if args.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    let needs_rfb = matches!(args.strategy, Strategy::Codebook | Strategy::Multirank);
    let bits = match (needs_rfb, args.rfb) {
        (true, None) => return Err(usage(format!("--strategy {} needs --rfb", args.strategy.name()))),
        (true, Some(0)) => return Err(usage("--rfb must be at least 1")),
        (true, Some(b)) if b > 16 => return Err(usage("--rfb above 16 is not supported")),
        (_, b) => b.unwrap_or(0),
    };
    if args.partition.is_some() && args.strategy != Strategy::Multirank {
        return Err(usage("--partition only applies to --strategy multirank"));
    }
    let params = DesignParams {
        restarts: DesignParams::default().restarts,
        steps: args.design_iters,
    };
    let mut rows = Vec::new();
    for &db in &args.rho_db {
        let rho = db_to_linear(db)?;
        let config = SimConfig::new(dims, rho, args.trials, args.seed)?;
        match args.strategy {
            Strategy::Perfect => {
                let spec = finite_design(&dims, rho)?;
                let est = rate_perfect_onoff(&config, &spec)?;
                rows.push(SimRow {
                    db,
                    strategy: "perfect",
                    est,
                    predicted: Some(spec.predicted_rate),
                    detail: strategy_detail(&spec),
                });
            }
            Strategy::Codebook => {
                let (est, predicted, detail) = codebook_row(&config, bits, params)?;
                rows.push(SimRow { db, strategy: "codebook", est, predicted, detail });
            }
            Strategy::Csitr => {
                let sol = solve_nu(rho, dims.y)?;
                let est = rate_csitr_waterfill(&config)?;
                rows.push(SimRow {
                    db,
                    strategy: "csitr",
                    est,
                    predicted: Some(sol.capacity),
                    detail: format!("nu={}", fmt(sol.nu)),
                });
            }
            Strategy::Csir => {
                let est = rate_csir(&config)?;
                rows.push(SimRow { db, strategy: "csir", est, predicted: None, detail: String::new() });
            }
            Strategy::Multirank => {
                let search = match &args.partition {
                    Some(p) => PartitionSearch::Given(p.clone()),
                    None => PartitionSearch::All,
                };
                let res = rate_multirank(&config, &search, bits, params)?;
                rows.push(SimRow {
                    db,
                    strategy: "multirank",
                    est: res.estimate,
                    predicted: None,
                    detail: format!(
                        "partition={} p_on={} kappa={}",
                        res.partition.iter().map(ToString::to_string).collect::<Vec<_>>().join("/"),
                        fmt(res.p_on),
                        fmt(res.kappa)
                    ),
                });
                let (single, s) = best_single_rank(&config, bits, params)?;
                rows.push(SimRow {
                    db,
                    strategy: "single_rank",
                    est: single,
                    predicted: None,
                    detail: format!("s={s} p_on={}", fmt(rho / s as f64)),
                });
            }
        }
    }

    let mut parameters = vec![
        param("tx", args.tx),
        param("rx", args.rx),
        param("rho_db", join(&args.rho_db)),
        param("strategy", args.strategy.name()),
        param("trials", args.trials),
        param("design_iters", args.design_iters),
    ];
    if let Some(b) = args.rfb {
        parameters.push(param("rfb", b));
    }
    if let Some(p) = &args.partition {
        parameters.push(param("partition", join(p)));
    }
    let manifest = RunManifest::new("simulate", parameters, args.seed);
    let mut out = open_output(args.out.as_deref())?;
    manifest.write_to(&mut out)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "rho_db",
        "strategy",
        "rate_nats",
        "rate_bits",
        "std_error_nats",
        "rate_nats_per_dim",
        "mean_power",
        "power_std_error",
        "predicted_nats_per_dim",
        "detail",
    ])?;
    let m = dims.m as f64;
    for r in rows {
        w.write_record([
            fmt(r.db),
            r.strategy.to_string(),
            fmt(r.est.mean_rate),
            fmt(r.est.mean_rate / LN_2),
            fmt(r.est.std_error),
            fmt(r.est.mean_rate / m),
            fmt(r.est.mean_power_used),
            fmt(r.est.power_std_error),
            r.predicted.map(fmt).unwrap_or_default(),
            r.detail,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Below this many codewords the distortion bounds are only indicative.
const LARGE_K: usize = 10;

pub fn cmd_codebook(args: &CodebookArgs) -> CliResult<()> {
    if args.tx == 0 || args.rank == 0 {
        return Err(usage("--tx and --rank must be positive"));
    }
    if args.rank >= args.tx {
        return Err(usage(format!("--rank {} must be below --tx {}", args.rank, args.tx)));
    }
    if args.mu_trials == 0 {
        return Err(usage("--mu-trials must be at least 1"));
    }
    let cb = match &args.load {
        Some(path) => {
            let cb = Codebook::from_text(&std::fs::read_to_string(path)?)?;
            if (cb.ltx, cb.rank) != (args.tx, args.rank) {
                return Err(usage(format!(
                    "loaded codebook is {}x{}, expected {}x{}",
                    cb.ltx, cb.rank, args.tx, args.rank
                )));
            }
            cb
        }
        None => {
            if args.bits == 0 || args.bits > 16 {
                return Err(usage("--bits must lie in 1..=16"));
            }
            let size = 1usize << args.bits;
            let params = DesignParams {
                restarts: args.restarts.max(1),
                steps: args.design_iters,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            design_codebook(args.tx, args.rank, size, &mut rng, params)?
        }
    };
    let mut mrng = ChaCha8Rng::seed_from_u64(args.seed ^ 0x6d75_0000_0000_0001);
    let mu = estimate_mu(&cb, args.mu_trials, &mut mrng)?;
    let bounds = distortion_bounds_for_size(cb.ltx, cb.rank, cb.len() as f64)?;

    let mut parameters = vec![
        param("tx", args.tx),
        param("rank", args.rank),
        param("size", cb.len()),
        param("mu_trials", args.mu_trials),
    ];
    match &args.load {
        Some(p) => parameters.push(param("load", p.display())),
        None => {
            parameters.push(param("bits", args.bits));
            parameters.push(param("design_iters", args.design_iters));
            parameters.push(param("restarts", args.restarts));
        }
    }
    let manifest = RunManifest::new("codebook", parameters, args.seed);
    if let Some(path) = &args.out {
        let mut f = BufWriter::new(File::create(path)?);
        manifest.write_to(&mut f)?;
        f.write_all(cb.to_text().as_bytes())?;
        f.flush()?;
    }
    if cb.len() < LARGE_K {
        eprintln!(
            "warning: the distortion bounds assume a large codebook; {} codewords is below {LARGE_K}",
            cb.len()
        );
    }
    let mut out = io::stdout().lock();
    writeln!(out, "size={}", cb.len())?;
    writeln!(out, "min_pairwise_dc2={}", fmt(cb.min_pairwise_dc2))?;
    writeln!(out, "mean_dc2={}", fmt(mu.mean_dc2))?;
    writeln!(out, "mu_hat={}", fmt(mu.mu_hat))?;
    writeln!(out, "offdiag_max={}", fmt(mu.offdiag_max))?;
    writeln!(out, "diag_spread={}", fmt(mu.diag_spread))?;
    writeln!(out, "dc2_lower={}", fmt(bounds.lower))?;
    writeln!(out, "dc2_upper={}", fmt(bounds.upper))?;
    writeln!(out, "mu_lower={}", fmt(bounds.mu_lower))?;
    writeln!(out, "mu_upper={}", fmt(bounds.mu_upper))?;
    Ok(())
}

/// Worker count from `BEAMCAP_THREADS`, if set.
pub fn threads_from_env() -> CliResult<Option<usize>> {
    match std::env::var("BEAMCAP_THREADS") {
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(usage(format!("BEAMCAP_THREADS: {e}"))),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(usage(format!("BEAMCAP_THREADS must be a positive integer, got {v:?}"))),
        },
    }
}
