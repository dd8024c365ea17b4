//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime or resource failure, 2 usage or config
//! error. Everything on stdout is deterministic for fixed inputs; timings and
//! warnings go to stderr.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::analytic::{bs_greeks, BsInputs, OptionType};
use crate::full_model::{price_full, simulate_full, FullBatch};
use crate::params::{emit_config, load_config, PricingConfig};
use crate::paths::{simulate_batch, PathBatch, SimulationError};
use crate::payoffs::{PayoffDescriptor, PayoffError, PayoffKind};
use crate::pricer::{convergence, greek_estimates, parse_checkpoints, price_corrected, price_zero_order, Estimate, PricingError};
use crate::weights::{write_diagnostics_csv, BatchWeights};

#[derive(Debug, Parser)]
#[command(name = "mssv", version, about = "Malliavin-weight Monte Carlo under multiscale stochastic volatility")]
struct Cli {
    /// Worker threads; results do not depend on this value.
    #[arg(long, global = true, env = "MSSV_WORKERS", value_parser = parse_positive)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Zero-order and corrected prices for every payoff, from one batch.
    Price {
        #[command(flatten)]
        run: RunArgs,
        /// Also simulate the full model and price against it.
        #[arg(long)]
        full_model: bool,
        /// Write a CSV of the estimates.
        #[arg(long, value_name = "FILE.csv")]
        out: Option<PathBuf>,
        /// Write per-path weight diagnostics.
        #[arg(long, value_name = "FILE.csv")]
        diagnostics: Option<PathBuf>,
    },
    /// Prefix convergence series for one payoff.
    Convergence {
        #[command(flatten)]
        run: RunArgs,
        /// Geometric checkpoint spec START:END:xFACTOR, e.g. 1e3:1e6:x10.
        #[arg(long)]
        checkpoints: String,
        /// Add full-model columns.
        #[arg(long)]
        full_model: bool,
        /// Write the CSV here instead of stdout.
        #[arg(long, value_name = "FILE.csv")]
        out: Option<PathBuf>,
    },
    /// Weight-based Greeks on a single-date grid beside closed-form values.
    Greeks {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Prices every payoff under the full model only.
    FullModel {
        #[command(flatten)]
        run: RunArgs,
        /// Override substeps_per_interval.
        #[arg(long, value_parser = parse_positive)]
        substeps: Option<usize>,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Config file.
    config: PathBuf,
    /// Payoff to price (repeatable); defaults to every payoff in the config.
    #[arg(long = "payoff", value_name = "NAME")]
    payoffs: Vec<String>,
    /// Override n_paths.
    #[arg(long, value_parser = parse_positive)]
    paths: Option<usize>,
    /// Override seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_positive(s: &str) -> Result<usize, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() && v >= 1.0 && v.fract() == 0.0 && v <= 1e15 {
        Ok(v as usize)
    } else {
        Err(format!("`{s}` is not a positive whole number"))
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<SimulationError> for CliError {
    fn from(e: SimulationError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<PricingError> for CliError {
    fn from(e: PricingError) -> Self {
        match e {
            PricingError::BatchMismatch => CliError::Runtime(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

/// Parses `std::env::args` and runs the command, returning the exit code.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let workers = cli.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let started = Instant::now();
    let result = crate::with_workers(workers, || dispatch(cli.command));
    match result {
        Ok(()) => {
            eprintln!("elapsed {:.3} s", started.elapsed().as_secs_f64());
            0
        }
        Err(e) => {
            let (CliError::Usage(msg) | CliError::Runtime(msg)) = &e;
            eprintln!("mssv: {msg}");
            e.code()
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Price { run, full_model, out, diagnostics } => cmd_price(&run, full_model, out.as_deref(), diagnostics.as_deref()),
        Command::Convergence { run, checkpoints, full_model, out } => {
            cmd_convergence(&run, &checkpoints, full_model, out.as_deref())
        }
        Command::Greeks { run } => cmd_greeks(&run),
        Command::FullModel { run, substeps } => cmd_full_model(&run, substeps),
    }
}

/// Loads the config, applies overrides and resolves the payoff selection.
fn prepare(run: &RunArgs) -> Result<PricingConfig, CliError> {
    let text = std::fs::read_to_string(&run.config)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", run.config.display())))?;
    let mut cfg = load_config(&text).map_err(|e| CliError::Usage(format!("{}: {e}", run.config.display())))?;
    if let Some(n) = run.paths {
        cfg.n_paths = n;
    }
    if let Some(seed) = run.seed {
        cfg.seed = seed;
    }
    if !run.payoffs.is_empty() {
        cfg.payoffs = select_payoffs(&cfg.payoffs, &run.payoffs)?;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

/// Picks payoffs by name. A valid name absent from the config is built from
/// the strike and barrier of the first configured payoff that has them.
fn select_payoffs(configured: &[PayoffDescriptor], names: &[String]) -> Result<Vec<PayoffDescriptor>, CliError> {
    let mut out = Vec::new();
    for name in names {
        let matching: Vec<_> = configured.iter().filter(|p| p.name() == name).cloned().collect();
        if !matching.is_empty() {
            out.extend(matching);
            continue;
        }
        let strike = configured.iter().find_map(|p| p.kind.strike());
        let barrier = configured.iter().find_map(|p| match p.kind {
            PayoffKind::UpAndOutCall { barrier, .. } => Some(barrier),
            _ => None,
        });
        let kind = PayoffKind::from_parts(name, strike, barrier, None).map_err(|e| match e {
            PayoffError::UnknownName { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Usage(format!("{e} (not in the config and no default available)")),
        })?;
        out.push(PayoffDescriptor::new(kind));
    }
    Ok(out)
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn echo_config(report: &mut String, cfg: &PricingConfig) {
    for line in emit_config(cfg).lines() {
        let _ = writeln!(report, "# {line}");
    }
}

fn write_estimate(report: &mut String, label: &str, e: &Estimate) {
    let _ = writeln!(
        report,
        "  {label:<11} mean {}  stderr {}  ci95 [{}, {}]",
        num(e.mean),
        num(e.stderr),
        num(e.ci95_low),
        num(e.ci95_high)
    );
}

fn open_out(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))
}

fn print(report: &str) -> Result<(), CliError> {
    let mut stdout = io::stdout().lock();
    stdout.write_all(report.as_bytes())?;
    stdout.flush()?;
    Ok(())
}

fn full_batch(cfg: &PricingConfig, substeps: usize) -> Result<FullBatch, CliError> {
    let params = cfg
        .full_model
        .as_ref()
        .ok_or_else(|| CliError::Usage("config has no [full_model] section".into()))?;
    let batch = simulate_full(params, cfg.group.r, &cfg.grid, substeps, cfg.n_paths, cfg.seed)?;
    if let Some(w) = batch.warning() {
        eprintln!("mssv: warning: {w}");
    }
    Ok(batch)
}

fn cmd_price(run: &RunArgs, with_full: bool, out: Option<&Path>, diagnostics: Option<&Path>) -> Result<(), CliError> {
    let cfg = prepare(run)?;
    let full = with_full.then(|| full_batch(&cfg, cfg.substeps_per_interval)).transpose()?;
    let batch = simulate_batch(&cfg)?;
    let weights = BatchWeights::compute(&batch, &cfg.group);

    let mut report = String::new();
    echo_config(&mut report, &cfg);
    let _ = writeln!(report, "seed {}", cfg.seed);
    let _ = writeln!(report, "n_paths {}", cfg.n_paths);
    let mut csv = String::from("payoff,estimator,mean,stderr,ci95_low,ci95_high,n_paths\n");
    for payoff in &cfg.payoffs {
        let mut rows = vec![
            ("zero_order", price_zero_order(&batch, payoff)?),
            ("corrected", price_corrected(&batch, &weights, payoff)?),
        ];
        if let Some(f) = &full {
            rows.push(("full_model", price_full(f, payoff)?));
        }
        let _ = writeln!(report, "payoff {}", payoff.kind);
        for (label, e) in &rows {
            write_estimate(&mut report, label, e);
            let _ = writeln!(
                csv,
                "{},{label},{},{},{},{},{}",
                payoff.kind,
                num(e.mean),
                num(e.stderr),
                num(e.ci95_low),
                num(e.ci95_high),
                e.n_paths
            );
        }
    }
    print(&report)?;
    if let Some(path) = out {
        let mut w = open_out(path)?;
        w.write_all(csv.as_bytes())?;
        w.flush()?;
    }
    if let Some(path) = diagnostics {
        write_diagnostics_csv(&batch, &cfg.group, open_out(path)?)?;
    }
    Ok(())
}

fn cmd_convergence(run: &RunArgs, spec: &str, with_full: bool, out: Option<&Path>) -> Result<(), CliError> {
    let checkpoints = parse_checkpoints(spec).map_err(CliError::Usage)?;
    let cfg = prepare(run)?;
    if cfg.payoffs.len() != 1 && run.payoffs.len() != 1 {
        eprintln!("mssv: convergence uses the first payoff, {}", cfg.payoffs[0].kind);
    }
    let payoff = &cfg.payoffs[0];
    if let Some(&last) = checkpoints.last() {
        if last > cfg.n_paths {
            return Err(CliError::Usage(format!("checkpoint {last} exceeds n_paths = {}", cfg.n_paths)));
        }
    }
    let full = with_full.then(|| full_batch(&cfg, cfg.substeps_per_interval)).transpose()?;
    let batch = simulate_batch(&cfg)?;
    let weights = BatchWeights::compute(&batch, &cfg.group);
    let series = convergence(&batch, &weights, payoff, &checkpoints, full.as_ref())?;
    match out {
        Some(path) => series.write_csv(open_out(path)?)?,
        None => series.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

/// Closed-form scaled Greeks `(D1, D2, vega, vanna)` when the payoff has them
/// on a single date.
fn analytic_greeks(batch: &PathBatch, payoff: &PayoffDescriptor) -> Option<[f64; 4]> {
    let inputs = |strike| BsInputs {
        spot: batch.s0(),
        strike,
        rate: batch.r(),
        vol: batch.sigma_bar(),
        tau: batch.grid().maturity(),
    };
    let from = |g: crate::analytic::BsGreeks| [g.d1, g.d2, g.vega, g.vanna_d1];
    match payoff.kind {
        // on one date the average is the terminal value
        PayoffKind::EuropeanCall { strike } | PayoffKind::AsianCall { strike } => {
            Some(from(bs_greeks(&inputs(strike), OptionType::Call)))
        }
        PayoffKind::EuropeanPut { strike } => Some(from(bs_greeks(&inputs(strike), OptionType::Put))),
        PayoffKind::Forward { .. } => Some([batch.s0(), 0.0, 0.0, 0.0]),
        PayoffKind::Constant { .. } => Some([0.0; 4]),
        PayoffKind::UpAndOutCall { .. } => None,
    }
}

fn cmd_greeks(run: &RunArgs) -> Result<(), CliError> {
    let cfg = prepare(run)?;
    if cfg.grid.len() != 1 {
        return Err(CliError::Usage(format!(
            "greeks needs a single-date grid (n = 1); the config has n = {}",
            cfg.grid.len()
        )));
    }
    let batch = simulate_batch(&cfg)?;
    let mut report = String::new();
    echo_config(&mut report, &cfg);
    let _ = writeln!(report, "seed {}", cfg.seed);
    let _ = writeln!(report, "n_paths {}", cfg.n_paths);
    for payoff in &cfg.payoffs {
        let g = greek_estimates(&batch, payoff)?;
        let exact = analytic_greeks(&batch, payoff);
        let _ = writeln!(report, "payoff {}", payoff.kind);
        let _ = writeln!(report, "  greek,estimate,stderr,analytic,z");
        for (i, (name, e)) in [("D1", g.d1), ("D2", g.d2), ("dSigma", g.d_sigma), ("D1dSigma", g.d1_d_sigma)]
            .into_iter()
            .enumerate()
        {
            let (a, z) = match exact {
                Some(a) => (num(a[i]), num(e.z_score(a[i]))),
                None => ("n/a".to_string(), "n/a".to_string()),
            };
            let _ = writeln!(report, "  {name},{},{},{a},{z}", num(e.mean), num(e.stderr));
        }
    }
    print(&report)
}

fn cmd_full_model(run: &RunArgs, substeps: Option<usize>) -> Result<(), CliError> {
    let cfg = prepare(run)?;
    let substeps = substeps.unwrap_or(cfg.substeps_per_interval);
    let full = full_batch(&cfg, substeps)?;
    let mut report = String::new();
    echo_config(&mut report, &cfg);
    let _ = writeln!(report, "seed {}", cfg.seed);
    let _ = writeln!(report, "n_paths {}", cfg.n_paths);
    let _ = writeln!(report, "substeps_per_interval {substeps}");
    for payoff in &cfg.payoffs {
        let _ = writeln!(report, "payoff {}", payoff.kind);
        write_estimate(&mut report, "full_model", &price_full(&full, payoff)?);
    }
    print(&report)
}
