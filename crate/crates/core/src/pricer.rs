//! Monte Carlo estimators: zero-order price, weight-corrected price,
//! single-date Greeks and prefix convergence series.
//!
//! Per-path contributions are computed in parallel and reduced in path-index
//! order with compensated summation, so every estimate is independent of the
//! worker count.

use std::collections::BTreeSet;
use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::full_model::FullBatch;
use crate::params::MarketGroupParams;
use crate::paths::PathBatch;
use crate::payoffs::{PayoffDescriptor, PayoffError};
use crate::summation::NeumaierSum;
use crate::weights::{vanilla_weights, BatchWeights};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PricingError {
    #[error("payoff does not fit the batch grid: {0}")]
    IncompatibleGrid(PayoffError),
    #[error("weights were built from a different batch")]
    BatchMismatch,
    #[error("Greek weights need a single-date grid, batch has {0} dates")]
    NotSingleDate(usize),
    #[error("checkpoint {checkpoint} exceeds the {n_paths} simulated paths")]
    CheckpointExceedsBatch { checkpoint: usize, n_paths: usize },
    #[error("checkpoints must be positive and strictly increasing")]
    CheckpointsNotIncreasing,
}

/// Sample mean with its standard error and 95% normal interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub ci95_low: f64,
    pub ci95_high: f64,
}

impl Estimate {
    /// Mean and unbiased standard error of `samples`. A single sample has
    /// zero standard error.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        assert!(n > 0, "estimate of an empty sample");
        // shifting by the first sample keeps constant samples exact
        let shift = samples[0];
        let mut sum = NeumaierSum::new();
        sum.extend(samples.iter().map(|x| x - shift));
        let mean = shift + sum.total() / n as f64;
        let stderr = if n > 1 {
            let mut sq = NeumaierSum::new();
            sq.extend(samples.iter().map(|x| (x - mean) * (x - mean)));
            (sq.total() / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Estimate { mean, stderr, n_paths: n, ci95_low: mean - 1.96 * stderr, ci95_high: mean + 1.96 * stderr }
    }

    /// `(self - other) / sqrt(se_self^2 + se_other^2)`.
    pub fn z_score_against(&self, other: &Estimate) -> f64 {
        (self.mean - other.mean) / self.stderr.hypot(other.stderr)
    }

    /// `(self - value) / se`.
    pub fn z_score(&self, value: f64) -> f64 {
        (self.mean - value) / self.stderr
    }
}

/// Paths observed on a monitoring grid.
pub trait MonitoredPaths: Sync {
    fn n_paths(&self) -> usize;
    fn n_dates(&self) -> usize;
    fn monitored(&self, path: usize) -> &[f64];
    fn maturity(&self) -> f64;
    fn rate(&self) -> f64;
    fn discount(&self) -> f64 {
        (-self.rate() * self.maturity()).exp()
    }
}

impl MonitoredPaths for PathBatch {
    fn n_paths(&self) -> usize {
        PathBatch::n_paths(self)
    }
    fn n_dates(&self) -> usize {
        PathBatch::n_dates(self)
    }
    fn monitored(&self, path: usize) -> &[f64] {
        self.path_values(path)
    }
    fn maturity(&self) -> f64 {
        self.grid().maturity()
    }
    fn rate(&self) -> f64 {
        self.r()
    }
}

fn check_payoff(paths: &impl MonitoredPaths, payoff: &PayoffDescriptor) -> Result<(), PricingError> {
    payoff.validate(Some(paths.n_dates())).map_err(PricingError::IncompatibleGrid)
}

/// Discounted payoff of every path, in path order.
pub fn discounted_payoffs(paths: &impl MonitoredPaths, payoff: &PayoffDescriptor) -> Result<Vec<f64>, PricingError> {
    check_payoff(paths, payoff)?;
    let df = paths.discount();
    Ok((0..paths.n_paths())
        .into_par_iter()
        .map(|p| df * payoff.evaluate_unchecked(paths.monitored(p)))
        .collect())
}

/// Discounted payoff times the aggregate weight of every path.
pub fn corrected_samples(
    batch: &PathBatch,
    weights: &BatchWeights,
    payoff: &PayoffDescriptor,
) -> Result<Vec<f64>, PricingError> {
    if weights.token() != batch.token() {
        return Err(PricingError::BatchMismatch);
    }
    check_payoff(batch, payoff)?;
    let df = batch.discount();
    let totals = weights.totals();
    Ok((0..batch.n_paths())
        .into_par_iter()
        .map(|p| df * payoff.evaluate_unchecked(batch.path_values(p)) * totals[p])
        .collect())
}

/// Black-Scholes price at the effective volatility.
pub fn price_zero_order(batch: &PathBatch, payoff: &PayoffDescriptor) -> Result<Estimate, PricingError> {
    Ok(Estimate::from_samples(&discounted_payoffs(batch, payoff)?))
}

/// Price including the first-order correction: the mean of discounted
/// payoff times aggregate weight.
pub fn price_corrected(
    batch: &PathBatch,
    weights: &BatchWeights,
    payoff: &PayoffDescriptor,
) -> Result<Estimate, PricingError> {
    Ok(Estimate::from_samples(&corrected_samples(batch, weights, payoff)?))
}

/// Weight-based estimates of the scaled Greeks of a path-independent price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreekEstimates {
    /// `S dP/dS`
    pub d1: Estimate,
    /// `S^2 d^2P/dS^2`
    pub d2: Estimate,
    /// `dP/dsigma`
    pub d_sigma: Estimate,
    /// `S d^2P/dS dsigma`
    pub d1_d_sigma: Estimate,
}

/// Greeks from the single-interval weights. Requires a one-date grid.
pub fn greek_estimates(batch: &PathBatch, payoff: &PayoffDescriptor) -> Result<GreekEstimates, PricingError> {
    if batch.n_dates() != 1 {
        return Err(PricingError::NotSingleDate(batch.n_dates()));
    }
    check_payoff(batch, payoff)?;
    let tau = batch.grid().maturity();
    let df = batch.discount();
    let group = MarketGroupParams { v0_delta: 0.0, v1_delta: 0.0, v3_eps: 0.0, sigma_bar: batch.sigma_bar(), r: batch.r() };
    let rows: Vec<[f64; 4]> = (0..batch.n_paths())
        .into_par_iter()
        .map(|p| {
            let h = df * payoff.evaluate_unchecked(batch.path_values(p));
            let w = vanilla_weights(batch.path_increments(p)[0], tau, &group).expect("tau > 0 on a valid grid");
            [h * w.pi_delta, h * w.pi_gamma, h * w.pi_sigma, h * w.pi_vanna]
        })
        .collect();
    let column = |c: usize| Estimate::from_samples(&rows.iter().map(|r| r[c]).collect::<Vec<_>>());
    Ok(GreekEstimates { d1: column(0), d2: column(1), d_sigma: column(2), d1_d_sigma: column(3) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Checkpoint {
    pub n: usize,
    pub zero_order: Estimate,
    pub corrected: Estimate,
    pub full_model: Option<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceSeries {
    pub checkpoints: Vec<Checkpoint>,
}

impl ConvergenceSeries {
    pub fn has_full_model(&self) -> bool {
        self.checkpoints.iter().any(|c| c.full_model.is_some())
    }

    /// `N,zero_mean,zero_stderr,corr_mean,corr_stderr[,full_mean,full_stderr]`
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let full = self.has_full_model();
        write!(out, "N,zero_mean,zero_stderr,corr_mean,corr_stderr")?;
        if full {
            write!(out, ",full_mean,full_stderr")?;
        }
        writeln!(out)?;
        for c in &self.checkpoints {
            write!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e}",
                c.n, c.zero_order.mean, c.zero_order.stderr, c.corrected.mean, c.corrected.stderr
            )?;
            if full {
                let f = c.full_model.expect("every checkpoint has a full-model estimate");
                write!(out, ",{:.16e},{:.16e}", f.mean, f.stderr)?;
            }
            writeln!(out)?;
        }
        out.flush()
    }
}

/// Estimates on growing prefixes of one batch: checkpoint `N` uses paths
/// `0..N`.
pub fn convergence(
    batch: &PathBatch,
    weights: &BatchWeights,
    payoff: &PayoffDescriptor,
    checkpoints: &[usize],
    full: Option<&FullBatch>,
) -> Result<ConvergenceSeries, PricingError> {
    if checkpoints.first().is_some_and(|&n| n == 0) || checkpoints.windows(2).any(|w| w[1] <= w[0]) {
        return Err(PricingError::CheckpointsNotIncreasing);
    }
    if let Some(&last) = checkpoints.last() {
        let available = full.map_or(batch.n_paths(), |f| f.n_paths().min(batch.n_paths()));
        if last > available {
            return Err(PricingError::CheckpointExceedsBatch { checkpoint: last, n_paths: available });
        }
    } else {
        return Ok(ConvergenceSeries::default());
    }
    let zero = discounted_payoffs(batch, payoff)?;
    let corrected = corrected_samples(batch, weights, payoff)?;
    let full_samples = full.map(|f| discounted_payoffs(f, payoff)).transpose()?;
    let checkpoints = checkpoints
        .iter()
        .map(|&n| Checkpoint {
            n,
            zero_order: Estimate::from_samples(&zero[..n]),
            corrected: Estimate::from_samples(&corrected[..n]),
            full_model: full_samples.as_ref().map(|s| Estimate::from_samples(&s[..n])),
        })
        .collect();
    Ok(ConvergenceSeries { checkpoints })
}

/// Expands `start:end:xF` into `start, start*F, ...` up to `end`. Numbers
/// may use exponent notation but must be whole.
pub fn parse_checkpoints(spec: &str) -> Result<Vec<usize>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [start, end, factor] = parts.as_slice() else {
        return Err(format!("checkpoint spec `{spec}` is not of the form START:END:xFACTOR"));
    };
    let whole = |s: &str| -> Result<usize, String> {
        let v: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
        if !(v.is_finite() && v >= 1.0 && v.fract() == 0.0 && v <= 1e15) {
            return Err(format!("`{s}` is not a positive whole number"));
        }
        Ok(v as usize)
    };
    let start = whole(start)?;
    let end = whole(end)?;
    let factor = whole(factor.trim().strip_prefix('x').ok_or_else(|| format!("factor `{factor}` must look like x10"))?)?;
    if factor < 2 {
        return Err("factor must be at least 2".into());
    }
    if end < start {
        return Err("end is below start".into());
    }
    let mut out = BTreeSet::new();
    let mut n = start;
    while n <= end {
        out.insert(n);
        n = match n.checked_mul(factor) {
            Some(v) => v,
            None => break,
        };
    }
    Ok(out.into_iter().collect())
}
