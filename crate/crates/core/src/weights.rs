//! Malliavin weights for the first-order correction.
//!
//! For a path with Brownian increments `dW_k` over intervals of length
//! `dt_k`, the per-interval weights are
//!
//! ```text
//! pi_delta_j = dW_j / (sigma dt_j)
//! pi_3_j     = pi_delta_j^3 - pi_delta_j^2 - (3 pi_delta_j - 1) / (sigma^2 dt_j)
//! F_k        = -sigma dt_k + dW_k
//! pi_sigma_j = (-(n - j) + sum_{k>=j} F_k dW_k / dt_k) / sigma
//! pi_vanna_j = pi_sigma_j pi_delta_j - (dW_j + F_j) / (sigma^2 dt_j)
//! pi_h_j     = 2 V0 pi_sigma_j + 2 V1 pi_vanna_j + V3 pi_3_j
//! ```
//!
//! and the aggregate weight is `1 + sum_j pi_h_j dt_j`, accumulated in
//! ascending `j` with compensated summation. Multiplying a discounted payoff
//! by the aggregate weight gives the corrected price in expectation.
//!
//! Suffix sums over `k >= j` are always accumulated from `k = n - 1` down to
//! `j`, both in the single-interval functions and in the aggregate pass, so
//! the two routes agree bit for bit.

use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::params::{MarketGroupParams, MonitoringGrid};
use crate::paths::{BatchToken, PathBatch};
use crate::summation::NeumaierSum;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("horizon must be > 0, got {0}")]
    NonPositiveHorizon(f64),
}

/// Component weights of one interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalWeights {
    pub pi_delta: f64,
    pub pi_3: f64,
    pub pi_sigma: f64,
    pub pi_vanna: f64,
    pub pi_h: f64,
}

/// Per-interval component series, kept only when diagnostics are requested.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComponentSeries {
    pub pi_delta: Vec<f64>,
    pub pi_3: Vec<f64>,
    pub pi_sigma: Vec<f64>,
    pub pi_vanna: Vec<f64>,
}

/// Weights of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathWeights {
    pub pi_h: Vec<f64>,
    pub total: f64,
    pub components: Option<ComponentSeries>,
}

fn suffix_sum(increments: &[f64], dts: impl Fn(usize) -> f64, sigma: f64, j: usize) -> f64 {
    let mut fdw = 0.0;
    for k in (j..increments.len()).rev() {
        let dw = increments[k];
        let dt = dts(k);
        fdw += (-sigma * dt + dw) * dw / dt;
    }
    fdw
}

#[inline]
fn delta_of(dw: f64, dt: f64, sigma: f64) -> f64 {
    dw / (sigma * dt)
}

#[inline]
fn third_of(d: f64, dt: f64, sigma: f64) -> f64 {
    d * d * d - d * d - (3.0 * d - 1.0) / (sigma * sigma * dt)
}

#[inline]
fn sigma_of(remaining: usize, fdw_suffix: f64, sigma: f64) -> f64 {
    (-(remaining as f64) + fdw_suffix) / sigma
}

#[inline]
fn vanna_of(pi_sigma: f64, pi_delta: f64, dw: f64, dt: f64, sigma: f64) -> f64 {
    // the derivative of pi_sigma_j along interval j only involves dW_j;
    // using W_T - W_{t_j} here would bias every interval but the last
    let f = -sigma * dt + dw;
    pi_sigma * pi_delta - (dw + f) / (sigma * sigma * dt)
}

#[inline]
fn combine(group: &MarketGroupParams, pi_sigma: f64, pi_vanna: f64, pi_3: f64) -> f64 {
    2.0 * group.v0_delta * pi_sigma + 2.0 * group.v1_delta * pi_vanna + group.v3_eps * pi_3
}

/// `pi_delta_j = dW_j / (sigma dt_j)`.
pub fn delta_weight(increments: &[f64], grid: &MonitoringGrid, sigma_bar: f64, j: usize) -> f64 {
    delta_of(increments[j], grid.dt(j), sigma_bar)
}

/// `pi_3_j`, the weight of `D1 D2` on interval `j`.
pub fn third_weight(increments: &[f64], grid: &MonitoringGrid, sigma_bar: f64, j: usize) -> f64 {
    let dt = grid.dt(j);
    third_of(delta_of(increments[j], dt, sigma_bar), dt, sigma_bar)
}

/// `pi_sigma_j`, the weight of the sigma-derivative on interval `j`.
pub fn sigma_weight(increments: &[f64], grid: &MonitoringGrid, sigma_bar: f64, j: usize) -> f64 {
    let fdw = suffix_sum(increments, |k| grid.dt(k), sigma_bar, j);
    sigma_of(increments.len() - j, fdw, sigma_bar)
}

/// `pi_vanna_j`, the weight of `D1` applied to the sigma-derivative.
pub fn vanna_weight(increments: &[f64], grid: &MonitoringGrid, sigma_bar: f64, j: usize) -> f64 {
    interval_weights(increments, grid, &MarketGroupParams { sigma_bar, ..zero_group() }, j).pi_vanna
}

/// Combined weight `pi_h_j` for the group coefficients.
pub fn h_weight(increments: &[f64], grid: &MonitoringGrid, group: &MarketGroupParams, j: usize) -> f64 {
    interval_weights(increments, grid, group, j).pi_h
}

/// All component weights of interval `j`.
pub fn interval_weights(
    increments: &[f64],
    grid: &MonitoringGrid,
    group: &MarketGroupParams,
    j: usize,
) -> IntervalWeights {
    let sigma = group.sigma_bar;
    let dt = grid.dt(j);
    let dw = increments[j];
    let fdw = suffix_sum(increments, |k| grid.dt(k), sigma, j);
    let pi_delta = delta_of(dw, dt, sigma);
    let pi_3 = third_of(pi_delta, dt, sigma);
    let pi_sigma = sigma_of(increments.len() - j, fdw, sigma);
    let pi_vanna = vanna_of(pi_sigma, pi_delta, dw, dt, sigma);
    IntervalWeights { pi_delta, pi_3, pi_sigma, pi_vanna, pi_h: combine(group, pi_sigma, pi_vanna, pi_3) }
}

fn zero_group() -> MarketGroupParams {
    MarketGroupParams { v0_delta: 0.0, v1_delta: 0.0, v3_eps: 0.0, sigma_bar: 1.0, r: 0.0 }
}

/// Reusable per-grid state for computing aggregate weights path by path.
#[derive(Debug, Clone)]
pub struct WeightKernel {
    group: MarketGroupParams,
    dts: Vec<f64>,
}

impl WeightKernel {
    pub fn new(grid: &MonitoringGrid, group: &MarketGroupParams) -> Self {
        Self { group: *group, dts: grid.intervals() }
    }

    /// Walks the intervals of one path in ascending order, handing each
    /// interval's weights to `visit`, and returns the aggregate weight.
    /// `scratch` is resized as needed.
    pub fn run(
        &self,
        increments: &[f64],
        scratch: &mut Vec<f64>,
        mut visit: impl FnMut(usize, &IntervalWeights),
    ) -> f64 {
        let n = increments.len();
        let sigma = self.group.sigma_bar;
        scratch.clear();
        scratch.resize(n, 0.0);
        let mut fdw = 0.0;
        for k in (0..n).rev() {
            let dw = increments[k];
            let dt = self.dts[k];
            fdw += (-sigma * dt + dw) * dw / dt;
            scratch[k] = fdw;
        }
        let mut acc = NeumaierSum::new();
        for j in 0..n {
            let dw = increments[j];
            let dt = self.dts[j];
            let fdw = scratch[j];
            let pi_delta = delta_of(dw, dt, sigma);
            let pi_3 = third_of(pi_delta, dt, sigma);
            let pi_sigma = sigma_of(n - j, fdw, sigma);
            let pi_vanna = vanna_of(pi_sigma, pi_delta, dw, dt, sigma);
            let pi_h = combine(&self.group, pi_sigma, pi_vanna, pi_3);
            acc.add(pi_h * dt);
            visit(j, &IntervalWeights { pi_delta, pi_3, pi_sigma, pi_vanna, pi_h });
        }
        1.0 + acc.total()
    }

    pub fn total(&self, increments: &[f64], scratch: &mut Vec<f64>) -> f64 {
        self.run(increments, scratch, |_, _| {})
    }
}

/// Aggregate weight of one path with its `pi_h` series.
pub fn aggregate_weight(increments: &[f64], grid: &MonitoringGrid, group: &MarketGroupParams) -> PathWeights {
    aggregate(increments, grid, group, false)
}

/// As [`aggregate_weight`], also keeping the component series.
pub fn aggregate_weight_with_components(
    increments: &[f64],
    grid: &MonitoringGrid,
    group: &MarketGroupParams,
) -> PathWeights {
    aggregate(increments, grid, group, true)
}

fn aggregate(increments: &[f64], grid: &MonitoringGrid, group: &MarketGroupParams, keep: bool) -> PathWeights {
    let kernel = WeightKernel::new(grid, group);
    let n = increments.len();
    let mut pi_h = Vec::with_capacity(n);
    let mut components = keep.then(ComponentSeries::default);
    let total = kernel.run(increments, &mut Vec::new(), |_, w| {
        pi_h.push(w.pi_h);
        if let Some(c) = components.as_mut() {
            c.pi_delta.push(w.pi_delta);
            c.pi_3.push(w.pi_3);
            c.pi_sigma.push(w.pi_sigma);
            c.pi_vanna.push(w.pi_vanna);
        }
    });
    PathWeights { pi_h, total, components }
}

/// Aggregate weights of every path in a batch. Only the totals are stored.
#[derive(Debug, Clone)]
pub struct BatchWeights {
    token: BatchToken,
    group: MarketGroupParams,
    totals: Vec<f64>,
}

impl BatchWeights {
    pub fn compute(batch: &PathBatch, group: &MarketGroupParams) -> Self {
        let group = MarketGroupParams { sigma_bar: batch.sigma_bar(), ..*group };
        let kernel = WeightKernel::new(batch.grid(), &group);
        let totals = (0..batch.n_paths())
            .into_par_iter()
            .map_init(Vec::new, |scratch, p| kernel.total(batch.path_increments(p), scratch))
            .collect();
        BatchWeights { token: batch.token(), group, totals }
    }

    pub fn token(&self) -> BatchToken {
        self.token
    }

    pub fn group(&self) -> &MarketGroupParams {
        &self.group
    }

    pub fn totals(&self) -> &[f64] {
        &self.totals
    }
}

/// Writes `path_index,j,pi_delta,pi_3,pi_sigma,pi_vanna,pi_h`, one row per
/// path and interval.
pub fn write_diagnostics_csv<W: Write>(batch: &PathBatch, group: &MarketGroupParams, mut out: W) -> io::Result<()> {
    let group = MarketGroupParams { sigma_bar: batch.sigma_bar(), ..*group };
    let kernel = WeightKernel::new(batch.grid(), &group);
    let mut scratch = Vec::new();
    writeln!(out, "path_index,j,pi_delta,pi_3,pi_sigma,pi_vanna,pi_h")?;
    for p in 0..batch.n_paths() {
        let mut result = Ok(());
        kernel.run(batch.path_increments(p), &mut scratch, |j, w| {
            if result.is_ok() {
                result = writeln!(
                    out,
                    "{p},{j},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                    w.pi_delta, w.pi_3, w.pi_sigma, w.pi_vanna, w.pi_h
                );
            }
        });
        result?;
    }
    out.flush()
}

/// Single-interval weights for a path-independent payoff observed at `T`,
/// given `W_T - W_t` and the horizon `tau = T - t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VanillaWeights {
    pub pi_gamma: f64,
    pub pi_sigma: f64,
    pub pi_delta: f64,
    pub pi_vanna: f64,
    /// `tau * pi_h(t, T)`: the time integral of the combined weight with the
    /// integrand frozen at its left endpoint.
    pub pi_h_integrated: f64,
    pub total: f64,
}

pub fn vanilla_weights(
    brownian_increment: f64,
    tau: f64,
    group: &MarketGroupParams,
) -> Result<VanillaWeights, WeightError> {
    if !(tau > 0.0) {
        return Err(WeightError::NonPositiveHorizon(tau));
    }
    let sigma = group.sigma_bar;
    let w = brownian_increment;
    let st = sigma * tau;
    let pi_gamma = (w * w / st - 1.0 / sigma - w) / st;
    let pi_sigma = st * pi_gamma;
    let pi_delta = w / st;
    let pi_vanna = pi_delta * pi_sigma - 2.0 / sigma * pi_delta + 1.0 / sigma;
    let pi_h_integrated =
        tau * (2.0 * group.v0_delta * pi_sigma + (2.0 * group.v1_delta + group.v3_eps / st) * pi_vanna);
    Ok(VanillaWeights { pi_gamma, pi_sigma, pi_delta, pi_vanna, pi_h_integrated, total: 1.0 + pi_h_integrated })
}
