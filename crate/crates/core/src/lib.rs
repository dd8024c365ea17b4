//! Monte Carlo pricing of discretely-monitored, path-dependent derivatives
//! under multiscale stochastic volatility.
//!
//! Only Black-Scholes paths at the effective volatility are simulated. The
//! first-order stochastic-volatility correction enters as a closed-form
//! Malliavin weight multiplying the payoff, so one batch of paths and
//! weights prices any payoff on the same grid. A full-model Euler simulator
//! and closed-form Black-Scholes values serve as references.

pub mod analytic;
pub mod cli;
pub mod full_model;
pub mod params;
pub mod paths;
pub mod payoffs;
pub mod pricer;
pub mod rng;
pub mod summation;
pub mod weights;

pub use analytic::{bs_greeks, bs_price, BsGreeks, BsInputs, OptionType};
pub use full_model::{price_full, simulate_full, FullBatch, FullModelPath};
pub use params::{
    emit_config, load_config, uniform_grid, ConfigError, FullModelParams, MarketGroupParams, MonitoringGrid,
    PricingConfig,
};
pub use paths::{simulate_batch, PathBatch, SimulationError};
pub use payoffs::{PayoffDescriptor, PayoffError, PayoffKind};
pub use pricer::{
    convergence, greek_estimates, price_corrected, price_zero_order, ConvergenceSeries, Estimate, GreekEstimates,
    PricingError,
};
pub use weights::{aggregate_weight, vanilla_weights, BatchWeights, PathWeights, VanillaWeights};

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool")
        .install(f)
}
