//! Black-Scholes path batches at the effective volatility.
//!
//! Paths are stepped with the exact log-normal update
//! `X_{j+1} = X_j exp((r - sigma^2/2) dt_j + sigma dW_j)`, so there is no
//! discretisation bias on the monitoring grid. The Brownian increments are
//! kept alongside the values since the correction weights are built from
//! them.

use std::io::{self, Read, Write};
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use thiserror::Error;

use crate::params::{MonitoringGrid, PricingConfig};
use crate::rng::{CounterNormals, NormalSource, BS_DOMAIN};

pub const DEFAULT_MEMORY_BUDGET: usize = 4 << 30;
pub const DUMP_MAGIC: &[u8; 7] = b"MSSVPB1";

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("batch needs {required} bytes, over the {budget}-byte memory budget")]
    OverBudget { required: u128, budget: usize },
    #[error("path index {index} out of range for {n_paths} paths")]
    PathOutOfRange { index: usize, n_paths: usize },
    #[error("invalid batch dump: {0}")]
    BadDump(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

static NEXT_BATCH_ID: AtomicU64 = AtomicU64::new(1);

/// Identity of one simulated batch; weights carry it so they cannot be
/// paired with paths from a different simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BatchToken(u64);

impl BatchToken {
    pub(crate) fn fresh() -> Self {
        BatchToken(NEXT_BATCH_ID.fetch_add(1, Ordering::Relaxed))
    }
}

/// `n_paths` GBM paths on a monitoring grid, stored row-major by path.
#[derive(Debug, Clone)]
pub struct PathBatch {
    grid: MonitoringGrid,
    s0: f64,
    sigma_bar: f64,
    r: f64,
    n_paths: usize,
    seed: u64,
    increments: Vec<f64>,
    values: Vec<f64>,
    token: BatchToken,
}

impl PartialEq for PathBatch {
    /// Content equality; the token is ignored.
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid
            && self.s0.to_bits() == other.s0.to_bits()
            && self.sigma_bar.to_bits() == other.sigma_bar.to_bits()
            && self.r.to_bits() == other.r.to_bits()
            && self.n_paths == other.n_paths
            && self.seed == other.seed
            && bits_eq(&self.increments, &other.increments)
            && bits_eq(&self.values, &other.values)
    }
}

fn bits_eq(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Bytes a batch of this shape occupies.
pub fn batch_bytes(n_paths: usize, n_dates: usize) -> u128 {
    2 * (n_paths as u128) * (n_dates as u128) * 8
}

/// Simulates the batch described by `config` under the default budget.
pub fn simulate_batch(config: &PricingConfig) -> Result<PathBatch, SimulationError> {
    PathBatch::simulate(config, &CounterNormals::new(config.seed, BS_DOMAIN), DEFAULT_MEMORY_BUDGET)
}

impl PathBatch {
    /// Simulates with an explicit normal source and memory budget. The budget
    /// is checked before anything is allocated.
    pub fn simulate<S: NormalSource>(
        config: &PricingConfig,
        source: &S,
        memory_budget: usize,
    ) -> Result<Self, SimulationError> {
        let n = config.grid.len();
        let n_paths = config.n_paths;
        let required = batch_bytes(n_paths, n);
        if required > memory_budget as u128 {
            return Err(SimulationError::OverBudget { required, budget: memory_budget });
        }
        let sigma = config.group.sigma_bar;
        let r = config.group.r;
        let dts = config.grid.intervals();
        let sqrt_dts: Vec<f64> = dts.iter().map(|dt| dt.sqrt()).collect();
        let drifts: Vec<f64> = dts.iter().map(|dt| (r - 0.5 * sigma * sigma) * dt).collect();

        let mut increments = vec![0.0; n_paths * n];
        let mut values = vec![0.0; n_paths * n];
        increments
            .par_chunks_mut(n)
            .zip(values.par_chunks_mut(n))
            .enumerate()
            .for_each(|(p, (dw, x))| {
                source.fill(p as u64, dw);
                let mut spot = config.s0;
                for j in 0..n {
                    dw[j] *= sqrt_dts[j];
                    spot *= (drifts[j] + sigma * dw[j]).exp();
                    x[j] = spot;
                }
            });

        Ok(PathBatch {
            grid: config.grid.clone(),
            s0: config.s0,
            sigma_bar: sigma,
            r,
            n_paths,
            seed: config.seed,
            increments,
            values,
            token: BatchToken::fresh(),
        })
    }

    pub fn grid(&self) -> &MonitoringGrid {
        &self.grid
    }
    pub fn s0(&self) -> f64 {
        self.s0
    }
    pub fn sigma_bar(&self) -> f64 {
        self.sigma_bar
    }
    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }
    pub fn n_dates(&self) -> usize {
        self.grid.len()
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn token(&self) -> BatchToken {
        self.token
    }

    /// Brownian increments of path `index`, in grid order.
    pub fn increments_of(&self, index: usize) -> Result<&[f64], SimulationError> {
        self.check_index(index)?;
        Ok(self.path_increments(index))
    }

    /// Monitored values of path `index`, in grid order.
    pub fn values_of(&self, index: usize) -> Result<&[f64], SimulationError> {
        self.check_index(index)?;
        Ok(self.path_values(index))
    }

    fn check_index(&self, index: usize) -> Result<(), SimulationError> {
        if index >= self.n_paths {
            Err(SimulationError::PathOutOfRange { index, n_paths: self.n_paths })
        } else {
            Ok(())
        }
    }

    #[inline]
    pub(crate) fn path_increments(&self, index: usize) -> &[f64] {
        let n = self.n_dates();
        &self.increments[index * n..(index + 1) * n]
    }

    #[inline]
    pub(crate) fn path_values(&self, index: usize) -> &[f64] {
        let n = self.n_dates();
        &self.values[index * n..(index + 1) * n]
    }

    /// Writes the binary dump: magic, `n_paths`, `n`, seed, sigma_bar, r, s0,
    /// grid times, then all increments and all values, little-endian.
    pub fn write_dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        out.write_all(DUMP_MAGIC)?;
        out.write_all(&(self.n_paths as u64).to_le_bytes())?;
        out.write_all(&(self.n_dates() as u64).to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        for v in [self.sigma_bar, self.r, self.s0] {
            out.write_all(&v.to_le_bytes())?;
        }
        for v in self.grid.times().iter().chain(&self.increments).chain(&self.values) {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()
    }

    /// Reads a dump written by [`write_dump`](Self::write_dump). The result
    /// gets a fresh token.
    pub fn read_dump<R: Read>(mut input: R) -> Result<Self, SimulationError> {
        let mut magic = [0u8; 7];
        input.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(SimulationError::BadDump("wrong magic".into()));
        }
        let mut word = [0u8; 8];
        let mut next_u64 = |input: &mut R| -> io::Result<u64> {
            input.read_exact(&mut word)?;
            Ok(u64::from_le_bytes(word))
        };
        let n_paths = next_u64(&mut input)? as usize;
        let n = next_u64(&mut input)? as usize;
        let seed = next_u64(&mut input)?;
        let sigma_bar = f64::from_bits(next_u64(&mut input)?);
        let r = f64::from_bits(next_u64(&mut input)?);
        let s0 = f64::from_bits(next_u64(&mut input)?);
        let required = batch_bytes(n_paths, n);
        if required > DEFAULT_MEMORY_BUDGET as u128 {
            return Err(SimulationError::OverBudget { required, budget: DEFAULT_MEMORY_BUDGET });
        }
        let mut read_vec = |len: usize| -> io::Result<Vec<f64>> {
            let mut bytes = vec![0u8; len * 8];
            input.read_exact(&mut bytes)?;
            Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
        };
        let times = read_vec(n)?;
        let increments = read_vec(n_paths * n)?;
        let values = read_vec(n_paths * n)?;
        let grid = MonitoringGrid::new(times).map_err(|e| SimulationError::BadDump(e.to_string()))?;
        Ok(PathBatch { grid, s0, sigma_bar, r, n_paths, seed, increments, values, token: BatchToken::fresh() })
    }
}
