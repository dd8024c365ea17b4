//! Euler-Maruyama simulation of the full two-factor model
//!
//! ```text
//! dS = r S dt + sigma e^{Y+Z} S dW
//! dY = (m1 - Y)/eps dt + sqrt(2) nu1 / sqrt(eps) dW^Y
//! dZ = delta (m2 - Z) dt + sqrt(2 delta) nu2 dW^Z
//! ```
//!
//! on a refinement of the monitoring grid. The spot is stepped in log space
//! so it stays positive; volatility is frozen at the start of each substep.

use rayon::prelude::*;

use crate::params::{FullModelParams, MonitoringGrid};
use crate::paths::{SimulationError, DEFAULT_MEMORY_BUDGET};
use crate::payoffs::PayoffDescriptor;
use crate::pricer::{discounted_payoffs, Estimate, MonitoredPaths, PricingError};
use crate::rng::{CounterNormals, NormalSource, FULL_MODEL_DOMAIN};

const PIVOT_TOL: f64 = 1e-12;

/// Lower-triangular factor `L` of the (S, Y, Z) correlation matrix, so that
/// `L xi` is correlated when `xi` is independent standard normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationFactor {
    l: [[f64; 3]; 3],
}

impl CorrelationFactor {
    /// Factorises the matrix, allowing zero pivots (semidefinite) but
    /// returning `None` if the matrix is not positive semidefinite.
    pub fn new(rho_sy: f64, rho_sz: f64, rho_yz: f64) -> Option<Self> {
        if [rho_sy, rho_sz, rho_yz].iter().any(|r| !r.is_finite() || r.abs() > 1.0) {
            return None;
        }
        let d1 = 1.0 - rho_sy * rho_sy;
        if d1 < -PIVOT_TOL {
            return None;
        }
        let l11 = d1.max(0.0).sqrt();
        let off = rho_yz - rho_sy * rho_sz;
        let l21 = if l11 > PIVOT_TOL {
            off / l11
        } else if off.abs() <= PIVOT_TOL {
            0.0
        } else {
            return None;
        };
        let d2 = 1.0 - rho_sz * rho_sz - l21 * l21;
        if d2 < -PIVOT_TOL {
            return None;
        }
        Some(Self { l: [[1.0, 0.0, 0.0], [rho_sy, l11, 0.0], [rho_sz, l21, d2.max(0.0).sqrt()]] })
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        self.l
    }

    #[inline]
    pub fn apply(&self, xi: [f64; 3]) -> [f64; 3] {
        let l = &self.l;
        [xi[0], l[1][0] * xi[0] + l[1][1] * xi[1], l[2][0] * xi[0] + l[2][1] * xi[1] + l[2][2] * xi[2]]
    }
}

/// Substep size exceeded a tenth of the fast time scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizeWarning {
    pub max_substep: f64,
    pub eps: f64,
}

impl std::fmt::Display for StepSizeWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "substep {:.3e} exceeds eps/10 = {:.3e}; the fast factor is under-resolved",
            self.max_substep,
            self.eps / 10.0
        )
    }
}

/// Smallest substep count with `h <= min(dt/10, eps/10)` on every interval.
pub fn recommended_substeps(grid: &MonitoringGrid, eps: f64) -> usize {
    (0..grid.len()).map(|j| (grid.dt(j) * 10.0 / eps).ceil().max(10.0) as usize).max().unwrap_or(10)
}

/// Full-model paths on the monitoring grid.
#[derive(Debug, Clone)]
pub struct FullBatch {
    grid: MonitoringGrid,
    r: f64,
    n_paths: usize,
    values: Vec<f64>,
    y_terminal: Vec<f64>,
    z_terminal: Vec<f64>,
    warning: Option<StepSizeWarning>,
}

/// One simulated full-model path.
#[derive(Debug, Clone, PartialEq)]
pub struct FullModelPath<'a> {
    pub spots: &'a [f64],
    pub y_terminal: f64,
    pub z_terminal: f64,
}

impl FullBatch {
    pub fn grid(&self) -> &MonitoringGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn path(&self, p: usize) -> FullModelPath<'_> {
        let n = self.grid.len();
        FullModelPath {
            spots: &self.values[p * n..(p + 1) * n],
            y_terminal: self.y_terminal[p],
            z_terminal: self.z_terminal[p],
        }
    }

    pub fn y_terminal(&self) -> &[f64] {
        &self.y_terminal
    }

    pub fn z_terminal(&self) -> &[f64] {
        &self.z_terminal
    }

    pub fn warning(&self) -> Option<StepSizeWarning> {
        self.warning
    }

    /// Bitwise content equality.
    pub fn same_as(&self, other: &FullBatch) -> bool {
        let eq = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
        self.grid == other.grid
            && self.r.to_bits() == other.r.to_bits()
            && eq(&self.values, &other.values)
            && eq(&self.y_terminal, &other.y_terminal)
            && eq(&self.z_terminal, &other.z_terminal)
    }
}

impl MonitoredPaths for FullBatch {
    fn n_paths(&self) -> usize {
        self.n_paths
    }
    fn n_dates(&self) -> usize {
        self.grid.len()
    }
    fn monitored(&self, path: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[path * n..(path + 1) * n]
    }
    fn maturity(&self) -> f64 {
        self.grid.maturity()
    }
    fn rate(&self) -> f64 {
        self.r
    }
}

/// Simulates `n_paths` full-model paths. Draws come from the full-model
/// domain of the counter generator, independent of the Black-Scholes
/// increments for the same seed.
pub fn simulate_full(
    params: &FullModelParams,
    r: f64,
    grid: &MonitoringGrid,
    substeps_per_interval: usize,
    n_paths: usize,
    seed: u64,
) -> Result<FullBatch, SimulationError> {
    simulate_full_with(params, r, grid, substeps_per_interval, n_paths, &CounterNormals::new(seed, FULL_MODEL_DOMAIN))
}

pub fn simulate_full_with<S: NormalSource>(
    params: &FullModelParams,
    r: f64,
    grid: &MonitoringGrid,
    substeps_per_interval: usize,
    n_paths: usize,
    source: &S,
) -> Result<FullBatch, SimulationError> {
    assert!(substeps_per_interval >= 1, "substeps_per_interval must be >= 1");
    let corr = CorrelationFactor::new(params.rho_sy, params.rho_sz, params.rho_yz)
        .expect("validated parameters have a PSD correlation matrix");
    let n = grid.len();
    let required = (n_paths as u128) * (n as u128 + 2) * 8;
    if required > DEFAULT_MEMORY_BUDGET as u128 {
        return Err(SimulationError::OverBudget { required, budget: DEFAULT_MEMORY_BUDGET });
    }

    struct Interval {
        h: f64,
        sqrt_h: f64,
        y_pull: f64,
        y_vol: f64,
        z_pull: f64,
        z_vol: f64,
    }
    let intervals: Vec<Interval> = (0..n)
        .map(|j| {
            let h = grid.dt(j) / substeps_per_interval as f64;
            let sqrt_h = h.sqrt();
            Interval {
                h,
                sqrt_h,
                y_pull: h / params.eps,
                y_vol: std::f64::consts::SQRT_2 * params.nu1 / params.eps.sqrt() * sqrt_h,
                z_pull: params.delta * h,
                z_vol: (2.0 * params.delta).sqrt() * params.nu2 * sqrt_h,
            }
        })
        .collect();
    let max_substep = intervals.iter().map(|i| i.h).fold(0.0, f64::max);
    let warning = (max_substep > params.eps / 10.0).then_some(StepSizeWarning { max_substep, eps: params.eps });

    let draws = 3 * n * substeps_per_interval;
    let mut values = vec![0.0; n_paths * n];
    let mut terminal: Vec<(f64, f64)> = vec![(0.0, 0.0); n_paths];
    values
        .par_chunks_mut(n)
        .zip(terminal.par_iter_mut())
        .enumerate()
        .for_each_init(
            || vec![0.0; draws],
            |xi, (p, (spots, end))| {
                source.fill(p as u64, xi);
                let mut log_s = params.s0.ln();
                let (mut y, mut z) = (params.y0, params.z0);
                let mut k = 0;
                for (j, iv) in intervals.iter().enumerate() {
                    for _ in 0..substeps_per_interval {
                        let [ws, wy, wz] = corr.apply([xi[k], xi[k + 1], xi[k + 2]]);
                        k += 3;
                        let f = params.sigma * (y + z).exp();
                        log_s += (r - 0.5 * f * f) * iv.h + f * iv.sqrt_h * ws;
                        y += (params.m1 - y) * iv.y_pull + iv.y_vol * wy;
                        z += (params.m2 - z) * iv.z_pull + iv.z_vol * wz;
                    }
                    spots[j] = log_s.exp();
                }
                *end = (y, z);
            },
        );
    let (y_terminal, z_terminal) = terminal.into_iter().unzip();
    Ok(FullBatch { grid: grid.clone(), r, n_paths, values, y_terminal, z_terminal, warning })
}

/// Discounted-payoff average over full-model paths.
pub fn price_full(batch: &FullBatch, payoff: &PayoffDescriptor) -> Result<Estimate, PricingError> {
    Ok(Estimate::from_samples(&discounted_payoffs(batch, payoff)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::uniform_grid;
    use crate::payoffs::PayoffKind;
    use crate::rng::ZeroNormals;

    pub(crate) fn table1_full() -> FullModelParams {
        FullModelParams {
            eps: 0.004,
            delta: 0.01,
            m1: 0.0,
            m2: 0.0,
            nu1: 0.01,
            nu2: 0.01,
            rho_sy: -0.5,
            rho_sz: 0.5,
            rho_yz: 0.3,
            sigma: 0.2,
            y0: 0.0,
            z0: 0.0,
            s0: 100.0,
        }
    }

    #[test]
    fn factor_reproduces_correlations() {
        let c = CorrelationFactor::new(-0.5, 0.5, 0.3).unwrap();
        let l = c.matrix();
        let entry = |i: usize, j: usize| (0..3).map(|k| l[i][k] * l[j][k]).sum::<f64>();
        let target = [[1.0, -0.5, 0.5], [-0.5, 1.0, 0.3], [0.5, 0.3, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((entry(i, j) - target[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn identity_when_uncorrelated() {
        let c = CorrelationFactor::new(0.0, 0.0, 0.0).unwrap();
        assert_eq!(c.matrix(), [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    }

    #[test]
    fn semidefinite_accepted_indefinite_rejected() {
        assert!(CorrelationFactor::new(1.0, 1.0, 1.0).is_some());
        assert!(CorrelationFactor::new(1.0, 0.5, 0.5).is_some());
        assert!(CorrelationFactor::new(1.0, 0.5, 0.4).is_none());
        assert!(CorrelationFactor::new(0.9, 0.9, -0.9).is_none());
        assert!(CorrelationFactor::new(1.5, 0.0, 0.0).is_none());
    }

    #[test]
    fn zero_noise_path_is_deterministic_drift() {
        let p = FullModelParams { eps: 1.0, y0: 0.1, ..table1_full() };
        let grid = uniform_grid(5, 0.5).unwrap();
        let b = simulate_full_with(&p, 0.02, &grid, 4, 2, &ZeroNormals).unwrap();
        assert!(b.path(0).spots.iter().all(|&s| s > 0.0));
        // y decays geometrically toward m1 = 0 with factor (1 - h/eps)
        let expected_y = 0.1 * (1.0f64 - 0.025).powi(20);
        assert!((b.y_terminal()[0] - expected_y).abs() < 1e-15);
        assert_eq!(b.path(1), b.path(0));
    }

    #[test]
    fn step_warning() {
        let grid = uniform_grid(100, 0.5).unwrap();
        let b = simulate_full(&table1_full(), 0.02, &grid, 10, 3, 1).unwrap();
        let w = b.warning().expect("h = 5e-4 > eps/10");
        assert!(w.to_string().contains("eps/10"));
        let b = simulate_full(&table1_full(), 0.02, &grid, 13, 3, 1).unwrap();
        assert!(b.warning().is_none());
        assert_eq!(recommended_substeps(&grid, 0.004), 13);
    }

    #[test]
    fn deterministic_and_constant_payoff_exact() {
        let grid = uniform_grid(10, 0.5).unwrap();
        let a = simulate_full(&table1_full(), 0.02, &grid, 5, 200, 9).unwrap();
        let b = simulate_full(&table1_full(), 0.02, &grid, 5, 200, 9).unwrap();
        assert!(a.same_as(&b));
        let c = PayoffDescriptor::new(PayoffKind::Constant { level: 1.0 });
        let e = price_full(&a, &c).unwrap();
        assert_eq!(e.mean, (-0.02f64 * 0.5).exp());
        assert_eq!(e.stderr, 0.0);
    }
}
