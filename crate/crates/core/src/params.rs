//! Model, group and run parameters, plus the key-value config format.
//!
//! ```text
//! [group]
//! sigma_bar = 0.2020
//! v3_eps = -1.8526e-5
//! [grid]
//! n = 100
//! maturity = 0.5
//! [payoff]
//! payoff = asian_call, up_and_out_call
//! strike = 100
//! barrier = 150
//! [run]
//! s0 = 100
//! n_paths = 100000
//! seed = 42
//! ```
//!
//! Each `[payoff]` section describes one or more payoffs sharing its
//! parameters; repeat the section for payoffs with different strikes.

use std::fmt::Write as _;

use thiserror::Error;

use crate::full_model::CorrelationFactor;
use crate::payoffs::{PayoffDescriptor, PayoffKind};

pub const DEFAULT_SUBSTEPS_PER_INTERVAL: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// Group coefficients of the first-order correction, the effective
/// volatility and the risk-free rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketGroupParams {
    pub v0_delta: f64,
    pub v1_delta: f64,
    pub v3_eps: f64,
    pub sigma_bar: f64,
    pub r: f64,
}

impl MarketGroupParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("v0_delta", self.v0_delta),
            ("v1_delta", self.v1_delta),
            ("v3_eps", self.v3_eps),
            ("sigma_bar", self.sigma_bar),
            ("r", self.r),
        ] {
            if !v.is_finite() {
                return Err(invalid(format!("{name} must be finite")));
            }
        }
        if self.sigma_bar <= 0.0 {
            return Err(invalid("sigma_bar must be > 0"));
        }
        Ok(())
    }

    /// Same parameters with every correction coefficient set to zero.
    pub fn without_correction(&self) -> Self {
        Self { v0_delta: 0.0, v1_delta: 0.0, v3_eps: 0.0, ..*self }
    }
}

/// Monitoring dates `0 < t_1 < ... < t_n = T`, in years.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitoringGrid {
    times: Vec<f64>,
}

impl MonitoringGrid {
    pub fn new(times: Vec<f64>) -> Result<Self, ConfigError> {
        if times.is_empty() {
            return Err(invalid("grid must have at least one date"));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(invalid("grid times must be finite"));
        }
        if times[0] <= 0.0 {
            return Err(invalid("grid must start after time 0"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("grid not increasing"));
        }
        Ok(Self { times })
    }

    /// `t_i = i T / n` for `i = 1..=n`, with `t_n` pinned to `T`.
    pub fn uniform(n: usize, maturity: f64) -> Result<Self, ConfigError> {
        if n == 0 {
            return Err(invalid("grid needs n >= 1"));
        }
        if !(maturity.is_finite() && maturity > 0.0) {
            return Err(invalid("maturity must be > 0"));
        }
        let mut times: Vec<f64> = (1..=n).map(|i| i as f64 * maturity / n as f64).collect();
        times[n - 1] = maturity;
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn maturity(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Length of interval `j`, i.e. `t_{j+1} - t_j` with `t_0 = 0`.
    pub fn dt(&self, j: usize) -> f64 {
        if j == 0 {
            self.times[0]
        } else {
            self.times[j] - self.times[j - 1]
        }
    }

    pub fn intervals(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.dt(j)).collect()
    }

    fn is_uniform_repr(&self) -> bool {
        MonitoringGrid::uniform(self.len(), self.maturity()).is_ok_and(|u| u == *self)
    }
}

/// Uniform grid of `n` dates ending at `maturity`.
pub fn uniform_grid(n: usize, maturity: f64) -> Result<MonitoringGrid, ConfigError> {
    MonitoringGrid::uniform(n, maturity)
}

/// Parameters of the full two-factor model with
/// `f(y, z) = sigma e^{y+z}`, OU factors and no volatility risk premia.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullModelParams {
    pub eps: f64,
    pub delta: f64,
    pub m1: f64,
    pub m2: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub rho_sy: f64,
    pub rho_sz: f64,
    pub rho_yz: f64,
    pub sigma: f64,
    pub y0: f64,
    pub z0: f64,
    pub s0: f64,
}

impl FullModelParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fields = [
            ("eps", self.eps),
            ("delta", self.delta),
            ("m1", self.m1),
            ("m2", self.m2),
            ("nu1", self.nu1),
            ("nu2", self.nu2),
            ("rho_sy", self.rho_sy),
            ("rho_sz", self.rho_sz),
            ("rho_yz", self.rho_yz),
            ("sigma", self.sigma),
            ("y0", self.y0),
            ("z0", self.z0),
            ("s0", self.s0),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(invalid(format!("{name} must be finite")));
        }
        for (name, v) in [("eps", self.eps), ("delta", self.delta), ("sigma", self.sigma), ("s0", self.s0)] {
            if v <= 0.0 {
                return Err(invalid(format!("{name} must be > 0")));
            }
        }
        if self.nu1 < 0.0 || self.nu2 < 0.0 {
            return Err(invalid("nu1 and nu2 must be >= 0"));
        }
        CorrelationFactor::new(self.rho_sy, self.rho_sz, self.rho_yz)
            .map(|_| ())
            .ok_or_else(|| invalid("correlation matrix is not positive semidefinite"))
    }
}

/// Everything a pricing run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct PricingConfig {
    pub group: MarketGroupParams,
    pub grid: MonitoringGrid,
    pub s0: f64,
    pub payoffs: Vec<PayoffDescriptor>,
    pub n_paths: usize,
    pub seed: u64,
    pub full_model: Option<FullModelParams>,
    pub substeps_per_interval: usize,
}

impl PricingConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.group.validate()?;
        if !(self.s0.is_finite() && self.s0 > 0.0) {
            return Err(invalid("s0 must be > 0"));
        }
        if self.n_paths == 0 {
            return Err(invalid("n_paths must be >= 1"));
        }
        if self.substeps_per_interval == 0 {
            return Err(invalid("substeps_per_interval must be >= 1"));
        }
        for p in &self.payoffs {
            p.validate(Some(self.grid.len())).map_err(|e| invalid(e.to_string()))?;
        }
        if let Some(fm) = &self.full_model {
            fm.validate()?;
            if fm.s0 != self.s0 {
                return Err(invalid("full model s0 differs from run s0"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Section {
    Group,
    Grid,
    Payoff,
    Run,
    FullModel,
}

impl Section {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "group" => Section::Group,
            "grid" => Section::Grid,
            "payoff" => Section::Payoff,
            "run" => Section::Run,
            "full_model" => Section::FullModel,
            _ => return None,
        })
    }

    fn keys(self) -> &'static [&'static str] {
        match self {
            Section::Group => &["v0_delta", "v1_delta", "v3_eps", "sigma_bar", "r"],
            Section::Grid => &["n", "maturity", "times"],
            Section::Payoff => &["payoff", "strike", "barrier", "level", "monitoring"],
            Section::Run => &["s0", "n_paths", "seed", "substeps_per_interval"],
            Section::FullModel => &[
                "eps", "delta", "m1", "m2", "nu1", "nu2", "rho_sy", "rho_sz", "rho_yz", "sigma", "y0", "z0",
            ],
        }
    }
}

/// Key-value pairs of one section occurrence, each with its line number.
#[derive(Default)]
struct Entries {
    items: Vec<(String, String, usize)>,
}

impl Entries {
    fn get(&self, key: &str) -> Option<(&str, usize)> {
        self.items.iter().find(|(k, _, _)| k == key).map(|(_, v, l)| (v.as_str(), *l))
    }

    fn real(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.get(key).map(|(v, line)| parse_real(v, line)).transpose()
    }

    fn required_real(&self, key: &str) -> Result<f64, ConfigError> {
        self.real(key)?.ok_or_else(|| invalid(format!("{key} required")))
    }

    fn count(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.get(key).map(|(v, line)| parse_count(v, line)).transpose()
    }
}

fn parse_real(text: &str, line: usize) -> Result<f64, ConfigError> {
    text.parse::<f64>().map_err(|_| ConfigError::Parse { line, message: format!("expected a real number, got `{text}`") })
}

fn parse_count(text: &str, line: usize) -> Result<usize, ConfigError> {
    if let Ok(v) = text.parse::<usize>() {
        return Ok(v);
    }
    // exponent notation such as 1e5 is accepted when it is an exact integer
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v <= usize::MAX as f64 => Ok(v as usize),
        _ => Err(ConfigError::Parse { line, message: format!("expected a non-negative integer, got `{text}`") }),
    }
}

fn split_list(text: &str) -> impl Iterator<Item = &str> {
    text.split(',').map(str::trim).filter(|s| !s.is_empty())
}

/// Parses and validates a config document.
pub fn load_config(text: &str) -> Result<PricingConfig, ConfigError> {
    let mut group = Entries::default();
    let mut grid = Entries::default();
    let mut run = Entries::default();
    let mut full: Option<Entries> = None;
    let mut payoffs: Vec<Entries> = Vec::new();
    let mut current: Option<Section> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Parse { line, message: "unterminated section header".into() })?
                .trim();
            let section = Section::parse(name)
                .ok_or_else(|| ConfigError::Parse { line, message: format!("unknown section `[{name}]`") })?;
            match section {
                Section::Payoff => payoffs.push(Entries::default()),
                Section::FullModel if full.is_none() => full = Some(Entries::default()),
                _ => {}
            }
            current = Some(section);
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ConfigError::Parse { line, message: "expected `key = value`".into() })?;
        let (key, value) = (key.trim(), value.trim());
        let section =
            current.ok_or_else(|| ConfigError::Parse { line, message: format!("key `{key}` outside any section") })?;
        if !section.keys().contains(&key) {
            return Err(ConfigError::Parse { line, message: format!("unknown key `{key}` in this section") });
        }
        if value.is_empty() {
            return Err(ConfigError::Parse { line, message: format!("missing value for `{key}`") });
        }
        let entries = match section {
            Section::Group => &mut group,
            Section::Grid => &mut grid,
            Section::Run => &mut run,
            Section::Payoff => payoffs.last_mut().expect("payoff section opened"),
            Section::FullModel => full.as_mut().expect("full_model section opened"),
        };
        if entries.get(key).is_some() {
            return Err(ConfigError::Parse { line, message: format!("duplicate key `{key}`") });
        }
        entries.items.push((key.to_string(), value.to_string(), line));
    }

    let group = MarketGroupParams {
        v0_delta: group.real("v0_delta")?.unwrap_or(0.0),
        v1_delta: group.real("v1_delta")?.unwrap_or(0.0),
        v3_eps: group.real("v3_eps")?.unwrap_or(0.0),
        sigma_bar: group.required_real("sigma_bar")?,
        r: group.required_real("r")?,
    };

    let grid = match grid.get("times") {
        Some((list, line)) => {
            let times = split_list(list).map(|t| parse_real(t, line)).collect::<Result<Vec<_>, _>>()?;
            let g = MonitoringGrid::new(times)?;
            if let Some(n) = grid.count("n")? {
                if n != g.len() {
                    return Err(invalid(format!("n = {n} but times lists {} dates", g.len())));
                }
            }
            if let Some(t) = grid.real("maturity")? {
                if t != g.maturity() {
                    return Err(invalid("maturity differs from the last listed time"));
                }
            }
            g
        }
        None => {
            let n = grid.count("n")?.ok_or_else(|| invalid("n required"))?;
            MonitoringGrid::uniform(n, grid.required_real("maturity")?)?
        }
    };

    let s0 = run.required_real("s0")?;
    let n_paths = run.count("n_paths")?.ok_or_else(|| invalid("n_paths required"))?;
    let seed = match run.get("seed") {
        Some((v, line)) => v
            .parse::<u64>()
            .map_err(|_| ConfigError::Parse { line, message: format!("seed must be a 64-bit unsigned integer, got `{v}`") })?,
        None => return Err(invalid("seed required")),
    };
    let substeps_per_interval = run.count("substeps_per_interval")?.unwrap_or(DEFAULT_SUBSTEPS_PER_INTERVAL);

    let mut descriptors = Vec::new();
    for section in &payoffs {
        let (names, _) = section.get("payoff").ok_or_else(|| invalid("payoff required"))?;
        let strike = section.real("strike")?;
        let barrier = section.real("barrier")?;
        let level = section.real("level")?;
        let monitoring = section
            .get("monitoring")
            .map(|(list, line)| split_list(list).map(|i| parse_count(i, line)).collect::<Result<Vec<_>, _>>())
            .transpose()?;
        for name in split_list(names) {
            let kind = PayoffKind::from_parts(name, strike, barrier, level).map_err(|e| invalid(e.to_string()))?;
            descriptors.push(PayoffDescriptor { kind, monitoring: monitoring.clone() });
        }
    }
    if descriptors.is_empty() {
        return Err(invalid("payoff required"));
    }

    let full_model = full
        .map(|f| -> Result<FullModelParams, ConfigError> {
            Ok(FullModelParams {
                eps: f.required_real("eps")?,
                delta: f.required_real("delta")?,
                m1: f.required_real("m1")?,
                m2: f.required_real("m2")?,
                nu1: f.required_real("nu1")?,
                nu2: f.required_real("nu2")?,
                rho_sy: f.required_real("rho_sy")?,
                rho_sz: f.required_real("rho_sz")?,
                rho_yz: f.required_real("rho_yz")?,
                sigma: f.required_real("sigma")?,
                y0: f.required_real("y0")?,
                z0: f.required_real("z0")?,
                s0,
            })
        })
        .transpose()?;

    let cfg = PricingConfig { group, grid, s0, payoffs: descriptors, n_paths, seed, full_model, substeps_per_interval };
    cfg.validate()?;
    Ok(cfg)
}

fn real(x: f64) -> String {
    // 17 significant digits round-trip every finite f64
    format!("{x:.16e}")
}

/// Serializes a config so that [`load_config`] reproduces it bit for bit.
pub fn emit_config(cfg: &PricingConfig) -> String {
    let mut out = String::new();
    let g = &cfg.group;
    let _ = writeln!(out, "[group]");
    for (k, v) in [
        ("v0_delta", g.v0_delta),
        ("v1_delta", g.v1_delta),
        ("v3_eps", g.v3_eps),
        ("sigma_bar", g.sigma_bar),
        ("r", g.r),
    ] {
        let _ = writeln!(out, "{k} = {}", real(v));
    }
    let _ = writeln!(out, "\n[grid]");
    if cfg.grid.is_uniform_repr() {
        let _ = writeln!(out, "n = {}", cfg.grid.len());
        let _ = writeln!(out, "maturity = {}", real(cfg.grid.maturity()));
    } else {
        let times: Vec<String> = cfg.grid.times().iter().map(|&t| real(t)).collect();
        let _ = writeln!(out, "times = {}", times.join(", "));
    }
    for p in &cfg.payoffs {
        let _ = writeln!(out, "\n[payoff]");
        let _ = writeln!(out, "payoff = {}", p.name());
        match p.kind {
            PayoffKind::UpAndOutCall { strike, barrier } => {
                let _ = writeln!(out, "strike = {}", real(strike));
                let _ = writeln!(out, "barrier = {}", real(barrier));
            }
            PayoffKind::Constant { level } => {
                let _ = writeln!(out, "level = {}", real(level));
            }
            other => {
                let _ = writeln!(out, "strike = {}", real(other.strike().expect("strike payoff")));
            }
        }
        if let Some(subset) = &p.monitoring {
            let idx: Vec<String> = subset.iter().map(usize::to_string).collect();
            let _ = writeln!(out, "monitoring = {}", idx.join(", "));
        }
    }
    let _ = writeln!(out, "\n[run]");
    let _ = writeln!(out, "s0 = {}", real(cfg.s0));
    let _ = writeln!(out, "n_paths = {}", cfg.n_paths);
    let _ = writeln!(out, "seed = {}", cfg.seed);
    let _ = writeln!(out, "substeps_per_interval = {}", cfg.substeps_per_interval);
    if let Some(f) = &cfg.full_model {
        let _ = writeln!(out, "\n[full_model]");
        for (k, v) in [
            ("eps", f.eps),
            ("delta", f.delta),
            ("m1", f.m1),
            ("m2", f.m2),
            ("nu1", f.nu1),
            ("nu2", f.nu2),
            ("rho_sy", f.rho_sy),
            ("rho_sz", f.rho_sz),
            ("rho_yz", f.rho_yz),
            ("sigma", f.sigma),
            ("y0", f.y0),
            ("z0", f.z0),
        ] {
            let _ = writeln!(out, "{k} = {}", real(v));
        }
    }
    out
}
