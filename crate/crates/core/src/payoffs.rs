//! Discretely-monitored payoffs.

use std::fmt;

use thiserror::Error;

/// Names accepted by [`PayoffKind::from_parts`], in display order.
pub const PAYOFF_NAMES: [&str; 6] = [
    "asian_call",
    "up_and_out_call",
    "european_call",
    "european_put",
    "forward",
    "constant",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PayoffError {
    #[error("unknown payoff `{name}`; valid payoffs: {}", PAYOFF_NAMES.join(", "))]
    UnknownName { name: String },
    #[error("payoff `{name}` requires `{field}`")]
    MissingField { name: &'static str, field: &'static str },
    #[error("invalid payoff parameter: {0}")]
    InvalidParameter(String),
    #[error("monitored vector has length {got}, grid has {expected} dates")]
    LengthMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PayoffKind {
    /// (mean of monitored values - K)+
    AsianCall { strike: f64 },
    /// (x_T - K)+ while every monitored value stays at or below H.
    UpAndOutCall { strike: f64, barrier: f64 },
    EuropeanCall { strike: f64 },
    EuropeanPut { strike: f64 },
    /// x_T - K
    Forward { strike: f64 },
    Constant { level: f64 },
}

impl PayoffKind {
    pub fn name(&self) -> &'static str {
        match self {
            PayoffKind::AsianCall { .. } => "asian_call",
            PayoffKind::UpAndOutCall { .. } => "up_and_out_call",
            PayoffKind::EuropeanCall { .. } => "european_call",
            PayoffKind::EuropeanPut { .. } => "european_put",
            PayoffKind::Forward { .. } => "forward",
            PayoffKind::Constant { .. } => "constant",
        }
    }

    /// Builds a payoff from its config name and the optional parameters.
    /// A constant payoff without `level` pays 1.
    pub fn from_parts(
        name: &str,
        strike: Option<f64>,
        barrier: Option<f64>,
        level: Option<f64>,
    ) -> Result<Self, PayoffError> {
        let need_strike = |n: &'static str| strike.ok_or(PayoffError::MissingField { name: n, field: "strike" });
        let kind = match name {
            "asian_call" => PayoffKind::AsianCall { strike: need_strike("asian_call")? },
            "up_and_out_call" => PayoffKind::UpAndOutCall {
                strike: need_strike("up_and_out_call")?,
                barrier: barrier.ok_or(PayoffError::MissingField {
                    name: "up_and_out_call",
                    field: "barrier",
                })?,
            },
            "european_call" => PayoffKind::EuropeanCall { strike: need_strike("european_call")? },
            "european_put" => PayoffKind::EuropeanPut { strike: need_strike("european_put")? },
            "forward" => PayoffKind::Forward { strike: need_strike("forward")? },
            "constant" => PayoffKind::Constant { level: level.unwrap_or(1.0) },
            other => return Err(PayoffError::UnknownName { name: other.to_string() }),
        };
        Ok(kind)
    }

    pub fn strike(&self) -> Option<f64> {
        match *self {
            PayoffKind::AsianCall { strike }
            | PayoffKind::UpAndOutCall { strike, .. }
            | PayoffKind::EuropeanCall { strike }
            | PayoffKind::EuropeanPut { strike }
            | PayoffKind::Forward { strike } => Some(strike),
            PayoffKind::Constant { .. } => None,
        }
    }

    fn reads_final_value(&self) -> bool {
        !matches!(self, PayoffKind::AsianCall { .. } | PayoffKind::Constant { .. })
    }
}

impl fmt::Display for PayoffKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A payoff plus the grid dates it observes.
///
/// `monitoring` holds 1-based, strictly increasing indices into the grid;
/// `None` means every date.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffDescriptor {
    pub kind: PayoffKind,
    pub monitoring: Option<Vec<usize>>,
}

impl PayoffDescriptor {
    pub fn new(kind: PayoffKind) -> Self {
        Self { kind, monitoring: None }
    }

    pub fn with_monitoring(kind: PayoffKind, monitoring: Vec<usize>) -> Self {
        Self { kind, monitoring: Some(monitoring) }
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    /// Checks parameter domains and, when `n_dates` is given, that the
    /// monitoring subset fits the grid.
    pub fn validate(&self, n_dates: Option<usize>) -> Result<(), PayoffError> {
        if let Some(k) = self.kind.strike() {
            if !(k.is_finite() && k >= 0.0) {
                return Err(PayoffError::InvalidParameter(format!("strike must be finite and >= 0, got {k}")));
            }
        }
        match self.kind {
            PayoffKind::UpAndOutCall { barrier, .. } if !(barrier.is_finite() && barrier > 0.0) => {
                return Err(PayoffError::InvalidParameter(format!("barrier must be finite and > 0, got {barrier}")));
            }
            PayoffKind::Constant { level } if !level.is_finite() => {
                return Err(PayoffError::InvalidParameter("constant level must be finite".into()));
            }
            _ => {}
        }
        if let Some(subset) = &self.monitoring {
            if subset.is_empty() {
                return Err(PayoffError::InvalidParameter("monitoring subset is empty".into()));
            }
            if subset[0] < 1 || subset.windows(2).any(|w| w[0] >= w[1]) {
                return Err(PayoffError::InvalidParameter(
                    "monitoring indices must be strictly increasing and start at 1 or later".into(),
                ));
            }
            if let Some(n) = n_dates {
                let last = *subset.last().expect("non-empty");
                if last > n {
                    return Err(PayoffError::InvalidParameter(format!(
                        "monitoring index {last} exceeds the {n} grid dates"
                    )));
                }
                if self.kind.reads_final_value() && last != n {
                    return Err(PayoffError::InvalidParameter(format!(
                        "{} reads the final value, so monitoring must include date {n}",
                        self.name()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Payoff of one path given its values at every grid date.
    pub fn evaluate(&self, values: &[f64], n_dates: usize) -> Result<f64, PayoffError> {
        if values.len() != n_dates {
            return Err(PayoffError::LengthMismatch { expected: n_dates, got: values.len() });
        }
        Ok(self.evaluate_unchecked(values))
    }

    /// As [`evaluate`](Self::evaluate) without the length check; the caller
    /// has already validated the descriptor against the grid.
    #[inline]
    pub fn evaluate_unchecked(&self, values: &[f64]) -> f64 {
        match &self.monitoring {
            None => self.kind.apply(values.iter().copied(), values.len(), values[values.len() - 1]),
            Some(subset) => self.kind.apply(
                subset.iter().map(|&i| values[i - 1]),
                subset.len(),
                values[subset[subset.len() - 1] - 1],
            ),
        }
    }
}

impl PayoffKind {
    #[inline]
    fn apply<I: Iterator<Item = f64>>(&self, monitored: I, count: usize, last: f64) -> f64 {
        match *self {
            PayoffKind::AsianCall { strike } => {
                let sum: f64 = monitored.sum();
                (sum / count as f64 - strike).max(0.0)
            }
            PayoffKind::UpAndOutCall { strike, barrier } => {
                let mut alive = true;
                for x in monitored {
                    if x > barrier {
                        alive = false;
                        break;
                    }
                }
                if alive {
                    (last - strike).max(0.0)
                } else {
                    0.0
                }
            }
            PayoffKind::EuropeanCall { strike } => (last - strike).max(0.0),
            PayoffKind::EuropeanPut { strike } => (strike - last).max(0.0),
            PayoffKind::Forward { strike } => last - strike,
            PayoffKind::Constant { level } => level,
        }
    }
}
