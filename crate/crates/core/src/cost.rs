//! Concave transportation costs: price per unit distance as a function of
//! the transported mass.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("mass must be nonnegative, got {0}")]
    NegativeMass(f64),
    #[error("invalid cost parameters: {0}")]
    InvalidParameters(String),
}

/// The family of concave transportation costs.
///
/// All variants are nondecreasing and concave with `tau(0) = 0`. The Steiner
/// cost is discontinuous at zero (lower semi-continuous only); the solver
/// accepts it but it is excluded from the verified experiment set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TransportCost {
    /// `tau(m) = m^alpha` with `alpha` in (0, 1).
    BranchedTransport { alpha: f64 },
    /// `tau(m) = min(a*m, m + b)` with `a > 1`, `b > 0`.
    UrbanPlanning { a: f64, b: f64 },
    /// `tau(m) = 1` for `m > 0`, `tau(0) = 0`.
    Steiner,
    /// Piecewise linear interpolation of a tabulated concave function,
    /// constant beyond the last breakpoint. The table must start at (0, 0)
    /// and have strictly increasing abscissae; concavity itself is only
    /// checked by [`TransportCost::validate`], so ill-formed tabulations
    /// stay observable rather than being rejected.
    Custom { table: Vec<(f64, f64)> },
}

impl TransportCost {
    pub fn branched(alpha: f64) -> Result<Self, CostError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(CostError::InvalidParameters(format!(
                "alpha must lie in (0,1), got {alpha}"
            )));
        }
        Ok(TransportCost::BranchedTransport { alpha })
    }

    pub fn urban(a: f64, b: f64) -> Result<Self, CostError> {
        if !(a > 1.0) {
            return Err(CostError::InvalidParameters(format!("a must be > 1, got {a}")));
        }
        if !(b > 0.0) {
            return Err(CostError::InvalidParameters(format!("b must be > 0, got {b}")));
        }
        Ok(TransportCost::UrbanPlanning { a, b })
    }

    pub fn custom(table: Vec<(f64, f64)>) -> Result<Self, CostError> {
        if table.len() < 2 {
            return Err(CostError::InvalidParameters(
                "custom table needs at least two breakpoints".into(),
            ));
        }
        if table[0] != (0.0, 0.0) {
            return Err(CostError::InvalidParameters(
                "custom table must start at (0, 0)".into(),
            ));
        }
        if table.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(CostError::InvalidParameters(
                "custom table abscissae must be strictly increasing".into(),
            ));
        }
        Ok(TransportCost::Custom { table })
    }

    /// Evaluates `tau(m)`.
    pub fn eval(&self, m: f64) -> Result<f64, CostError> {
        if m < 0.0 {
            return Err(CostError::NegativeMass(m));
        }
        Ok(self.eval_nonneg(m))
    }

    /// Evaluation for callers that guarantee `m >= 0` by construction.
    #[inline]
    pub(crate) fn eval_nonneg(&self, m: f64) -> f64 {
        match self {
            TransportCost::BranchedTransport { alpha } => m.powf(*alpha),
            TransportCost::UrbanPlanning { a, b } => (a * m).min(m + b),
            TransportCost::Steiner => {
                if m > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            TransportCost::Custom { table } => {
                if m >= table.last().unwrap().0 {
                    return table.last().unwrap().1;
                }
                let idx = table.partition_point(|&(x, _)| x <= m);
                let (x0, y0) = table[idx - 1];
                let (x1, y1) = table[idx];
                y0 + (y1 - y0) * (m - x0) / (x1 - x0)
            }
        }
    }

    /// Right derivative of `tau` at zero; `f64::INFINITY` where unbounded.
    pub fn slope_at_zero(&self) -> f64 {
        match self {
            TransportCost::BranchedTransport { .. } => f64::INFINITY,
            TransportCost::UrbanPlanning { a, .. } => *a,
            TransportCost::Steiner => f64::INFINITY,
            TransportCost::Custom { table } => {
                let (x1, y1) = table[1];
                y1 / x1
            }
        }
    }

    /// Checks the three defining properties (zero at zero, nondecreasing,
    /// concave) on a log-spaced sample grid and reports every violation.
    pub fn validate(&self, samples: usize) -> ValidationReport {
        assert!(samples >= 3, "need at least 3 samples");
        let mut ms = log_spaced_samples(self, samples);
        if let TransportCost::Custom { table } = self {
            // kinks live at the breakpoints; include them
            ms.extend(table.iter().map(|&(x, _)| x));
        }
        ms.push(0.0);
        ms.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ms.dedup();

        let mut report = ValidationReport::default();
        let v0 = self.eval_nonneg(0.0);
        if v0 != 0.0 {
            report
                .violations
                .push(format!("tau(0) = {v0}, expected 0"));
        }
        let vals: Vec<f64> = ms.iter().map(|&m| self.eval_nonneg(m)).collect();
        for (m, v) in ms.windows(2).zip(vals.windows(2)) {
            if v[1] < v[0] - 1e-12 {
                report.violations.push(format!(
                    "not nondecreasing: tau({}) = {} > tau({}) = {}",
                    m[0], v[0], m[1], v[1]
                ));
            }
        }
        for i in 0..ms.len().saturating_sub(2) {
            let (m0, m1, m2) = (ms[i], ms[i + 1], ms[i + 2]);
            let (v0, v1, v2) = (vals[i], vals[i + 1], vals[i + 2]);
            let q01 = (v1 - v0) / (m1 - m0);
            let q12 = (v2 - v1) / (m2 - m1);
            if q12 > q01 + 1e-9 * (1.0 + q01.abs()) {
                report.violations.push(format!(
                    "not concave on ({m0}, {m1}, {m2}): quotients {q01} < {q12}"
                ));
            }
        }
        report
    }
}

fn log_spaced_samples(cost: &TransportCost, samples: usize) -> Vec<f64> {
    let scale = match cost {
        TransportCost::Custom { table } => table.last().unwrap().0,
        _ => 1.0,
    };
    let lo = (scale * 1e-6).ln();
    let hi = (scale * 10.0).ln();
    (0..samples)
        .map(|i| (lo + (hi - lo) * i as f64 / (samples - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Default, Clone)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}
