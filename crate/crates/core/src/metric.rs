//! Selection metrics: trace or log-det of the `m x m` block `B^T W_o B`,
//! over a discounted infinite horizon or a finite horizon.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Eigenvalues at or below this floor make a log-det evaluate to `-inf`.
pub const LOGDET_EIGEN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "horizon", rename_all = "snake_case")]
pub enum Horizon {
    /// Discounted infinite horizon with discount `a`.
    Infinite { discount: f64 },
    /// Finite horizon of `steps` Lyapunov-difference steps.
    Finite { steps: usize },
}

impl Horizon {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Horizon::Infinite { .. })
    }
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Horizon::Infinite { discount } => write!(f, "inf(a={discount})"),
            Horizon::Finite { steps } => write!(f, "T={steps}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Average output energy, additive over sensors.
    Trace,
    /// Volumetric measure, submodular over sensors.
    LogDet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub kind: MetricKind,
    #[serde(flatten)]
    pub horizon: Horizon,
}

impl Metric {
    pub fn trace_inf(discount: f64) -> Self {
        Self { kind: MetricKind::Trace, horizon: Horizon::Infinite { discount } }
    }

    pub fn trace_fin(steps: usize) -> Self {
        Self { kind: MetricKind::Trace, horizon: Horizon::Finite { steps } }
    }

    pub fn logdet_inf(discount: f64) -> Self {
        Self { kind: MetricKind::LogDet, horizon: Horizon::Infinite { discount } }
    }

    pub fn logdet_fin(steps: usize) -> Self {
        Self { kind: MetricKind::LogDet, horizon: Horizon::Finite { steps } }
    }

    pub fn evaluate(&self, block: &DMatrix<f64>) -> f64 {
        self.kind.evaluate(block, LOGDET_EIGEN_FLOOR)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = match self.kind {
            MetricKind::Trace => "trace",
            MetricKind::LogDet => "logdet",
        };
        write!(f, "{k} {}", self.horizon)
    }
}

impl MetricKind {
    /// Trace, or log-det with a `-inf` sentinel when any eigenvalue of the
    /// (symmetrized) block is at or below `floor`.
    pub fn evaluate(&self, block: &DMatrix<f64>, floor: f64) -> f64 {
        match self {
            MetricKind::Trace => block.trace(),
            MetricKind::LogDet => {
                let sym = (block + block.transpose()) * 0.5;
                let eig = sym.symmetric_eigenvalues();
                if eig.iter().any(|&l| !(l > floor)) {
                    f64::NEG_INFINITY
                } else {
                    eig.iter().map(|l| l.ln()).sum()
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn trace_and_logdet_basics() {
        let i3 = DMatrix::<f64>::identity(3, 3);
        assert_eq!(MetricKind::Trace.evaluate(&i3, LOGDET_EIGEN_FLOOR), 3.0);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, std::f64::consts::E]));
        let ld = MetricKind::LogDet.evaluate(&d, LOGDET_EIGEN_FLOOR);
        assert!((ld - 1.0).abs() < 1e-14);
    }

    #[test]
    fn logdet_floor_gives_neg_inf() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-13]));
        assert_eq!(MetricKind::LogDet.evaluate(&d, LOGDET_EIGEN_FLOOR), f64::NEG_INFINITY);
        assert_eq!(MetricKind::LogDet.evaluate(&DMatrix::zeros(2, 2), LOGDET_EIGEN_FLOOR), f64::NEG_INFINITY);
    }

    #[test]
    fn metric_json_shape() {
        let m = Metric::logdet_inf(0.99);
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"kind":"log_det","horizon":"infinite","discount":0.99}"#);
        let back: Metric = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
