//! Least-squares solutions for the lifted Gramian and the cost blocks read
//! from it.
//!
//! Discounted: `vech(Ŵ) = -(Ψ^T)^+ Y_j`. Finite horizon: `Ŵ(0) = 0` and
//! `vech(Ŵ(t+1)) = (Ψ1^T)^+ (Ψ2^T vech(Ŵ(t)) + Y_j)`. In both cases the cost
//! block is the leading `m x m` block `E1^T Ŵ E1`.
//!
//! Each least-squares solve is followed by [`REFINEMENT_SWEEPS`] rounds of
//! iterative refinement, `x += P (b - Ψ^T x)`. The regressor matrices are
//! badly conditioned when the output history is smooth, and the refinement
//! recovers several digits the plain pseudoinverse product loses.
//!
//! Per-sensor work uses fixed sequential kernels, so running sensors on a
//! thread pool gives bit-identical results to a plain loop.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metric::{Horizon, MetricKind, LOGDET_EIGEN_FLOOR};
use crate::regressors::{FiniteRegressorBundle, RankReport, RegressorBundle};
use crate::tensor_ops::{matmul_seq, matmul_tn_seq, matvec, matvec_transpose, SymMatrix};

pub const REFINEMENT_SWEEPS: usize = 2;

/// `x = P b`, refined against `psi^T x = b`.
fn solve_refined(pinv: &DMatrix<f64>, psi: &DMatrix<f64>, b: &[f64]) -> Vec<f64> {
    let mut x = matvec(pinv, b);
    for _ in 0..REFINEMENT_SWEEPS {
        let fit = matvec_transpose(psi, &x);
        let res: Vec<f64> = b.iter().zip(&fit).map(|(bi, fi)| bi - fi).collect();
        let dx = matvec(pinv, &res);
        x.iter_mut().zip(&dx).for_each(|(xi, di)| *xi += di);
    }
    x
}

/// Column-wise [`solve_refined`].
fn solve_refined_batch(pinv: &DMatrix<f64>, psi: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut x = matmul_seq(pinv, b);
    for _ in 0..REFINEMENT_SWEEPS {
        let res = b - matmul_tn_seq(psi, &x);
        x += matmul_seq(pinv, &res);
    }
    x
}

/// Quality indicators copied from the bundle that produced an estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub rank: usize,
    pub rows: usize,
    pub columns: usize,
    pub smallest_retained: Option<f64>,
    pub full_row_rank: bool,
}

impl From<&RankReport> for Diagnostics {
    fn from(r: &RankReport) -> Self {
        Self {
            rank: r.numerical_rank,
            rows: r.rows,
            columns: r.columns,
            smallest_retained: r.smallest_retained,
            full_row_rank: r.full_row_rank(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramianEstimate {
    /// Column of the evaluated channel this estimate belongs to.
    pub sensor: usize,
    pub w_hat: SymMatrix,
    /// `E1^T Ŵ E1`.
    pub cost_block: DMatrix<f64>,
    pub horizon: Horizon,
    pub diagnostics: Diagnostics,
}

impl GramianEstimate {
    pub fn metric(&self, kind: MetricKind) -> f64 {
        metric_value(&self.cost_block, kind)
    }
}

/// `Ŵ(0), .., Ŵ(T)` for one sensor, with the cost block at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct GramianSequence {
    pub sensor: usize,
    pub w_hat: Vec<SymMatrix>,
    pub cost_blocks: Vec<DMatrix<f64>>,
    pub diagnostics: Diagnostics,
}

impl GramianSequence {
    pub fn steps(&self) -> usize {
        self.w_hat.len() - 1
    }

    /// The estimate after `t` steps.
    pub fn at(&self, t: usize) -> GramianEstimate {
        GramianEstimate {
            sensor: self.sensor,
            w_hat: self.w_hat[t].clone(),
            cost_block: self.cost_blocks[t].clone(),
            horizon: Horizon::Finite { steps: t },
            diagnostics: self.diagnostics.clone(),
        }
    }

    pub fn metric(&self, t: usize, kind: MetricKind) -> f64 {
        metric_value(&self.cost_blocks[t], kind)
    }
}

fn block_of(w: &SymMatrix, m: usize) -> DMatrix<f64> {
    let b = w.leading_block(m);
    (&b + b.transpose()) * 0.5
}

fn target_column(y: &DMatrix<f64>, j: usize) -> Result<&[f64]> {
    if j >= y.ncols() {
        return Err(Error::InvalidSelection(format!("sensor column {j} out of {}", y.ncols())));
    }
    let k = y.nrows();
    Ok(&y.as_slice()[j * k..(j + 1) * k])
}

/// Discounted estimate for evaluated sensor column `j`.
pub fn estimate_inf(bundle: &RegressorBundle, j: usize) -> Result<GramianEstimate> {
    let y = target_column(&bundle.y, j)?;
    let mut est = estimate_inf_targets(bundle, y)?;
    est.sensor = j;
    Ok(est)
}

/// Discounted estimate for an arbitrary target vector, e.g. a row-sum of
/// several sensors' targets.
pub fn estimate_inf_targets(bundle: &RegressorBundle, y: &[f64]) -> Result<GramianEstimate> {
    if y.len() != bundle.timestamps.len() {
        return Err(Error::dims("estimate targets", bundle.timestamps.len(), y.len()));
    }
    let neg: Vec<f64> = y.iter().map(|v| -v).collect();
    let w = solve_refined(&bundle.psi_t_pinv, &bundle.psi, &neg);
    let w_hat = SymMatrix::from_vech(w)?;
    Ok(GramianEstimate {
        sensor: usize::MAX,
        cost_block: block_of(&w_hat, bundle.m),
        w_hat,
        horizon: Horizon::Infinite { discount: bundle.discount },
        diagnostics: Diagnostics::from(&bundle.rank),
    })
}

/// Finite-horizon sequence for evaluated sensor column `j`, `T` steps.
pub fn estimate_fin(bundle: &FiniteRegressorBundle, j: usize, steps: usize) -> Result<GramianSequence> {
    let y = target_column(&bundle.y, j)?;
    let mut seq = estimate_fin_targets(bundle, y, steps)?;
    seq.sensor = j;
    Ok(seq)
}

pub fn estimate_fin_targets(bundle: &FiniteRegressorBundle, y: &[f64], steps: usize) -> Result<GramianSequence> {
    if y.len() != bundle.timestamps.len() {
        return Err(Error::dims("estimate targets", bundle.timestamps.len(), y.len()));
    }
    let rows = bundle.psi1.nrows();
    let mut w = vec![0.0; rows];
    let mut w_hat = Vec::with_capacity(steps + 1);
    let mut cost_blocks = Vec::with_capacity(steps + 1);
    w_hat.push(SymMatrix::from_vech(w.clone())?);
    cost_blocks.push(DMatrix::zeros(bundle.m, bundle.m));
    for _ in 0..steps {
        let mut rhs = matvec_transpose(&bundle.psi2, &w);
        rhs.iter_mut().zip(y).for_each(|(r, yi)| *r += yi);
        w = solve_refined(&bundle.psi1_t_pinv, &bundle.psi1, &rhs);
        let s = SymMatrix::from_vech(w.clone())?;
        cost_blocks.push(block_of(&s, bundle.m));
        w_hat.push(s);
    }
    Ok(GramianSequence {
        sensor: usize::MAX,
        w_hat,
        cost_blocks,
        diagnostics: Diagnostics::from(&bundle.rank),
    })
}

/// Every evaluated sensor, on the current rayon pool.
pub fn estimate_all_inf(bundle: &RegressorBundle) -> Result<Vec<GramianEstimate>> {
    (0..bundle.sensors()).into_par_iter().map(|j| estimate_inf(bundle, j)).collect()
}

pub fn estimate_all_fin(bundle: &FiniteRegressorBundle, steps: usize) -> Result<Vec<GramianSequence>> {
    (0..bundle.sensors()).into_par_iter().map(|j| estimate_fin(bundle, j, steps)).collect()
}

/// Every evaluated sensor at once: one matrix product per step instead of
/// one pass over `(Ψ1^T)^+` per sensor. Agrees with [`estimate_all_fin`] to
/// rounding, and is itself independent of the thread count.
pub fn estimate_fin_batch(bundle: &FiniteRegressorBundle, steps: usize) -> Result<Vec<GramianSequence>> {
    let q = bundle.sensors();
    let rows = bundle.psi1.nrows();
    let mut w = DMatrix::<f64>::zeros(rows, q);
    let mut w_hat: Vec<Vec<SymMatrix>> = vec![vec![SymMatrix::zeros(bundle.stack_dim())]; q];
    let mut blocks: Vec<Vec<DMatrix<f64>>> = vec![vec![DMatrix::zeros(bundle.m, bundle.m)]; q];
    for _ in 0..steps {
        let rhs = matmul_tn_seq(&bundle.psi2, &w) + &bundle.y;
        w = solve_refined_batch(&bundle.psi1_t_pinv, &bundle.psi1, &rhs);
        for j in 0..q {
            let s = SymMatrix::from_vech(w.column(j).iter().copied().collect())?;
            blocks[j].push(block_of(&s, bundle.m));
            w_hat[j].push(s);
        }
    }
    let diagnostics = Diagnostics::from(&bundle.rank);
    Ok(w_hat
        .into_iter()
        .zip(blocks)
        .enumerate()
        .map(|(sensor, (w_hat, cost_blocks))| GramianSequence { sensor, w_hat, cost_blocks, diagnostics: diagnostics.clone() })
        .collect())
}

/// Sum of cost blocks in the order given. All estimates must share a horizon.
pub fn cost_block_sum(estimates: &[&GramianEstimate]) -> Result<DMatrix<f64>> {
    let first = estimates
        .first()
        .ok_or_else(|| Error::InvalidSelection("empty estimate set".into()))?;
    let mut sum = DMatrix::zeros(first.cost_block.nrows(), first.cost_block.ncols());
    for e in estimates {
        if e.horizon != first.horizon {
            return Err(Error::MixedHorizon);
        }
        if e.cost_block.shape() != sum.shape() {
            return Err(Error::dims("cost_block_sum", sum.nrows(), e.cost_block.nrows()));
        }
        sum += &e.cost_block;
    }
    Ok(sum)
}

/// Trace, or log-det with the `-inf` sentinel.
pub fn metric_value(block: &DMatrix<f64>, kind: MetricKind) -> f64 {
    kind.evaluate(block, LOGDET_EIGEN_FLOOR)
}

/// JSON shape of a per-sensor estimate.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateRecord {
    /// Sensor number, counted from 1.
    pub sensor: usize,
    #[serde(flatten)]
    pub horizon: Horizon,
    pub trace: f64,
    #[serde(with = "crate::serde_float")]
    pub logdet: f64,
    pub cost_block: Vec<Vec<f64>>,
    pub diagnostics: Diagnostics,
}

impl EstimateRecord {
    pub fn new(sensor_number: usize, est: &GramianEstimate) -> Self {
        Self {
            sensor: sensor_number,
            horizon: est.horizon,
            trace: est.metric(MetricKind::Trace),
            logdet: est.metric(MetricKind::LogDet),
            cost_block: crate::lti::io::to_rows(&est.cost_block),
            diagnostics: est.diagnostics.clone(),
        }
    }
}
