//! History stacks, quadratic regressors and the data matrices built from a
//! recorded [`Trajectory`]. Nothing here looks at system matrices.
//!
//! With `z(t) = [u(t-1); ..; u(t-N); ŷ(t-1); ..; ŷ(t-N)]` and
//! `w(t) = z(t+1) - E1 u(t)`, the lifted Gramian satisfies, for every `t`,
//!
//! ```text
//! a² w^T W w - z^T W z + |ỹ(t)|² = 0          (discounted)
//! z^T W(s+1) z - w^T W(s) w - |ỹ(t)|² = 0     (finite, per step s)
//! ```
//!
//! which is linear in `vech(W)` with regressors built by
//! [`quad_features_into`].

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::Trajectory;
use crate::tensor_ops::{numerical_rank, pinv_of_transpose, quad_features_into, tri_len, PinvResult, TolPolicy};

/// `z(t)` together with its time and window length.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryStack {
    pub history: usize,
    /// Sample index within the trajectory.
    pub t: usize,
    pub z: Vec<f64>,
}

fn stack_from(u: &DMatrix<f64>, y: &DMatrix<f64>, history: usize, t: usize) -> Vec<f64> {
    let (m, r) = (u.nrows(), y.nrows());
    let mut z = Vec::with_capacity(history * (m + r));
    for k in 1..=history {
        z.extend_from_slice(&u.as_slice()[(t - k) * m..(t - k + 1) * m]);
    }
    for k in 1..=history {
        z.extend_from_slice(&y.as_slice()[(t - k) * r..(t - k + 1) * r]);
    }
    z
}

fn check_t(traj: &Trajectory, history: usize, t: usize) -> Result<()> {
    if history == 0 {
        return Err(Error::Config("history length N must be at least 1".into()));
    }
    if t < history || t > traj.len() {
        return Err(Error::OutOfRange { t, min: history, max: traj.len() });
    }
    Ok(())
}

/// `z(t)` from the seed channel `ŷ`. Valid for `N <= t <= len`.
pub fn build_z(traj: &Trajectory, history: usize, t: usize) -> Result<HistoryStack> {
    check_t(traj, history, t)?;
    Ok(HistoryStack { history, t, z: stack_from(&traj.u, &traj.y_hat, history, t) })
}

/// `z̃(t)`: the same stack built from the evaluated channel `ỹ`.
pub fn build_z_eval(traj: &Trajectory, history: usize, t: usize) -> Result<HistoryStack> {
    check_t(traj, history, t)?;
    Ok(HistoryStack { history, t, z: stack_from(&traj.u, &traj.y_tilde, history, t) })
}

/// `E1 = [I_m; 0]` for a stack of length `dim`.
pub fn e1(dim: usize, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(dim, m, |i, j| if i == j { 1.0 } else { 0.0 })
}

fn shifted(z_t: &HistoryStack, z_t1: &HistoryStack, u_t: &[f64]) -> Result<Vec<f64>> {
    if z_t1.t != z_t.t + 1 {
        return Err(Error::TimestampMismatch { expected: z_t.t + 1, got: z_t1.t });
    }
    if z_t.z.len() != z_t1.z.len() || u_t.len() > z_t1.z.len() {
        return Err(Error::dims("history stacks", z_t.z.len(), z_t1.z.len()));
    }
    let mut w = z_t1.z.clone();
    for (wi, ui) in w.iter_mut().zip(u_t) {
        *wi -= ui;
    }
    Ok(w)
}

/// `Φ(t) = H(a² w⊗w - z⊗z)` with `w = z(t+1) - E1 u(t)`.
pub fn build_phi_inf(z_t: &HistoryStack, z_t1: &HistoryStack, u_t: &[f64], discount: f64) -> Result<Vec<f64>> {
    let w = shifted(z_t, z_t1, u_t)?;
    let mut phi = vec![0.0; tri_len(w.len())];
    quad_features_into(&w, discount * discount, &mut phi);
    quad_features_into(&z_t.z, -1.0, &mut phi);
    Ok(phi)
}

/// `(Φ1, Φ2) = (H(z⊗z), H(w⊗w))`.
pub fn build_phi_fin(z_tau: &HistoryStack, z_tau1: &HistoryStack, u_tau: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let w = shifted(z_tau, z_tau1, u_tau)?;
    let d = tri_len(w.len());
    let (mut phi1, mut phi2) = (vec![0.0; d], vec![0.0; d]);
    quad_features_into(&z_tau.z, 1.0, &mut phi1);
    quad_features_into(&w, 1.0, &mut phi2);
    Ok((phi1, phi2))
}

/// Which timestamps become regressor columns and how rank is judged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssemblyConfig {
    /// Window length `N`.
    pub history: usize,
    /// Take every `stride`-th usable timestamp.
    #[serde(default = "one")]
    pub stride: usize,
    /// Cap on the number of columns; all usable timestamps when absent.
    #[serde(default)]
    pub max_columns: Option<usize>,
    #[serde(default)]
    pub tol: TolPolicy,
}

fn one() -> usize {
    1
}

impl AssemblyConfig {
    pub fn new(history: usize) -> Self {
        Self { history, stride: 1, max_columns: None, tol: TolPolicy::Default }
    }

    /// Stack length `Nm + Nr`.
    pub fn stack_dim(&self, m: usize, r: usize) -> usize {
        self.history * (m + r)
    }

    /// Default column budget: twice the regressor row count.
    pub fn default_columns(&self, m: usize, r: usize) -> usize {
        2 * tri_len(self.stack_dim(m, r))
    }

    /// Timestamps `t` with `N <= t <= len - 1`, thinned by stride and capped.
    pub fn timestamps(&self, len: usize) -> Result<Vec<usize>> {
        if self.history == 0 || self.stride == 0 {
            return Err(Error::Config("history and stride must be positive".into()));
        }
        let mut ts: Vec<usize> = (self.history..len).step_by(self.stride).collect();
        if let Some(cap) = self.max_columns {
            ts.truncate(cap);
        }
        if ts.is_empty() {
            return Err(Error::InsufficientSamples { needed: self.history + 1, available: len });
        }
        Ok(ts)
    }
}

/// Rank of the regressor matrix against its row count and, when the state
/// dimension is known, against the attainable rank `(Nm+n)(Nm+n+1)/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub rows: usize,
    pub columns: usize,
    pub numerical_rank: usize,
    pub tolerance: f64,
    pub sigma_max: f64,
    pub smallest_retained: Option<f64>,
    /// Set by [`RankReport::against_state_dim`].
    pub attainable: Option<usize>,
}

impl RankReport {
    fn from_pinv(p: &PinvResult, rows: usize, columns: usize) -> Self {
        Self {
            rows,
            columns,
            numerical_rank: p.numerical_rank,
            tolerance: p.tolerance_used,
            sigma_max: p.singular_values.first().copied().unwrap_or(0.0),
            smallest_retained: p.smallest_retained(),
            attainable: None,
        }
    }

    pub fn full_row_rank(&self) -> bool {
        self.numerical_rank == self.rows
    }

    /// Records the attainable rank for a known state dimension `n`.
    pub fn against_state_dim(&mut self, history: usize, m: usize, n: usize) {
        self.attainable = Some(tri_len(history * m + n).min(self.rows));
    }

    /// `None` until an attainable rank is known.
    pub fn meets_attainable(&self) -> Option<bool> {
        self.attainable.map(|a| self.numerical_rank >= a)
    }
}

fn rank_warnings(report: &RankReport) -> Vec<String> {
    let mut w = Vec::new();
    if report.numerical_rank == 0 {
        w.push("regressor matrix is numerically zero; the data carry no excitation".into());
    } else if !report.full_row_rank() {
        w.push(format!(
            "regressor rank {} below row count {}; estimates rely on the attainable-rank condition",
            report.numerical_rank, report.rows
        ));
    }
    if report.columns < report.rows {
        w.push(format!("only {} columns for {} regressor rows", report.columns, report.rows));
    }
    w
}

fn targets(traj: &Trajectory, ts: &[usize]) -> DMatrix<f64> {
    // Y[i, j] = ỹ_j(t_i)².
    DMatrix::from_fn(ts.len(), traj.q(), |i, j| {
        let v = traj.y_tilde_at(ts[i])[j];
        v * v
    })
}

fn check_traj(traj: &Trajectory, cfg: &AssemblyConfig) -> Result<()> {
    if cfg.history == 0 {
        return Err(Error::Config("history length N must be at least 1".into()));
    }
    if traj.len() < cfg.history + 1 {
        return Err(Error::InsufficientSamples { needed: cfg.history + 1, available: traj.len() });
    }
    Ok(())
}

/// Fills column `i` of a `D x k` matrix per timestamp, in parallel.
fn fill_columns<F>(rows: usize, ts: &[usize], f: F) -> DMatrix<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let mut out = DMatrix::<f64>::zeros(rows, ts.len());
    out.as_mut_slice()
        .par_chunks_mut(rows)
        .zip(ts.par_iter())
        .for_each(|(col, &t)| f(t, col));
    out
}

fn w_vec(traj: &Trajectory, history: usize, t: usize) -> Vec<f64> {
    let mut w = stack_from(&traj.u, &traj.y_hat, history, t + 1);
    for (wi, ui) in w.iter_mut().zip(traj.u_at(t)) {
        *wi -= ui;
    }
    w
}

/// Discounted-horizon data: `Ψ` (`D x k`), per-sensor targets `Y` (`k x q`),
/// and the cached `(Ψ^T)^+`.
#[derive(Debug, Clone)]
pub struct RegressorBundle {
    pub config: AssemblyConfig,
    pub discount: f64,
    pub m: usize,
    pub r: usize,
    pub psi: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub timestamps: Vec<usize>,
    /// `(Ψ^T)^+`, `D x k`.
    pub psi_t_pinv: DMatrix<f64>,
    pub rank: RankReport,
    pub warnings: Vec<String>,
    /// Seconds spent in the pseudoinverse.
    pub pinv_seconds: f64,
}

impl RegressorBundle {
    pub fn stack_dim(&self) -> usize {
        self.config.stack_dim(self.m, self.r)
    }

    pub fn e1(&self) -> DMatrix<f64> {
        e1(self.stack_dim(), self.m)
    }

    pub fn sensors(&self) -> usize {
        self.y.ncols()
    }
}

/// Builds `Ψ = [Φ(t_0) .. Φ(t_k)]` and `Y` and factors `Ψ^T` once.
pub fn assemble_inf(traj: &Trajectory, cfg: &AssemblyConfig, discount: f64) -> Result<RegressorBundle> {
    check_traj(traj, cfg)?;
    if !(discount > 0.0 && discount <= 1.0) {
        return Err(Error::Config(format!("discount must be in (0, 1], got {discount}")));
    }
    let ts = cfg.timestamps(traj.len())?;
    let dim = cfg.stack_dim(traj.m(), traj.r());
    let rows = tri_len(dim);
    let a2 = discount * discount;
    let psi = fill_columns(rows, &ts, |t, col| {
        quad_features_into(&w_vec(traj, cfg.history, t), a2, col);
        quad_features_into(&stack_from(&traj.u, &traj.y_hat, cfg.history, t), -1.0, col);
    });
    let y = targets(traj, &ts);
    let start = std::time::Instant::now();
    let pinv = pinv_of_transpose(&psi, cfg.tol)?;
    let pinv_seconds = start.elapsed().as_secs_f64();
    let rank = RankReport::from_pinv(&pinv, rows, ts.len());
    let warnings = rank_warnings(&rank);
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(RegressorBundle {
        config: *cfg,
        discount,
        m: traj.m(),
        r: traj.r(),
        psi,
        y,
        timestamps: ts,
        psi_t_pinv: pinv.pseudoinverse,
        rank,
        warnings,
        pinv_seconds,
    })
}

/// Finite-horizon data: `Ψ1`, `Ψ2`, `Y` and the cached `(Ψ1^T)^+`.
#[derive(Debug, Clone)]
pub struct FiniteRegressorBundle {
    pub config: AssemblyConfig,
    pub m: usize,
    pub r: usize,
    pub psi1: DMatrix<f64>,
    pub psi2: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub timestamps: Vec<usize>,
    /// `(Ψ1^T)^+`, `D x k`.
    pub psi1_t_pinv: DMatrix<f64>,
    pub rank: RankReport,
    pub warnings: Vec<String>,
    pub pinv_seconds: f64,
}

impl FiniteRegressorBundle {
    pub fn stack_dim(&self) -> usize {
        self.config.stack_dim(self.m, self.r)
    }

    pub fn e1(&self) -> DMatrix<f64> {
        e1(self.stack_dim(), self.m)
    }

    pub fn sensors(&self) -> usize {
        self.y.ncols()
    }
}

pub fn assemble_fin(traj: &Trajectory, cfg: &AssemblyConfig) -> Result<FiniteRegressorBundle> {
    check_traj(traj, cfg)?;
    let ts = cfg.timestamps(traj.len())?;
    let dim = cfg.stack_dim(traj.m(), traj.r());
    let rows = tri_len(dim);
    let psi1 = fill_columns(rows, &ts, |t, col| {
        quad_features_into(&stack_from(&traj.u, &traj.y_hat, cfg.history, t), 1.0, col);
    });
    let psi2 = fill_columns(rows, &ts, |t, col| {
        quad_features_into(&w_vec(traj, cfg.history, t), 1.0, col);
    });
    let y = targets(traj, &ts);
    let start = std::time::Instant::now();
    let pinv = pinv_of_transpose(&psi1, cfg.tol)?;
    let pinv_seconds = start.elapsed().as_secs_f64();
    let rank = RankReport::from_pinv(&pinv, rows, ts.len());
    let warnings = rank_warnings(&rank);
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(FiniteRegressorBundle {
        config: *cfg,
        m: traj.m(),
        r: traj.r(),
        psi1,
        psi2,
        y,
        timestamps: ts,
        psi1_t_pinv: pinv.pseudoinverse,
        rank,
        warnings,
        pinv_seconds,
    })
}

/// `Z = [z(t_0) .. z(t_k)]` and `Z̃ = [z̃(t_0) .. z̃(t_k)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsDataMatrices {
    pub history: usize,
    pub m: usize,
    pub z: DMatrix<f64>,
    pub z_tilde: DMatrix<f64>,
    pub timestamps: Vec<usize>,
}

impl ObsDataMatrices {
    /// `Nm`, the part of either rank contributed by the input history.
    pub fn input_rows(&self) -> usize {
        self.history * self.m
    }
}

/// Uses every `t` in `N..=len`. Needs at least as many columns as the taller
/// of `Z`, `Z̃` has rows.
pub fn assemble_obs_matrices(traj: &Trajectory, history: usize) -> Result<ObsDataMatrices> {
    if history == 0 {
        return Err(Error::Config("history length N must be at least 1".into()));
    }
    let needed = history * (traj.m() + traj.r().max(traj.q()));
    let available = (traj.len() + 1).saturating_sub(history);
    if available < needed {
        return Err(Error::InsufficientSamples { needed: needed + history - 1, available: traj.len() });
    }
    let ts: Vec<usize> = (history..=traj.len()).collect();
    let build = |y: &DMatrix<f64>| {
        let rows = history * (traj.m() + y.nrows());
        let mut out = DMatrix::zeros(rows, ts.len());
        for (i, &t) in ts.iter().enumerate() {
            out.column_mut(i).copy_from_slice(&stack_from(&traj.u, y, history, t));
        }
        out
    };
    Ok(ObsDataMatrices {
        history,
        m: traj.m(),
        z: build(&traj.y_hat),
        z_tilde: build(&traj.y_tilde),
        timestamps: ts,
    })
}

/// Numerical rank of a regressor or data matrix under `tol`.
pub fn rank_of(m: &DMatrix<f64>, tol: TolPolicy) -> Result<usize> {
    if m.is_empty() {
        return Ok(0);
    }
    Ok(numerical_rank(m, tol)?.0)
}

/// Plain-array form of the assembled data for fixtures. Matrices are stored
/// as lists of columns; the pseudoinverse is recomputed on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleFile {
    pub config: AssemblyConfig,
    /// Present for discounted bundles, absent for finite-horizon ones.
    pub discount: Option<f64>,
    pub m: usize,
    pub r: usize,
    pub timestamps: Vec<usize>,
    pub psi: Vec<Vec<f64>>,
    #[serde(default)]
    pub psi2: Option<Vec<Vec<f64>>>,
    pub y: Vec<Vec<f64>>,
}

fn columns_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}

fn from_columns(cols: &[Vec<f64>], rows: usize, what: &'static str) -> Result<DMatrix<f64>> {
    if cols.iter().any(|c| c.len() != rows) {
        return Err(Error::dims(what, rows, "ragged columns"));
    }
    Ok(DMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i]))
}

impl BundleFile {
    pub fn from_inf(b: &RegressorBundle) -> Self {
        Self {
            config: b.config,
            discount: Some(b.discount),
            m: b.m,
            r: b.r,
            timestamps: b.timestamps.clone(),
            psi: columns_of(&b.psi),
            psi2: None,
            y: columns_of(&b.y),
        }
    }

    pub fn from_fin(b: &FiniteRegressorBundle) -> Self {
        Self {
            config: b.config,
            discount: None,
            m: b.m,
            r: b.r,
            timestamps: b.timestamps.clone(),
            psi: columns_of(&b.psi1),
            psi2: Some(columns_of(&b.psi2)),
            y: columns_of(&b.y),
        }
    }

    fn parts(&self) -> Result<(usize, DMatrix<f64>, DMatrix<f64>)> {
        let rows = tri_len(self.config.stack_dim(self.m, self.r));
        let k = self.timestamps.len();
        let psi = from_columns(&self.psi, rows, "bundle psi")?;
        let y = from_columns(&self.y, k, "bundle y")?;
        if psi.ncols() != k {
            return Err(Error::dims("bundle psi columns", k, psi.ncols()));
        }
        Ok((rows, psi, y))
    }

    pub fn to_inf(&self) -> Result<RegressorBundle> {
        let discount = self.discount.ok_or(Error::MixedHorizon)?;
        let (rows, psi, y) = self.parts()?;
        let start = std::time::Instant::now();
        let pinv = pinv_of_transpose(&psi, self.config.tol)?;
        let pinv_seconds = start.elapsed().as_secs_f64();
        let rank = RankReport::from_pinv(&pinv, rows, psi.ncols());
        Ok(RegressorBundle {
            config: self.config,
            discount,
            m: self.m,
            r: self.r,
            warnings: rank_warnings(&rank),
            psi,
            y,
            timestamps: self.timestamps.clone(),
            psi_t_pinv: pinv.pseudoinverse,
            rank,
            pinv_seconds,
        })
    }

    pub fn to_fin(&self) -> Result<FiniteRegressorBundle> {
        if self.discount.is_some() {
            return Err(Error::MixedHorizon);
        }
        let (rows, psi1, y) = self.parts()?;
        let psi2 = from_columns(self.psi2.as_deref().ok_or(Error::MixedHorizon)?, rows, "bundle psi2")?;
        if psi2.ncols() != psi1.ncols() {
            return Err(Error::dims("bundle psi2 columns", psi1.ncols(), psi2.ncols()));
        }
        let start = std::time::Instant::now();
        let pinv = pinv_of_transpose(&psi1, self.config.tol)?;
        let pinv_seconds = start.elapsed().as_secs_f64();
        let rank = RankReport::from_pinv(&pinv, rows, psi1.ncols());
        Ok(FiniteRegressorBundle {
            config: self.config,
            m: self.m,
            r: self.r,
            warnings: rank_warnings(&rank),
            psi1,
            psi2,
            y,
            timestamps: self.timestamps.clone(),
            psi1_t_pinv: pinv.pseudoinverse,
            rank,
            pinv_seconds,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }
}
