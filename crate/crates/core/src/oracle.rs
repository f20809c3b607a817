//! Model-based ground truth: Gramians, costs, state reconstruction matrices
//! and exhaustive subset search. These read `A`, `B`, `C` directly and exist
//! for validation only; the data-driven path never calls into this module.

use nalgebra::{DMatrix, DVector, LU, Dyn};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lti::{spectral_radius, LtiSystem, SelectionIndex};
use crate::metric::{Horizon, Metric, LOGDET_EIGEN_FLOOR};
use crate::tensor_ops::{pinv_tol, numerical_rank, sym_index, tri_len, SymMatrix, TolPolicy};

/// Largest candidate pool [`brute_force_select`] will enumerate.
pub const BRUTE_FORCE_LIMIT: usize = 20;

/// Solver for `a² A^T W A - W + Q = 0` with the factorization kept for
/// repeated right-hand sides.
///
/// The operator `W -> W - a² A^T W A` is assembled on the `n(n+1)/2`
/// symmetric coordinates and LU-factorized once.
pub struct DiscountedAleSolver {
    n: usize,
    lu: LU<f64, Dyn, Dyn>,
}

impl DiscountedAleSolver {
    /// Fails with [`Error::UnstableDiscounted`] unless `a * rho(A) < 1`.
    pub fn new(a_mat: &DMatrix<f64>, discount: f64) -> Result<Self> {
        let n = a_mat.nrows();
        let rho = spectral_radius(a_mat);
        if !(discount * rho < 1.0) {
            return Err(Error::UnstableDiscounted(discount * rho));
        }
        let a2 = discount * discount;
        let dim = tri_len(n);
        let mut op = DMatrix::<f64>::identity(dim, dim);
        // Basis element E_(i,j) has ones at (i,j) and (j,i). Its image under
        // W -> A^T W A is r_i r_j^T + r_j r_i^T with r_k the k-th row of A.
        for j in 0..n {
            for i in j..n {
                let col = sym_index(i, j, n);
                let ri = a_mat.row(i);
                let rj = a_mat.row(j);
                for c in 0..n {
                    for r in c..n {
                        let v = if i == j {
                            ri[r] * ri[c]
                        } else {
                            ri[r] * rj[c] + rj[r] * ri[c]
                        };
                        op[(sym_index(r, c, n), col)] -= a2 * v;
                    }
                }
            }
        }
        Ok(Self { n, lu: op.lu() })
    }

    pub fn solve(&self, q: &SymMatrix) -> Result<SymMatrix> {
        if q.dim() != self.n {
            return Err(Error::dims("DiscountedAleSolver::solve", self.n, q.dim()));
        }
        let rhs = DVector::from_column_slice(q.packed());
        let w = self.lu.solve(&rhs).ok_or(Error::Singular("discounted Lyapunov operator"))?;
        SymMatrix::from_vech(w.as_slice().to_vec())
    }
}

fn gram_of_rows(c: &DMatrix<f64>) -> SymMatrix {
    SymMatrix::from_lower(&(c.transpose() * c)).expect("square")
}

/// Discounted observability Gramian of `(A, Cγ)`: the PSD solution of
/// `a² A^T W A - W + Cγ^T Cγ = 0`.
pub fn solve_discounted_ale(a_mat: &DMatrix<f64>, c_sel: &DMatrix<f64>, discount: f64) -> Result<SymMatrix> {
    if c_sel.ncols() != a_mat.nrows() {
        return Err(Error::dims("solve_discounted_ale Cγ", a_mat.nrows(), c_sel.ncols()));
    }
    DiscountedAleSolver::new(a_mat, discount)?.solve(&gram_of_rows(c_sel))
}

/// `W(0), .., W(T)` with `W(t+1) = A^T W(t) A + Cγ^T Cγ`, `W(0) = 0`.
pub fn finite_horizon_obs_gramian(a_mat: &DMatrix<f64>, c_sel: &DMatrix<f64>, steps: usize) -> Result<Vec<SymMatrix>> {
    if c_sel.ncols() != a_mat.nrows() {
        return Err(Error::dims("finite_horizon_obs_gramian Cγ", a_mat.nrows(), c_sel.ncols()));
    }
    let q = c_sel.transpose() * c_sel;
    let n = a_mat.nrows();
    let mut out = Vec::with_capacity(steps + 1);
    let mut w = DMatrix::<f64>::zeros(n, n);
    out.push(SymMatrix::zeros(n));
    for _ in 0..steps {
        w = a_mat.transpose() * &w * a_mat + &q;
        out.push(SymMatrix::from_dense_symmetrized(&w)?);
    }
    Ok(out)
}

/// Controllability Gramian `W_c` for the horizon: the dual recursion with
/// `(A, Cγ^T)` replaced by `(A^T, B)`.
pub fn ctrb_gramian(sys: &LtiSystem, horizon: Horizon) -> Result<SymMatrix> {
    let at = sys.a().transpose();
    let bt = sys.b().transpose();
    match horizon {
        Horizon::Infinite { discount } => solve_discounted_ale(&at, &bt, discount),
        Horizon::Finite { steps } => Ok(finite_horizon_obs_gramian(&at, &bt, steps)?.pop().expect("steps + 1 entries")),
    }
}

/// Observability Gramian of `(A, S_γ C)` for the horizon.
pub fn obs_gramian(sys: &LtiSystem, sel: &SelectionIndex, horizon: Horizon) -> Result<SymMatrix> {
    let c_sel = sys.sensor_rows(sel)?;
    match horizon {
        Horizon::Infinite { discount } => solve_discounted_ale(sys.a(), &c_sel, discount),
        Horizon::Finite { steps } => Ok(finite_horizon_obs_gramian(sys.a(), &c_sel, steps)?.pop().expect("steps + 1 entries")),
    }
}

/// `B^T W_o B`, the `m x m` block every metric is computed from.
pub fn cost_block(sys: &LtiSystem, w: &SymMatrix) -> DMatrix<f64> {
    let b = sys.b();
    let blk = b.transpose() * w.to_dense() * b;
    (&blk + blk.transpose()) * 0.5
}

/// True metric value of the sensor set `sel`. Log-det returns `-inf` when the
/// block has an eigenvalue at or below [`LOGDET_EIGEN_FLOOR`].
pub fn true_cost(sys: &LtiSystem, sel: &SelectionIndex, metric: Metric) -> Result<f64> {
    let w = obs_gramian(sys, sel, metric.horizon)?;
    Ok(metric.kind.evaluate(&cost_block(sys, &w), LOGDET_EIGEN_FLOOR))
}

/// The trace metric through the controllability side, `tr(Cγ W_c Cγ^T)`.
pub fn dual_trace_cost(sys: &LtiSystem, sel: &SelectionIndex, horizon: Horizon) -> Result<f64> {
    let wc = ctrb_gramian(sys, horizon)?.to_dense();
    let c_sel = sys.sensor_rows(sel)?;
    Ok((&c_sel * wc * c_sel.transpose()).trace())
}

/// Model-side matrices that reconstruct the state from a history stack:
/// `x(t) = M z(t)` for `t >= N`.
#[derive(Debug, Clone)]
pub struct ReconstructionMatrices {
    pub u_n: DMatrix<f64>,
    pub v_n: DMatrix<f64>,
    pub t_n: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub m_u: DMatrix<f64>,
    pub m_y: DMatrix<f64>,
    pub horizon: usize,
    pub obs_index: usize,
}

impl ReconstructionMatrices {
    /// `B = M E1`: the first `m` columns of `M`.
    pub fn b_from_m(&self, m_inputs: usize) -> DMatrix<f64> {
        self.m.columns(0, m_inputs).into_owned()
    }

    /// `M^T W M`, the lifted Gramian the data-driven estimate targets.
    pub fn lift(&self, w: &SymMatrix) -> SymMatrix {
        let l = self.m.transpose() * w.to_dense() * &self.m;
        SymMatrix::from_dense_symmetrized(&l).expect("square")
    }
}

/// `U_N = [B, AB, .., A^{N-1}B]`, `V_N = [Ĉ A^{N-1}; ..; Ĉ A; Ĉ]`, `T_N` the
/// block upper-triangular Toeplitz map from `u(t-1:t-N)` to `ŷ(t-1:t-N)`, and
/// `M_y = A^N V_N^+`, `M_u = U_N - M_y T_N`.
pub fn build_reconstruction(sys: &LtiSystem, sel_hat: &SelectionIndex, horizon: usize) -> Result<ReconstructionMatrices> {
    let c_hat = sys.sensor_rows(sel_hat)?;
    let obs_index = observability_index(sys.a(), &c_hat).ok_or(Error::Unobservable)?;
    if horizon < obs_index {
        return Err(Error::HorizonBelowIndex { horizon, index: obs_index });
    }
    let (n, m, r) = (sys.n(), sys.m(), c_hat.nrows());
    let a = sys.a();
    let mut powers = vec![DMatrix::<f64>::identity(n, n)];
    for k in 1..=horizon {
        powers.push(a * &powers[k - 1]);
    }
    let mut u_n = DMatrix::zeros(n, horizon * m);
    for k in 0..horizon {
        u_n.view_mut((0, k * m), (n, m)).copy_from(&(&powers[k] * sys.b()));
    }
    // Row block i (i = 1..N) of V_N corresponds to ŷ(t-i) and holds Ĉ A^{N-i}.
    let mut v_n = DMatrix::zeros(horizon * r, n);
    for i in 1..=horizon {
        v_n.view_mut(((i - 1) * r, 0), (r, n)).copy_from(&(&c_hat * &powers[horizon - i]));
    }
    // ŷ(t-i) picks up u(t-j) for j > i through Ĉ A^{j-i-1} B.
    let mut t_n = DMatrix::zeros(horizon * r, horizon * m);
    for i in 1..=horizon {
        for j in (i + 1)..=horizon {
            let blk = &c_hat * &powers[j - i - 1] * sys.b();
            t_n.view_mut(((i - 1) * r, (j - 1) * m), (r, m)).copy_from(&blk);
        }
    }
    let v_pinv = pinv_tol(&v_n, TolPolicy::Default)?.pseudoinverse;
    let m_y = &powers[horizon] * v_pinv;
    let m_u = &u_n - &m_y * &t_n;
    let mut m_full = DMatrix::zeros(n, horizon * (m + r));
    m_full.view_mut((0, 0), (n, horizon * m)).copy_from(&m_u);
    m_full.view_mut((0, horizon * m), (n, horizon * r)).copy_from(&m_y);
    Ok(ReconstructionMatrices {
        u_n,
        v_n,
        t_n,
        m: m_full,
        m_u,
        m_y,
        horizon,
        obs_index,
    })
}

/// Observability matrix `[C; CA; ..; CA^{k-1}]`.
pub fn observability_matrix(a: &DMatrix<f64>, c: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let (q, n) = c.shape();
    let mut out = DMatrix::zeros(q * k, n);
    let mut blk = c.clone();
    for i in 0..k {
        out.view_mut((i * q, 0), (q, n)).copy_from(&blk);
        blk = &blk * a;
    }
    out
}

/// Smallest `K` with `rank([C; ..; CA^{K-1}]) == n`, or `None` when the pair
/// is unobservable.
pub fn observability_index(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Option<usize> {
    let n = a.nrows();
    let full = observability_matrix(a, c, n);
    let (full_rank, _, _) = numerical_rank(&full, TolPolicy::Default).ok()?;
    if full_rank < n {
        return None;
    }
    (1..=n).find(|&k| {
        numerical_rank(&observability_matrix(a, c, k), TolPolicy::Default)
            .map(|(rk, _, _)| rk == n)
            .unwrap_or(false)
    })
}

pub fn is_observable(a: &DMatrix<f64>, c: &DMatrix<f64>) -> bool {
    observability_index(a, c).is_some()
}

/// Lexicographically ordered `k`-subsets of `pool`.
pub fn combinations(pool: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > pool.len() {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&i| pool[i]).collect());
        // Rightmost index that can still advance.
        let Some(pos) = (0..k).rev().find(|&i| idx[i] < pool.len() - k + i) else {
            break;
        };
        idx[pos] += 1;
        for i in (pos + 1)..k {
            idx[i] = idx[i - 1] + 1;
        }
    }
    out
}

/// Per-subset evaluator that keeps the Lyapunov factorization across calls.
pub struct Oracle<'a> {
    sys: &'a LtiSystem,
    ale: Option<(f64, DiscountedAleSolver)>,
}

impl<'a> Oracle<'a> {
    pub fn new(sys: &'a LtiSystem) -> Self {
        Self { sys, ale: None }
    }

    pub fn system(&self) -> &LtiSystem {
        self.sys
    }

    fn prepare(&mut self, horizon: Horizon) -> Result<()> {
        if let Horizon::Infinite { discount } = horizon {
            if self.ale.as_ref().map(|(d, _)| *d) != Some(discount) {
                self.ale = Some((discount, DiscountedAleSolver::new(self.sys.a(), discount)?));
            }
        }
        Ok(())
    }

    fn gramian_for_rows(&self, c_sel: &DMatrix<f64>, horizon: Horizon) -> Result<SymMatrix> {
        match horizon {
            Horizon::Infinite { .. } => self.ale.as_ref().expect("prepared").1.solve(&gram_of_rows(c_sel)),
            Horizon::Finite { steps } => Ok(finite_horizon_obs_gramian(self.sys.a(), c_sel, steps)?.pop().expect("nonempty")),
        }
    }

    /// `B^T W_o^γ B` for the set.
    pub fn block(&mut self, sel: &SelectionIndex, horizon: Horizon) -> Result<DMatrix<f64>> {
        self.prepare(horizon)?;
        let w = self.gramian_for_rows(&self.sys.sensor_rows(sel)?, horizon)?;
        Ok(cost_block(self.sys, &w))
    }

    pub fn cost(&mut self, sel: &SelectionIndex, metric: Metric) -> Result<f64> {
        Ok(metric.kind.evaluate(&self.block(sel, metric.horizon)?, LOGDET_EIGEN_FLOOR))
    }

    /// Singleton costs for every sensor.
    pub fn singleton_costs(&mut self, metric: Metric) -> Result<Vec<f64>> {
        let p = self.sys.p();
        (0..p).map(|j| self.cost(&SelectionIndex::singleton(j, p)?, metric)).collect()
    }

    /// Exhaustive search over `seed ∪ S`, `S` a `(card - |seed|)`-subset of
    /// `candidates \ seed`. Ties go to the lexicographically first `S`.
    pub fn brute_force(
        &mut self,
        candidates: &[usize],
        seed: Option<&SelectionIndex>,
        card: usize,
        metric: Metric,
    ) -> Result<(SelectionIndex, f64)> {
        let p = self.sys.p();
        let base: Vec<usize> = seed.map(|s| s.indices().to_vec()).unwrap_or_default();
        let mut pool: Vec<usize> = candidates.iter().copied().filter(|j| !base.contains(j)).collect();
        pool.sort_unstable();
        pool.dedup();
        if pool.len() > BRUTE_FORCE_LIMIT {
            return Err(Error::CombinatorialBlowup { p: pool.len(), k: card, limit: BRUTE_FORCE_LIMIT });
        }
        if card < base.len() || card - base.len() > pool.len() {
            return Err(Error::InvalidSelection(format!(
                "cannot pick {card} sensors from seed of {} and {} candidates",
                base.len(),
                pool.len()
            )));
        }
        self.prepare(metric.horizon)?;
        let subsets = combinations(&pool, card - base.len());
        let this = &*self;
        let costs: Vec<Result<f64>> = subsets
            .par_iter()
            .map(|s| {
                let mut all = base.clone();
                all.extend_from_slice(s);
                let sel = SelectionIndex::new(all, p)?;
                let w = this.gramian_for_rows(&this.sys.sensor_rows(&sel)?, metric.horizon)?;
                Ok(metric.kind.evaluate(&cost_block(this.sys, &w), LOGDET_EIGEN_FLOOR))
            })
            .collect();
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in costs.into_iter().enumerate() {
            let c = c?;
            if best.map_or(true, |(_, b)| c > b) {
                best = Some((i, c));
            }
        }
        let (i, value) = best.expect("at least one subset");
        let mut all = base;
        all.extend_from_slice(&subsets[i]);
        Ok((SelectionIndex::new(all, p)?, value))
    }
}

/// Exact argmax of [`true_cost`] over all `card`-subsets of the `p` sensors.
pub fn brute_force_select(sys: &LtiSystem, card: usize, metric: Metric) -> Result<SelectionIndex> {
    let p = sys.p();
    if p > BRUTE_FORCE_LIMIT {
        return Err(Error::CombinatorialBlowup { p, k: card, limit: BRUTE_FORCE_LIMIT });
    }
    let all: Vec<usize> = (0..p).collect();
    Ok(Oracle::new(sys).brute_force(&all, None, card, metric)?.0)
}

/// Ground truth for a set of sensors, in the shape written to fixture files.
#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub metric: Metric,
    /// Sensor numbers, counted from 1.
    pub sensors: Vec<usize>,
    #[serde(with = "crate::serde_float::vec")]
    pub costs: Vec<f64>,
    pub blocks: Vec<Vec<Vec<f64>>>,
    pub spectral_radius: f64,
}

pub fn report(sys: &LtiSystem, sensors: &SelectionIndex, metric: Metric) -> Result<OracleReport> {
    let mut oracle = Oracle::new(sys);
    let mut costs = Vec::new();
    let mut blocks = Vec::new();
    for &j in sensors.indices() {
        let blk = oracle.block(&SelectionIndex::singleton(j, sys.p())?, metric.horizon)?;
        costs.push(metric.kind.evaluate(&blk, LOGDET_EIGEN_FLOOR));
        blocks.push(crate::lti::io::to_rows(&blk));
    }
    Ok(OracleReport {
        metric,
        sensors: sensors.one_based(),
        costs,
        blocks,
        spectral_radius: sys.spectral_radius(),
    })
}

/// Convenience for tests: the rank condition target `(Nm+n)(Nm+n+1)/2`.
pub fn attainable_rank(history: usize, m: usize, n: usize) -> usize {
    tri_len(history * m + n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::generate::random_stable;
    use crate::metric::MetricKind;
    use crate::lti::{generate_excitation, state_sequence, ExcitationConfig};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn scalar(a: f64, b: f64, c: f64) -> LtiSystem {
        LtiSystem::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            DMatrix::from_element(1, 1, c),
            DVector::zeros(1),
        )
        .unwrap()
    }

    #[test]
    fn ale_with_zero_dynamics_is_output_gram() {
        let c = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, -1.0, 0.5, 3.0]);
        let w = solve_discounted_ale(&DMatrix::zeros(3, 3), &c, 0.9).unwrap();
        assert_relative_eq!(w.to_dense(), c.transpose() * &c, epsilon = 1e-14);
    }

    #[test]
    fn ale_scalar_geometric_series() {
        let w = solve_discounted_ale(&DMatrix::from_element(1, 1, 0.5), &DMatrix::from_element(1, 1, 1.0), 1.0).unwrap();
        assert_relative_eq!(w.get(0, 0), 4.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn ale_rejects_unstable_discount() {
        let a = DMatrix::from_element(1, 1, 2.0);
        assert!(matches!(
            solve_discounted_ale(&a, &DMatrix::from_element(1, 1, 1.0), 0.6),
            Err(Error::UnstableDiscounted(_))
        ));
    }

    #[test]
    fn ale_matches_truncated_series_and_has_small_residual() {
        for seed in 0..5 {
            let sys = random_stable(4, 1, 2, seed, 0.9).unwrap();
            let a = 0.95;
            let c = sys.c().clone();
            let w = solve_discounted_ale(sys.a(), &c, a).unwrap().to_dense();
            let mut series = DMatrix::zeros(4, 4);
            let mut ak = DMatrix::<f64>::identity(4, 4);
            let q = c.transpose() * &c;
            for t in 0..=2000 {
                series += a.powi(2 * t) * ak.transpose() * &q * &ak;
                ak = sys.a() * ak;
            }
            assert!((&w - &series).amax() <= 1e-9 * series.amax());
            let resid = a * a * sys.a().transpose() * &w * sys.a() - &w + &q;
            assert!(resid.norm() <= 1e-10 * q.norm());
        }
    }

    #[test]
    fn finite_gramian_basics() {
        let c = DMatrix::from_row_slice(1, 2, &[1.0, -2.0]);
        let q = c.transpose() * &c;
        let ws = finite_horizon_obs_gramian(&DMatrix::zeros(2, 2), &c, 4).unwrap();
        assert_eq!(ws[0], SymMatrix::zeros(2));
        for w in &ws[1..] {
            assert_relative_eq!(w.to_dense(), q, epsilon = 1e-15);
        }
    }

    #[test]
    fn finite_gramian_matches_direct_sum_and_is_monotone() {
        let sys = random_stable(5, 2, 3, 9, 0.9).unwrap();
        let c = sys.c().clone();
        let ws = finite_horizon_obs_gramian(sys.a(), &c, 6).unwrap();
        let mut sum = DMatrix::zeros(5, 5);
        let mut ak = DMatrix::<f64>::identity(5, 5);
        for t in 0..6 {
            sum += ak.transpose() * c.transpose() * &c * &ak;
            ak = sys.a() * ak;
            assert!((ws[t + 1].to_dense() - &sum).amax() <= 1e-12 * sum.amax());
        }
        for t in 0..6 {
            let diff = ws[t + 1].to_dense() - ws[t].to_dense();
            let min_eig = diff.symmetric_eigenvalues().min();
            assert!(min_eig >= -1e-12 * diff.amax(), "step {t}: {min_eig}");
        }
    }

    #[test]
    fn trace_duality_both_horizons() {
        for seed in 0..5 {
            let sys = random_stable(5, 2, 4, seed, 0.9).unwrap();
            let sel = SelectionIndex::new(vec![0, 2], 4).unwrap();
            for h in [Horizon::Infinite { discount: 0.97 }, Horizon::Finite { steps: 7 }] {
                let primal = true_cost(&sys, &sel, Metric { kind: MetricKind::Trace, horizon: h }).unwrap();
                let dual = dual_trace_cost(&sys, &sel, h).unwrap();
                assert!((primal - dual).abs() <= 1e-9 * primal.abs().max(1.0), "{primal} vs {dual}");
            }
        }
    }

    #[test]
    fn scalar_true_cost() {
        let sys = scalar(0.5, 1.0, 1.0);
        let c = true_cost(&sys, &SelectionIndex::all(1), Metric::trace_inf(1.0)).unwrap();
        assert_relative_eq!(c, 4.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_sensor_has_zero_trace_and_neg_inf_logdet() {
        let base = random_stable(3, 1, 2, 4, 0.8).unwrap();
        let mut c = base.c().clone();
        c.row_mut(1).fill(0.0);
        let sys = LtiSystem::new(base.a().clone(), base.b().clone(), c, base.x0().clone()).unwrap();
        let sel = SelectionIndex::singleton(1, 2).unwrap();
        assert_eq!(true_cost(&sys, &sel, Metric::trace_inf(0.9)).unwrap(), 0.0);
        assert_eq!(true_cost(&sys, &sel, Metric::logdet_inf(0.9)).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn trace_additivity() {
        let sys = random_stable(6, 2, 5, 21, 0.9).unwrap();
        let sel = SelectionIndex::new(vec![0, 3, 4], 5).unwrap();
        for metric in [Metric::trace_inf(0.95), Metric::trace_fin(5)] {
            let whole = true_cost(&sys, &sel, metric).unwrap();
            let parts: f64 = sel
                .indices()
                .iter()
                .map(|&j| true_cost(&sys, &SelectionIndex::singleton(j, 5).unwrap(), metric).unwrap())
                .sum();
            assert!((whole - parts).abs() <= 1e-10 * whole.abs().max(1.0));
        }
    }

    #[test]
    fn finite_trace_matches_monte_carlo_energy() {
        let sys = random_stable(5, 2, 3, 17, 0.9).unwrap();
        let sel = SelectionIndex::new(vec![0, 2], 3).unwrap();
        let steps = 3;
        let exact = true_cost(&sys, &sel, Metric::trace_fin(steps)).unwrap();
        let c_sel = sys.sensor_rows(&sel).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let draws = 1_000_000;
        let mut total = 0.0;
        for _ in 0..draws {
            let u0 = DVector::from_fn(2, |_, _| StandardNormal.sample(&mut rng));
            // x(0) = 0 so y(0) = 0; then y(t) = C A^{t-1} B u(0).
            let mut x = sys.b() * u0;
            for _ in 1..=steps {
                total += (&c_sel * &x).norm_squared();
                x = sys.a() * x;
            }
        }
        let mc = total / draws as f64;
        assert!((mc - exact).abs() / exact < 0.01, "mc {mc} vs {exact}");
    }

    #[test]
    fn observability_index_examples() {
        let a = DMatrix::from_row_slice(3, 3, &[0.1, 0.2, 0.3, 0.0, 0.5, 0.1, 0.4, 0.0, 0.2]);
        assert_eq!(observability_index(&a, &DMatrix::identity(3, 3)), Some(1));
        // Companion form with output on the first state: K = n.
        let n = 5;
        let mut comp = DMatrix::zeros(n, n);
        for i in 0..n - 1 {
            comp[(i, i + 1)] = 1.0;
        }
        for j in 0..n {
            comp[(n - 1, j)] = 0.1 * (j as f64 + 1.0);
        }
        let mut c = DMatrix::zeros(1, n);
        c[(0, 0)] = 1.0;
        assert_eq!(observability_index(&comp, &c), Some(n));
        // Decoupled unobserved state.
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.3]));
        assert_eq!(observability_index(&d, &DMatrix::from_row_slice(1, 2, &[1.0, 0.0])), None);
    }

    #[test]
    fn observability_index_generic_pairs_and_pbh() {
        for seed in 0..20 {
            let sys = random_stable(7, 1, 3, seed, 0.9).unwrap();
            for q in 1..=3 {
                let c = sys.c().rows(0, q).into_owned();
                // Generic pairs need ceil(n/q) output blocks.
                assert_eq!(observability_index(sys.a(), &c), Some(7usize.div_ceil(q)));
                // PBH: rank [λI - A; C] = n at every eigenvalue.
                for lam in sys.a().complex_eigenvalues().iter() {
                    let n = 7;
                    let mut pbh = nalgebra::DMatrix::<nalgebra::Complex<f64>>::zeros(n + q, n);
                    for i in 0..n {
                        for j in 0..n {
                            let v = if i == j { *lam } else { nalgebra::Complex::new(0.0, 0.0) };
                            pbh[(i, j)] = v - nalgebra::Complex::new(sys.a()[(i, j)], 0.0);
                        }
                    }
                    for i in 0..q {
                        for j in 0..n {
                            pbh[(n + i, j)] = nalgebra::Complex::new(c[(i, j)], 0.0);
                        }
                    }
                    let sv = pbh.singular_values();
                    assert!(sv.min() > 1e-10);
                }
            }
        }
    }

    #[test]
    fn reconstruction_full_state_sensing() {
        let sys = random_stable(3, 2, 3, 5, 0.8).unwrap();
        let rec = build_reconstruction(&sys, &SelectionIndex::all(3), 3).unwrap();
        check_replay(&sys, &SelectionIndex::all(3), &rec, 30, 1e-12);
    }

    fn check_replay(sys: &LtiSystem, hat: &SelectionIndex, rec: &ReconstructionMatrices, len: usize, tol: f64) {
        let u = generate_excitation(&ExcitationConfig::gaussian(8, len), sys.m());
        let xs = state_sequence(sys, &u).unwrap();
        let c_hat = sys.sensor_rows(hat).unwrap();
        let n_hist = rec.horizon;
        for t in n_hist..len {
            // z(t) = [u(t-1); ..; u(t-N); ŷ(t-1); ..; ŷ(t-N)].
            let mut z = Vec::new();
            for k in 1..=n_hist {
                z.extend(u.column(t - k).iter());
            }
            for k in 1..=n_hist {
                z.extend((&c_hat * &xs[t - k]).iter());
            }
            let x_rec = &rec.m * DVector::from_vec(z);
            let err = (&x_rec - &xs[t]).amax();
            assert!(err <= tol * xs[t].amax().max(1.0), "t={t} err={err}");
        }
    }

    #[test]
    fn reconstruction_replays_random_system() {
        let sys = random_stable(6, 2, 4, 31, 0.9).unwrap();
        let hat = SelectionIndex::new(vec![0, 1], 4).unwrap();
        let rec = build_reconstruction(&sys, &hat, 4).unwrap();
        assert_eq!(rec.obs_index, 3);
        check_replay(&sys, &hat, &rec, 50, 1e-9);
        assert_relative_eq!(rec.b_from_m(2), sys.b().clone(), epsilon = 1e-12);
    }

    #[test]
    fn reconstruction_errors() {
        let sys = random_stable(6, 1, 2, 3, 0.9).unwrap();
        let hat = SelectionIndex::singleton(0, 2).unwrap();
        assert!(matches!(build_reconstruction(&sys, &hat, 5), Err(Error::HorizonBelowIndex { horizon: 5, index: 6 })));
        let d = LtiSystem::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.3])),
            DMatrix::from_element(2, 1, 1.0),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DVector::zeros(2),
        )
        .unwrap();
        assert!(matches!(build_reconstruction(&d, &SelectionIndex::all(1), 2), Err(Error::Unobservable)));
    }

    #[test]
    fn combinations_are_lexicographic() {
        let c = combinations(&[1, 3, 5, 7], 2);
        assert_eq!(c, vec![vec![1, 3], vec![1, 5], vec![1, 7], vec![3, 5], vec![3, 7], vec![5, 7]]);
        assert_eq!(combinations(&[0, 1, 2], 3), vec![vec![0, 1, 2]]);
        assert_eq!(combinations(&[0, 1], 0), vec![Vec::<usize>::new()]);
        assert!(combinations(&[0], 2).is_empty());
        assert_eq!(combinations(&(0..8).collect::<Vec<_>>(), 3).len(), 56);
    }

    #[test]
    fn brute_force_trivial_cases() {
        let sys = random_stable(4, 2, 5, 2, 0.9).unwrap();
        assert_eq!(brute_force_select(&sys, 5, Metric::trace_inf(0.9)).unwrap(), SelectionIndex::all(5));

        let mut c = DMatrix::zeros(4, 4);
        c.row_mut(2).copy_from(&sys.c().row(0));
        let dom = LtiSystem::new(sys.a().clone(), sys.b().clone(), c, sys.x0().clone()).unwrap();
        assert_eq!(brute_force_select(&dom, 1, Metric::trace_fin(3)).unwrap().indices(), &[2]);
    }

    #[test]
    fn brute_force_equals_max_over_all_subsets() {
        let sys = random_stable(5, 2, 8, 77, 0.9).unwrap();
        for metric in [Metric::trace_inf(0.9), Metric::logdet_fin(4)] {
            let best = brute_force_select(&sys, 3, metric).unwrap();
            let best_cost = true_cost(&sys, &best, metric).unwrap();
            let mut count = 0;
            for s in combinations(&(0..8).collect::<Vec<_>>(), 3) {
                let c = true_cost(&sys, &SelectionIndex::new(s, 8).unwrap(), metric).unwrap();
                assert!(c <= best_cost);
                count += 1;
            }
            assert_eq!(count, 56);
        }
    }

    #[test]
    fn brute_force_guard() {
        let sys = random_stable(3, 1, 21, 1, 0.5).unwrap();
        assert!(matches!(brute_force_select(&sys, 2, Metric::trace_fin(2)), Err(Error::CombinatorialBlowup { .. })));
    }

    #[test]
    fn oracle_report_serializes_neg_inf() {
        let base = random_stable(3, 2, 2, 4, 0.8).unwrap();
        let mut c = base.c().clone();
        c.row_mut(1).fill(0.0);
        let sys = LtiSystem::new(base.a().clone(), base.b().clone(), c, base.x0().clone()).unwrap();
        let rep = report(&sys, &SelectionIndex::all(2), Metric::logdet_inf(0.9)).unwrap();
        let s = serde_json::to_string(&rep).unwrap();
        assert!(s.contains(r#""costs":["#) && s.contains(r#""-inf""#), "{s}");
    }
}
