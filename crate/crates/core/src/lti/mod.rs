//! Discrete-time LTI plant `x(t+1) = A x(t) + B u(t)`, `y(t) = C x(t)`, sensor
//! selection matrices, simulation and excitation signals.
//!
//! The system matrices are only read by the simulator (standing in for the
//! physical plant) and by [`crate::oracle`]. Everything downstream of a
//! [`Trajectory`] works from recorded data alone.

mod excitation;
pub mod generate;
pub mod io;

pub use excitation::{generate_excitation, ExcitationConfig, ExcitationKind};

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground-truth plant. Each row of `c` is one sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    x0: DVector<f64>,
}

impl LtiSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, x0: DVector<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::dims("A", "square, nonempty", format!("{}x{}", a.nrows(), a.ncols())));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::dims("B", format!("{n}xm, m >= 1"), format!("{}x{}", b.nrows(), b.ncols())));
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(Error::dims("C", format!("pxn with n = {n}, p >= 1"), format!("{}x{}", c.nrows(), c.ncols())));
        }
        if x0.len() != n {
            return Err(Error::dims("x0", n, x0.len()));
        }
        Ok(Self { a, b, c, x0 })
    }

    /// Same plant started from the origin.
    pub fn with_x0(mut self, x0: DVector<f64>) -> Result<Self> {
        if x0.len() != self.n() {
            return Err(Error::dims("x0", self.n(), x0.len()));
        }
        self.x0 = x0;
        Ok(self)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    /// `S_γ C`: the rows of `C` picked by `sel`.
    pub fn sensor_rows(&self, sel: &SelectionIndex) -> Result<DMatrix<f64>> {
        if sel.p() != self.p() {
            return Err(Error::dims("SelectionIndex::p", self.p(), sel.p()));
        }
        Ok(self.c.select_rows(sel.indices()))
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.a)
    }
}

/// Spectral radius via the eigenvalues of a real Schur form.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Ordered subset of sensors `γ ⊂ {0, .., p-1}` (zero-based).
///
/// Files and CLI output number sensors from 1; see [`SelectionIndex::one_based`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SelectionIndex {
    indices: Vec<usize>,
    p: usize,
}

impl SelectionIndex {
    /// Sorts `indices`; rejects duplicates, an empty set and indices `>= p`.
    pub fn new(mut indices: Vec<usize>, p: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidSelection("empty selection".into()));
        }
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidSelection(format!("duplicate index in {indices:?}")));
        }
        if let Some(&last) = indices.last() {
            if last >= p {
                return Err(Error::InvalidSelection(format!("index {} exceeds p = {p}", last + 1)));
            }
        }
        Ok(Self { indices, p })
    }

    /// From sensor numbers counted from 1.
    pub fn from_one_based(numbers: &[usize], p: usize) -> Result<Self> {
        if numbers.contains(&0) {
            return Err(Error::InvalidSelection("sensor numbers start at 1".into()));
        }
        Self::new(numbers.iter().map(|k| k - 1).collect(), p)
    }

    pub fn singleton(j: usize, p: usize) -> Result<Self> {
        Self::new(vec![j], p)
    }

    pub fn all(p: usize) -> Self {
        Self { indices: (0..p).collect(), p }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.indices.iter().map(|i| i + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn contains(&self, j: usize) -> bool {
        self.indices.binary_search(&j).is_ok()
    }

    /// Union with another selection over the same ambient set.
    pub fn union(&self, other: &SelectionIndex) -> Result<SelectionIndex> {
        if self.p != other.p {
            return Err(Error::dims("SelectionIndex::union", self.p, other.p));
        }
        let mut all = self.indices.clone();
        all.extend(other.indices.iter().copied().filter(|j| !self.contains(*j)));
        SelectionIndex::new(all, self.p)
    }

    /// Position of sensor `j` inside this selection.
    pub fn position(&self, j: usize) -> Option<usize> {
        self.indices.binary_search(&j).ok()
    }
}

impl fmt::Display for SelectionIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.one_based().iter().map(|k| k.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// `S_γ`: row `i` is the standard basis row `e_{γ_i}^T`.
pub fn selection_matrix(sel: &SelectionIndex) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(sel.len(), sel.p());
    for (row, &j) in sel.indices().iter().enumerate() {
        s[(row, j)] = 1.0;
    }
    s
}

/// Recorded input and output streams from one contiguous run. Column `i` of
/// each matrix holds the sample at time `t0 + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub u: DMatrix<f64>,
    pub y_hat: DMatrix<f64>,
    pub y_tilde: DMatrix<f64>,
    pub t0: usize,
}

impl Trajectory {
    pub fn new(u: DMatrix<f64>, y_hat: DMatrix<f64>, y_tilde: DMatrix<f64>, t0: usize) -> Result<Self> {
        let len = u.ncols();
        if y_hat.ncols() != len || y_tilde.ncols() != len {
            return Err(Error::dims(
                "Trajectory",
                format!("{len} samples in every channel"),
                format!("u={} y_hat={} y_tilde={}", len, y_hat.ncols(), y_tilde.ncols()),
            ));
        }
        if u.nrows() == 0 || y_hat.nrows() == 0 {
            return Err(Error::dims("Trajectory", "m >= 1 and r >= 1", format!("m={} r={}", u.nrows(), y_hat.nrows())));
        }
        Ok(Self { u, y_hat, y_tilde, t0 })
    }

    pub fn len(&self) -> usize {
        self.u.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn m(&self) -> usize {
        self.u.nrows()
    }

    pub fn r(&self) -> usize {
        self.y_hat.nrows()
    }

    pub fn q(&self) -> usize {
        self.y_tilde.nrows()
    }

    #[inline]
    pub fn u_at(&self, i: usize) -> &[f64] {
        column(&self.u, i)
    }

    #[inline]
    pub fn y_hat_at(&self, i: usize) -> &[f64] {
        column(&self.y_hat, i)
    }

    #[inline]
    pub fn y_tilde_at(&self, i: usize) -> &[f64] {
        column(&self.y_tilde, i)
    }

    /// Keeps only the listed rows of the evaluated channel (positions within
    /// `y_tilde`, not sensor numbers).
    pub fn restrict_eval(&self, rows: &[usize]) -> Trajectory {
        Trajectory {
            u: self.u.clone(),
            y_hat: self.y_hat.clone(),
            y_tilde: self.y_tilde.select_rows(rows),
            t0: self.t0,
        }
    }

    /// Copy whose evaluated channel is the seed channel.
    pub fn with_eval_as_seed(&self) -> Trajectory {
        Trajectory {
            u: self.u.clone(),
            y_hat: self.y_hat.clone(),
            y_tilde: self.y_hat.clone(),
            t0: self.t0,
        }
    }
}

#[inline]
fn column(m: &DMatrix<f64>, i: usize) -> &[f64] {
    let r = m.nrows();
    &m.as_slice()[i * r..(i + 1) * r]
}

/// Runs the plant forward from `x0` under `inputs` (one column per step) and
/// records `u(t)`, `ŷ(t) = Ĉ x(t)` and `ỹ(t) = C̃ x(t)` for every step.
pub fn simulate(
    sys: &LtiSystem,
    inputs: &DMatrix<f64>,
    sensors_hat: &SelectionIndex,
    sensors_eval: &SelectionIndex,
) -> Result<Trajectory> {
    if inputs.nrows() != sys.m() {
        return Err(Error::dims("simulate inputs", sys.m(), inputs.nrows()));
    }
    if inputs.ncols() == 0 {
        return Err(Error::InsufficientSamples { needed: 1, available: 0 });
    }
    let c_hat = sys.sensor_rows(sensors_hat)?;
    let c_tilde = sys.sensor_rows(sensors_eval)?;
    let len = inputs.ncols();
    let mut y_hat = DMatrix::zeros(c_hat.nrows(), len);
    let mut y_tilde = DMatrix::zeros(c_tilde.nrows(), len);
    let mut x = sys.x0().clone();
    for t in 0..len {
        y_hat.set_column(t, &(&c_hat * &x));
        y_tilde.set_column(t, &(&c_tilde * &x));
        x = sys.a() * &x + sys.b() * inputs.column(t);
    }
    Trajectory::new(inputs.clone(), y_hat, y_tilde, 0)
}

/// State sequence `x(0), .., x(len)` under `inputs`, for oracle checks.
pub fn state_sequence(sys: &LtiSystem, inputs: &DMatrix<f64>) -> Result<Vec<DVector<f64>>> {
    if inputs.nrows() != sys.m() {
        return Err(Error::dims("state_sequence inputs", sys.m(), inputs.nrows()));
    }
    let mut out = Vec::with_capacity(inputs.ncols() + 1);
    let mut x = sys.x0().clone();
    out.push(x.clone());
    for t in 0..inputs.ncols() {
        x = sys.a() * &x + sys.b() * inputs.column(t);
        out.push(x.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_system(rng: &mut ChaCha8Rng, n: usize, m: usize, p: usize) -> LtiSystem {
        let a = rand_mat(rng, n, n) * 0.3;
        LtiSystem::new(a, rand_mat(rng, n, m), rand_mat(rng, p, n), DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))).unwrap()
    }

    #[test]
    fn selection_matrix_examples() {
        let s = selection_matrix(&SelectionIndex::from_one_based(&[1], 3).unwrap());
        assert_eq!(s, DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]));
        let s = selection_matrix(&SelectionIndex::from_one_based(&[2, 3], 3).unwrap());
        assert_eq!(s, DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn selection_matrix_extracts_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = rand_mat(&mut rng, 5, 4);
        let sel = SelectionIndex::new(vec![4, 0, 2], 5).unwrap();
        let picked = selection_matrix(&sel) * &c;
        for (row, &j) in sel.indices().iter().enumerate() {
            assert_eq!(picked.row(row), c.row(j));
        }
    }

    #[test]
    fn selection_index_validation() {
        assert!(SelectionIndex::new(vec![], 3).is_err());
        assert!(SelectionIndex::new(vec![1, 1], 3).is_err());
        assert!(SelectionIndex::new(vec![3], 3).is_err());
        assert!(SelectionIndex::from_one_based(&[0], 3).is_err());
        let s = SelectionIndex::new(vec![2, 0], 3).unwrap();
        assert_eq!(s.indices(), &[0, 2]);
        assert_eq!(s.one_based(), vec![1, 3]);
        assert_eq!(s.to_string(), "{1,3}");
    }

    #[test]
    fn deadbeat_one_step() {
        let sys = LtiSystem::new(
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DVector::zeros(2),
        )
        .unwrap();
        let mut u = DMatrix::zeros(2, 2);
        u.set_column(0, &DVector::from_vec(vec![3.0, -1.0]));
        let all = SelectionIndex::all(2);
        let tr = simulate(&sys, &u, &all, &all).unwrap();
        assert_eq!(tr.y_hat_at(1), &[3.0, -1.0]);
        assert_eq!(tr.y_tilde_at(1), &[3.0, -1.0]);
        assert_eq!(tr.y_hat_at(0), &[0.0, 0.0]);
    }

    #[test]
    fn zero_input_zero_state_gives_zero_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let sys = random_system(&mut rng, 3, 2, 2).with_x0(DVector::zeros(3)).unwrap();
        let all = SelectionIndex::all(2);
        let tr = simulate(&sys, &DMatrix::zeros(2, 10), &all, &all).unwrap();
        assert!(tr.y_hat.iter().chain(tr.y_tilde.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_system_matches_unrolled_recursion() {
        let (a, b, c, x0) = (0.7, 2.0, -1.5, 0.4);
        let sys = LtiSystem::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            DMatrix::from_element(1, 1, c),
            DVector::from_element(1, x0),
        )
        .unwrap();
        let u = [1.0, -2.0, 0.5, 3.0, 0.25];
        let tr = simulate(&sys, &DMatrix::from_row_slice(1, 5, &u), &SelectionIndex::all(1), &SelectionIndex::all(1)).unwrap();
        let x1 = a * x0 + b * u[0];
        let x2 = a * x1 + b * u[1];
        let x3 = a * x2 + b * u[2];
        let x4 = a * x3 + b * u[3];
        let expect = [c * x0, c * x1, c * x2, c * x3, c * x4];
        for (t, e) in expect.iter().enumerate() {
            assert_relative_eq!(tr.y_hat_at(t)[0], *e, epsilon = 1e-15);
        }
    }

    #[test]
    fn simulation_is_linear_in_x0_and_u() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let base = random_system(&mut rng, 4, 2, 3);
        let all = SelectionIndex::all(3);
        let xa = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let xb = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let u1 = rand_mat(&mut rng, 2, 30);
        let u2 = rand_mat(&mut rng, 2, 30);
        let ta = simulate(&base.clone().with_x0(xa.clone()).unwrap(), &u1, &all, &all).unwrap();
        let tb = simulate(&base.clone().with_x0(xb.clone()).unwrap(), &u2, &all, &all).unwrap();
        let tab = simulate(&base.with_x0(xa + xb).unwrap(), &(&u1 + &u2), &all, &all).unwrap();
        let sum = &ta.y_tilde + &tb.y_tilde;
        let scale = sum.amax().max(1.0);
        assert!((&tab.y_tilde - sum).amax() <= 1e-12 * scale);
    }

    #[test]
    fn eval_channel_equals_selected_rows_times_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let sys = random_system(&mut rng, 4, 2, 5);
        let hat = SelectionIndex::new(vec![0, 1], 5).unwrap();
        let eval = SelectionIndex::new(vec![2, 4], 5).unwrap();
        let u = rand_mat(&mut rng, 2, 20);
        let tr = simulate(&sys, &u, &hat, &eval).unwrap();
        let xs = state_sequence(&sys, &u).unwrap();
        let ct = selection_matrix(&eval) * sys.c();
        for t in 0..20 {
            let y = &ct * &xs[t];
            for (a, b) in y.iter().zip(tr.y_tilde_at(t)) {
                assert_relative_eq!(a, b, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn spectral_radius_examples() {
        assert_eq!(spectral_radius(&DMatrix::zeros(3, 3)), 0.0);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, -0.9]));
        assert_relative_eq!(spectral_radius(&d), 0.9, epsilon = 1e-14);
        // Complex pair 0.3 ± 0.4i.
        let r = DMatrix::from_row_slice(2, 2, &[0.3, -0.4, 0.4, 0.3]);
        assert_relative_eq!(spectral_radius(&r), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn spectral_radius_matches_gelfand_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..10 {
            let a = rand_mat(&mut rng, 6, 6);
            // rho(A) = lim ||A^k||^(1/k); repeated squaring with rescaling.
            let mut p = a.clone();
            let mut log_scale = 0.0;
            let squarings = 12;
            for _ in 0..squarings {
                p = &p * &p;
                let s = p.norm();
                p /= s;
                log_scale = 2.0 * log_scale + s.ln();
            }
            let gelfand = (log_scale / f64::powi(2.0, squarings)).exp();
            let rho = spectral_radius(&a);
            assert!((gelfand - rho).abs() / rho < 2e-3, "gelfand {gelfand} vs {rho}");
        }
    }

    #[test]
    fn trajectory_rejects_ragged_channels() {
        let err = Trajectory::new(DMatrix::zeros(1, 5), DMatrix::zeros(1, 4), DMatrix::zeros(1, 5), 0);
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }
}
