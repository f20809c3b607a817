//! Synthetic plants for experiments and tests.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{spectral_radius, LtiSystem};
use crate::error::{Error, Result};

/// Spectral radius targeted by [`random_stable`] unless overridden.
pub const DEFAULT_RHO: f64 = 0.9;

/// Largest spectral radius accepted by [`random_stable`].
pub const MAX_RHO: f64 = 0.95;

/// Plant generator description as it appears in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case")]
pub enum GeneratorSpec {
    RandomStable {
        n: usize,
        m: usize,
        p: usize,
        seed: u64,
        #[serde(default = "default_rho")]
        rho: f64,
    },
    OscillatorNetwork {
        nodes: usize,
        seed: u64,
    },
}

fn default_rho() -> f64 {
    DEFAULT_RHO
}

impl GeneratorSpec {
    pub fn build(&self) -> Result<LtiSystem> {
        match *self {
            GeneratorSpec::RandomStable { n, m, p, seed, rho } => random_stable(n, m, p, seed, rho),
            GeneratorSpec::OscillatorNetwork { nodes, seed } => oscillator_network(nodes, seed),
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Gaussian `A` rescaled so that `rho(A) == rho`, Gaussian `B`, `C`, `x0`.
///
/// `rho` must lie in `(0, MAX_RHO]`. With `n == 1` the plant is scalar.
pub fn random_stable(n: usize, m: usize, p: usize, seed: u64, rho: f64) -> Result<LtiSystem> {
    if n == 0 || m == 0 || p == 0 {
        return Err(Error::Config(format!("n, m, p must be positive (got {n}, {m}, {p})")));
    }
    if !(rho > 0.0 && rho <= MAX_RHO) {
        return Err(Error::Config(format!("rho must be in (0, {MAX_RHO}], got {rho}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = DMatrix::from_fn(n, n, |_, _| normal(&mut rng));
    let current = spectral_radius(&a);
    if current > 0.0 {
        a *= rho / current;
    } else {
        // Nilpotent draw, measure zero in practice.
        a = DMatrix::from_diagonal_element(n, n, rho);
    }
    let b = DMatrix::from_fn(n, m, |_, _| normal(&mut rng));
    let c = DMatrix::from_fn(p, n, |_, _| normal(&mut rng));
    let x0 = DVector::from_fn(n, |_, _| normal(&mut rng));
    LtiSystem::new(a, b, c, x0)
}

/// Time step of the discrete oscillator network.
const NETWORK_DT: f64 = 0.2;
/// Small shunt to ground so that the network has no marginal mode.
const NETWORK_GROUNDING: f64 = 0.05;

/// Network of damped second-order oscillators on a random connected graph,
/// written directly in discrete time (semi-implicit Euler, step 0.2):
///
/// ```text
/// ω(t+1) = ω(t) + dt M^{-1} (-(L + gI) θ(t) - D ω(t) + u(t))
/// θ(t+1) = θ(t) + dt ω(t+1)
/// ```
///
/// States are `[θ; ω]` (`n = 2 * nodes`), every node is actuated
/// (`m = nodes`) and every state has its own sensor (`C = I`, `p = n`), so
/// sensors `1..=nodes` measure angles and the rest measure frequencies.
/// This is a structural stand-in for a power network, not a model of any
/// specific grid.
pub fn oscillator_network(nodes: usize, seed: u64) -> Result<LtiSystem> {
    if nodes == 0 {
        return Err(Error::Config("oscillator network needs at least one node".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lap = DMatrix::<f64>::zeros(nodes, nodes);
    let connect = |i: usize, j: usize, w: f64, lap: &mut DMatrix<f64>| {
        lap[(i, j)] -= w;
        lap[(j, i)] -= w;
        lap[(i, i)] += w;
        lap[(j, j)] += w;
    };
    // Spanning path keeps the graph connected; extra chords at random.
    for i in 1..nodes {
        let w = rng.random_range(0.5..1.5);
        connect(i - 1, i, w, &mut lap);
    }
    for i in 0..nodes {
        for j in (i + 2)..nodes {
            if rng.random_bool(0.3) {
                let w = rng.random_range(0.5..1.5);
                connect(i, j, w, &mut lap);
            }
        }
    }
    let inertia: Vec<f64> = (0..nodes).map(|_| rng.random_range(1.0..2.0)).collect();
    let damping: Vec<f64> = (0..nodes).map(|_| rng.random_range(0.5..1.0)).collect();

    let dt = NETWORK_DT;
    let minv = DMatrix::from_diagonal(&DVector::from_iterator(nodes, inertia.iter().map(|m| 1.0 / m)));
    let stiff = &minv * (lap + DMatrix::identity(nodes, nodes) * NETWORK_GROUNDING);
    let damp = &minv * DMatrix::from_diagonal(&DVector::from_vec(damping));
    let eye = DMatrix::<f64>::identity(nodes, nodes);

    // ω⁺ = -dt K θ + (I - dt Dm) ω + dt M^-1 u ; θ⁺ = θ + dt ω⁺.
    let w_theta = -&stiff * dt;
    let w_omega = &eye - &damp * dt;
    let w_u = &minv * dt;
    let n = 2 * nodes;
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (nodes, nodes)).copy_from(&(&eye + &w_theta * dt));
    a.view_mut((0, nodes), (nodes, nodes)).copy_from(&(&w_omega * dt));
    a.view_mut((nodes, 0), (nodes, nodes)).copy_from(&w_theta);
    a.view_mut((nodes, nodes), (nodes, nodes)).copy_from(&w_omega);
    let mut b = DMatrix::zeros(n, nodes);
    b.view_mut((0, 0), (nodes, nodes)).copy_from(&(&w_u * dt));
    b.view_mut((nodes, 0), (nodes, nodes)).copy_from(&w_u);
    let c = DMatrix::identity(n, n);
    let x0 = DVector::from_fn(n, |_, _| 0.1 * normal(&mut rng));
    LtiSystem::new(a, b, c, x0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_stable_hits_target_radius() {
        for seed in 0..10 {
            let sys = random_stable(6, 2, 4, seed, 0.9).unwrap();
            let rho = sys.spectral_radius();
            assert!((rho - 0.9).abs() < 1e-10, "rho = {rho}");
            assert!(rho <= MAX_RHO);
        }
    }

    #[test]
    fn random_stable_is_deterministic() {
        assert_eq!(random_stable(5, 2, 3, 42, 0.8).unwrap(), random_stable(5, 2, 3, 42, 0.8).unwrap());
        assert_ne!(random_stable(5, 2, 3, 42, 0.8).unwrap(), random_stable(5, 2, 3, 43, 0.8).unwrap());
    }

    #[test]
    fn scalar_plant_is_valid() {
        let sys = random_stable(1, 1, 1, 7, 0.5).unwrap();
        assert_eq!((sys.n(), sys.m(), sys.p()), (1, 1, 1));
        assert!((sys.a()[(0, 0)].abs() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_radius() {
        assert!(random_stable(3, 1, 1, 0, 0.99).is_err());
        assert!(random_stable(3, 1, 1, 0, 0.0).is_err());
    }

    #[test]
    fn oscillator_network_shape_and_stability() {
        let sys = oscillator_network(10, 3).unwrap();
        assert_eq!((sys.n(), sys.m(), sys.p()), (20, 10, 20));
        let rho = sys.spectral_radius();
        assert!(rho < 1.0, "rho = {rho}");
    }

    #[test]
    fn generator_spec_json() {
        let spec: GeneratorSpec = serde_json::from_str(r#"{"generator":"random-stable","n":4,"m":1,"p":3,"seed":5}"#).unwrap();
        assert_eq!(spec, GeneratorSpec::RandomStable { n: 4, m: 1, p: 3, seed: 5, rho: DEFAULT_RHO });
        let spec: GeneratorSpec = serde_json::from_str(r#"{"generator":"oscillator-network","nodes":3,"seed":1}"#).unwrap();
        assert_eq!(spec.build().unwrap().n(), 6);
    }
}
