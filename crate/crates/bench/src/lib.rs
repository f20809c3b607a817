//! Fixtures shared by the benchmarks in `benches/`.

use sensorsel::lti::generate::random_stable;
use sensorsel::lti::{generate_excitation, simulate};
use sensorsel::regressors::AssemblyConfig;
use sensorsel::tensor_ops::tri_len;
use sensorsel::{ExcitationConfig, LtiSystem, SelectionIndex, Trajectory};

/// A random plant with `r` seed sensors and every sensor evaluated, recorded
/// long enough for twice as many regressor columns as rows.
pub struct Fixture {
    pub sys: LtiSystem,
    pub traj: Trajectory,
    pub assembly: AssemblyConfig,
}

pub fn fixture(n: usize, m: usize, p: usize, r: usize, history: usize) -> Fixture {
    let sys = random_stable(n, m, p, 17, 0.9).expect("valid plant");
    let assembly = AssemblyConfig::new(history);
    let len = history + 2 * tri_len(assembly.stack_dim(m, r)) + 1;
    let u = generate_excitation(&ExcitationConfig::gaussian(3, len), m);
    let hat = SelectionIndex::new((0..r).collect(), p).expect("r <= p");
    let traj = simulate(&sys, &u, &hat, &SelectionIndex::all(p)).expect("simulation");
    Fixture { sys, traj, assembly }
}
