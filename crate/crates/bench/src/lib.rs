//! Shared fixtures for the criterion benches.

use tabrl::{generate_mdp, MdpFamily, TabularMdp};

/// A mid-sized dirichlet instance for solver benches.
pub fn dirichlet_instance(num_states: usize, num_actions: usize) -> TabularMdp {
    generate_mdp(MdpFamily::RandomDirichlet, num_states, num_actions, 0.9, 12345).unwrap()
}
