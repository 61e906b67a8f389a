//! Fixtures shared by the benchmarks.

use photon_lattice::observables::{draw_initial_condition, IcMode};
use photon_lattice::{ChainParams, FieldState};

/// The reference chain: U = J, p = 10J, κ = J.
pub fn reference_chain(n_sites: usize) -> ChainParams {
    ChainParams::new(n_sites).with_nonlinearity(1.0).with_drive(10.0)
}

pub fn random_state(n_sites: usize) -> FieldState {
    draw_initial_condition(IcMode::Random, 11, 0, n_sites, 1.0)
}
