//! Random Domino Automaton toolkit.
//!
//! The automaton lives on a ring of `N` cells. Each time step one ball lands
//! on a uniformly chosen cell: an empty cell becomes occupied with probability
//! `nu`; an occupied cell triggers, with probability `mu_i`, the removal of the
//! whole cluster of size `i` containing it.
//!
//! * [`params`] holds model parameters and the closed-form aggregates of the
//!   inverse-power case (`mu_i = delta / i`).
//! * [`exact`] solves the stationary cluster equations, both the
//!   inverse-power recurrence and a damped fixed-point solver for general
//!   triggering rules.
//! * [`series`] is the combinatorial layer: the Motzkin-form recurrence,
//!   truncated power series, generating-function expansion, the closed-form
//!   coefficient sum and asymptotics.
//! * [`sim`] is the Monte Carlo engine.
//! * [`analysis`] cross-validates theory against itself and the simulator.
//! * [`report`] emits CSV tables.

pub mod analysis;
pub mod error;
pub mod exact;
pub mod params;
pub mod report;
pub mod series;
pub mod sim;

pub use error::{Error, Result};
pub use params::{derived_quantities, DerivedQuantities, InversePowerCase, ModelParams, MuRule};
