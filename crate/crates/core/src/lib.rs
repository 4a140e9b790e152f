//! Simulation of quantum-jump feedback stabilization of entangled Rydberg
//! atoms coupled to a damped cavity.
//!
//! The crate builds every level of the model hierarchy from one parameter
//! record ([`params::PhysicalParams`]), assembles Lindblad generators
//! ([`liouvillian`]), integrates them ([`propagate`], [`trajectory`]), finds
//! stationary states ([`steady`]) and evaluates fidelities ([`observables`]).

pub mod error;
pub mod liouvillian;
pub mod model;
pub mod observables;
pub mod operator;
pub mod params;
pub mod propagate;
mod sparse;
pub mod steady;
pub mod trajectory;

pub use error::{Error, Result};
