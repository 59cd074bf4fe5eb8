//! Quantum Brownian motion in a truncated Fock basis: Born–Markov master
//! equations integrated with RK4, and a stochastic Schrödinger equation
//! whose trajectory ensemble unravels thermal damping.

pub mod ensemble;
pub mod error;
pub mod fock;
pub mod master_eq;
pub mod observables;
pub mod sse;

pub use error::{Error, Result};
pub use fock::{DensityMatrix, FockSpace, Moments, Operator, PureState, C64};
