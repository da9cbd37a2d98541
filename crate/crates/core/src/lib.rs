//! Transversal harmonic-map operators on discretized Riemannian foliations.
//!
//! Source foliations are reduced to their transversal geometry on a periodic
//! grid ([`manifold`]); maps into analytic target charts are sampled per node
//! ([`section`]). On top of that sit the covariant calculus ([`calculus`]), the
//! tension / Jacobi operator stack ([`tension`]), energy functionals with
//! finite-difference and spectral checks ([`variational`]), gradient flows
//! ([`flow`]) and a batch driver ([`cli`]).

pub mod calculus;
pub mod cli;
pub mod convergence;
pub mod error;
pub mod flow;
pub mod manifold;
pub mod section;
pub mod tension;
pub mod variational;

pub use error::{Error, Result};
