//! Numerical laboratory for spectral asymptotics of sum-of-squares operators
//! `L = -sum X_i^2 + sum c_ij [X_i, X_j] + sum gamma_i X_i + V` on compact
//! charts: bracket geometry, sparse discretization, inertia counting, heat
//! traces, power-law fits and verdicts.

pub mod assembly;
pub mod asymptotics;
pub mod ccball;
pub mod filtration;
pub mod harness;
pub mod sparse;
pub mod spectral;
pub mod vfalgebra;
