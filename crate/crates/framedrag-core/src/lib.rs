//! Simulator for the 1-D center-of-mass dynamics of a massive object under
//! spontaneous-collapse stochastic Schrödinger equations.
//!
//! The crate implements two unravelings side by side: the plain collapse SSE,
//! whose noise average is the position-decoherence master equation, and the
//! frame-drag SSE in which stochastic shifts and boosts of the local inertial
//! frame remove the diffusion of the classical trajectory `(⟨x⟩, ⟨p⟩)`.
//! Closed-form Gaussian/soliton constructors, a dense master-equation
//! integrator, and a reproducible parallel ensemble runner provide the
//! cross-checks: energy-gain rates, trajectory laws, soliton asymptotics,
//! Born-rule collapse statistics and center-of-mass preservation.
//!
//! Everything is expressed in units where `ħ` and the mass `M` default to 1;
//! the collapse strength `D` stays a free parameter.

pub mod acceptance;
pub mod analytic;
pub mod ensemble;
pub mod error;
pub mod grid;
pub mod master;
pub mod observables;
pub mod operators;
pub mod sse;
pub mod state;
pub mod stats;

pub use error::{Result, SimError};
pub use grid::{Grid, GridSpec};
pub use observables::{moments_of, moments_of_density, Moments};
pub use state::{pure_to_density, DensityMatrix, ModelParams, OperatorPower, WaveFunction};
