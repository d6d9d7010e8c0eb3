//! Simulation of diffusions specified by a diffusion coefficient `D(x)` and
//! an equilibrium density `ρ_eq(x)` under detailed balance.
//!
//! The Metropolized integrator proposes a pure-noise step
//! `x + √(2D(x))·ΔB` and accepts it with the Metropolis-Hastings
//! probability for `ρ_eq`, so the chain has `ρ_eq` as an exact invariant
//! density while the drift is enforced only through the rejections. The
//! crate also provides the Euler-Maruyama baseline, a Crank-Nicolson
//! Fokker-Planck solver for reference expectations, and the estimators used
//! to measure weak convergence.

pub mod error;
pub mod fpe;
pub mod integrator;
pub mod model;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use integrator::{
    acceptance_prob, em_step, mh_step, propose, proposal_density, simulate_ensemble,
    simulate_ensemble_multi, simulate_trajectory, ChainState, EnsembleStats, Scheme, StepOutcome,
    Trajectory,
};
pub use model::{builtin_model, builtin_models, derive_coefficients, DerivedCoefficients, DiffusionModel};
pub use rng::{RngStream, VariateSource};
