//! Simulation and certificate toolkit for a boundary-controlled beam–string
//! system with Kelvin–Voigt damping.
//!
//! The bending displacement `w(y, t)` obeys a damped Euler–Bernoulli beam
//! equation and the twist `φ(y, t)` a damped string equation, coupled through
//! the in-domain terms `c φ + p φ_t + q w_t`, clamped at `y = 0` and driven by
//! shear/torque disturbances at the free end `y = l`.
//!
//! Modules:
//! - [`model`]: parameters, disturbance signals, initial conditions, scenarios.
//! - [`galerkin`]: modal bases, operator assembly, exact norms and energies.
//! - [`timestepper`]: implicit Newmark integration, trajectories, energy identities.
//! - [`stability`]: Lyapunov constants, feasibility checks, ISS bound verification.
//! - [`lifting`]: the boundary lifting operator and its algebraic identities.

pub mod error;
pub mod galerkin;
pub mod lifting;
pub mod model;
pub mod poly;
pub mod quadrature;
pub mod stability;
pub mod timestepper;

pub use error::{Error, Result};
