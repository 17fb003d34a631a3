//! Boundary-layer correctors and a 2D incompressible MHD channel solver.
//!
//! The crate is a small numerical laboratory for the vanishing viscosity /
//! magnetic-diffusion limits of incompressible MHD in a periodic channel
//! `T^1 x [0, h]`:
//!
//! * [`fields`] — collocated grid, differential operators, quadrature, norms;
//! * [`ideal`] — closed-form steady states of the ideal system (Elsässer
//!   states, shear flows, well-prepared data);
//! * [`correctors`] — explicit wall-layer correctors (exact exponential and
//!   heat-kernel modes), their analytic derivatives and norm scalings;
//! * [`solver`] — a second-order finite-difference solver (skew-symmetric
//!   advection, Crank–Nicolson diffusion, staggered-pressure projection);
//! * [`asymptotics`] — ε-family bookkeeping, rate bounds, error norms and
//!   energy budgets;
//! * [`study`] — the vanishing-limit convergence studies;
//! * [`config`] / [`harness`] — JSON experiment configs and artifact output
//!   for the `mhdlayer` binary.

pub mod asymptotics;
pub mod budget;
pub mod config;
pub mod correctors;
pub mod error;
pub mod fields;
pub mod fit;
pub mod harness;
pub mod ideal;
pub mod par;
pub mod solver;
pub mod study;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
