//! Simulation of the Arthurs-Kelly joint position/momentum measurement with
//! Gaussian probe and system states.
//!
//! Three modes take part: two meters (modes 1 and 2) and the measured
//! particle (mode 3), coupled by `H_int = κ (x3 p1 + p3 p2)` on top of free
//! kinetic terms. The crate provides
//!
//! * [`gaussian`]: Gaussian probe/system wavefunctions, their exact moments
//!   and a quadrature oracle for those moments,
//! * [`dynamics`]: exact phase-space propagation (the generator is nilpotent,
//!   so the exponential is a cubic polynomial) and the large-κ meter map,
//! * [`propagator`]: the closed-form Feynman kernel, its identities, and
//!   Gaussian evolution through the kernel,
//! * [`inequality`]: the separable-probe bound Γ, the entangled-probe meter
//!   product Γ_C and violation scans,
//! * [`checks`]: seeded randomized checks of the kernel identities,
//! * [`cli`]: the `ak` command-line front end.
//!
//! Units have ħ = 1 throughout and phase-space vectors are ordered
//! `(x1, x2, x3, p1, p2, p3)`.

pub mod checks;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod gaussian;
pub mod inequality;
pub mod propagator;
pub mod quadrature;

pub use error::{AkError, Result};
