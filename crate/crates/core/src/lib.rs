//! Numerical laboratory for solitary and multi-solitary waves of the 1D
//! Zakharov system in first-order form
//!
//! ```text
//! i u_t + u_xx = n u,   n_t = -v_x,   v_t = -n_x - (|u|^2)_x
//! ```
//!
//! on a periodic box. Modules build on each other bottom-up:
//! [`grid`] (spectral calculus), [`profiles`] (closed-form solitons),
//! [`dynamics`] (split-step integrator), [`functionals`] (conserved and
//! localized quantities, Weinstein functional, modified energies),
//! [`modulation`] (orthogonal decomposition around modulated solitons),
//! [`spectral`] (linearized operators and coercivity) and [`experiments`]
//! (reproducible runs with manifests).

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod functionals;
pub mod grid;
pub mod modulation;
pub mod par;
pub mod profiles;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{ComplexField, Grid, GridSpec, RealField};
pub use par::Execution;
pub use profiles::{MultiSolitonConfig, SolitonParams};
