//! Local exact Lagrangian controllability for the 1D barotropic compressible
//! Navier–Stokes system on `[0, pi]`, made constructive.
//!
//! The crate builds a body force `f = sum_i eps_i chi_eta(x) xi_i(t, x)`
//! supported in a control window `omega`, where each `xi_i` solves the
//! backward linearized adjoint system driven by a Dirac mass at the source
//! point `alpha_i`. The amplitudes `eps_i` are found by shooting on the
//! discrete flow map so that the particles starting at `alpha_i` arrive at
//! `beta_i` at time `T`.
//!
//! Layout:
//!
//! * [`spectral`]: per-mode eigenvalues, the divided-difference kernel and
//!   the 2x2 propagator blocks of the linearized operator.
//! * [`adjoint`]: truncated sine series for `xi_i` (and `zeta_i`), the
//!   smooth cutoff and tabulated forcings.
//! * [`gram`]: Gauss–Legendre quadrature of the Gram matrix, which is the
//!   Jacobian of the endpoint map at zero control.
//! * [`pde`]: staggered semi-implicit solvers for the linearized and the
//!   full nonlinear system, plus field-history I/O.
//! * [`flowmap`]: particle trajectories through a stored velocity history.
//! * [`control`]: the endpoint map and quasi-Newton shooting.
//! * [`verify`]: the trigonometric Vandermonde identity and the
//!   cross-module identity suite.

pub mod adjoint;
pub mod config;
pub mod control;
mod error;
pub mod flowmap;
pub mod gram;
mod par;
pub mod pde;
pub mod quadrature;
pub mod spectral;
pub mod sum;
pub mod verify;

pub use adjoint::{AdjointField, Cutoff, ForcingTable};
pub use config::RunConfig;
pub use control::{ControlProblem, ShootingContext, SynthesisReport};
pub use error::{Error, Result};
pub use gram::{GramReport, QuadSpec};
pub use pde::{FieldHistory, GasModel, Grid};
