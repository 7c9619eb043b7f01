//! Spectral laboratory for fully nonlinear third-order dispersive equations
//! `u_t = f(u_xxx, u_xx, u_x, u, x, t)` on a periodic interval.
//!
//! The pipeline mollifies data, integrates the fourth-order regularization
//! `u_t = f(…) − ε ∂x⁴u`, monitors gauged energies of the differentiated
//! equations, and runs `ε = δ⁵` ladders toward the unregularized limit.

pub mod coeff;
pub mod data;
pub mod error;
pub mod expr;
pub mod gauge;
pub mod harness;
pub mod io;
pub mod mollify;
pub mod nonlinearity;
pub mod solver;
pub mod spectral;

pub use error::{ForgeError, Result};
pub use spectral::{SpectralGrid, StateFunction};
