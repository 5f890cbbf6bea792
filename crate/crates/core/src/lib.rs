//! Nonmonotone majorization-minimization for composite difference-max
//! programs
//!
//! ```text
//! minimize  (1/N) sum_s phi_s(psi_s(theta)) + gamma * [P1(theta) - P2(theta)]
//! ```
//!
//! where each `psi_s = g_s - h_s` is a difference of pointwise maxima. Each
//! outer step minimizes a convex majorant; the majorant is solved through its
//! Lagrangian dual with a semismooth Newton method. Continuous piecewise
//! affine regression is provided as the main instance.

pub mod cv;
pub mod error;
pub mod funcs;
pub mod mm;
pub mod problem;
pub mod pwa;
pub mod snewton;
pub mod stationarity;

pub use error::{Error, Result};
