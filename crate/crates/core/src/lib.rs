//! Quadrature noise of the vacuum polarization channel after polarization
//! self-rotation in a cold 87Rb sample.
//!
//! The atomic model is the 13-state Zeeman manifold of the D1 line
//! (F_g = 2 to F_e = 1, 2). The steady state of the driven master equation
//! and its Langevin noise are computed at every point along the sample and
//! folded into a two-mode Gaussian channel for the orthogonally polarized
//! vacuum.

pub mod angmom;
pub mod atom_model;
pub mod cli_io;
pub mod error;
pub mod langevin;
pub mod liouvillian;
pub mod propagate;
pub mod sweep;
pub mod trace_analysis;

pub use error::{Error, Result};
