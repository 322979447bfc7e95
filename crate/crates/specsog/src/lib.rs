//! Spectral sum-of-Gaussians (SOG) electrostatics for quasi-2D systems.
//!
//! Evaluates electrostatic potentials and total energy for N point charges in
//! a box that is periodic in x and y and free (non-periodic) in z. The 1/r
//! kernel is split with a sum-of-Gaussians approximation into
//!
//! * a singular, compactly supported near field, summed directly over a cell
//!   list,
//! * a mid-range band of narrow Gaussians, handled by a 3D Fourier spectral
//!   solver with window-function gridding (NUFFT-style, no upsampling),
//! * a long-range band of wide Gaussians, handled by a Fourier–Chebyshev
//!   solver that is free of zero-padding in the z direction.
//!
//! Parameters (Gaussian count, grids, window supports, padding, Chebyshev and
//! Taylor orders) are chosen from error estimates so that a requested
//! tolerance is met. An independent shell-ordered direct summation oracle is
//! included for validation.
//!
//! The library surface is organized by stage: [`geometry`] for particle
//! systems and cell lists, [`sog`] for the kernel decomposition, [`mid_range`]
//! and [`long_range`] for the two spectral solvers, [`params`] for
//! tolerance-driven planning, [`solver`] for the assembled pipeline, and
//! [`oracle`] for reference values. See the `examples/` directory for one
//! runnable example per capability.

pub mod bench;
pub mod chebyshev;
pub mod cli;
pub mod config;
mod dd;
pub mod error;
#[cfg(feature = "ewald2d")]
pub mod ewald2d;
mod fft;
pub mod geometry;
pub mod long_range;
pub mod math;
pub mod mid_range;
pub mod near_field;
pub mod oracle;
pub mod params;
pub mod reference;
pub mod sog;
pub mod solver;
pub mod sweep;
pub mod windows;

pub use error::{Error, Result};
pub use geometry::{CellList, ParticleSystem};
