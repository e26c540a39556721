//! Toolkit for the overdamped spin-particle flocking model.
//!
//! The crate is split along the lines of the physics:
//!
//! - [`params`]: microscopic constants and every coefficient derived from them
//!   (Landau expansion, mean field, hydrodynamic coefficients).
//! - [`neighbor`]: periodic cell list for fixed-radius neighbor queries.
//! - [`dynamics`]: stochastic integrator for the particle model.
//! - [`observables`]: order parameter, density profiles, band detection, sweeps.
//! - [`hydro`]: explicit solvers for the continuum equations and the cutoff noise.
//! - [`rg`]: recursion relations, fixed-point exponents and flow integration.
//! - [`config`], [`io`], [`commands`]: configuration files, persistence and the CLI driver.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod commands;
pub mod config;
pub mod dynamics;
pub mod hydro;
pub mod io;
pub mod neighbor;
pub mod observables;
pub mod params;
pub mod rg;
pub mod rng;

mod error;

pub use error::{Error, Result};
pub use nalgebra::Vector3;
pub use params::{Dimension, HydroCoefficients, LandauCoefficients, ModelParams};
