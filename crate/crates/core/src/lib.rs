//! Numerical toolkit for vector-valued tent spaces on a discretized upper
//! half-space `R^n x (0, inf)` with the measure `dy dt / t^(n+1)`.
//!
//! The crate is organised bottom-up:
//!
//! * [`halfspace`] owns the grid, the value space `R^d` with a selectable
//!   norm, and cell-constant grid functions.
//! * [`geometry`] has cones, tents, balls, direction nets, sectors and the
//!   two covering constructions (greedy disjoint balls, cone-cover points).
//! * [`maximal`] evaluates the uncentered maximal function of indicators on
//!   a finite ball family and the extension `E*_lambda`.
//! * [`gamma`] is the Gaussian random measure engine: exact Hilbert path and
//!   Monte Carlo Banach path for `(E |int f dW|^2)^(1/2)`.
//! * [`tentnorm`] computes `T^p` and `T^inf` norms, aperture variants and
//!   cutoff square functions.
//! * [`atomic`] validates `T^1` atoms and runs the constructive atomic
//!   decomposition.
//! * [`embed`] holds the smooth cutoff, the embedding `J_psi`, the
//!   averaging projection `N_psi`, kernel probes and mean oscillation.
//! * [`pairing`] is the `T^1 - T^inf` duality pairing.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and runs sequentially otherwise. Every
//! reduction is performed in a fixed index order, so results do not depend
//! on the execution strategy.

pub mod atomic;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod gamma;
pub mod geometry;
pub mod halfspace;
pub mod io;
pub mod maximal;
pub mod pairing;
pub mod par;
pub mod tentnorm;

pub use error::{Error, Result};
pub use halfspace::{BaseGrid, GridFunction, HalfSpaceGrid, NormTag, NormedSpace, Point};
