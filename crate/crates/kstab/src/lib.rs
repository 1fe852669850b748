//! Numerical laboratory for K-stability of torus-invariant Kähler classes.
//!
//! The crate computes, at desk scale, the two sides of the slope formulas
//! for toric data: energy functionals (Monge-Ampère energy, Aubin J,
//! entropy, K-energy, multivariate Deligne functionals) evaluated along
//! geodesic rays on one hand, and intersection-theoretic invariants
//! (Donaldson-Futaki, non-Archimedean Mabuchi, E^NA, J^NA) of the
//! associated test configurations on the other.
//!
//! Moment polytopes carry the lattice geometry (`polytope`), convex
//! potentials in log coordinates carry the metrics (`potentials`), and
//! piecewise-linear convex functions on the polytope encode test
//! configurations (`testconfig`). The `slopes` module estimates asymptotic
//! slopes and cross-checks them against the `invariants` pipeline;
//! `semistability_scan` searches for destabilizing data.
//!
//! Start with the runnable examples (`cargo run --example ...`) or the thin
//! `kstab` binary for file-driven runs.

pub mod cli;
pub mod error;
pub mod functionals;
pub mod grid;
pub mod invariants;
pub(crate) mod lattice;
pub mod polytope;
pub mod potentials;
pub mod rays;
pub mod scalar;
pub mod slopes;
pub mod testconfig;

pub use error::{Error, Result};
pub use polytope::{mixed_volume, FloatPolytope, MomentPolytope, RationalPolytope};
pub use scalar::{Rational, Scalar};
