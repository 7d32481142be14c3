//! Desk-scale machinery for non-smooth, positively p-homogeneous variational
//! energies: polytope-gauge energy densities with exact subdifferentials,
//! discrete energy critical points, sign-constrained first Dirichlet
//! eigenvalues, a pointwise non-smooth Picone check, and the explicit De
//! Giorgi / Gagliardo-Nirenberg sup-bound constants.
//!
//! The `examples/` directory carries one runnable program per capability;
//! the `aniso` binary exposes the same operations behind a JSON config.

pub mod bounds;
pub mod cli;
pub mod error;
pub mod gauge;
pub mod grid;
pub mod picone;
pub mod solver;
pub mod toy;
pub mod util;

pub use error::{AnisoError, Result};
pub use gauge::{Energy, EnergyKind, EnergySpec, Gauge, SubgradientSet};
pub use grid::{Domain, DomainKind, DomainRef, GradientField, ScalarField};
