//! Spectral Galerkin tools for semilinear problems `L_{ν,m} u = ε F(u)` on tori:
//! nonresonant fixed points, Lyapunov–Schmidt bifurcation in the resonant case,
//! response solutions of the evolution problem, and quadratic center-manifold jets.

pub mod bifurcation;
pub mod center_manifold;
pub mod elliptic_solver;
pub mod error;
pub mod expr;
pub mod grid;
pub mod krylov;
pub mod lattice;
pub mod linear_ops;
pub mod par;
pub mod spectral_space;
pub mod stats;

pub use error::{Error, Result};
pub use expr::{Expr, ScalarFunctionSpec, Var};
pub use spectral_space::{EvolutionField, SpaceParams, SpectralField};
