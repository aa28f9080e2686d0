//! Relative equilibria, symplectic slices, and relative periodic orbit
//! families of torus-symmetric polynomial Hamiltonian systems.
//!
//! The numerical core is generic over the scalar type via [`scalar::Real`];
//! the aliases below fix `f64`, which is what the CLI and the built-in
//! system registry use.

pub mod config;
pub mod flow;
pub mod io;
pub mod linalg;
pub mod poly;
pub mod releq;
pub mod rpo;
pub mod scalar;
pub mod slice;
pub mod symmetry;
pub mod systems;

pub use config::Tolerances;
pub use scalar::Real;

/// Double-precision polynomial over the canonical variables.
pub type Poly = poly::Polynomial<f64>;
/// Double-precision subspace of phase space.
pub type Space = linalg::Subspace<f64>;
/// Double-precision torus action.
pub type Action = symmetry::TorusAction<f64>;
/// Double-precision moment map.
pub type Moment = symmetry::MomentMap<f64>;
