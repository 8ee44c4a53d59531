//! Lattice GMRF approximation of a zero-mean Matérn (ν = 1) Gaussian field.
//!
//! The field solves `(κ² − Δ) x = W / τ` on a regular lattice with
//! reflecting boundaries, discretised with the 5-point Laplacian, so the
//! precision is `τ² h² K²` with `K = κ² I − Δ_h` (a 13-point stencil in
//! the interior). `κ = √8 / ρ` and `τ² = 1 / (4π κ² σ²)`.

mod lattice;
mod precision;
mod projector;

pub use lattice::{build_lattice, Lattice, DEFAULT_NODE_CAP, DEFAULT_SPACING};
pub use precision::{sample_field, spde_precision, FieldHyperparams, FieldSampler, SpdeOperator};
pub use projector::{project, Projector};
