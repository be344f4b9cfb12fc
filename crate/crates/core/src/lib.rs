//! Solver and measurement toolkit for p-harmonic maps `v : B²(0,1) → Rᴺ`
//! when the domain carries a rough metric tensor field `g`.
//!
//! The crate discretizes the weighted p-energy
//!
//! ```text
//! E_g(v) = ∫_B ( gᵅᵝ(x) ⟨∂_α v, ∂_β v⟩ )^(p/2) √det g(x) dx
//! ```
//!
//! with P1 elements on a triangulated unit disk, computes discrete
//! minimizers under Dirichlet data, and measures the quantities that drive
//! regularity theory at this criticality: comparison ratios against
//! frozen-metric extensions, sharp-average (Campanato) decay over dyadic
//! balls, Morrey growth, Hölder exponent fits, difference-quotient second
//! derivative integrals, convex-hull maximum principles and hole-filling
//! ratios.
//!
//! Modules follow the pipeline: [`metric`] (tensor fields), [`mesh`] /
//! [`region`] / [`field`] (discretization), [`energy`] (functional and its
//! variation), [`solver`] (minimization, change of variables, critical
//! systems), [`harness`] (measurements), [`profiles`] (boundary data and
//! right-hand-side registries).

pub mod energy;
pub mod error;
pub mod field;
pub mod fit;
pub mod harness;
pub mod hull;
pub mod io;
pub mod mesh;
pub mod metric;
pub mod profiles;
pub mod region;
pub mod solver;
mod sparse;

pub use error::{Error, Result};
