//! Low-rank solvers for stochastic Galerkin linear systems.
//!
//! The systems handled here have the Kronecker-sum form
//!
//! ```text
//! (G_0 ⊗ K_0 + Σ_l G_l ⊗ K_l) u = f
//! ```
//!
//! where the `K_l` are sparse finite element matrices on a structured Q1 grid
//! and the `G_l` are the stochastic Galerkin matrices of a total-degree
//! Legendre chaos basis. Solutions are kept in factored form `mat(u) = Y Zᵀ`.
//!
//! The main entry points are:
//!
//! - [`randfield`]: truncated Karhunen-Loève expansion of an exponentially
//!   correlated random field, from analytic 1D eigenpairs.
//! - [`chaos`]: total-degree multi-index sets, orthonormal Legendre recurrences
//!   and the stochastic matrices `G_l`.
//! - [`fem`]: grids and assembly of the spatial matrices (diffusion,
//!   convection, streamline diffusion, Dirichlet lifting).
//! - [`lowrank`]: factored vectors, operator application, SVD and projection
//!   truncation.
//! - [`pgd`]: Proper Generalized Decomposition used as the coarse solver.
//! - [`krylov`]: the restarted low-rank projection method with the
//!   mean-based right preconditioner, and the coarse-to-fine pipeline.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;

pub mod chaos;
pub mod dense;
mod error;
pub mod fem;
pub mod iterative;
pub mod krylov;
pub mod lowrank;
mod math;
pub mod pgd;
pub mod randfield;
pub mod sparse;

pub use error::{Error, Result};
