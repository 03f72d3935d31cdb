//! Homogenization toolkit for nonlocal Hamilton–Jacobi equations on the one
//! dimensional torus.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the bottom of this file fix the common `f64` instantiation.

pub mod cell;
pub mod coefficients;
pub mod config;
pub mod csv;
pub mod effective;
pub mod error;
pub mod grid;
pub mod hamiltonians;
pub mod homogenize;
pub mod kernels;
pub mod linalg;
pub mod nonlocal;
pub mod parabolic;
pub mod quad;
pub mod scalar;
pub mod spectral;

pub use coefficients::Coefficient;
pub use error::{Error, Result};
pub use grid::GridFunction;
pub use hamiltonians::HamiltonianSpec;
pub use kernels::{KernelSpec, QuadratureTable};
pub use scalar::Real;

pub type Grid64 = GridFunction<f64>;
pub type Grid32 = GridFunction<f32>;
pub type Kernel64 = KernelSpec<f64>;
pub type Table64 = QuadratureTable<f64>;
pub type Hamiltonian64 = HamiltonianSpec<f64>;
pub type Coefficient64 = Coefficient<f64>;
