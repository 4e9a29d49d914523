//! Deterministic numerical primitives shared by the rest of the crate.
//!
//! Everything here is double precision. Complex scalars are
//! [`num_complex::Complex64`], re-exported as [`Complex`].

mod bessel;
mod linalg;
mod quadrature;
mod rng;

pub use bessel::{bessel_i1, bessel_i1_scaled};
pub use linalg::{effective_rank, singular_values, symmetric_eigenvalues};
pub use quadrature::{integrate_radial, QuadratureRule};
pub use rng::{sample_complex_gaussian, RngStream};

pub use num_complex::Complex64 as Complex;
