//! Exceptional points of interacting fermions in a non-hermitian two-band
//! chain with twisted boundary conditions.
//!
//! The crate is split along the physics:
//! [`bloch`] holds the single-particle model, [`fock`] lifts it to N fermions,
//! [`spectral`] does the non-hermitian eigenanalysis, [`perturb`] carries the
//! effective Hamiltonians and closed-form line predictions and [`scan`] explores
//! the (φ, U) plane.

pub mod bloch;
pub mod error;
pub mod fock;
pub mod linalg;
pub mod perturb;
pub mod scan;
pub mod spectral;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// Dense complex matrix used throughout.
pub type CMat = faer::Mat<C64>;
