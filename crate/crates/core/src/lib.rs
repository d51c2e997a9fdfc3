//! Acoustic MIMO systems built from a spherical loudspeaker array and a
//! spherical microphone array.

// NaN-rejecting guards are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod commands;
pub mod error;
pub mod freefield;
pub mod io;
pub mod sampling;
pub mod special;
pub mod room;
pub mod system;
pub mod transforms;

pub use error::{Error, Result};
pub use system::{Provenance, ShMatrix};

/// Dense complex matrix used for all transfer matrices and operators.
pub type CMatrix = nalgebra::DMatrix<num_complex::Complex64>;
