//! Separability of Hermitian tensors by moment relaxations, and psd
//! decompositions by uniqueness-certified tensor decompositions.

pub mod error;
pub mod extract;
pub mod hermitian;
pub mod instances;
pub mod io;
pub mod moment;
pub mod poly;
pub mod psd;
pub mod random;
mod refine;
pub mod sdp;

pub use error::{Error, PsdStage, Result};
