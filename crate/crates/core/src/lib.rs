//! Ornstein-Uhlenbeck random velocity fields with wavenumber-dependent
//! correlation times, passive scalar transport through them, and the
//! white-noise (Kraichnan) limit they converge to.

pub mod error;
pub mod harness;
pub mod kraichnan;
pub mod linalg;
pub mod oracle;
pub mod ou_field;
pub mod rng;
pub mod spectra;
pub mod transport;

pub use error::{Error, Result};
