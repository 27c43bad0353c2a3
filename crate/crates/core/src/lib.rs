//! Makeup removal trained against pixel- and feature-level adversaries.
//!
//! A U-Net generator maps a face with makeup to its non-makeup counterpart.
//! It is trained against two adversaries: a patch discriminator on pixels and
//! a small discriminator on identity features taken from a frozen extractor.

pub mod config;
mod error;
pub mod gradcheck;
pub mod losses;
pub mod net;
pub mod seed;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
