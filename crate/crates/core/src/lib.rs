//! Treatment-effect estimation with infomax and domain-independent
//! representations.

pub mod data;
pub mod error;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod synthetic;

pub use error::{IdrlError, Result};
