//! Active self-localization with pole-like landmarks on a simulated route.
//!
//! Pipeline: [`world`] generates a route and its cross-domain appearance
//! variants, [`detector`] turns pole projections into a compact codeword,
//! [`sbow`] retrieves places with landmark-anchored spatial words,
//! [`replay`] caches top-K retrievals in a bit-packed lookup table,
//! [`planner`] learns where to look next, [`episode`] runs the
//! plan/act/detect/match loop and [`harness`] wires it into experiments.

mod binio;
pub mod detector;
pub mod episode;
pub mod error;
pub mod harness;
pub mod planner;
pub mod replay;
pub mod rng;
pub mod sbow;
pub mod world;

pub use error::{ConfigError, Error, FormatError, Result};
