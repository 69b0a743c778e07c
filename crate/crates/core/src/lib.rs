//! Memory-efficient false-discovery-rate-controlled variable selection.
//!
//! The crate implements the T-Rex selector on designs that do not fit in
//! memory: matrices live in memory-mapped files ([`matstore`]), dummy
//! predictors are generated or permuted in place ([`dummy`]), each random
//! experiment runs an early-terminating LARS solver whose state is
//! checkpointed between calibration rounds ([`tlars`]), and [`trex`] fuses the
//! experiments into a calibrated selection.

pub mod alloc;
pub mod chol;
pub mod dummy;
pub mod error;
pub mod import;
pub mod matstore;
pub mod rng;
pub mod simbench;
pub mod sizing;
pub mod tlars;
pub mod trex;

pub use error::{Error, ErrorClass, Result};
