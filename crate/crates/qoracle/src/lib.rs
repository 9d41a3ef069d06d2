//! Exact simulation of purified random oracles: full, compressed and
//! punctured, plus the sponge indifferentiability games built on them.

pub mod bounds;
pub mod compressed_oracle;
pub mod distributions;
pub mod error;
pub mod full_oracle;
pub mod harness;
pub mod puncture;
pub mod qindiff;
pub mod sponge;
pub mod statevec;

pub use error::{Error, Result};
