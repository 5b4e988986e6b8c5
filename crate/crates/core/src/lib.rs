//! Forward-Forward training with a registry of interchangeable goodness
//! objectives, plus deterministic FLOP metering.
//!
//! * [`tensor`]: dense row-major matrices, linear algebra helpers, seeded RNG
//! * [`data`]: dataset loaders and label embedding
//! * [`goodness`]: the 21 goodness objectives and their running state
//! * [`engine`]: layers, local loss, trainer, multi-pass inference, probe
//! * [`metering`]: FLOP and wall-time accounting, energy and emissions

pub mod data;
pub mod engine;
pub mod error;
pub mod goodness;
pub mod metering;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Matrix, Rng};
