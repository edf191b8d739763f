//! Sound-source localization from interaural time differences measured by a
//! rotating (and then translating) two-microphone array.

pub mod acoustics;
pub mod detectors;
pub mod error;
pub mod estimation;
pub mod geometry;
pub mod itd;
pub mod observability;
pub mod pipeline;

pub use error::{Error, Result};
