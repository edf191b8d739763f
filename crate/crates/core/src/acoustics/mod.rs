//! Two-channel signal synthesis for the rotating (and translating) array.
//!
//! [`room`] builds Allen–Berkley image sources for a rectangular room,
//! [`synth`] renders fractionally delayed microphone signals from them, and
//! [`series`] holds the ITD sample sequences consumed by the filters, including
//! the fast ideal mode that skips audio entirely.

pub mod audio_io;
pub mod room;
pub mod series;
pub mod synth;

pub use room::{image_paths, image_sources, ImageSource, PropagationPath, RoomConfig};
pub use series::{ideal_itd_series, ItdSample, ItdSeries, Motion, SeriesKind};
pub use synth::{
    synthesize_pair, ArrayTrajectory, Interpolation, SignalConfig, SourceSignal, StereoSignal,
    TrajectoryFrame,
};
