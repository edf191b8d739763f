//! Complete localization: the orientation decision procedure, the
//! face-then-translate distance phase, calibration of the RMSE curve, and the
//! batch runner behind the reproduction tables.

mod calibration;
mod distance;
mod orientation;
mod suite;
pub mod tables;

pub use calibration::{calibrate_rmse_curve, CalibrationGrid};
pub use distance::{
    face_source, localize_distance, simulate_translation_series, DistanceEstimate, DistanceFilter,
    DistanceSetup, DistanceTracePoint,
};
pub use orientation::{
    localize_orientation, orientation_tracks, Branch, LocalizationVerdict, OrientationDiagnostics,
    OrientationFilter, OrientationSetup, OrientationTracks,
};
pub use suite::{
    run_experiment_suite, summarize, write_results_csv, CellOutcome, ExperimentResult,
    ExperimentSpec, Mode, RowSummary, SourceCase,
};
