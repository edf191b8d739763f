use rayon::prelude::*;

use super::orientation::{orientation_tracks, OrientationSetup};
use crate::acoustics::ItdSeries;
use crate::detectors::{
    azimuth_rmse, fit_rmse_curve_flat_origin, RmseCalibrationCurve, DEFAULT_CURVE_DEGREE,
};
use crate::error::Result;
use crate::geometry::SourceTruth;

/// Source positions used to calibrate the RMSE curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationGrid {
    pub elevations_deg: Vec<f64>,
    pub azimuths_deg: Vec<f64>,
    /// meters
    pub distance: f64,
    pub seed: u64,
    pub degree: usize,
}

impl Default for CalibrationGrid {
    /// Elevations 0..=30 step 2, azimuths 0..=315 step 45, 5 m, cubic.
    fn default() -> Self {
        Self {
            elevations_deg: (0..=15).map(|i| 2.0 * i as f64).collect(),
            azimuths_deg: (0..8).map(|i| 45.0 * i as f64).collect(),
            distance: 5.0,
            seed: 0,
            degree: DEFAULT_CURVE_DEGREE,
        }
    }
}

/// 2D/3D azimuth RMSE (degrees) of one run, skipping the leading revolutions.
pub(crate) fn run_rmse(setup: &OrientationSetup, series: &ItdSeries) -> Result<f64> {
    let t = orientation_tracks(setup, series)?;
    let skip = (setup.rmse_skip_revolutions * t.samples_per_revolution).min(t.time.len() - 1);
    azimuth_rmse(&t.azimuth_2d[skip..], &t.azimuth_3d[skip..])
}

/// Records the mean RMSE per elevation over the azimuth grid and fits the
/// calibration polynomial. `record(truth, seed)` produces one rotation run.
pub fn calibrate_rmse_curve<F>(
    setup: &OrientationSetup,
    grid: &CalibrationGrid,
    record: F,
) -> Result<RmseCalibrationCurve>
where
    F: Fn(&SourceTruth, u64) -> Result<ItdSeries> + Sync,
{
    setup.validate()?;
    let cells: Vec<(usize, usize)> = (0..grid.elevations_deg.len())
        .flat_map(|i| (0..grid.azimuths_deg.len()).map(move |j| (i, j)))
        .collect();
    let rmse: Vec<f64> = cells
        .par_iter()
        .map(|&(i, j)| {
            let truth = SourceTruth::from_degrees(
                grid.distance,
                grid.elevations_deg[i],
                grid.azimuths_deg[j],
            )?;
            let seed = grid
                .seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add((i * grid.azimuths_deg.len() + j) as u64);
            run_rmse(setup, &record(&truth, seed)?)
        })
        .collect::<Result<_>>()?;
    let per = grid.azimuths_deg.len() as f64;
    let samples: Vec<(f64, f64)> = grid
        .elevations_deg
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let row = &rmse[i * grid.azimuths_deg.len()..(i + 1) * grid.azimuths_deg.len()];
            (e, row.iter().sum::<f64>() / per)
        })
        .collect();
    fit_rmse_curve_flat_origin(&samples, grid.degree)
}
