use std::f64::consts::TAU;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::acoustics::{ItdSeries, SeriesKind};
use crate::detectors::{
    amplitude_spectrum, azimuth_rmse, elevation_from_rmse, RmseCalibrationCurve, Thresholds,
};
use crate::error::{ensure_positive, Error, Result};
use crate::estimation::{
    EkfConfig, EkfState, Model2D, Model3D, DEFAULT_SUBSTEPS, INITIAL_ANGLE_STD_DEG,
    INITIAL_AZIMUTH_DEG, INITIAL_ELEVATION_DEG, ORIENTATION_SIGMA_V, ORIENTATION_SIGMA_W,
};
use crate::geometry::wrap;

/// Noise and prior settings shared by the planar and spherical filters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrientationFilter {
    /// process noise standard deviation per state
    pub sigma_v: f64,
    /// measurement noise standard deviation, meters
    pub sigma_w: f64,
    pub initial_azimuth_deg: f64,
    pub initial_elevation_deg: f64,
    pub initial_std_deg: f64,
    pub substeps: usize,
}

impl Default for OrientationFilter {
    fn default() -> Self {
        Self {
            sigma_v: ORIENTATION_SIGMA_V,
            sigma_w: ORIENTATION_SIGMA_W,
            initial_azimuth_deg: INITIAL_AZIMUTH_DEG,
            initial_elevation_deg: INITIAL_ELEVATION_DEG,
            initial_std_deg: INITIAL_ANGLE_STD_DEG,
            substeps: DEFAULT_SUBSTEPS,
        }
    }
}

impl OrientationFilter {
    fn config_2d(&self, period: f64) -> EkfConfig<1> {
        let mut c = EkfConfig::orientation_2d(period);
        c.process_noise[0] = self.sigma_v.powi(2);
        c.sensor_noise = self.sigma_w.powi(2);
        c.substeps = self.substeps;
        c.initial_state[0] = self.initial_azimuth_deg.to_radians();
        c.initial_covariance[(0, 0)] = self.initial_std_deg.to_radians().powi(2);
        c
    }

    fn config_3d(&self, period: f64) -> EkfConfig<2> {
        let mut c = EkfConfig::orientation_3d(period);
        let q = self.sigma_v.powi(2);
        c.process_noise[0] = q;
        c.process_noise[1] = q;
        c.sensor_noise = self.sigma_w.powi(2);
        c.substeps = self.substeps;
        c.initial_state[0] = self.initial_elevation_deg.to_radians();
        c.initial_state[1] = self.initial_azimuth_deg.to_radians();
        let var = self.initial_std_deg.to_radians().powi(2);
        c.initial_covariance[(0, 0)] = var;
        c.initial_covariance[(1, 1)] = var;
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrientationSetup {
    /// meters
    pub baseline: f64,
    /// rad/s, clockwise
    pub omega: f64,
    pub thresholds: Thresholds,
    pub filter: OrientationFilter,
    /// last-revolution azimuth spread (degrees) below which the estimate counts as converged
    pub convergence_std_deg: f64,
    /// leading revolutions excluded from the 2D/3D RMSE
    pub rmse_skip_revolutions: usize,
}

impl OrientationSetup {
    pub fn new(baseline: f64, omega: f64) -> Self {
        Self {
            baseline,
            omega,
            thresholds: Thresholds::for_baseline(baseline),
            filter: OrientationFilter::default(),
            convergence_std_deg: 2.0,
            rmse_skip_revolutions: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("baseline b", self.baseline)?;
        ensure_positive("omega", self.omega)?;
        ensure_positive("convergence_std_deg", self.convergence_std_deg)?;
        self.thresholds.validate()?;
        self.filter.config_2d(1.0).validate()?;
        self.filter.config_3d(1.0).validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    NinetyDeg,
    CurveFit,
    Full3d,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::NinetyDeg => "ninety_deg",
            Branch::CurveFit => "curve_fit",
            Branch::Full3d => "full_3d",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientationDiagnostics {
    /// meters; amplitude at the rotation frequency
    pub amplitude_peak: f64,
    /// degrees; `None` when the 90° test fired first
    pub rmse_deg: Option<f64>,
    /// degrees; circular spread of the reported azimuth over the last revolution
    pub azimuth_std_deg: Option<f64>,
    pub converged: bool,
    /// the RMSE fell outside the calibration curve's range
    pub elevation_clamped: bool,
    /// frames dropped for lack of signal
    pub missing_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationVerdict {
    pub branch: Branch,
    /// degrees in (-180, 180]; `None` when undefined (overhead source)
    pub azimuth_deg: Option<f64>,
    /// degrees
    pub elevation_deg: f64,
    pub diagnostics: OrientationDiagnostics,
    pub tracks: Option<OrientationTracks>,
}

/// Per-step azimuth/elevation tracks of both filters.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationTracks {
    /// seconds, filter clock after each step
    pub time: Vec<f64>,
    /// radians
    pub azimuth_2d: Vec<f64>,
    pub azimuth_3d: Vec<f64>,
    pub elevation_3d: Vec<f64>,
    /// a measurement was available at the step
    pub measured: Vec<bool>,
    pub samples_per_revolution: usize,
}

impl OrientationTracks {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "step,time_s,azimuth_2d_deg,azimuth_3d_deg,elevation_3d_deg,measured"
        )?;
        for k in 0..self.time.len() {
            writeln!(
                w,
                "{k},{},{},{},{},{}",
                self.time[k],
                self.azimuth_2d[k].to_degrees(),
                self.azimuth_3d[k].to_degrees(),
                self.elevation_3d[k].to_degrees(),
                self.measured[k] as u8
            )?;
        }
        Ok(())
    }

    fn last_revolution(&self) -> std::ops::Range<usize> {
        let n = self.time.len();
        n.saturating_sub(self.samples_per_revolution)..n
    }
}

/// Rotation samples placed on the uniform cadence grid.
struct Grid {
    values: Vec<Option<f64>>,
    /// heading when the rotation started
    beta_start: f64,
    cadence: f64,
    samples_per_revolution: usize,
}

fn to_grid(series: &ItdSeries, omega: f64) -> Result<Grid> {
    if series.kind != SeriesKind::Rotation {
        return Err(Error::InvalidParameter {
            name: "series",
            reason: "orientation needs a rotation series".into(),
        });
    }
    let s = series.samples();
    let cadence = omega * series.sample_period;
    let samples_per_revolution = (TAU / cadence).round() as usize;
    if s.is_empty() {
        return Err(Error::SeriesTooShort("empty series".into()));
    }
    let beta_start = cadence * (s[0].beta / cadence + 1e-9).floor();
    // Ideal samples sit at the window start, audio frames at the midpoint;
    // both fall inside window `index`.
    let index = |b: f64| ((b - beta_start) / cadence + 1e-6).floor() as usize;
    let n = index(s[s.len() - 1].beta) + 1;
    if n < samples_per_revolution {
        return Err(Error::SeriesTooShort(format!(
            "{n} samples, need at least one revolution ({samples_per_revolution})"
        )));
    }
    let mut values = vec![None; n];
    for smp in s {
        values[index(smp.beta)] = Some(smp.d_measured);
    }
    Ok(Grid {
        values,
        beta_start,
        cadence,
        samples_per_revolution,
    })
}

/// Runs the planar and spherical filters side by side over the series.
pub fn orientation_tracks(
    setup: &OrientationSetup,
    series: &ItdSeries,
) -> Result<OrientationTracks> {
    let grid = to_grid(series, setup.omega)?;
    run_filters(setup, series.sample_period, &grid)
}

fn run_filters(setup: &OrientationSetup, period: f64, grid: &Grid) -> Result<OrientationTracks> {
    let m2 = Model2D {
        baseline: setup.baseline,
        omega: setup.omega,
    };
    let m3 = Model3D {
        baseline: setup.baseline,
        omega: setup.omega,
    };
    let c2 = setup.filter.config_2d(period);
    let c3 = setup.filter.config_3d(period);
    let mut f2 = EkfState::new(&c2)?;
    let mut f3 = EkfState::new(&c3)?;
    let n = grid.values.len();
    let mut t = OrientationTracks {
        time: Vec::with_capacity(n),
        azimuth_2d: Vec::with_capacity(n),
        azimuth_3d: Vec::with_capacity(n),
        elevation_3d: Vec::with_capacity(n),
        measured: Vec::with_capacity(n),
        samples_per_revolution: grid.samples_per_revolution,
    };
    for (k, y) in grid.values.iter().enumerate() {
        match y {
            Some(y) => {
                f2.step(&m2, &c2, (), *y)?;
                f3.step(&m3, &c3, (), *y)?;
            }
            None => {
                f2.skip(&m2, &c2, ())?;
                f3.skip(&m3, &c3, ())?;
            }
        }
        // The filter clock has advanced one period; the array heading is ωt.
        let heading = grid.beta_start + (k + 1) as f64 * grid.cadence;
        t.time.push((k + 1) as f64 * period);
        t.azimuth_2d.push(wrap(f2.x[0] + heading));
        t.azimuth_3d.push(wrap(f3.x[1] + heading));
        t.elevation_3d.push(f3.x[0]);
        t.measured.push(y.is_some());
    }
    Ok(t)
}

/// Circular mean and circular standard deviation (both radians).
fn circular_stats(a: &[f64]) -> (f64, f64) {
    let (s, c) = a
        .iter()
        .fold((0.0, 0.0), |(s, c), x| (s + x.sin(), c + x.cos()));
    let n = a.len() as f64;
    let r = ((s / n).powi(2) + (c / n).powi(2)).sqrt().min(1.0);
    (s.atan2(c), (-2.0 * r.ln()).max(0.0).sqrt())
}

/// Decides between the overhead, near-horizon and general cases and returns
/// the orientation estimate.
///
/// `curve` is only needed when the near-horizon branch is taken.
pub fn localize_orientation(
    setup: &OrientationSetup,
    curve: Option<&RmseCalibrationCurve>,
    series: &ItdSeries,
) -> Result<LocalizationVerdict> {
    setup.validate()?;
    let grid = to_grid(series, setup.omega)?;
    let present = grid.values.iter().filter(|v| v.is_some()).count();
    let missing_samples = grid.values.len() - present;

    // Gaps are zero-filled; rescale so a full sinusoid keeps its amplitude.
    let filled: Vec<f64> = grid.values.iter().map(|v| v.unwrap_or(0.0)).collect();
    let spectrum = amplitude_spectrum(&filled, series.sample_period);
    let scale = grid.values.len() as f64 / present as f64;
    let amplitude_peak = spectrum.peak_near(setup.omega).unwrap_or(0.0) * scale;

    let mut diagnostics = OrientationDiagnostics {
        amplitude_peak,
        rmse_deg: None,
        azimuth_std_deg: None,
        converged: true,
        elevation_clamped: false,
        missing_samples,
    };
    if amplitude_peak < setup.thresholds.d_threshold {
        return Ok(LocalizationVerdict {
            branch: Branch::NinetyDeg,
            azimuth_deg: None,
            elevation_deg: 90.0,
            diagnostics,
            tracks: None,
        });
    }

    let tracks = run_filters(setup, series.sample_period, &grid)?;
    let skip = (setup.rmse_skip_revolutions * grid.samples_per_revolution)
        .min(tracks.time.len().saturating_sub(1));
    let rmse = azimuth_rmse(&tracks.azimuth_2d[skip..], &tracks.azimuth_3d[skip..])?;
    diagnostics.rmse_deg = Some(rmse);

    let last = tracks.last_revolution();
    let (branch, az_track) = if rmse < setup.thresholds.rmse_threshold {
        (Branch::CurveFit, &tracks.azimuth_2d[last.clone()])
    } else {
        (Branch::Full3d, &tracks.azimuth_3d[last.clone()])
    };
    let (az, spread) = circular_stats(az_track);
    diagnostics.azimuth_std_deg = Some(spread.to_degrees());
    diagnostics.converged = spread.to_degrees() < setup.convergence_std_deg;

    let elevation_deg = match branch {
        Branch::CurveFit => {
            let curve = curve.ok_or_else(|| {
                Error::Config(format!(
                    "azimuth RMSE {rmse:.2} deg is below the threshold, so elevation comes from \
                     the calibration curve, but none was loaded (run `itdloc calibrate`)"
                ))
            })?;
            let e = elevation_from_rmse(curve, rmse)?;
            diagnostics.elevation_clamped = e.clamped;
            e.elevation
        }
        _ => {
            let el = &tracks.elevation_3d[last];
            (el.iter().sum::<f64>() / el.len() as f64).to_degrees()
        }
    };

    Ok(LocalizationVerdict {
        branch,
        azimuth_deg: Some(az.to_degrees()),
        elevation_deg,
        diagnostics,
        tracks: Some(tracks),
    })
}
