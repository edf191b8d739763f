use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distance::{face_source, localize_distance, simulate_translation_series, DistanceSetup};
use super::orientation::{localize_orientation, Branch, LocalizationVerdict, OrientationSetup};
use crate::acoustics::{
    ideal_itd_series, synthesize_pair, ArrayTrajectory, ItdSeries, Motion, RoomConfig, SeriesKind,
    SignalConfig,
};
use crate::detectors::RmseCalibrationCurve;
use crate::error::{ensure_non_negative, Error, Result};
use crate::geometry::{wrap, RotationSchedule, SourceTruth};
use crate::itd::{measure_series_skipping_silence, GccConfig, Weighting};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Path differences generated directly from geometry plus Gaussian noise.
    Ideal,
    /// Room simulation, two-channel synthesis and GCC per frame.
    Audio,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceCase {
    pub label: String,
    pub truth: SourceTruth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub room: RoomConfig,
    pub schedule: RotationSchedule,
    pub orientation: OrientationSetup,
    pub distance: DistanceSetup,
    pub mode: Mode,
    /// meters; ideal-mode noise on rotation samples
    pub ideal_noise_sigma: f64,
    /// meters; noise on translation samples (0 by default)
    pub distance_noise_sigma: f64,
    /// audio-mode source and sensor noise (its seed is replaced per cell)
    pub signal: SignalConfig,
    pub weighting: Weighting,
    pub sources: Vec<SourceCase>,
    pub seeds: Vec<u64>,
    pub run_distance: bool,
    /// 0 uses all cores
    pub workers: usize,
}

impl ExperimentSpec {
    /// Reference protocol: 0.18 m baseline, three revolutions at 2π/5 rad/s,
    /// 200 steps of 0.7 mm, ideal mode with 1 cm rotation noise.
    pub fn standard() -> Self {
        let schedule = RotationSchedule::standard();
        let baseline = 0.18;
        Self {
            room: RoomConfig::default(),
            schedule,
            orientation: OrientationSetup::new(baseline, schedule.omega),
            distance: DistanceSetup::new(baseline),
            mode: Mode::Ideal,
            ideal_noise_sigma: 0.01,
            distance_noise_sigma: 0.0,
            signal: SignalConfig::white_noise(44_100.0, 1e-3, 0),
            weighting: Weighting::Phat,
            sources: Vec::new(),
            seeds: vec![0],
            run_distance: false,
            workers: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.room.validate()?;
        self.orientation.validate()?;
        self.distance.validate()?;
        self.signal.validate()?;
        ensure_non_negative("ideal_noise_sigma", self.ideal_noise_sigma)?;
        ensure_non_negative("distance_noise_sigma", self.distance_noise_sigma)?;
        if (self.orientation.omega - self.schedule.omega).abs() > 1e-12 {
            return Err(Error::Config(
                "orientation omega differs from the rotation schedule".into(),
            ));
        }
        if self.distance.baseline != self.orientation.baseline {
            return Err(Error::Config(
                "distance and orientation baselines differ".into(),
            ));
        }
        let mut labels: Vec<&str> = self.sources.iter().map(|s| s.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("duplicate source labels".into()));
        }
        Ok(())
    }

    /// One rotation run of `truth` with the given seed.
    pub fn record_rotation(&self, truth: &SourceTruth, seed: u64) -> Result<ItdSeries> {
        let b = self.orientation.baseline;
        match self.mode {
            Mode::Ideal => ideal_itd_series(
                truth,
                &Motion::Rotation(self.schedule),
                b,
                self.ideal_noise_sigma,
                seed,
            ),
            Mode::Audio => {
                let traj = ArrayTrajectory::rotation(
                    &self.schedule,
                    b,
                    self.room.center(),
                    self.signal.sample_rate,
                )?;
                let sig = SignalConfig {
                    seed,
                    ..self.signal.clone()
                };
                let pair = synthesize_pair(&self.room, truth, &traj, &sig)?;
                let gcc = GccConfig::for_array(b, self.room.sound_speed, self.weighting);
                let (series, _) = measure_series_skipping_silence(
                    &pair,
                    &traj,
                    &gcc,
                    self.room.sound_speed,
                    SeriesKind::Rotation,
                    self.schedule.sample_period(),
                )?;
                Ok(series)
            }
        }
    }
}

/// Seed for cell `index` of base seed `seed`.
pub(crate) fn cell_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellOutcome {
    /// `ok`, `no_source`, `not_converged` or `error`
    pub status: String,
    pub message: Option<String>,
    pub branch: Option<Branch>,
    pub azimuth_deg: Option<f64>,
    pub elevation_deg: Option<f64>,
    pub distance_m: Option<f64>,
    pub rmse_deg: Option<f64>,
    pub amplitude_m: Option<f64>,
    pub band_entry_shift_m: Option<f64>,
}

impl CellOutcome {
    fn failed(status: &str, e: &Error) -> Self {
        Self {
            status: status.into(),
            message: Some(e.to_string()),
            branch: None,
            azimuth_deg: None,
            elevation_deg: None,
            distance_m: None,
            rmse_deg: None,
            amplitude_m: None,
            band_entry_shift_m: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub label: String,
    pub case_index: usize,
    pub seed: u64,
    pub truth: SourceTruth,
    pub outcome: CellOutcome,
}

impl ExperimentResult {
    pub fn azimuth_error_deg(&self) -> Option<f64> {
        self.outcome
            .azimuth_deg
            .map(|a| wrap(a.to_radians() - self.truth.azimuth).abs().to_degrees())
    }

    pub fn elevation_error_deg(&self) -> Option<f64> {
        self.outcome
            .elevation_deg
            .map(|e| (e - self.truth.elevation.to_degrees()).abs())
    }

    pub fn distance_error_m(&self) -> Option<f64> {
        self.outcome
            .distance_m
            .map(|d| (d - self.truth.distance).abs())
    }
}

fn run_cell(
    spec: &ExperimentSpec,
    curve: Option<&RmseCalibrationCurve>,
    case_index: usize,
    seed: u64,
) -> ExperimentResult {
    let case = &spec.sources[case_index];
    let s = cell_seed(seed, case_index);
    let outcome = match evaluate(spec, curve, &case.truth, s) {
        Ok(o) => o,
        Err(e @ Error::SignalAbsent) => CellOutcome::failed("no_source", &e),
        Err(e @ Error::NotConverged(_)) => CellOutcome::failed("not_converged", &e),
        Err(e) => CellOutcome::failed("error", &e),
    };
    ExperimentResult {
        label: case.label.clone(),
        case_index,
        seed,
        truth: case.truth,
        outcome,
    }
}

fn evaluate(
    spec: &ExperimentSpec,
    curve: Option<&RmseCalibrationCurve>,
    truth: &SourceTruth,
    seed: u64,
) -> Result<CellOutcome> {
    let series = spec.record_rotation(truth, seed)?;
    let verdict: LocalizationVerdict = localize_orientation(&spec.orientation, curve, &series)?;
    let mut out = CellOutcome {
        status: "ok".into(),
        message: None,
        branch: Some(verdict.branch),
        azimuth_deg: verdict.azimuth_deg,
        elevation_deg: Some(verdict.elevation_deg),
        distance_m: None,
        rmse_deg: verdict.diagnostics.rmse_deg,
        amplitude_m: Some(verdict.diagnostics.amplitude_peak),
        band_entry_shift_m: None,
    };
    if spec.run_distance {
        let beta = face_source(&verdict, spec.distance.ninety_deg_bypass, 0.0)?;
        let tseries = simulate_translation_series(
            &spec.distance,
            truth,
            beta,
            spec.distance_noise_sigma,
            seed ^ 0x5EED_D157,
        )?;
        match localize_distance(&spec.distance, &verdict, &tseries) {
            Ok(est) => {
                out.distance_m = Some(est.distance);
                out.band_entry_shift_m = est.band_entry_shift(truth.distance);
            }
            Err(e @ Error::NotConverged(_)) => {
                out.status = "not_converged".into();
                out.message = Some(e.to_string());
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Runs every (source, seed) cell. Failures are recorded per cell; the
/// result order is (source order, seed order) regardless of scheduling.
pub fn run_experiment_suite(
    spec: &ExperimentSpec,
    curve: Option<&RmseCalibrationCurve>,
) -> Result<Vec<ExperimentResult>> {
    spec.validate()?;
    let cells: Vec<(usize, u64)> = (0..spec.sources.len())
        .flat_map(|i| spec.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let run = || -> Vec<ExperimentResult> {
        cells
            .par_iter()
            .map(|&(i, s)| run_cell(spec, curve, i, s))
            .collect()
    };
    let mut results = if spec.workers == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(spec.workers)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(run)
    };
    results.sort_by_key(|r| (r.case_index, spec.seeds.iter().position(|&s| s == r.seed)));
    Ok(results)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Per-cell CSV.
pub fn write_results_csv<W: Write>(results: &[ExperimentResult], mut w: W) -> Result<()> {
    writeln!(
        w,
        "label,seed,true_distance_m,true_azimuth_deg,true_elevation_deg,status,branch,\
         est_azimuth_deg,est_elevation_deg,est_distance_m,azimuth_abs_err_deg,\
         elevation_abs_err_deg,distance_abs_err_m,rmse_deg,amplitude_m,band_entry_shift_m,message"
    )?;
    for r in results {
        let o = &r.outcome;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.label,
            r.seed,
            r.truth.distance,
            r.truth.azimuth.to_degrees(),
            r.truth.elevation.to_degrees(),
            o.status,
            o.branch.map_or("", |b| b.as_str()),
            fmt_opt(o.azimuth_deg),
            fmt_opt(o.elevation_deg),
            fmt_opt(o.distance_m),
            fmt_opt(r.azimuth_error_deg()),
            fmt_opt(r.elevation_error_deg()),
            fmt_opt(r.distance_error_m()),
            fmt_opt(o.rmse_deg),
            fmt_opt(o.amplitude_m),
            fmt_opt(o.band_entry_shift_m),
            o.message.as_deref().unwrap_or("").replace(',', ";"),
        )?;
    }
    Ok(())
}

/// Aggregate over the seeds of one source case.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowSummary {
    pub label: String,
    pub truth: SourceTruth,
    pub runs: usize,
    pub failed: usize,
    /// most frequent branch
    pub branch: Option<Branch>,
    /// circular mean, degrees; `None` when undefined in every run
    pub mean_azimuth_deg: Option<f64>,
    pub mean_abs_azimuth_err_deg: Option<f64>,
    pub mean_elevation_deg: Option<f64>,
    pub mean_abs_elevation_err_deg: Option<f64>,
    pub mean_distance_m: Option<f64>,
    pub mean_abs_distance_err_m: Option<f64>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Groups results by source case, in first-appearance order.
pub fn summarize(results: &[ExperimentResult]) -> Vec<RowSummary> {
    let mut order: Vec<usize> = results.iter().map(|r| r.case_index).collect();
    order.dedup();
    let mut seen = Vec::new();
    order.retain(|i| {
        let new = !seen.contains(i);
        seen.push(*i);
        new
    });
    order
        .into_iter()
        .map(|ci| {
            let rows: Vec<&ExperimentResult> =
                results.iter().filter(|r| r.case_index == ci).collect();
            let first = rows[0];
            let mut counts = [0usize; 3];
            for r in &rows {
                if let Some(b) = r.outcome.branch {
                    counts[b as usize] += 1;
                }
            }
            let branch = [Branch::NinetyDeg, Branch::CurveFit, Branch::Full3d]
                .into_iter()
                .zip(counts)
                .filter(|(_, c)| *c > 0)
                .max_by_key(|(_, c)| *c)
                .map(|(b, _)| b);
            let az: Vec<f64> = rows.iter().filter_map(|r| r.outcome.azimuth_deg).collect();
            let mean_az = (!az.is_empty()).then(|| {
                let (s, c) = az.iter().fold((0.0, 0.0), |(s, c), a| {
                    (s + a.to_radians().sin(), c + a.to_radians().cos())
                });
                f64::atan2(s, c).to_degrees()
            });
            RowSummary {
                label: first.label.clone(),
                truth: first.truth,
                runs: rows.len(),
                failed: rows.iter().filter(|r| r.outcome.status != "ok").count(),
                branch,
                mean_azimuth_deg: mean_az,
                mean_abs_azimuth_err_deg: mean(rows.iter().filter_map(|r| r.azimuth_error_deg())),
                mean_elevation_deg: mean(rows.iter().filter_map(|r| r.outcome.elevation_deg)),
                mean_abs_elevation_err_deg: mean(
                    rows.iter().filter_map(|r| r.elevation_error_deg()),
                ),
                mean_distance_m: mean(rows.iter().filter_map(|r| r.outcome.distance_m)),
                mean_abs_distance_err_m: mean(rows.iter().filter_map(|r| r.distance_error_m())),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(sources: &[(&str, f64, f64, f64)], seeds: &[u64]) -> ExperimentSpec {
        ExperimentSpec {
            sources: sources
                .iter()
                .map(|&(l, d, e, a)| SourceCase {
                    label: l.into(),
                    truth: SourceTruth::from_degrees(d, e, a).unwrap(),
                })
                .collect(),
            seeds: seeds.to_vec(),
            ..ExperimentSpec::standard()
        }
    }

    #[test]
    fn empty_source_list_is_fine() {
        let r = run_experiment_suite(&spec(&[], &[1, 2]), None).unwrap();
        assert!(r.is_empty());
        assert!(summarize(&r).is_empty());
    }

    #[test]
    fn failures_are_per_cell() {
        // θ = 0 needs a calibration curve; the other cell must still run.
        let s = spec(&[("a", 5.0, 0.0, 50.0), ("b", 5.0, 45.0, 50.0)], &[1]);
        let r = run_experiment_suite(&s, None).unwrap();
        assert_eq!(r[0].outcome.status, "error");
        assert_eq!(r[1].outcome.status, "ok");
    }

    #[test]
    fn results_are_deterministic_and_ordered() {
        let mut s = spec(
            &[
                ("x", 5.0, 45.0, 10.0),
                ("y", 7.0, 60.0, -100.0),
                ("z", 7.0, 89.0, 0.0),
            ],
            &[3, 1, 2],
        );
        s.run_distance = true;
        let a = run_experiment_suite(&s, None).unwrap();
        s.workers = 1;
        let b = run_experiment_suite(&s, None).unwrap();
        assert_eq!(a, b);
        let order: Vec<(String, u64)> = a.iter().map(|r| (r.label.clone(), r.seed)).collect();
        assert_eq!(order[0], ("x".to_string(), 3));
        assert_eq!(order[2], ("x".to_string(), 2));
        assert_eq!(order[8], ("z".to_string(), 2));
        let mut c1 = Vec::new();
        let mut c2 = Vec::new();
        write_results_csv(&a, &mut c1).unwrap();
        write_results_csv(&b, &mut c2).unwrap();
        assert_eq!(c1, c2);
    }

    #[test]
    fn summary_matches_cells() {
        let mut s = spec(&[("x", 5.0, 45.0, 10.0)], &[1, 2, 3]);
        s.run_distance = true;
        let r = run_experiment_suite(&s, None).unwrap();
        let sum = summarize(&r);
        assert_eq!(sum.len(), 1);
        let expect = r
            .iter()
            .map(|c| c.azimuth_error_deg().unwrap())
            .sum::<f64>()
            / 3.0;
        assert!((sum[0].mean_abs_azimuth_err_deg.unwrap() - expect).abs() < 1e-12);
        let expect = r.iter().map(|c| c.distance_error_m().unwrap()).sum::<f64>() / 3.0;
        assert!((sum[0].mean_abs_distance_err_m.unwrap() - expect).abs() < 1e-12);
        assert_eq!(sum[0].branch, Some(Branch::Full3d));
    }

    #[test]
    fn duplicate_labels_rejected() {
        let s = spec(&[("x", 5.0, 20.0, 10.0), ("x", 5.0, 20.0, 10.0)], &[1]);
        assert!(run_experiment_suite(&s, None).is_err());
    }
}
