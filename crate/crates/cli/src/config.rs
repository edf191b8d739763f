//! Run configuration. Every section and key is optional; missing values take
//! the defaults listed in the README. Unknown keys are rejected.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use itdloc::acoustics::{Interpolation, RoomConfig, SignalConfig, SourceSignal};
use itdloc::detectors::{
    Thresholds, DEFAULT_CURVE_DEGREE, D_THRESHOLD_REF, REFERENCE_BASELINE, RMSE_THRESHOLD_DEG,
};
use itdloc::geometry::{RotationSchedule, SourceTruth, TranslationPlan};
use itdloc::itd::Weighting;
use itdloc::observability::{SweepSystem, DEFAULT_RELATIVE_TOLERANCE};
use itdloc::pipeline::{
    CalibrationGrid, DistanceFilter, DistanceSetup, ExperimentSpec, Mode, OrientationFilter,
    OrientationSetup,
};
use itdloc::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub seed: u64,
    /// 0 uses every core
    pub workers: usize,
    pub mode: Mode,
    pub room: RoomConfig,
    pub array: ArraySection,
    pub rotation: RotationSection,
    pub translation: TranslationSection,
    pub orientation_filter: OrientationFilter,
    pub distance_filter: DistanceFilter,
    pub thresholds: ThresholdSection,
    pub noise: NoiseSection,
    pub audio: AudioSection,
    pub source: SourceSection,
    pub calibration: CalibrationSection,
    pub experiment: ExperimentSection,
    pub observability: ObservabilitySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("itdloc-out"),
            seed: 0,
            workers: 0,
            mode: Mode::Ideal,
            room: RoomConfig::default(),
            array: ArraySection::default(),
            rotation: RotationSection::default(),
            translation: TranslationSection::default(),
            orientation_filter: OrientationFilter::default(),
            distance_filter: DistanceFilter::default(),
            thresholds: ThresholdSection::default(),
            noise: NoiseSection::default(),
            audio: AudioSection::default(),
            source: SourceSection::default(),
            calibration: CalibrationSection::default(),
            experiment: ExperimentSection::default(),
            observability: ObservabilitySection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArraySection {
    pub baseline_m: f64,
}

impl Default for ArraySection {
    fn default() -> Self {
        Self { baseline_m: 0.18 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RotationSection {
    pub omega_rad_s: f64,
    pub revolutions: u32,
    pub cadence_deg: f64,
}

impl Default for RotationSection {
    fn default() -> Self {
        Self {
            omega_rad_s: TAU / 5.0,
            revolutions: 3,
            cadence_deg: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TranslationSection {
    pub step_m: f64,
    pub steps: usize,
    pub sample_period_s: f64,
    /// keep the current heading for overhead sources
    pub ninety_deg_bypass: bool,
}

impl Default for TranslationSection {
    fn default() -> Self {
        Self {
            step_m: 0.0007,
            steps: 200,
            sample_period_s: 5.0 / 360.0,
            ninety_deg_bypass: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdSection {
    /// scaled from 0.017 m at b = 0.18 m when absent
    pub d_threshold_m: Option<f64>,
    pub rmse_threshold_deg: f64,
    pub convergence_std_deg: f64,
    pub rmse_skip_revolutions: usize,
}

impl Default for ThresholdSection {
    fn default() -> Self {
        Self {
            d_threshold_m: None,
            rmse_threshold_deg: RMSE_THRESHOLD_DEG,
            convergence_std_deg: 2.0,
            rmse_skip_revolutions: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    /// ideal-mode noise on rotation samples
    pub rotation_sigma_m: f64,
    pub translation_sigma_m: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            rotation_sigma_m: 0.01,
            translation_sigma_m: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    WhiteNoise,
    Tone,
    SpeechFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AudioSection {
    pub sample_rate_hz: f64,
    pub source_kind: SourceKind,
    pub tone_hz: f64,
    /// mono WAV, used when `source_kind = "speech_file"`
    pub speech_path: Option<PathBuf>,
    /// per-channel sensor noise (source has unit variance)
    pub sensor_noise_sigma: f64,
    pub interpolation: Interpolation,
    pub weighting: Weighting,
}

impl Default for AudioSection {
    fn default() -> Self {
        Self {
            sample_rate_hz: 44_100.0,
            source_kind: SourceKind::WhiteNoise,
            tone_hz: 1000.0,
            speech_path: None,
            sensor_noise_sigma: 1e-3,
            interpolation: Interpolation::Sinc32,
            weighting: Weighting::Phat,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceSection {
    pub distance_m: f64,
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
}

impl Default for SourceSection {
    fn default() -> Self {
        Self {
            distance_m: 5.0,
            elevation_deg: 20.0,
            azimuth_deg: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSection {
    pub elevations_deg: Vec<f64>,
    pub azimuths_deg: Vec<f64>,
    pub distance_m: f64,
    pub degree: usize,
    /// curve used by `localize` and `reproduce`; defaults to
    /// `<output_dir>/rmse_curve.toml`
    pub curve: Option<PathBuf>,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        let g = CalibrationGrid::default();
        Self {
            elevations_deg: g.elevations_deg,
            azimuths_deg: g.azimuths_deg,
            distance_m: g.distance,
            degree: DEFAULT_CURVE_DEGREE,
            curve: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub seeds: Vec<u64>,
    pub run_distance: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2, 3, 4],
            run_distance: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservabilitySection {
    /// any of planar, spherical, azimuth-subsystem, elevation-subsystem, distance
    pub systems: Vec<String>,
    pub angle_step_deg: f64,
    pub lie_rows: usize,
    pub relative_tolerance: f64,
    pub distance_max_m: f64,
    pub distance_step_m: f64,
    pub delta_d_max_m: f64,
    pub delta_d_step_m: f64,
}

impl Default for ObservabilitySection {
    fn default() -> Self {
        Self {
            systems: [
                "planar",
                "spherical",
                "azimuth-subsystem",
                "elevation-subsystem",
                "distance",
            ]
            .map(String::from)
            .to_vec(),
            angle_step_deg: 5.0,
            lie_rows: 2,
            relative_tolerance: DEFAULT_RELATIVE_TOLERANCE,
            distance_max_m: 10.0,
            distance_step_m: 0.5,
            delta_d_max_m: 0.14,
            delta_d_step_m: 0.007,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical TOML of the effective configuration (hashed into the manifest).
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.experiment_spec()?.validate()?;
        if self.experiment.seeds.is_empty() {
            return Err(Error::Config("experiment.seeds is empty".into()));
        }
        if self.audio.source_kind == SourceKind::SpeechFile && self.audio.speech_path.is_none() {
            return Err(Error::Config(
                "audio.source_kind = \"speech_file\" needs audio.speech_path".into(),
            ));
        }
        for s in &self.observability.systems {
            if SweepSystem::parse(s).is_none() {
                return Err(Error::Config(format!("unknown observability system `{s}`")));
            }
        }
        self.source_truth()?;
        Ok(())
    }

    pub fn schedule(&self) -> Result<RotationSchedule> {
        RotationSchedule::new(
            self.rotation.omega_rad_s,
            self.rotation.revolutions,
            self.rotation.cadence_deg.to_radians(),
        )
    }

    pub fn orientation_setup(&self) -> Result<OrientationSetup> {
        let b = self.array.baseline_m;
        let mut s = OrientationSetup::new(b, self.rotation.omega_rad_s);
        s.thresholds = Thresholds {
            d_threshold: self
                .thresholds
                .d_threshold_m
                .unwrap_or(D_THRESHOLD_REF * b / REFERENCE_BASELINE),
            rmse_threshold: self.thresholds.rmse_threshold_deg,
        };
        s.filter = self.orientation_filter;
        s.convergence_std_deg = self.thresholds.convergence_std_deg;
        s.rmse_skip_revolutions = self.thresholds.rmse_skip_revolutions;
        s.validate()?;
        Ok(s)
    }

    pub fn distance_setup(&self) -> Result<DistanceSetup> {
        let mut s = DistanceSetup::new(self.array.baseline_m);
        s.plan = TranslationPlan::new(self.translation.step_m, self.translation.steps)?;
        s.sample_period = self.translation.sample_period_s;
        s.filter = self.distance_filter;
        s.ninety_deg_bypass = self.translation.ninety_deg_bypass;
        s.validate()?;
        Ok(s)
    }

    pub fn signal(&self) -> SignalConfig {
        let source = match self.audio.source_kind {
            SourceKind::WhiteNoise => SourceSignal::WhiteNoise,
            SourceKind::Tone => SourceSignal::Tone {
                frequency: self.audio.tone_hz,
            },
            SourceKind::SpeechFile => SourceSignal::SpeechFile {
                path: self.audio.speech_path.clone().unwrap_or_default(),
            },
        };
        SignalConfig {
            sample_rate: self.audio.sample_rate_hz,
            source,
            noise_sigma: self.audio.sensor_noise_sigma,
            seed: self.seed,
            interpolation: self.audio.interpolation,
        }
    }

    pub fn source_truth(&self) -> Result<SourceTruth> {
        SourceTruth::from_degrees(
            self.source.distance_m,
            self.source.elevation_deg,
            self.source.azimuth_deg,
        )
    }

    pub fn calibration_grid(&self) -> CalibrationGrid {
        CalibrationGrid {
            elevations_deg: self.calibration.elevations_deg.clone(),
            azimuths_deg: self.calibration.azimuths_deg.clone(),
            distance: self.calibration.distance_m,
            seed: self.seed,
            degree: self.calibration.degree,
        }
    }

    pub fn curve_path(&self) -> PathBuf {
        self.calibration
            .curve
            .clone()
            .unwrap_or_else(|| self.output_dir.join("rmse_curve.toml"))
    }

    /// Experiment settings without sources.
    pub fn experiment_spec(&self) -> Result<ExperimentSpec> {
        Ok(ExperimentSpec {
            room: self.room,
            schedule: self.schedule()?,
            orientation: self.orientation_setup()?,
            distance: self.distance_setup()?,
            mode: self.mode,
            ideal_noise_sigma: self.noise.rotation_sigma_m,
            distance_noise_sigma: self.noise.translation_sigma_m,
            signal: self.signal(),
            weighting: self.audio.weighting,
            sources: Vec::new(),
            seeds: self.experiment.seeds.clone(),
            run_distance: self.experiment.run_distance,
            workers: self.workers,
        })
    }
}
