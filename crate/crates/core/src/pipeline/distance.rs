use std::io::Write;

use serde::{Deserialize, Serialize};

use super::orientation::{Branch, LocalizationVerdict};
use crate::acoustics::{ideal_itd_series, ItdSeries, Motion, SeriesKind};
use crate::error::{ensure_non_negative, ensure_positive, Error, Result};
use crate::estimation::{
    EkfConfig, EkfState, ModelDist, DEFAULT_SUBSTEPS, DISTANCE_SIGMA_V, DISTANCE_SIGMA_W,
    INITIAL_DISTANCE, INITIAL_DISTANCE_STD,
};
use crate::geometry::{SourceTruth, TranslationPlan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistanceFilter {
    pub sigma_v: f64,
    /// meters
    pub sigma_w: f64,
    /// meters
    pub initial_distance: f64,
    /// meters
    pub initial_std: f64,
    pub substeps: usize,
}

impl Default for DistanceFilter {
    fn default() -> Self {
        Self {
            sigma_v: DISTANCE_SIGMA_V,
            sigma_w: DISTANCE_SIGMA_W,
            initial_distance: INITIAL_DISTANCE,
            initial_std: INITIAL_DISTANCE_STD,
            substeps: DEFAULT_SUBSTEPS,
        }
    }
}

impl DistanceFilter {
    fn config(&self, period: f64) -> EkfConfig<1> {
        let mut c = EkfConfig::distance(period);
        c.process_noise[0] = self.sigma_v.powi(2);
        c.sensor_noise = self.sigma_w.powi(2);
        c.substeps = self.substeps;
        c.initial_state[0] = self.initial_distance;
        c.initial_covariance[(0, 0)] = self.initial_std.powi(2);
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceSetup {
    /// meters
    pub baseline: f64,
    pub plan: TranslationPlan,
    /// seconds between translation steps
    pub sample_period: f64,
    pub filter: DistanceFilter,
    /// Estimate distance for overhead sources without turning (any heading is
    /// perpendicular to an overhead source).
    pub ninety_deg_bypass: bool,
}

impl DistanceSetup {
    pub fn new(baseline: f64) -> Self {
        Self {
            baseline,
            plan: TranslationPlan::standard(),
            sample_period: 5.0 / 360.0,
            filter: DistanceFilter::default(),
            ninety_deg_bypass: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("baseline b", self.baseline)?;
        ensure_positive("translation step", self.plan.step)?;
        if self.plan.steps == 0 {
            return Err(Error::InvalidParameter {
                name: "translation steps",
                reason: "must be >= 1".into(),
            });
        }
        ensure_positive("sample_period", self.sample_period)?;
        self.filter.config(self.sample_period).validate()
    }
}

/// Heading (radians) that points the array at the estimated source azimuth.
///
/// Overhead sources have no azimuth; with `bypass` the current heading is kept.
pub fn face_source(verdict: &LocalizationVerdict, bypass: bool, current_beta: f64) -> Result<f64> {
    match verdict.azimuth_deg {
        Some(az) => Ok(az.to_radians()),
        None if bypass && verdict.branch == Branch::NinetyDeg => Ok(current_beta),
        None => Err(Error::InvalidParameter {
            name: "azimuth",
            reason: "undefined; cannot face the source".into(),
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceTracePoint {
    /// meters of cumulative shift
    pub offset: f64,
    /// meters
    pub estimate: f64,
    /// meters, one standard deviation
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceEstimate {
    /// meters
    pub distance: f64,
    pub std: f64,
    /// radians; heading held during the translation
    pub beta: f64,
    pub trace: Vec<DistanceTracePoint>,
}

impl DistanceEstimate {
    /// Smallest shift after which `|D̂ - truth| <= 3σ` holds for the rest of the trace.
    pub fn band_entry_shift(&self, truth: f64) -> Option<f64> {
        let inside = |p: &DistanceTracePoint| (p.estimate - truth).abs() <= 3.0 * p.std;
        let last_out = self.trace.iter().rposition(|p| !inside(p));
        match last_out {
            None => self.trace.first().map(|p| p.offset),
            Some(i) if i + 1 < self.trace.len() => Some(self.trace[i + 1].offset),
            Some(_) => None,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "step,offset_m,distance_m,std_m,lower_3sigma_m,upper_3sigma_m"
        )?;
        for (k, p) in self.trace.iter().enumerate() {
            writeln!(
                w,
                "{k},{},{},{},{},{}",
                p.offset,
                p.estimate,
                p.std,
                p.estimate - 3.0 * p.std,
                p.estimate + 3.0 * p.std
            )?;
        }
        Ok(())
    }
}

/// Ideal translation series: the array faces `beta` and shifts left.
pub fn simulate_translation_series(
    setup: &DistanceSetup,
    truth: &SourceTruth,
    beta: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<ItdSeries> {
    ensure_non_negative("noise_sigma", noise_sigma)?;
    let motion = Motion::Translation {
        plan: setup.plan,
        beta,
        sample_period: setup.sample_period,
    };
    ideal_itd_series(truth, &motion, setup.baseline, noise_sigma, seed)
}

/// Runs the distance filter over a translation series recorded while facing
/// the source.
///
/// Every measurement is taken relative to the untranslated one, which cancels
/// the constant path difference left by a small facing error.
pub fn localize_distance(
    setup: &DistanceSetup,
    verdict: &LocalizationVerdict,
    series: &ItdSeries,
) -> Result<DistanceEstimate> {
    setup.validate()?;
    if !verdict.diagnostics.converged {
        return Err(Error::NotConverged(format!(
            "azimuth spread {:.2} deg over the last revolution",
            verdict.diagnostics.azimuth_std_deg.unwrap_or(f64::NAN)
        )));
    }
    if series.kind != SeriesKind::Translation {
        return Err(Error::InvalidParameter {
            name: "series",
            reason: "distance needs a translation series".into(),
        });
    }
    let s = series.samples();
    let reference = match s.first() {
        Some(r) if r.offset == 0.0 => r.d_measured,
        _ => {
            return Err(Error::InvalidParameter {
                name: "series",
                reason: "first sample must be taken before translating (offset 0)".into(),
            })
        }
    };
    if s.len() < 2 {
        return Err(Error::SeriesTooShort("no translated samples".into()));
    }
    let model = ModelDist {
        baseline: setup.baseline,
    };
    let cfg = setup.filter.config(series.sample_period);
    let mut ekf = EkfState::new(&cfg)?;
    let mut trace = Vec::with_capacity(s.len() - 1);
    for smp in &s[1..] {
        ekf.step(&model, &cfg, smp.offset, smp.d_measured - reference)?;
        trace.push(DistanceTracePoint {
            offset: smp.offset,
            estimate: ekf.x[0],
            std: ekf.p[(0, 0)].sqrt(),
        });
    }
    Ok(DistanceEstimate {
        distance: ekf.x[0],
        std: ekf.p[(0, 0)].sqrt(),
        beta: s[0].beta,
        trace,
    })
}
