//! Time difference of arrival by (generalized) cross-correlation.
//!
//! Lag convention: a positive lag means the second frame is a delayed copy of
//! the first, i.e. the correlation is `R(τ) = Σ y1[n]·y2[n+τ]`. With channel 1
//! the right microphone this makes the path difference `b cos θ sin ψ`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::acoustics::{ArrayTrajectory, ItdSample, ItdSeries, SeriesKind, StereoSignal};
use crate::error::{ensure_positive, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    None,
    /// Phase transform: the cross-spectrum is normalized to unit magnitude.
    Phat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subsample {
    Off,
    /// Three-point parabola through the integer peak and its neighbours.
    #[default]
    Parabolic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GccConfig {
    pub weighting: Weighting,
    /// seconds; the lag search covers `[-max_lag, max_lag]`
    pub max_lag: f64,
    pub subsample: Subsample,
    /// Mean-square level per channel below which a frame counts as silent.
    #[serde(default = "default_energy_floor")]
    pub energy_floor: f64,
}

fn default_energy_floor() -> f64 {
    1e-12
}

impl GccConfig {
    /// Search window of `1.25 b / c0`.
    pub fn for_array(baseline: f64, sound_speed: f64, weighting: Weighting) -> Self {
        Self {
            weighting,
            max_lag: 1.25 * baseline / sound_speed,
            subsample: Subsample::Parabolic,
            energy_floor: default_energy_floor(),
        }
    }

    /// Errors unless the search window covers the physical range `b / c0`.
    pub fn check_covers(&self, baseline: f64, sound_speed: f64) -> Result<()> {
        if self.max_lag < baseline / sound_speed {
            return Err(Error::InvalidParameter {
                name: "max_lag",
                reason: format!(
                    "{} s is shorter than the physical range b/c0 = {} s",
                    self.max_lag,
                    baseline / sound_speed
                ),
            });
        }
        Ok(())
    }
}

/// Correlation sampled at integer lags `-max..=max`.
#[derive(Debug, Clone, PartialEq)]
pub struct Correlation {
    pub max_lag: usize,
    pub values: Vec<f64>,
    pub sample_rate: f64,
}

impl Correlation {
    pub fn at(&self, lag: isize) -> f64 {
        self.values[(lag + self.max_lag as isize) as usize]
    }

    pub fn lags(&self) -> impl Iterator<Item = isize> {
        let m = self.max_lag as isize;
        -m..=m
    }

    /// Integer lag of the highest value; ties go to the smallest `|lag|`,
    /// then to the positive side.
    pub fn peak_lag(&self) -> isize {
        let mut best: Option<(f64, isize)> = None;
        for lag in self.lags() {
            let v = self.at(lag);
            best = match best {
                None => Some((v, lag)),
                Some((bv, bl)) => {
                    let better = v > bv
                        || (v == bv
                            && (lag.abs() < bl.abs() || (lag.abs() == bl.abs() && lag > bl)));
                    if better {
                        Some((v, lag))
                    } else {
                        Some((bv, bl))
                    }
                }
            };
        }
        best.map_or(0, |b| b.1)
    }
}

fn lag_samples(cfg: &GccConfig, sample_rate: f64) -> usize {
    (cfg.max_lag * sample_rate).ceil() as usize
}

/// Cross-correlation of two equal-length frames over the configured lag window.
pub fn cross_correlate(
    frame1: &[f64],
    frame2: &[f64],
    cfg: &GccConfig,
    sample_rate: f64,
) -> Result<Correlation> {
    ensure_positive("sample_rate", sample_rate)?;
    ensure_positive("max_lag", cfg.max_lag)?;
    if frame1.len() != frame2.len() {
        return Err(Error::LengthMismatch(frame1.len(), frame2.len()));
    }
    let max = lag_samples(cfg, sample_rate);
    let needed = 2 * max + 1;
    if frame1.len() < needed {
        return Err(Error::FrameTooShort {
            len: frame1.len(),
            needed,
        });
    }
    let n = frame1.len();
    let size = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);

    let pad = |f: &[f64]| -> Vec<Complex<f64>> {
        let mut v: Vec<Complex<f64>> = f.iter().map(|&x| Complex::new(x, 0.0)).collect();
        v.resize(size, Complex::new(0.0, 0.0));
        v
    };
    let mut a = pad(frame1);
    let mut b = pad(frame2);
    fwd.process(&mut a);
    fwd.process(&mut b);

    let peak = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x.conj() * y).norm())
        .fold(0.0f64, f64::max);
    let mut cross: Vec<Complex<f64>> = a
        .iter()
        .zip(&b)
        .map(|(x, y)| {
            let c = x.conj() * y;
            match cfg.weighting {
                Weighting::None => c,
                Weighting::Phat => {
                    let m = c.norm();
                    // Bins with no energy stay at zero instead of amplifying rounding noise.
                    if m > 1e-12 * peak {
                        c / m
                    } else {
                        Complex::new(0.0, 0.0)
                    }
                }
            }
        })
        .collect();
    inv.process(&mut cross);

    let scale = 1.0 / size as f64;
    let values = (-(max as isize)..=max as isize)
        .map(|lag| {
            let idx = if lag >= 0 {
                lag as usize
            } else {
                size - (-lag) as usize
            };
            cross[idx].re * scale
        })
        .collect();
    Ok(Correlation {
        max_lag: max,
        values,
        sample_rate,
    })
}

fn mean_square(f: &[f64]) -> f64 {
    f.iter().map(|x| x * x).sum::<f64>() / f.len().max(1) as f64
}

/// Lag (seconds) maximizing the correlation between the two frames.
pub fn estimate_itd(
    frame1: &[f64],
    frame2: &[f64],
    cfg: &GccConfig,
    sample_rate: f64,
) -> Result<f64> {
    if frame1.len() != frame2.len() {
        return Err(Error::LengthMismatch(frame1.len(), frame2.len()));
    }
    if mean_square(frame1) <= cfg.energy_floor || mean_square(frame2) <= cfg.energy_floor {
        return Err(Error::SignalAbsent);
    }
    let r = cross_correlate(frame1, frame2, cfg, sample_rate)?;
    let k = r.peak_lag();
    let mut lag = k as f64;
    if cfg.subsample == Subsample::Parabolic && k.unsigned_abs() < r.max_lag {
        let (ym, y0, yp) = (r.at(k - 1), r.at(k), r.at(k + 1));
        let denom = ym - 2.0 * y0 + yp;
        if denom < 0.0 {
            lag += (0.5 * (ym - yp) / denom).clamp(-0.5, 0.5);
        }
    }
    Ok(lag / sample_rate)
}

/// `d = T̂ c0`.
pub fn itd_to_path_difference(t_hat: f64, sound_speed: f64) -> Result<f64> {
    ensure_positive("sound speed c0", sound_speed)?;
    Ok(t_hat * sound_speed)
}

/// Runs [`estimate_itd`] on every trajectory frame and records the pose of each.
pub fn measure_series(
    pair: &StereoSignal,
    trajectory: &ArrayTrajectory,
    cfg: &GccConfig,
    sound_speed: f64,
    kind: SeriesKind,
    sample_period: f64,
) -> Result<ItdSeries> {
    let samples = trajectory
        .frames
        .iter()
        .map(|f| {
            let (a, b) = pair.frame(f);
            let t = estimate_itd(a, b, cfg, pair.sample_rate)?;
            Ok(ItdSample {
                beta: f.pose.beta,
                offset: f.pose.offset,
                d_measured: itd_to_path_difference(t, sound_speed)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ItdSeries::new(kind, sample_period, samples)
}

/// Like [`measure_series`], but frames below the energy floor are dropped
/// instead of failing the run. Returns the series and the number of dropped
/// frames; fails with [`Error::SignalAbsent`] only when every frame is silent.
pub fn measure_series_skipping_silence(
    pair: &StereoSignal,
    trajectory: &ArrayTrajectory,
    cfg: &GccConfig,
    sound_speed: f64,
    kind: SeriesKind,
    sample_period: f64,
) -> Result<(ItdSeries, usize)> {
    let mut dropped = 0;
    let mut samples = Vec::with_capacity(trajectory.frames.len());
    for f in &trajectory.frames {
        let (a, b) = pair.frame(f);
        match estimate_itd(a, b, cfg, pair.sample_rate) {
            Ok(t) => samples.push(ItdSample {
                beta: f.pose.beta,
                offset: f.pose.offset,
                d_measured: itd_to_path_difference(t, sound_speed)?,
            }),
            Err(Error::SignalAbsent) => dropped += 1,
            Err(e) => return Err(e),
        }
    }
    if samples.is_empty() {
        return Err(Error::SignalAbsent);
    }
    Ok((ItdSeries::new(kind, sample_period, samples)?, dropped))
}
