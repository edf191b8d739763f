//! Handlers for the two elevation singularities: a DFT amplitude test for
//! sources overhead and a 2D-vs-3D azimuth RMSE test, with a calibrated
//! polynomial, for sources near the horizon.

use std::f64::consts::TAU;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::acoustics::{ItdSeries, SeriesKind};
use crate::error::{ensure_positive, Error, Result};
use crate::geometry::wrap;

/// One-sided-normalized amplitude spectrum `Â_d(ω) = (2/N)|X(ω)|`.
#[derive(Debug, Clone, PartialEq)]
pub struct DftAmplitudeSpectrum {
    /// rad/s; bins above N/2 map to negative frequencies
    pub frequencies: Vec<f64>,
    /// meters
    pub amplitudes: Vec<f64>,
    /// rad/s between bins
    pub resolution: f64,
}

impl DftAmplitudeSpectrum {
    /// Largest amplitude within `±1` bin of `omega` (either sign of frequency).
    pub fn peak_near(&self, omega: f64) -> Option<f64> {
        let n = self.amplitudes.len();
        if n == 0 {
            return None;
        }
        let k = (omega.abs() / self.resolution).round() as i64;
        (k - 1..=k + 1)
            .flat_map(|j| [j, -j])
            .map(|j| j.rem_euclid(n as i64) as usize)
            .map(|j| self.amplitudes[j])
            .reduce(f64::max)
    }
}

/// DFT of the whole rotation series, rectangular window, no padding.
pub fn itd_amplitude_spectrum(series: &ItdSeries) -> Result<DftAmplitudeSpectrum> {
    if series.kind != SeriesKind::Rotation {
        return Err(Error::InvalidParameter {
            name: "series",
            reason: "amplitude spectrum needs a rotation series".into(),
        });
    }
    let s = series.samples();
    let n = s.len();
    if n < 2 {
        return Err(Error::SeriesTooShort(format!("{n} samples")));
    }
    let cadence = (s[n - 1].beta - s[0].beta) / (n - 1) as f64;
    if cadence * (n as f64) < TAU * (1.0 - 1e-9) {
        return Err(Error::SeriesTooShort(format!(
            "{:.1} degrees of rotation, need a full revolution",
            (cadence * n as f64).to_degrees()
        )));
    }
    Ok(amplitude_spectrum(
        &series.measurements().collect::<Vec<_>>(),
        series.sample_period,
    ))
}

/// `(2/N)|X_k|` over all `N` bins of `x` sampled every `period` seconds.
pub fn amplitude_spectrum(x: &[f64], period: f64) -> DftAmplitudeSpectrum {
    let n = x.len();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    if n > 0 {
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    }
    let resolution = TAU / (n as f64 * period);
    let frequencies = (0..n)
        .map(|k| {
            let k = if k > n / 2 {
                k as f64 - n as f64
            } else {
                k as f64
            };
            k * resolution
        })
        .collect();
    let amplitudes = buf.iter().map(|c| 2.0 * c.norm() / n as f64).collect();
    DftAmplitudeSpectrum {
        frequencies,
        amplitudes,
        resolution,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// meters
    pub d_threshold: f64,
    /// degrees
    pub rmse_threshold: f64,
}

/// Amplitude threshold for the reference 0.18 m baseline.
pub const D_THRESHOLD_REF: f64 = 0.017;
pub const REFERENCE_BASELINE: f64 = 0.18;
pub const RMSE_THRESHOLD_DEG: f64 = 1.9;

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            d_threshold: D_THRESHOLD_REF,
            rmse_threshold: RMSE_THRESHOLD_DEG,
        }
    }
}

impl Thresholds {
    /// `d_threshold` scaled in proportion to the baseline.
    pub fn for_baseline(baseline: f64) -> Self {
        Self {
            d_threshold: D_THRESHOLD_REF * baseline / REFERENCE_BASELINE,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("d_threshold", self.d_threshold)?;
        ensure_positive("rmse_threshold", self.rmse_threshold)
    }
}

/// True when the amplitude at the rotation frequency (±1 bin) is below `d_threshold`.
pub fn detect_ninety_deg(
    spectrum: &DftAmplitudeSpectrum,
    thresholds: &Thresholds,
    omega_rot: f64,
) -> Result<bool> {
    let peak = spectrum
        .peak_near(omega_rot)
        .ok_or_else(|| Error::InvalidParameter {
            name: "spectrum",
            reason: "empty".into(),
        })?;
    let n = spectrum.amplitudes.len() as f64;
    if omega_rot.abs() > spectrum.resolution * n / 2.0 {
        return Err(Error::InvalidParameter {
            name: "omega_rot",
            reason: "above the Nyquist frequency of the series".into(),
        });
    }
    Ok(peak < thresholds.d_threshold)
}

/// RMSE of the wrapped difference of two azimuth tracks (radians), in degrees.
pub fn azimuth_rmse(track2d: &[f64], track3d: &[f64]) -> Result<f64> {
    if track2d.len() != track3d.len() {
        return Err(Error::LengthMismatch(track2d.len(), track3d.len()));
    }
    if track2d.is_empty() {
        return Err(Error::SeriesTooShort("empty azimuth track".into()));
    }
    let ss: f64 = track2d
        .iter()
        .zip(track3d)
        .map(|(a, b)| wrap(a - b).powi(2))
        .sum();
    Ok((ss / track2d.len() as f64).sqrt().to_degrees())
}

/// Least-squares polynomial `rmse_deg = p(elevation_deg)` and its inverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RmseCalibrationCurve {
    /// ascending powers of elevation (degrees)
    pub coefficients: Vec<f64>,
    /// elevation fit domain, degrees
    pub domain: [f64; 2],
    /// (elevation_deg, rmse_deg) pairs the fit was made from
    pub samples: Vec<[f64; 2]>,
    /// rms of the fit residuals, degrees of RMSE
    pub residual_rms: f64,
    pub max_residual: f64,
    /// nondecreasing over the domain
    pub monotone: bool,
}

pub const DEFAULT_CURVE_DEGREE: usize = 3;
const MONOTONE_GRID: usize = 2000;

impl RmseCalibrationCurve {
    pub fn degree(&self) -> usize {
        self.coefficients.len().saturating_sub(1)
    }

    pub fn eval(&self, elevation_deg: f64) -> f64 {
        self.coefficients
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * elevation_deg + c)
    }

    fn grid(&self) -> impl Iterator<Item = f64> + '_ {
        let [lo, hi] = self.domain;
        (0..=MONOTONE_GRID).map(move |i| lo + (hi - lo) * i as f64 / MONOTONE_GRID as f64)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let curve: Self =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if curve.coefficients.is_empty()
            || curve.domain[0].partial_cmp(&curve.domain[1]) != Some(std::cmp::Ordering::Less)
        {
            return Err(Error::Config(format!(
                "{}: empty coefficients or domain",
                path.display()
            )));
        }
        Ok(curve)
    }
}

/// Fits `rmse = p(elevation)` of the given degree by least squares.
pub fn fit_rmse_curve(samples: &[(f64, f64)], degree: usize) -> Result<RmseCalibrationCurve> {
    let (lo, hi) = check_samples(samples, degree)?;
    // Solve in a centered/scaled variable for conditioning, then expand.
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let powers: Vec<usize> = (0..=degree).collect();
    let scaled = least_squares(samples, &powers, mid, half, degree)?;
    finish_curve(samples, expand(&scaled, mid, half), [lo, hi])
}

/// Like [`fit_rmse_curve`] but with no linear term, so `p'(0) = 0`.
///
/// Elevations `θ` and `-θ` describe the same source, so the RMSE is even in
/// `θ` around the horizon; dropping the linear term keeps the fitted curve from
/// dipping below its value at 0.
pub fn fit_rmse_curve_flat_origin(
    samples: &[(f64, f64)],
    degree: usize,
) -> Result<RmseCalibrationCurve> {
    if degree < 2 {
        return Err(Error::InvalidParameter {
            name: "degree",
            reason: format!("flat-origin fit needs degree >= 2, got {degree}"),
        });
    }
    let (lo, hi) = check_samples(samples, degree - 1)?;
    let scale = lo.abs().max(hi.abs());
    let powers: Vec<usize> = std::iter::once(0).chain(2..=degree).collect();
    let sol = least_squares(samples, &powers, 0.0, scale, degree)?;
    let mut coefficients = vec![0.0; degree + 1];
    for (&p, c) in powers.iter().zip(sol) {
        coefficients[p] = c / scale.powi(p as i32);
    }
    finish_curve(samples, coefficients, [lo, hi])
}

/// Rejects non-finite samples and too few distinct elevations for `unknowns - 1`.
fn check_samples(samples: &[(f64, f64)], degree: usize) -> Result<(f64, f64)> {
    if samples
        .iter()
        .any(|(a, b)| !a.is_finite() || !b.is_finite())
    {
        return Err(Error::NonFinite("calibration samples"));
    }
    let mut distinct: Vec<f64> = samples.iter().map(|s| s.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < degree + 1 {
        return Err(Error::RankDeficient {
            samples: distinct.len(),
            degree,
        });
    }
    Ok((distinct[0], distinct[distinct.len() - 1]))
}

/// Coefficients of `sum c_j ((x - shift)/scale)^{p_j}` fitted by SVD.
fn least_squares(
    samples: &[(f64, f64)],
    powers: &[usize],
    shift: f64,
    scale: f64,
    degree: usize,
) -> Result<Vec<f64>> {
    let v = DMatrix::from_fn(samples.len(), powers.len(), |i, j| {
        ((samples[i].0 - shift) / scale).powi(powers[j] as i32)
    });
    let y = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.1));
    let svd = v.svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() < 1e-12 * smax {
        return Err(Error::RankDeficient {
            samples: samples.len(),
            degree,
        });
    }
    let sol = svd
        .solve(&y, 1e-14 * smax)
        .map_err(|e| Error::InvalidParameter {
            name: "samples",
            reason: e.to_string(),
        })?;
    Ok(sol.iter().copied().collect())
}

fn finish_curve(
    samples: &[(f64, f64)],
    coefficients: Vec<f64>,
    domain: [f64; 2],
) -> Result<RmseCalibrationCurve> {
    let mut curve = RmseCalibrationCurve {
        coefficients,
        domain,
        samples: samples.iter().map(|&(a, b)| [a, b]).collect(),
        residual_rms: 0.0,
        max_residual: 0.0,
        monotone: false,
    };
    let res: Vec<f64> = samples.iter().map(|&(a, b)| b - curve.eval(a)).collect();
    curve.residual_rms = (res.iter().map(|r| r * r).sum::<f64>() / res.len() as f64).sqrt();
    curve.max_residual = res.iter().fold(0.0, |m, r| m.max(r.abs()));
    let vals: Vec<f64> = curve.grid().map(|t| curve.eval(t)).collect();
    curve.monotone = vals.windows(2).all(|w| w[1] >= w[0] - 1e-12);
    Ok(curve)
}

/// Coefficients of `q((x - mid)/half)` in powers of `x`.
fn expand(q: &[f64], mid: f64, half: f64) -> Vec<f64> {
    let n = q.len();
    let mut out = vec![0.0; n];
    // (x - mid)^j / half^j expanded binomially
    for (j, &qj) in q.iter().enumerate() {
        let scale = qj / half.powi(j as i32);
        let mut binom = 1.0;
        for (i, o) in out.iter_mut().enumerate().take(j + 1) {
            *o += scale * binom * (-mid).powi((j - i) as i32);
            binom = binom * (j - i) as f64 / (i + 1) as f64;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElevationLookup {
    /// degrees
    pub elevation: f64,
    /// the query was outside the curve's range and was clamped to a domain edge
    pub clamped: bool,
}

/// Inverts the calibration curve at `rmse` (degrees).
pub fn elevation_from_rmse(curve: &RmseCalibrationCurve, rmse: f64) -> Result<ElevationLookup> {
    if !rmse.is_finite() {
        return Err(Error::NonFinite("rmse"));
    }
    let [lo, hi] = curve.domain;
    let (p_lo, p_hi) = (curve.eval(lo), curve.eval(hi));
    let eps = 1e-12 * p_lo.abs().max(p_hi.abs()).max(1.0);
    if rmse <= p_lo {
        return Ok(ElevationLookup {
            elevation: lo,
            clamped: rmse < p_lo - eps,
        });
    }
    if rmse >= p_hi {
        return Ok(ElevationLookup {
            elevation: hi,
            clamped: rmse > p_hi + eps,
        });
    }
    let grid: Vec<f64> = curve.grid().collect();
    let mut bracket = None;
    for w in grid.windows(2) {
        let above = |t: f64| curve.eval(t) >= rmse;
        if above(w[0]) != above(w[1]) {
            if bracket.is_some() {
                return Err(Error::Ambiguous(rmse));
            }
            bracket = Some((w[0], w[1]));
        }
    }
    let (mut a, mut b) = bracket.ok_or(Error::Ambiguous(rmse))?;
    let fa_neg = curve.eval(a) < rmse;
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if (curve.eval(m) < rmse) == fa_neg {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(ElevationLookup {
        elevation: 0.5 * (a + b),
        clamped: false,
    })
}
