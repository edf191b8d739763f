//! Coordinate conventions and the closed-form far-field ITD models.
//!
//! World frame: `x` points along the robot heading, `y` to the robot's left,
//! `z` up. Azimuths are measured clockwise (seen from above) from the heading,
//! so a horizontal direction at azimuth `a` is `(cos a, -sin a, 0)`. The array
//! heading `β` follows the same convention and `ψ = φ - β`.
//!
//! Channel 1 is the microphone on the clockwise (right) side of the array
//! heading, channel 2 the one on the left. A positive path difference means the
//! source is closer to channel 1, which gives `d = b cos θ sin ψ`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_non_negative, ensure_positive, Error, Result};

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::NonFinite("angle"));
    }
    Ok(wrap(a))
}

/// Infallible variant of [`wrap_angle`]; NaN in, NaN out.
pub fn wrap(a: f64) -> f64 {
    let mut r = a.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    // rem_euclid maps odd multiples of π to π, and -π never survives.
    r
}

/// Array-relative azimuth `ψ = φ - β`, wrapped.
pub fn psi_of(phi: f64, beta: f64) -> f64 {
    wrap(phi - beta)
}

/// Far-field path difference `b cos θ sin ψ` for the rotating array.
pub fn true_path_difference_3d(theta: f64, psi: f64, b: f64) -> Result<f64> {
    ensure_positive("baseline b", b)?;
    Ok(b * theta.cos() * psi.sin())
}

/// Path difference after translating a source-facing array by `delta_d`:
/// `b Δd / sqrt(Δd² + D²)`.
///
/// Negative `delta_d` is accepted (translation to the other side) and gives the
/// mirrored value.
pub fn true_path_difference_distance(distance: f64, delta_d: f64, b: f64) -> Result<f64> {
    ensure_positive("baseline b", b)?;
    ensure_positive("distance D", distance)?;
    if !delta_d.is_finite() {
        return Err(Error::NonFinite("delta_d"));
    }
    Ok(b * delta_d / (delta_d * delta_d + distance * distance).sqrt())
}

/// Ground-truth source location relative to the robot center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceTruth {
    /// meters
    pub distance: f64,
    /// radians, `[0, π/2]`
    pub elevation: f64,
    /// radians, `(-π, π]`
    pub azimuth: f64,
}

impl SourceTruth {
    pub fn new(distance: f64, elevation: f64, azimuth: f64) -> Result<Self> {
        ensure_positive("distance D", distance)?;
        if !elevation.is_finite() {
            return Err(Error::NonFinite("elevation"));
        }
        // A hair of slack so that 90° converted from degrees is accepted.
        if !(0.0..=PI / 2.0 + 1e-12).contains(&elevation) {
            return Err(Error::InvalidParameter {
                name: "elevation",
                reason: format!(
                    "must lie in [0, 90] degrees, got {}",
                    elevation.to_degrees()
                ),
            });
        }
        let azimuth = wrap_angle(azimuth)?;
        Ok(Self {
            distance,
            elevation: elevation.min(PI / 2.0),
            azimuth,
        })
    }

    pub fn from_degrees(distance: f64, elevation_deg: f64, azimuth_deg: f64) -> Result<Self> {
        Self::new(
            distance,
            elevation_deg.to_radians(),
            azimuth_deg.to_radians(),
        )
    }

    /// Unit vector from the robot center towards the source.
    pub fn direction(&self) -> [f64; 3] {
        let (st, ct) = self.elevation.sin_cos();
        let (sp, cp) = self.azimuth.sin_cos();
        [ct * cp, -ct * sp, st]
    }

    /// Source position relative to the robot center.
    pub fn offset_from_center(&self) -> [f64; 3] {
        self.direction().map(|c| c * self.distance)
    }
}

/// Heading, lateral translation and baseline of the microphone pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayPose {
    /// radians, clockwise from the robot heading
    pub beta: f64,
    /// meters the array center has been shifted to the left of its heading
    pub offset: f64,
    /// meters between the microphones
    pub baseline: f64,
}

impl ArrayPose {
    pub fn new(beta: f64, offset: f64, baseline: f64) -> Result<Self> {
        if !beta.is_finite() {
            return Err(Error::NonFinite("beta"));
        }
        ensure_non_negative("offset", offset)?;
        ensure_positive("baseline b", baseline)?;
        Ok(Self {
            beta,
            offset,
            baseline,
        })
    }

    /// Unit vector of the array heading `q`.
    pub fn heading(&self) -> [f64; 3] {
        horizontal(self.beta)
    }

    /// Unit vector from the left microphone to the right one.
    pub fn axis(&self) -> [f64; 3] {
        horizontal(self.beta + PI / 2.0)
    }

    /// Array center relative to the robot center.
    pub fn center(&self) -> [f64; 3] {
        self.axis().map(|c| -c * self.offset)
    }

    /// Positions of (channel 1 = right, channel 2 = left) relative to the robot center.
    pub fn microphones(&self) -> [[f64; 3]; 2] {
        let c = self.center();
        let a = self.axis();
        let h = 0.5 * self.baseline;
        [
            [c[0] + h * a[0], c[1] + h * a[1], c[2] + h * a[2]],
            [c[0] - h * a[0], c[1] - h * a[1], c[2] - h * a[2]],
        ]
    }

    /// Far-field path difference for a source at `source` (relative to the robot
    /// center), evaluated at the translated array center.
    pub fn far_field_path_difference(&self, source: [f64; 3]) -> f64 {
        let c = self.center();
        let v = [source[0] - c[0], source[1] - c[1], source[2] - c[2]];
        let n = norm(v);
        self.baseline * dot(v, self.axis()) / n
    }
}

/// Clockwise rotation of the array at a constant rate, sampled once per cadence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationSchedule {
    /// rad/s, clockwise
    pub omega: f64,
    pub revolutions: u32,
    /// radians of rotation between ITD samples
    pub itd_cadence: f64,
}

impl RotationSchedule {
    pub fn new(omega: f64, revolutions: u32, itd_cadence: f64) -> Result<Self> {
        ensure_positive("omega", omega)?;
        ensure_positive("itd_cadence", itd_cadence)?;
        Ok(Self {
            omega,
            revolutions,
            itd_cadence,
        })
    }

    /// ω = 2π/5 rad/s, three revolutions, one sample per degree.
    pub fn standard() -> Self {
        Self {
            omega: TAU / 5.0,
            revolutions: 3,
            itd_cadence: 1f64.to_radians(),
        }
    }

    pub fn samples_per_revolution(&self) -> usize {
        (TAU / self.itd_cadence).round() as usize
    }

    pub fn sample_count(&self) -> usize {
        self.samples_per_revolution() * self.revolutions as usize
    }

    /// Seconds between ITD samples.
    pub fn sample_period(&self) -> f64 {
        self.itd_cadence / self.omega
    }

    /// Array heading at the start of the `k`-th cadence window.
    pub fn beta_at(&self, k: usize) -> f64 {
        k as f64 * self.itd_cadence
    }
}

/// Lateral translation of a source-facing array in equal steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TranslationPlan {
    /// meters per step
    pub step: f64,
    pub steps: usize,
}

impl TranslationPlan {
    pub fn new(step: f64, steps: usize) -> Result<Self> {
        ensure_positive("translation step", step)?;
        Ok(Self { step, steps })
    }

    /// 200 steps of 0.7 mm.
    pub fn standard() -> Self {
        Self {
            step: 0.0007,
            steps: 200,
        }
    }

    /// Cumulative offset after step `k` (1-based; step 0 is the untranslated pose).
    pub fn offset_at(&self, k: usize) -> f64 {
        k as f64 * self.step
    }
}

pub(crate) fn horizontal(a: f64) -> [f64; 3] {
    let (s, c) = a.sin_cos();
    [c, -s, 0.0]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}
