use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_non_negative, ensure_positive, Error, Result};
use crate::geometry::{ArrayPose, RotationSchedule, SourceTruth, TranslationPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    /// β strictly increasing, offset fixed.
    Rotation,
    /// offset strictly increasing, β fixed.
    Translation,
}

impl SeriesKind {
    fn as_str(self) -> &'static str {
        match self {
            SeriesKind::Rotation => "rotation",
            SeriesKind::Translation => "translation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItdSample {
    /// radians; array heading at which the measurement was formed
    pub beta: f64,
    /// meters
    pub offset: f64,
    /// meters; measured path difference `T̂ c0`
    pub d_measured: f64,
}

/// Uniformly sampled path-difference measurements with the array pose of each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItdSeries {
    pub kind: SeriesKind,
    /// seconds between samples
    pub sample_period: f64,
    samples: Vec<ItdSample>,
}

impl ItdSeries {
    pub fn new(kind: SeriesKind, sample_period: f64, samples: Vec<ItdSample>) -> Result<Self> {
        ensure_positive("sample_period", sample_period)?;
        for (i, w) in samples.windows(2).enumerate() {
            let ok = match kind {
                SeriesKind::Rotation => w[1].beta > w[0].beta,
                SeriesKind::Translation => w[1].offset > w[0].offset,
            };
            if !ok {
                return Err(Error::InvalidParameter {
                    name: "series",
                    reason: format!(
                        "{} must increase strictly (sample {})",
                        match kind {
                            SeriesKind::Rotation => "beta",
                            SeriesKind::Translation => "offset",
                        },
                        i + 1
                    ),
                });
            }
        }
        if samples.iter().any(|s| !s.d_measured.is_finite()) {
            return Err(Error::NonFinite("d_measured"));
        }
        Ok(Self {
            kind,
            sample_period,
            samples,
        })
    }

    pub fn samples(&self) -> &[ItdSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn measurements(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.d_measured)
    }

    /// Writes the series as CSV with a one-line `#` metadata header.
    ///
    /// ```text
    /// # itd-series kind=rotation sample_period_s=0.013888888888888888
    /// step,time_s,beta_deg,offset_m,d_m
    /// 0,0,0,0,0.0123
    /// ```
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# itd-series kind={} sample_period_s={}",
            self.kind.as_str(),
            self.sample_period
        )?;
        writeln!(w, "step,time_s,beta_deg,offset_m,d_m")?;
        for (k, s) in self.samples.iter().enumerate() {
            writeln!(
                w,
                "{k},{},{},{},{}",
                k as f64 * self.sample_period,
                s.beta.to_degrees(),
                s.offset,
                s.d_measured
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let bad = |m: String| Error::Config(format!("itd series: {m}"));
        let mut lines = r.lines();
        let meta = lines.next().ok_or_else(|| bad("empty file".into()))??;
        let meta = meta
            .strip_prefix("# itd-series")
            .ok_or_else(|| bad("missing `# itd-series` header".into()))?;
        let mut kind = None;
        let mut period = None;
        for kv in meta.split_whitespace() {
            match kv.split_once('=') {
                Some(("kind", "rotation")) => kind = Some(SeriesKind::Rotation),
                Some(("kind", "translation")) => kind = Some(SeriesKind::Translation),
                Some(("sample_period_s", v)) => {
                    period = Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?)
                }
                _ => return Err(bad(format!("unknown header field `{kv}`"))),
            }
        }
        let kind = kind.ok_or_else(|| bad("header lacks kind".into()))?;
        let period = period.ok_or_else(|| bad("header lacks sample_period_s".into()))?;
        let header = lines
            .next()
            .ok_or_else(|| bad("missing column header".into()))??;
        if header.trim() != "step,time_s,beta_deg,offset_m,d_m" {
            return Err(bad(format!("unexpected columns `{header}`")));
        }
        let mut samples = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad(format!("row {i}: expected 5 fields")));
            }
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| bad(format!("row {i}: {e}")))
            };
            samples.push(ItdSample {
                beta: num(f[2])?.to_radians(),
                offset: num(f[3])?,
                d_measured: num(f[4])?,
            });
        }
        Self::new(kind, period, samples)
    }
}

/// How the array moves while the series is recorded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Motion {
    Rotation(RotationSchedule),
    /// The array holds heading `beta` and shifts left one step per sample.
    /// Sample 0 is taken before the first step.
    Translation {
        plan: TranslationPlan,
        beta: f64,
        sample_period: f64,
    },
}

impl Motion {
    pub fn poses(&self, baseline: f64) -> Result<(SeriesKind, f64, Vec<ArrayPose>)> {
        match *self {
            Motion::Rotation(s) => {
                let poses = (0..s.sample_count())
                    .map(|k| ArrayPose::new(s.beta_at(k), 0.0, baseline))
                    .collect::<Result<Vec<_>>>()?;
                Ok((SeriesKind::Rotation, s.sample_period(), poses))
            }
            Motion::Translation {
                plan,
                beta,
                sample_period,
            } => {
                let poses = (0..=plan.steps)
                    .map(|k| ArrayPose::new(beta, plan.offset_at(k), baseline))
                    .collect::<Result<Vec<_>>>()?;
                Ok((SeriesKind::Translation, sample_period, poses))
            }
        }
    }
}

/// Noisy far-field path differences along a motion plan, without audio.
///
/// Rotation sample `k` is the path difference at `β = k·cadence`, i.e. at the
/// start of the `k`-th cadence window.
pub fn ideal_itd_series(
    src: &SourceTruth,
    motion: &Motion,
    baseline: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<ItdSeries> {
    ensure_non_negative("noise_sigma", noise_sigma)?;
    ensure_positive("baseline b", baseline)?;
    let (kind, period, poses) = motion.poses(baseline)?;
    if poses.is_empty() {
        return Err(Error::SeriesTooShort("motion plan has no samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let target = src.offset_from_center();
    let samples = poses
        .iter()
        .map(|p| {
            let clean = match kind {
                // Closed form keeps the planar case bit-exact (b sin ψ).
                SeriesKind::Rotation => {
                    baseline * src.elevation.cos() * (src.azimuth - p.beta).sin()
                }
                SeriesKind::Translation => p.far_field_path_difference(target),
            };
            let n: f64 = normal.sample(&mut rng);
            ItdSample {
                beta: p.beta,
                offset: p.offset,
                d_measured: clean + noise_sigma * n,
            }
        })
        .collect();
    ItdSeries::new(kind, period, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn overhead_source_gives_zero_series() {
        let src = SourceTruth::from_degrees(5.0, 90.0, 30.0).unwrap();
        let m = Motion::Rotation(RotationSchedule::standard());
        let s = ideal_itd_series(&src, &m, 0.18, 0.0, 1).unwrap();
        assert!(s.measurements().all(|d| d.abs() < 1e-16));
    }

    #[test]
    fn planar_source_is_b_sin_psi() {
        let src = SourceTruth::from_degrees(5.0, 0.0, 50.0).unwrap();
        let sched = RotationSchedule::standard();
        let s = ideal_itd_series(&src, &Motion::Rotation(sched), 0.18, 0.0, 1).unwrap();
        for (k, smp) in s.samples().iter().enumerate() {
            let psi = src.azimuth - sched.beta_at(k);
            assert_eq!(smp.d_measured, 0.18 * psi.sin());
        }
    }

    #[test]
    fn three_revolutions_at_one_degree() {
        let src = SourceTruth::from_degrees(5.0, 50.0, 10.0).unwrap();
        let s = ideal_itd_series(
            &src,
            &Motion::Rotation(RotationSchedule::standard()),
            0.18,
            0.0,
            3,
        )
        .unwrap();
        assert_eq!(s.len(), 1080);
        let peak = s.measurements().fold(0.0f64, |m, d| m.max(d.abs()));
        assert_abs_diff_eq!(peak, 0.18 * 50f64.to_radians().cos(), epsilon = 1e-4);
        assert_abs_diff_eq!(peak, 0.1157, epsilon = 1e-4);
    }

    #[test]
    fn fixed_seed_reproduces() {
        let src = SourceTruth::from_degrees(5.0, 30.0, 10.0).unwrap();
        let m = Motion::Rotation(RotationSchedule::standard());
        let a = ideal_itd_series(&src, &m, 0.18, 0.01, 42).unwrap();
        let b = ideal_itd_series(&src, &m, 0.18, 0.01, 42).unwrap();
        let c = ideal_itd_series(&src, &m, 0.18, 0.01, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_negative_noise() {
        let src = SourceTruth::from_degrees(5.0, 30.0, 10.0).unwrap();
        let m = Motion::Rotation(RotationSchedule::standard());
        assert!(ideal_itd_series(&src, &m, 0.18, -0.1, 1).is_err());
    }

    #[test]
    fn translation_series_starts_untranslated() {
        let src = SourceTruth::from_degrees(5.0, 20.0, 0.0).unwrap();
        let m = Motion::Translation {
            plan: TranslationPlan::standard(),
            beta: 0.0,
            sample_period: 0.1,
        };
        let s = ideal_itd_series(&src, &m, 0.18, 0.0, 1).unwrap();
        assert_eq!(s.len(), 201);
        assert_abs_diff_eq!(s.samples()[0].d_measured, 0.0, epsilon = 1e-15);
        let last = s.samples()[200];
        assert_abs_diff_eq!(last.offset, 0.14, epsilon = 1e-12);
        let want = crate::geometry::true_path_difference_distance(5.0, 0.14, 0.18).unwrap();
        assert_abs_diff_eq!(last.d_measured, want, epsilon = 1e-12);
    }

    #[test]
    fn non_monotone_series_rejected() {
        let s = vec![
            ItdSample {
                beta: 0.1,
                offset: 0.0,
                d_measured: 0.0,
            },
            ItdSample {
                beta: 0.1,
                offset: 0.0,
                d_measured: 0.0,
            },
        ];
        assert!(ItdSeries::new(SeriesKind::Rotation, 0.1, s).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let src = SourceTruth::from_degrees(5.0, 30.0, 10.0).unwrap();
        let m = Motion::Rotation(RotationSchedule::new(1.0, 1, 0.1).unwrap());
        let a = ideal_itd_series(&src, &m, 0.18, 0.01, 42).unwrap();
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let b = ItdSeries::read_csv(buf.as_slice()).unwrap();
        assert_eq!(a.kind, b.kind);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.samples().iter().zip(b.samples()) {
            assert_abs_diff_eq!(x.beta, y.beta, epsilon = 1e-12);
            assert_eq!(x.d_measured, y.d_measured);
        }
    }
}
