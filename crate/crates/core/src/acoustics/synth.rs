use std::f64::consts::PI;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::room::{image_sources, paths_from, RoomConfig};
use crate::error::{ensure_non_negative, ensure_positive, Error, Result};
use crate::geometry::{ArrayPose, RotationSchedule, SourceTruth, TranslationPlan};

/// Half-width of the windowed-sinc kernel; the kernel has `2 * SINC_HALF` taps.
const SINC_HALF: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// 32-tap Blackman-windowed sinc.
    #[default]
    Sinc32,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SourceSignal {
    /// Unit-variance Gaussian white noise.
    WhiteNoise,
    /// Unit-amplitude sine.
    Tone { frequency: f64 },
    /// Mono recording, looped to the required length.
    SpeechFile { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalConfig {
    /// Hz
    pub sample_rate: f64,
    pub source: SourceSignal,
    /// Standard deviation of the white Gaussian noise added to each channel.
    pub noise_sigma: f64,
    pub seed: u64,
    #[serde(default)]
    pub interpolation: Interpolation,
}

impl SignalConfig {
    pub fn white_noise(sample_rate: f64, noise_sigma: f64, seed: u64) -> Self {
        Self {
            sample_rate,
            source: SourceSignal::WhiteNoise,
            noise_sigma,
            seed,
            interpolation: Interpolation::Sinc32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("sample_rate", self.sample_rate)?;
        ensure_non_negative("noise_sigma", self.noise_sigma)?;
        if let SourceSignal::Tone { frequency } = self.source {
            ensure_positive("tone frequency", frequency)?;
        }
        Ok(())
    }
}

/// One analysis frame: the pose is frozen for samples `start..start + len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryFrame {
    pub start: usize,
    pub len: usize,
    pub pose: ArrayPose,
}

/// Piecewise-constant array poses covering a waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayTrajectory {
    pub sample_rate: f64,
    /// Robot center in room coordinates.
    pub center: [f64; 3],
    pub frames: Vec<TrajectoryFrame>,
}

impl ArrayTrajectory {
    /// One frame per cadence window; the pose is the window midpoint.
    pub fn rotation(
        schedule: &RotationSchedule,
        baseline: f64,
        center: [f64; 3],
        sample_rate: f64,
    ) -> Result<Self> {
        ensure_positive("sample_rate", sample_rate)?;
        let period = schedule.sample_period();
        let frames = (0..schedule.sample_count())
            .map(|k| {
                let start = (k as f64 * period * sample_rate).round() as usize;
                let end = ((k + 1) as f64 * period * sample_rate).round() as usize;
                let beta = (k as f64 + 0.5) * schedule.itd_cadence;
                Ok(TrajectoryFrame {
                    start,
                    len: end - start,
                    pose: ArrayPose::new(beta, 0.0, baseline)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            sample_rate,
            center,
            frames,
        })
    }

    /// Frame `k` holds the array at offset `k * step` (frame 0 untranslated).
    pub fn translation(
        plan: &TranslationPlan,
        beta: f64,
        baseline: f64,
        center: [f64; 3],
        sample_rate: f64,
        frame_period: f64,
    ) -> Result<Self> {
        ensure_positive("sample_rate", sample_rate)?;
        ensure_positive("frame_period", frame_period)?;
        let frames = (0..=plan.steps)
            .map(|k| {
                let start = (k as f64 * frame_period * sample_rate).round() as usize;
                let end = ((k + 1) as f64 * frame_period * sample_rate).round() as usize;
                Ok(TrajectoryFrame {
                    start,
                    len: end - start,
                    pose: ArrayPose::new(beta, plan.offset_at(k), baseline)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            sample_rate,
            center,
            frames,
        })
    }

    /// A single static pose.
    pub fn fixed(pose: ArrayPose, center: [f64; 3], sample_rate: f64, len: usize) -> Self {
        Self {
            sample_rate,
            center,
            frames: vec![TrajectoryFrame {
                start: 0,
                len,
                pose,
            }],
        }
    }

    pub fn total_len(&self) -> usize {
        self.frames.last().map_or(0, |f| f.start + f.len)
    }

    fn validate(&self, sample_rate: f64) -> Result<()> {
        if (self.sample_rate - sample_rate).abs() > 1e-9 * sample_rate {
            return Err(Error::TrajectoryMismatch(format!(
                "trajectory sampled at {} Hz, signal at {} Hz",
                self.sample_rate, sample_rate
            )));
        }
        let mut expect = 0;
        for (i, f) in self.frames.iter().enumerate() {
            if f.start != expect || f.len == 0 {
                return Err(Error::TrajectoryMismatch(format!(
                    "frame {i} starts at {} (expected {expect}) with {} samples",
                    f.start, f.len
                )));
            }
            expect += f.len;
        }
        Ok(())
    }
}

/// Two microphone channels. Channel 0 is the right (clockwise-side) microphone.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoSignal {
    pub sample_rate: f64,
    pub channels: [Vec<f64>; 2],
}

impl StereoSignal {
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels[0].is_empty()
    }

    pub fn frame(&self, f: &TrajectoryFrame) -> (&[f64], &[f64]) {
        let r = f.start..f.start + f.len;
        (&self.channels[0][r.clone()], &self.channels[1][r])
    }
}

fn blackman(x: f64, half: f64) -> f64 {
    // x in [-half, half]
    let t = (x + half) / (2.0 * half);
    0.42 - 0.5 * (2.0 * PI * t).cos() + 0.08 * (4.0 * PI * t).cos()
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Taps `(first_index_offset, weights)` to evaluate a signal at `i0 + frac`.
fn kernel(frac: f64, interp: Interpolation) -> (isize, Vec<f64>) {
    match interp {
        Interpolation::Linear => (0, vec![1.0 - frac, frac]),
        Interpolation::Sinc32 => {
            let half = SINC_HALF as f64;
            let first = -(SINC_HALF as isize) + 1;
            let w = (0..2 * SINC_HALF)
                .map(|j| {
                    let x = (first + j as isize) as f64 - frac;
                    sinc(x) * blackman(x, half)
                })
                .collect();
            (first, w)
        }
    }
}

fn render_source(sig: &SignalConfig, len: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    Ok(match &sig.source {
        SourceSignal::WhiteNoise => {
            let n = Normal::new(0.0, 1.0).expect("unit normal");
            (0..len).map(|_| n.sample(rng)).collect()
        }
        SourceSignal::Tone { frequency } => {
            let phase: f64 = rng.gen_range(0.0..2.0 * PI);
            (0..len)
                .map(|i| (2.0 * PI * frequency * i as f64 / sig.sample_rate + phase).sin())
                .collect()
        }
        SourceSignal::SpeechFile { path } => {
            let clip = super::audio_io::read_mono(path, Some(sig.sample_rate))?;
            if clip.iter().all(|&x| x == 0.0) {
                return Err(Error::SignalAbsent);
            }
            clip.iter().copied().cycle().take(len).collect()
        }
    })
}

/// Renders both microphone channels.
///
/// Every image source up to the room's `max_image_order` contributes its
/// source signal delayed by `r / c0` and scaled by `reflection / r`, where `r`
/// is measured to the microphone position of the current frame. White Gaussian
/// noise of `sig.noise_sigma` is added independently to each channel.
pub fn synthesize_pair(
    room: &RoomConfig,
    src: &SourceTruth,
    trajectory: &ArrayTrajectory,
    sig: &SignalConfig,
) -> Result<StereoSignal> {
    room.validate()?;
    sig.validate()?;
    trajectory.validate(sig.sample_rate)?;
    let c = trajectory.center;
    let rel = src.offset_from_center();
    let src_pos = [c[0] + rel[0], c[1] + rel[1], c[2] + rel[2]];
    let images = image_sources(room, src_pos, room.max_image_order)?;
    for f in &trajectory.frames {
        for m in f.pose.microphones() {
            let p = [c[0] + m[0], c[1] + m[1], c[2] + m[2]];
            if !room.contains(p) {
                return Err(Error::InvalidParameter {
                    name: "microphone position",
                    reason: format!("{p:?} lies outside the room"),
                });
            }
        }
    }

    // Longest delay among all frames decides how much source history is needed.
    let diag = crate::geometry::norm(room.dimensions);
    let max_order = room.max_image_order as f64;
    let max_delay = (max_order + 1.0) * 2.0 * diag / room.sound_speed;
    let lead = (max_delay * sig.sample_rate).ceil() as usize + 2 * SINC_HALF;
    let total = trajectory.total_len();

    let mut rng = ChaCha8Rng::seed_from_u64(sig.seed);
    let source = render_source(sig, total + lead + 2 * SINC_HALF, &mut rng)?;
    let mut channels = [vec![0.0; total], vec![0.0; total]];

    for f in &trajectory.frames {
        let mics = f.pose.microphones();
        for (ch, m) in mics.iter().enumerate() {
            let mic = [c[0] + m[0], c[1] + m[1], c[2] + m[2]];
            let out = &mut channels[ch][f.start..f.start + f.len];
            for img in &images {
                let path = paths_from(img, mic, room.sound_speed);
                // Output sample n hears the source at position n + lead - delay.
                let pos = lead as f64 - path.delay * sig.sample_rate;
                let base = pos.floor();
                let (first, taps) = kernel(pos - base, sig.interpolation);
                let base = base as isize + first + f.start as isize;
                for (n, y) in out.iter_mut().enumerate() {
                    let i0 = (base + n as isize) as usize;
                    let acc: f64 = taps
                        .iter()
                        .zip(&source[i0..i0 + taps.len()])
                        .map(|(w, s)| w * s)
                        .sum();
                    *y += path.gain * acc;
                }
            }
        }
    }

    if sig.noise_sigma > 0.0 {
        let n = Normal::new(0.0, sig.noise_sigma).expect("validated sigma");
        let mut noise_rng = ChaCha8Rng::seed_from_u64(sig.seed ^ 0x9e37_79b9_7f4a_7c15);
        for ch in channels.iter_mut() {
            for y in ch.iter_mut() {
                *y += n.sample(&mut noise_rng);
            }
        }
    }

    Ok(StereoSignal {
        sample_rate: sig.sample_rate,
        channels,
    })
}
