//! Source clips and synthesized pairs on disk.
//!
//! Accepted source formats:
//! - WAV (`.wav`), 16/24/32-bit integer or 32-bit float; multi-channel files are
//!   averaged down to mono.
//! - Raw PCM (`.pcm`, `.raw`): headerless little-endian signed 16-bit mono.
//!   Raw files carry no rate, so they are assumed to be at the requested rate.
//!
//! Integer samples are scaled to `[-1, 1)`.

use std::fs;
use std::path::Path;

use super::synth::StereoSignal;
use crate::error::{Error, Result};

/// Reads a mono clip, rejecting WAV files whose rate differs from `expect_rate`.
pub fn read_mono(path: &Path, expect_rate: Option<f64>) -> Result<Vec<f64>> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("pcm") | Some("raw") => {
            let bytes = fs::read(path)?;
            if bytes.len() % 2 != 0 {
                return Err(Error::Config(format!(
                    "{}: odd byte count for 16-bit PCM",
                    path.display()
                )));
            }
            Ok(bytes
                .chunks_exact(2)
                .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
                .collect())
        }
        _ => read_wav(path, expect_rate),
    }
}

fn read_wav(path: &Path, expect_rate: Option<f64>) -> Result<Vec<f64>> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if let Some(rate) = expect_rate {
        if (spec.sample_rate as f64 - rate).abs() > 0.5 {
            return Err(Error::Config(format!(
                "{}: sampled at {} Hz but the simulation runs at {rate} Hz",
                path.display(),
                spec.sample_rate
            )));
        }
    }
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()?
        }
    };
    let ch = spec.channels as usize;
    Ok(interleaved
        .chunks_exact(ch)
        .map(|f| f.iter().sum::<f64>() / ch as f64)
        .collect())
}

/// Writes a stereo 32-bit float WAV (channel 1 = right microphone).
pub fn write_stereo_wav(path: &Path, sig: &StereoSignal) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 2,
        sample_rate: sig.sample_rate.round() as u32,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for (r, l) in sig.channels[0].iter().zip(&sig.channels[1]) {
        w.write_sample(*r as f32)?;
        w.write_sample(*l as f32)?;
    }
    w.finalize()?;
    Ok(())
}
