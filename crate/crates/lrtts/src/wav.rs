//! Mono PCM WAV reading (16-bit integer or 32-bit float) and 16-bit writing.

use std::io::Cursor;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use lrtts_core::AudioClip;

use crate::error::{io_err, Error, Result};
use crate::fsutil::write_atomic;

const I16_SCALE: f64 = 32768.0;

fn unsupported(path: &Path, details: impl Into<String>) -> Error {
    Error::UnsupportedFormat {
        path: path.to_path_buf(),
        details: details.into(),
    }
}

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => unsupported(path, other.to_string()),
    }
}

pub fn load_wav(path: &Path) -> Result<AudioClip> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    decode_wav(&bytes, path)
}

/// `path` is only used in error messages.
pub fn decode_wav(bytes: &[u8], path: &Path) -> Result<AudioClip> {
    let reader = WavReader::new(Cursor::new(bytes)).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(unsupported(path, "mono required"));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / I16_SCALE))
            .collect::<Result<_, _>>(),
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>(),
        (fmt, bits) => return Err(unsupported(path, format!("{bits}-bit {fmt:?} samples"))),
    }
    .map_err(|e| map_hound(path, e))?;
    Ok(AudioClip::new(samples, spec.sample_rate))
}

/// Duration in seconds from the header alone.
pub fn wav_duration(path: &Path) -> Result<f64> {
    let reader = WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(unsupported(path, "mono required"));
    }
    Ok(f64::from(reader.duration()) / f64::from(spec.sample_rate))
}

/// 16-bit PCM bytes plus the number of samples clipped to full scale.
pub fn encode_wav(clip: &AudioClip) -> (Vec<u8>, usize) {
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut clipped = 0;
    let mut buf = Cursor::new(Vec::with_capacity(44 + 2 * clip.len()));
    {
        let mut w = WavWriter::new(&mut buf, spec).expect("in-memory writer");
        for &s in &clip.samples {
            if !(-1.0..=1.0).contains(&s) {
                clipped += 1;
            }
            // NaN casts to 0.
            let v = (s * I16_SCALE).round().clamp(-I16_SCALE, I16_SCALE - 1.0) as i16;
            w.write_sample(v).expect("in-memory writer");
        }
        w.finalize().expect("in-memory writer");
    }
    (buf.into_inner(), clipped)
}

/// Writes atomically; returns the clip count.
pub fn write_wav(clip: &AudioClip, path: &Path) -> Result<usize> {
    let (bytes, clipped) = encode_wav(clip);
    write_atomic(path, &bytes)?;
    Ok(clipped)
}
