//! Active speech level (ITU-T P.56, method B).
//!
//! The rectified signal is smoothed twice with a one-pole filter of time
//! constant 30 ms. For each threshold of a ladder that halves from full
//! scale down to 2^-15, a sample counts as active while the envelope is at
//! or above the threshold and for a 200 ms hangover after it drops below.
//! With `E` the total energy and `a_j` the active count at threshold `c_j`,
//! the candidate active level is `A_j = 10 log10(E / a_j)`. The reported
//! level is where `A_j - 20 log10(c_j)` falls to the 15.9 dB margin. The
//! ladder brackets the crossing; it is then found by bisection on a
//! continuous threshold between the two rungs.
//!
//! Levels are in dB relative to full scale with the RMS convention: a
//! full-scale sine measures -3.01 dBFS.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::AudioClip;

pub const TIME_CONSTANT_S: f64 = 0.03;
pub const HANGOVER_S: f64 = 0.2;
pub const MARGIN_DB: f64 = 15.9;
/// Thresholds `2^0, 2^-1, ..., 2^-15`.
pub const LADDER_RUNGS: usize = 16;
/// Returned by [`measured_snr`] when the noise is identically zero.
pub const MAX_SNR_DB: f64 = 300.0;
/// Bisection steps refining the margin crossing between two rungs.
const CROSSING_ITERATIONS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum LevelError {
    #[error("audio clip is empty")]
    EmptyClip,
    #[error("no speech activity detected")]
    NoSpeechActivity,
    #[error("length mismatch: {0} vs {1} samples")]
    LengthMismatch(usize, usize),
    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeechLevelReport {
    pub active_level_db: f64,
    pub long_term_level_db: f64,
    /// Fraction of samples judged active, in `(0, 1]`.
    pub activity_factor: f64,
    pub margin_db: f64,
}

impl SpeechLevelReport {
    /// Active speech power as a linear mean-square value.
    pub fn active_power(&self) -> f64 {
        db_to_power(self.active_level_db)
    }
}

pub fn power_to_db(p: f64) -> f64 {
    10.0 * libm::log10(p)
}

pub fn db_to_power(db: f64) -> f64 {
    libm::pow(10.0, db / 10.0)
}

/// Doubly smoothed rectified envelope and total energy.
struct Envelope {
    q: Vec<f64>,
    energy: f64,
    hangover: u64,
}

impl Envelope {
    fn new(clip: &AudioClip) -> Self {
        let fs = f64::from(clip.sample_rate_hz);
        let g = libm::exp(-1.0 / (fs * TIME_CONSTANT_S));
        let (mut p, mut q, mut energy) = (0.0f64, 0.0f64, 0.0f64);
        let q = clip
            .samples
            .iter()
            .map(|&x| {
                energy += x * x;
                p = g * p + (1.0 - g) * libm::fabs(x);
                q = g * q + (1.0 - g) * p;
                q
            })
            .collect();
        Self {
            q,
            energy,
            hangover: libm::round(HANGOVER_S * fs) as u64,
        }
    }

    /// Samples active at threshold `c` including the hangover.
    fn active(&self, c: f64) -> u64 {
        let (mut active, mut hold) = (0u64, self.hangover);
        for &q in &self.q {
            if q >= c {
                active += 1;
                hold = 0;
            } else if hold < self.hangover {
                active += 1;
                hold += 1;
            }
        }
        active
    }
}

/// Threshold of rung `j`; rungs ascend from 2^-15 (j = 0) to 1 (j = 15).
fn threshold(j: usize) -> f64 {
    libm::ldexp(1.0, j as i32 - (LADDER_RUNGS as i32 - 1))
}

fn db_to_amplitude(db: f64) -> f64 {
    libm::pow(10.0, db / 20.0)
}

/// Measures the active speech level of `clip`.
pub fn active_speech_level(clip: &AudioClip) -> Result<SpeechLevelReport, LevelError> {
    if clip.is_empty() {
        return Err(LevelError::EmptyClip);
    }
    let env = Envelope::new(clip);
    let energy = env.energy;
    let active: [u64; LADDER_RUNGS] = core::array::from_fn(|j| env.active(threshold(j)));
    if energy <= 0.0 || active[0] == 0 {
        return Err(LevelError::NoSpeechActivity);
    }
    let n = clip.len() as f64;
    let long_term = power_to_db(energy / n);
    let level_at = |j: usize| power_to_db(energy / active[j] as f64);
    let excess = |j: usize| level_at(j) - 20.0 * libm::log10(threshold(j));

    // First rung whose excess over its threshold is within the margin. If
    // the envelope never reaches the next rung the last measurable level
    // is used. The crossing between the bracketing rungs is then located
    // on a continuous threshold, starting from the log-linear estimate, so
    // that a gain change shifts the level by exactly that gain.
    let mut level = level_at(0);
    if excess(0) > MARGIN_DB {
        level = level_at(LADDER_RUNGS - 1);
        for j in 1..LADDER_RUNGS {
            if active[j] == 0 {
                level = level_at(j - 1);
                break;
            }
            let (hi, lo) = (excess(j - 1), excess(j));
            if lo <= MARGIN_DB {
                let frac = (hi - MARGIN_DB) / (hi - lo);
                let (mut c_lo, mut c_hi) = (
                    20.0 * libm::log10(threshold(j - 1)),
                    20.0 * libm::log10(threshold(j)),
                );
                let mut c = c_lo + frac * (c_hi - c_lo);
                for _ in 0..CROSSING_ITERATIONS {
                    let a = env.active(db_to_amplitude(c));
                    let above = a > 0 && power_to_db(energy / a as f64) - c > MARGIN_DB;
                    if above {
                        c_lo = c;
                    } else {
                        c_hi = c;
                    }
                    c = 0.5 * (c_lo + c_hi);
                }
                level = c + MARGIN_DB;
                break;
            }
        }
    }

    let level = level.max(long_term);
    let activity = (energy / (n * db_to_power(level))).min(1.0);
    Ok(SpeechLevelReport {
        active_level_db: level,
        long_term_level_db: long_term,
        activity_factor: activity,
        margin_db: MARGIN_DB,
    })
}

/// SNR of `noisy` against the clean `signal`, referenced to the signal's
/// active speech power.
pub fn measured_snr(signal: &AudioClip, noisy: &AudioClip) -> Result<f64, LevelError> {
    if signal.len() != noisy.len() {
        return Err(LevelError::LengthMismatch(signal.len(), noisy.len()));
    }
    if signal.sample_rate_hz != noisy.sample_rate_hz {
        return Err(LevelError::SampleRateMismatch(
            signal.sample_rate_hz,
            noisy.sample_rate_hz,
        ));
    }
    let level = active_speech_level(signal)?;
    let noise_power = signal
        .samples
        .iter()
        .zip(&noisy.samples)
        .map(|(s, y)| (y - s) * (y - s))
        .sum::<f64>()
        / signal.len() as f64;
    if noise_power == 0.0 {
        return Ok(MAX_SNR_DB);
    }
    Ok((level.active_level_db - power_to_db(noise_power)).min(MAX_SNR_DB))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;
    use alloc::vec;
    use core::f64::consts::PI;

    const RATE: u32 = 16000;

    fn sine(freq: f64, amp: f64, seconds: f64) -> Vec<f64> {
        let n = (seconds * f64::from(RATE)) as usize;
        (0..n)
            .map(|i| amp * libm::sin(2.0 * PI * freq * i as f64 / f64::from(RATE)))
            .collect()
    }

    fn silence(seconds: f64) -> Vec<f64> {
        vec![0.0; (seconds * f64::from(RATE)) as usize]
    }

    fn rms_db(x: &[f64]) -> f64 {
        power_to_db(x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64)
    }

    /// Amplitude-modulated noise bursts separated by pauses.
    fn speech_like(rng: &mut CounterRng, amp: f64) -> Vec<f64> {
        let mut out = silence(0.3);
        for _ in 0..4 {
            let len = (rng.uniform(0.4, 0.9) * f64::from(RATE)) as usize;
            for i in 0..len {
                let env = libm::sin(PI * i as f64 / len as f64);
                out.push(amp * env * rng.normal() * 0.3);
            }
            out.extend(silence(rng.uniform(0.3, 0.6)));
        }
        out
    }

    #[test]
    fn silence_has_no_activity() {
        let clip = AudioClip::new(silence(1.0), RATE);
        assert_eq!(
            active_speech_level(&clip),
            Err(LevelError::NoSpeechActivity)
        );
        assert_eq!(
            active_speech_level(&AudioClip::new(vec![], RATE)),
            Err(LevelError::EmptyClip)
        );
    }

    #[test]
    fn continuous_sine_matches_rms() {
        let x = sine(440.0, 1.0, 3.0);
        let oracle = rms_db(&x);
        let r = active_speech_level(&AudioClip::new(x, RATE)).unwrap();
        assert!((oracle + 3.0103).abs() < 1e-3);
        assert!((r.activity_factor - 1.0).abs() <= 0.02, "{r:?}");
        assert!((r.active_level_db - oracle).abs() <= 0.1, "{r:?}");
        assert!((r.long_term_level_db - oracle).abs() <= 1e-9);
        assert_eq!(r.margin_db, 15.9);
    }

    #[test]
    fn one_second_bursts_include_hangover() {
        // Each burst is followed by the 0.2 s hangover plus the decay time of
        // the envelope to the crossing threshold, so activity sits above the
        // burst duty cycle by roughly that much per period.
        let mut x = Vec::new();
        for _ in 0..5 {
            x.extend(sine(440.0, 0.5, 1.0));
            x.extend(silence(1.0));
        }
        let r = active_speech_level(&AudioClip::new(x, RATE)).unwrap();
        assert!(r.activity_factor > 0.5 + 0.2 / 2.0 - 0.01, "{r:?}");
        assert!(r.activity_factor < 0.5 + 0.35 / 2.0, "{r:?}");
    }

    #[test]
    fn gain_shifts_level() {
        let mut rng = CounterRng::new(4);
        for _ in 0..10 {
            let x = speech_like(&mut rng, 0.8);
            let base = active_speech_level(&AudioClip::new(x.clone(), RATE)).unwrap();
            for gain_db in [-20.0, -6.0, 3.0] {
                let g = libm::pow(10.0, gain_db / 20.0);
                let y: Vec<f64> = x.iter().map(|v| v * g).collect();
                let r = active_speech_level(&AudioClip::new(y, RATE)).unwrap();
                let shift = r.active_level_db - base.active_level_db;
                assert!(
                    (shift - gain_db).abs() <= 0.05,
                    "gain {gain_db}: shift {shift}"
                );
            }
        }
    }

    #[test]
    fn leading_silence_lowers_activity_only() {
        let mut rng = CounterRng::new(9);
        let x = speech_like(&mut rng, 0.8);
        let base = active_speech_level(&AudioClip::new(x.clone(), RATE)).unwrap();
        let mut padded = silence(0.7);
        padded.extend(&x);
        let r = active_speech_level(&AudioClip::new(padded, RATE)).unwrap();
        assert!(r.activity_factor <= base.activity_factor);
        assert!((r.active_level_db - base.active_level_db).abs() < 1e-9);
    }

    #[test]
    fn level_bounds_hold() {
        let mut rng = CounterRng::new(12);
        for _ in 0..20 {
            let amp = rng.uniform(0.05, 1.0);
            let r = active_speech_level(&AudioClip::new(speech_like(&mut rng, amp), RATE)).unwrap();
            assert!(r.long_term_level_db <= r.active_level_db);
            assert!(r.activity_factor > 0.0 && r.activity_factor <= 1.0);
            assert!(
                r.active_level_db
                    <= r.long_term_level_db - 10.0 * libm::log10(r.activity_factor) + 0.5
            );
        }
    }

    #[test]
    fn snr_edge_cases() {
        let x = AudioClip::new(sine(300.0, 0.5, 1.0), RATE);
        assert_eq!(measured_snr(&x, &x), Ok(MAX_SNR_DB));
        let short = AudioClip::new(sine(300.0, 0.5, 0.5), RATE);
        assert_eq!(
            measured_snr(&x, &short),
            Err(LevelError::LengthMismatch(16000, 8000))
        );
    }

    #[test]
    fn noise_at_active_power_is_zero_db() {
        let mut rng = CounterRng::new(21);
        let x = AudioClip::new(speech_like(&mut rng, 0.8), RATE);
        let level = active_speech_level(&x).unwrap();
        // Constant-magnitude noise of exactly the active power.
        let amp = libm::sqrt(level.active_power());
        let noisy: Vec<f64> = x
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| s + if i % 2 == 0 { amp } else { -amp })
            .collect();
        let snr = measured_snr(&x, &AudioClip::new(noisy, RATE)).unwrap();
        assert!(snr.abs() <= 0.1, "{snr}");
    }
}
