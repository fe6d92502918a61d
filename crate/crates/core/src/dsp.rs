//! Waveforms, log-mel spectrograms and mel cepstra.
//!
//! Framing is center-off: frame `t` covers samples
//! `t * hop .. t * hop + win`, so a clip of `n` samples yields
//! `1 + (n - win) / hop` frames. Spectra are power spectra, mel energies are
//! natural-log compressed with a floor clamp, and cepstra are the
//! orthonormal DCT-II of each log-mel frame.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DspError {
    #[error("audio clip is empty")]
    EmptyClip,
    #[error("clip has {len} samples, shorter than the {win}-sample window")]
    ClipTooShort { len: usize, win: usize },
    #[error("sample rate mismatch: expected {expected} Hz, found {found} Hz")]
    SampleRateMismatch { expected: u32, found: u32 },
    #[error("cepstral order {order} needs at least {} mel bands, have {n_mels}", order + 1)]
    OrderTooLarge { order: usize, n_mels: usize },
    #[error("invalid feature parameters: {0}")]
    InvalidParams(&'static str),
}

/// Mono waveform with samples nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Self {
        Self {
            samples,
            sample_rate_hz,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate_hz)
    }

    /// Mean of the squared samples.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|x| x * x).sum::<f64>() / self.samples.len() as f64
    }

    /// Copy with every sample multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> Self {
        Self::new(
            self.samples.iter().map(|x| x * gain).collect(),
            self.sample_rate_hz,
        )
    }

    /// Samples between two times, clamped to the clip.
    pub fn slice_s(&self, start_s: f64, end_s: f64) -> Self {
        let rate = f64::from(self.sample_rate_hz);
        let to_index = |t: f64| (libm::round(t * rate).max(0.0) as usize).min(self.samples.len());
        let (a, b) = (to_index(start_s), to_index(end_s));
        Self::new(self.samples[a..b.max(a)].to_vec(), self.sample_rate_hz)
    }

    /// Clamps samples into `[-1, 1]`, returning how many were out of range.
    pub fn clamp_unit(&mut self) -> usize {
        let mut clipped = 0;
        for x in &mut self.samples {
            if *x > 1.0 || *x < -1.0 {
                *x = x.clamp(-1.0, 1.0);
                clipped += 1;
            }
        }
        clipped
    }
}

/// Row-major matrix of per-frame feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    n_cols: usize,
    data: Vec<f64>,
}

impl FrameMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == n_cols), "ragged rows");
        Self {
            n_cols,
            data: rows.concat(),
        }
    }

    /// `data.len()` must be a multiple of `n_cols`.
    pub fn from_flat(n_cols: usize, data: Vec<f64>) -> Self {
        assert!(
            n_cols > 0 && data.len().is_multiple_of(n_cols),
            "bad flat matrix shape"
        );
        Self { n_cols, data }
    }

    pub fn n_rows(&self) -> usize {
        self.data.len().checked_div(self.n_cols).unwrap_or(0)
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_cols.max(1))
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Column means over all frames.
    pub fn column_means(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.n_cols];
        let n = self.n_rows();
        if n == 0 {
            return mean;
        }
        for row in self.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        mean
    }

    /// Inserts `n` copies of `row` before the first frame.
    pub fn prepend_rows(&mut self, row: &[f64], n: usize) {
        assert_eq!(row.len(), self.n_cols);
        let mut data = Vec::with_capacity(self.data.len() + n * self.n_cols);
        for _ in 0..n {
            data.extend_from_slice(row);
        }
        data.extend_from_slice(&self.data);
        self.data = data;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureParams {
    pub sample_rate_hz: u32,
    /// Power of two.
    pub fft_size: usize,
    pub win_length: usize,
    pub hop_length: usize,
    pub n_mels: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub floor_clamp: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            sample_rate_hz: 22050,
            fft_size: 1024,
            win_length: 1024,
            hop_length: 256,
            n_mels: 80,
            fmin_hz: 0.0,
            fmax_hz: 8000.0,
            floor_clamp: 1e-10,
        }
    }
}

impl FeatureParams {
    pub fn validate(&self) -> Result<(), DspError> {
        let err = |msg| Err(DspError::InvalidParams(msg));
        if self.sample_rate_hz == 0 {
            return err("sample_rate_hz must be positive");
        }
        if !self.fft_size.is_power_of_two() {
            return err("fft_size must be a power of two");
        }
        if self.win_length == 0 || self.win_length > self.fft_size {
            return err("win_length must be in 1..=fft_size");
        }
        if self.hop_length == 0 || self.hop_length > self.win_length {
            return err("hop_length must be in 1..=win_length");
        }
        if self.n_mels == 0 {
            return err("n_mels must be positive");
        }
        if !(self.fmin_hz >= 0.0
            && self.fmin_hz < self.fmax_hz
            && self.fmax_hz <= f64::from(self.sample_rate_hz) / 2.0)
        {
            return err("need 0 <= fmin < fmax <= sample_rate / 2");
        }
        if !(self.floor_clamp > 0.0) {
            return err("floor_clamp must be positive");
        }
        Ok(())
    }

    /// Frame count for a clip of `n_samples` (center-off framing).
    pub fn n_frames(&self, n_samples: usize) -> usize {
        if n_samples < self.win_length {
            0
        } else {
            1 + (n_samples - self.win_length) / self.hop_length
        }
    }
}

/// `n_frames × n_mels` natural-log mel energies.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub frames: FrameMatrix,
    pub params: FeatureParams,
}

/// `n_frames × (order + 1)` mel-cepstral coefficients `c_0..=c_order`.
#[derive(Debug, Clone, PartialEq)]
pub struct CepstralSequence {
    pub frames: FrameMatrix,
    pub order: usize,
}

impl CepstralSequence {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let frames = FrameMatrix::from_rows(rows);
        let order = frames.n_cols().saturating_sub(1);
        Self { frames, order }
    }

    pub fn n_frames(&self) -> usize {
        self.frames.n_rows()
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * libm::log10(1.0 + hz / 700.0)
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (libm::pow(10.0, mel / 2595.0) - 1.0)
}

/// Triangular filters on the HTK mel scale with area normalization
/// (each filter scaled by `2 / bandwidth`). Returns `n_mels` rows of
/// `fft_size / 2 + 1` weights.
pub fn mel_filterbank(params: &FeatureParams) -> Vec<Vec<f64>> {
    let n_bins = params.fft_size / 2 + 1;
    let edges = mel_band_edges(params);
    let bin_hz = f64::from(params.sample_rate_hz) / params.fft_size as f64;
    (0..params.n_mels)
        .map(|m| {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let norm = 2.0 / (hi - lo);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    let up = (f - lo) / (center - lo);
                    let down = (hi - f) / (hi - center);
                    up.min(down).max(0.0) * norm
                })
                .collect()
        })
        .collect()
}

/// Center frequency of each mel band in Hz.
pub fn mel_center_frequencies(params: &FeatureParams) -> Vec<f64> {
    let edges = mel_band_edges(params);
    edges[1..=params.n_mels].to_vec()
}

fn mel_band_edges(params: &FeatureParams) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(params.fmin_hz), hz_to_mel(params.fmax_hz));
    let n = params.n_mels + 2;
    (0..n)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n - 1) as f64))
        .collect()
}

/// Periodic Hann window.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * libm::cos(2.0 * PI * n as f64 / len as f64))
        .collect()
}

/// In-place iterative radix-2 FFT. `re.len()` must be a power of two.
fn fft_in_place(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    debug_assert!(n.is_power_of_two() && im.len() == n);
    let bits = n.trailing_zeros();
    if bits == 0 {
        return;
    }
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let step = -2.0 * PI / len as f64;
        let half = len / 2;
        for k in 0..half {
            let (wi, wr) = libm::sincos(step * k as f64);
            let mut start = 0;
            while start < n {
                let (a, b) = (start + k, start + k + half);
                let tr = re[b] * wr - im[b] * wi;
                let ti = re[b] * wi + im[b] * wr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
                start += len;
            }
        }
        len <<= 1;
    }
}

/// Power spectrum `|X_k|^2` for `k = 0..=n/2` of a zero-padded frame.
pub fn power_spectrum(frame: &[f64], fft_size: usize) -> Vec<f64> {
    let mut re = vec![0.0; fft_size];
    let mut im = vec![0.0; fft_size];
    re[..frame.len()].copy_from_slice(frame);
    fft_in_place(&mut re, &mut im);
    (0..=fft_size / 2)
        .map(|k| re[k] * re[k] + im[k] * im[k])
        .collect()
}

/// Log-mel spectrogram: `log(max(filterbank · |STFT|^2, floor_clamp))`.
pub fn mel_spectrogram(
    clip: &AudioClip,
    params: &FeatureParams,
) -> Result<MelSpectrogram, DspError> {
    params.validate()?;
    if clip.sample_rate_hz != params.sample_rate_hz {
        return Err(DspError::SampleRateMismatch {
            expected: params.sample_rate_hz,
            found: clip.sample_rate_hz,
        });
    }
    if clip.len() < params.win_length {
        return Err(DspError::ClipTooShort {
            len: clip.len(),
            win: params.win_length,
        });
    }
    let window = hann_window(params.win_length);
    let bank = mel_filterbank(params);
    let n_frames = params.n_frames(clip.len());
    let mut frames = FrameMatrix::zeros(n_frames, params.n_mels);
    let mut buf = vec![0.0; params.win_length];
    for t in 0..n_frames {
        let start = t * params.hop_length;
        for ((b, x), w) in buf
            .iter_mut()
            .zip(&clip.samples[start..start + params.win_length])
            .zip(&window)
        {
            *b = x * w;
        }
        let spectrum = power_spectrum(&buf, params.fft_size);
        for (cell, filter) in frames.row_mut(t).iter_mut().zip(&bank) {
            let energy: f64 = filter.iter().zip(&spectrum).map(|(w, p)| w * p).sum();
            *cell = libm::log(energy.max(params.floor_clamp));
        }
    }
    Ok(MelSpectrogram {
        frames,
        params: params.clone(),
    })
}

/// Orthonormal DCT-II of `x`, keeping the first `n_out` coefficients.
pub fn dct2_orthonormal(x: &[f64], n_out: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 {
                libm::sqrt(1.0 / n)
            } else {
                libm::sqrt(2.0 / n)
            };
            let sum: f64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| v * libm::cos(PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n)))
                .sum();
            scale * sum
        })
        .collect()
}

/// Inverse of [`dct2_orthonormal`] (orthonormal DCT-III), zero-extending
/// the coefficients to `n_out` entries.
pub fn dct3_orthonormal(c: &[f64], n_out: usize) -> Vec<f64> {
    let n = n_out as f64;
    (0..n_out)
        .map(|i| {
            c.iter()
                .enumerate()
                .map(|(k, v)| {
                    let scale = if k == 0 {
                        libm::sqrt(1.0 / n)
                    } else {
                        libm::sqrt(2.0 / n)
                    };
                    scale * v * libm::cos(PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n))
                })
                .sum()
        })
        .collect()
}

/// Mel cepstrum of order `order` (coefficients `0..=order`).
pub fn mel_cepstrum(mel: &MelSpectrogram, order: usize) -> Result<CepstralSequence, DspError> {
    let n_mels = mel.frames.n_cols();
    if order + 1 > n_mels {
        return Err(DspError::OrderTooLarge { order, n_mels });
    }
    let mut frames = FrameMatrix::zeros(mel.frames.n_rows(), order + 1);
    for (t, row) in mel.frames.rows().enumerate() {
        frames
            .row_mut(t)
            .copy_from_slice(&dct2_orthonormal(row, order + 1));
    }
    Ok(CepstralSequence { frames, order })
}
