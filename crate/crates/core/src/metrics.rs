//! Objective metrics: MCD-DTW between two recordings, cosine similarity of
//! speaker embeddings, and mean ± 95% confidence-interval aggregation.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::RangeInclusive;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{
    mel_cepstrum, mel_spectrogram, AudioClip, CepstralSequence, DspError, FeatureParams,
};

/// `(10 / ln 10) * sqrt(2)`: dB scaling of the per-frame cepstral distance.
pub const MCD_SCALE: f64 = 10.0 / core::f64::consts::LN_10 * core::f64::consts::SQRT_2;

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("empty sequence")]
    EmptySequence,
    #[error("coefficient range {start}..={end} exceeds {available} columns")]
    BadDims {
        start: usize,
        end: usize,
        available: usize,
    },
    #[error("zero-norm embedding")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("need at least 2 items, have {0}")]
    TooFewItems(usize),
    #[error("{failed} of {total} items failed")]
    AllItemsFailed { failed: usize, total: usize },
    #[error(transparent)]
    Dsp(#[from] DspError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DtwResult {
    pub total_cost: f64,
    /// From `(0, 0)` to `(n - 1, m - 1)`.
    pub path: Vec<(usize, usize)>,
}

impl DtwResult {
    pub fn path_length(&self) -> usize {
        self.path.len()
    }
}

fn frame_cost(a: &[f64], b: &[f64], dims: &RangeInclusive<usize>) -> f64 {
    dims.clone().map(|d| (a[d] - b[d]) * (a[d] - b[d])).sum()
}

fn check_dims(seq: &CepstralSequence, dims: &RangeInclusive<usize>) -> Result<(), MetricsError> {
    if seq.n_frames() == 0 {
        return Err(MetricsError::EmptySequence);
    }
    if dims.is_empty() || *dims.end() >= seq.frames.n_cols() {
        return Err(MetricsError::BadDims {
            start: *dims.start(),
            end: *dims.end(),
            available: seq.frames.n_cols(),
        });
    }
    Ok(())
}

/// Minimal-cost monotonic alignment with steps (1,0), (0,1), (1,1), no step
/// weights and squared-Euclidean frame cost over `dims`.
pub fn dtw(
    a: &CepstralSequence,
    b: &CepstralSequence,
    dims: RangeInclusive<usize>,
) -> Result<DtwResult, MetricsError> {
    dtw_banded(a, b, dims, None)
}

/// [`dtw`] restricted to a Sakoe–Chiba band of half-width `band` frames
/// around the scaled diagonal. With a band the result is an approximation.
pub fn dtw_banded(
    a: &CepstralSequence,
    b: &CepstralSequence,
    dims: RangeInclusive<usize>,
    band: Option<usize>,
) -> Result<DtwResult, MetricsError> {
    check_dims(a, &dims)?;
    check_dims(b, &dims)?;
    let (n, m) = (a.n_frames(), b.n_frames());
    // The band is widened by the diagonal's slope so that consecutive rows
    // always overlap and a path exists.
    let inside = |i: usize, j: usize| match band {
        Some(w) if n > 1 && m > 1 => {
            let slope = (m - 1) as f64 / (n - 1) as f64;
            libm::fabs(j as f64 - i as f64 * slope) <= w as f64 + slope.max(1.0)
        }
        _ => true,
    };

    let mut acc = vec![f64::INFINITY; n * m];
    for i in 0..n {
        for j in 0..m {
            if !inside(i, j) {
                continue;
            }
            let cost = frame_cost(a.frames.row(i), b.frames.row(j), &dims);
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let mut best = f64::INFINITY;
                if i > 0 && j > 0 {
                    best = best.min(acc[(i - 1) * m + j - 1]);
                }
                if i > 0 {
                    best = best.min(acc[(i - 1) * m + j]);
                }
                if j > 0 {
                    best = best.min(acc[i * m + j - 1]);
                }
                best
            };
            acc[i * m + j] = cost + best;
        }
    }

    // Backtrack, preferring the diagonal on ties.
    let mut path = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while i > 0 || j > 0 {
        let mut next = None;
        let mut best = f64::INFINITY;
        for (di, dj) in [(1, 1), (1, 0), (0, 1)] {
            if i >= di && j >= dj {
                let v = acc[(i - di) * m + j - dj];
                if v < best {
                    best = v;
                    next = Some((i - di, j - dj));
                }
            }
        }
        (i, j) = next.expect("band leaves no path");
        path.push((i, j));
    }
    path.reverse();
    Ok(DtwResult {
        total_cost: acc[n * m - 1],
        path,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McdConfig {
    /// Highest cepstral coefficient used.
    pub order: usize,
    pub include_c0: bool,
    pub band: Option<usize>,
}

impl Default for McdConfig {
    fn default() -> Self {
        Self {
            order: 12,
            include_c0: false,
            band: None,
        }
    }
}

impl McdConfig {
    pub fn dims(&self) -> RangeInclusive<usize> {
        if self.include_c0 {
            0..=self.order
        } else {
            1..=self.order
        }
    }
}

/// Mean over the DTW path of `MCD_SCALE * sqrt(sum_d (c_d - ĉ_d)^2)`.
pub fn mcd_from_cepstra(
    reference: &CepstralSequence,
    synthesized: &CepstralSequence,
    config: &McdConfig,
) -> Result<f64, MetricsError> {
    let dims = config.dims();
    let alignment = dtw_banded(reference, synthesized, dims.clone(), config.band)?;
    let total: f64 = alignment
        .path
        .iter()
        .map(|&(i, j)| {
            MCD_SCALE
                * libm::sqrt(frame_cost(
                    reference.frames.row(i),
                    synthesized.frames.row(j),
                    &dims,
                ))
        })
        .sum();
    Ok(total / alignment.path.len() as f64)
}

/// Mel cepstra of a clip at the configured order.
pub fn cepstra(
    clip: &AudioClip,
    params: &FeatureParams,
    order: usize,
) -> Result<CepstralSequence, MetricsError> {
    Ok(mel_cepstrum(&mel_spectrogram(clip, params)?, order)?)
}

/// MCD-DTW in dB between a reference and a synthesized recording.
pub fn mcd_dtw(
    reference: &AudioClip,
    synthesized: &AudioClip,
    params: &FeatureParams,
    config: &McdConfig,
) -> Result<f64, MetricsError> {
    let a = cepstra(reference, params, config.order)?;
    let b = cepstra(synthesized, params, config.order)?;
    mcd_from_cepstra(&a, &b, config)
}

/// Speaker embedding as read from disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    fn norm(&self) -> f64 {
        libm::sqrt(self.0.iter().map(|v| v * v).sum())
    }
}

pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, MetricsError> {
    if a.dim() != b.dim() {
        return Err(MetricsError::DimensionMismatch(a.dim(), b.dim()));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(MetricsError::ZeroVector);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std_dev: f64,
    pub ci95_halfwidth: f64,
}

impl Summary {
    /// `"50.6 ± 0.8"` style rendering.
    pub fn display(&self, decimals: usize) -> String {
        format!(
            "{:.*} ± {:.*}",
            decimals, self.mean, decimals, self.ci95_halfwidth
        )
    }
}

/// Mean, sample standard deviation and `1.96 s / sqrt(n)`.
pub fn aggregate(values: &[f64]) -> Result<Summary, MetricsError> {
    let n = values.len();
    if n < 2 {
        return Err(MetricsError::TooFewItems(n));
    }
    // Shifted by the first value so constant data aggregates exactly.
    let shift = values[0];
    let mean = shift + values.iter().map(|v| v - shift).sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let std_dev = libm::sqrt(var);
    Ok(Summary {
        n,
        mean,
        std_dev,
        ci95_halfwidth: Z_95 * std_dev / libm::sqrt(n as f64),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Mcd,
    CosSim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub id: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemFailure {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: Metric,
    pub per_item: Vec<ItemScore>,
    pub summary: Summary,
    /// Excluded from `per_item` and from the summary.
    pub failures: Vec<ItemFailure>,
}

/// Scores every item, excluding failures. Fails when at least half of the
/// items fail or fewer than two succeed.
pub fn evaluate_items<I, F, E>(
    metric: Metric,
    items: I,
    mut score: F,
) -> Result<EvalReport, MetricsError>
where
    I: IntoIterator<Item = String>,
    F: FnMut(&str) -> Result<f64, E>,
    E: core::fmt::Display,
{
    let mut per_item = Vec::new();
    let mut failures = Vec::new();
    for id in items {
        match score(&id) {
            Ok(value) if value.is_finite() => per_item.push(ItemScore { id, value }),
            Ok(value) => failures.push(ItemFailure {
                id,
                reason: format!("non-finite score {value}"),
            }),
            Err(e) => failures.push(ItemFailure {
                id,
                reason: format!("{e}"),
            }),
        }
    }
    let total = per_item.len() + failures.len();
    if total > 0 && failures.len() * 2 >= total {
        return Err(MetricsError::AllItemsFailed {
            failed: failures.len(),
            total,
        });
    }
    let values: Vec<f64> = per_item.iter().map(|s| s.value).collect();
    let summary = aggregate(&values)?;
    Ok(EvalReport {
        metric,
        per_item,
        summary,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::add_wgn;
    use crate::rng::CounterRng;
    use core::f64::consts::PI;

    fn seq(rows: &[&[f64]]) -> CepstralSequence {
        CepstralSequence::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
    }

    /// Minimum cost over every monotonic path, by exhaustive recursion.
    fn brute_force(
        a: &CepstralSequence,
        b: &CepstralSequence,
        dims: &RangeInclusive<usize>,
    ) -> f64 {
        fn go(
            i: usize,
            j: usize,
            a: &CepstralSequence,
            b: &CepstralSequence,
            dims: &RangeInclusive<usize>,
        ) -> f64 {
            let here: f64 = dims
                .clone()
                .map(|d| (a.frames.row(i)[d] - b.frames.row(j)[d]).powi(2))
                .sum();
            if i + 1 == a.n_frames() && j + 1 == b.n_frames() {
                return here;
            }
            let mut best = f64::INFINITY;
            if i + 1 < a.n_frames() {
                best = best.min(go(i + 1, j, a, b, dims));
            }
            if j + 1 < b.n_frames() {
                best = best.min(go(i, j + 1, a, b, dims));
            }
            if i + 1 < a.n_frames() && j + 1 < b.n_frames() {
                best = best.min(go(i + 1, j + 1, a, b, dims));
            }
            here + best
        }
        go(0, 0, a, b, dims)
    }

    fn random_seq(rng: &mut CounterRng, max_frames: u64, cols: usize) -> CepstralSequence {
        let n = 1 + rng.below(max_frames) as usize;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..cols).map(|_| rng.uniform(-2.0, 2.0)).collect())
            .collect();
        CepstralSequence::from_rows(&rows)
    }

    fn path_is_valid(r: &DtwResult, n: usize, m: usize) -> bool {
        r.path.first() == Some(&(0, 0))
            && r.path.last() == Some(&(n - 1, m - 1))
            && r.path.windows(2).all(|w| {
                let (di, dj) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
                matches!((di, dj), (1, 0) | (0, 1) | (1, 1))
            })
    }

    #[test]
    fn identical_sequences_align_on_diagonal() {
        let a = seq(&[&[0.0, 1.0], &[2.0, -1.0], &[0.5, 0.5], &[3.0, 3.0]]);
        let r = dtw(&a, &a, 0..=1).unwrap();
        assert_eq!(r.total_cost, 0.0);
        assert_eq!(r.path, [(0, 0), (1, 1), (2, 2), (3, 3)]);
    }

    #[test]
    fn three_versus_two_frames() {
        let a = seq(&[&[0.0], &[1.0], &[2.0]]);
        let b = seq(&[&[0.0], &[2.0]]);
        let r = dtw(&a, &b, 0..=0).unwrap();
        assert_eq!(r.total_cost, 1.0);
        assert_eq!(brute_force(&a, &b, &(0..=0)), 1.0);
        assert!(path_is_valid(&r, 3, 2));
        assert_eq!(r.path_length(), 3);
        let along: f64 = r
            .path
            .iter()
            .map(|&(i, j)| (a.frames.row(i)[0] - b.frames.row(j)[0]).powi(2))
            .sum();
        assert_eq!(along, 1.0);
    }

    #[test]
    fn dp_matches_brute_force() {
        let mut rng = CounterRng::new(31);
        for _ in 0..200 {
            let a = random_seq(&mut rng, 6, 3);
            let b = random_seq(&mut rng, 6, 3);
            let r = dtw(&a, &b, 0..=2).unwrap();
            let oracle = brute_force(&a, &b, &(0..=2));
            assert!((r.total_cost - oracle).abs() <= 1e-12 * oracle.max(1.0));
            assert!(path_is_valid(&r, a.n_frames(), b.n_frames()));
            let symmetric = dtw(&b, &a, 0..=2).unwrap().total_cost;
            assert!((r.total_cost - symmetric).abs() <= 1e-12 * oracle.max(1.0));
        }
    }

    #[test]
    fn wide_band_equals_full_dtw() {
        let mut rng = CounterRng::new(8);
        for _ in 0..20 {
            let a = random_seq(&mut rng, 30, 2);
            let b = random_seq(&mut rng, 30, 2);
            let full = dtw(&a, &b, 0..=1).unwrap();
            let banded = dtw_banded(&a, &b, 0..=1, Some(40)).unwrap();
            assert_eq!(full, banded);
            let narrow = dtw_banded(&a, &b, 0..=1, Some(2)).unwrap();
            assert!(narrow.total_cost >= full.total_cost);
            assert!(path_is_valid(&narrow, a.n_frames(), b.n_frames()));
        }
    }

    #[test]
    fn empty_and_bad_dims() {
        let a = seq(&[&[0.0, 1.0]]);
        let empty = CepstralSequence::from_rows(&[]);
        assert_eq!(dtw(&a, &empty, 0..=0), Err(MetricsError::EmptySequence));
        assert!(matches!(
            dtw(&a, &a, 0..=2),
            Err(MetricsError::BadDims { .. })
        ));
    }

    #[test]
    fn mcd_single_frame_closed_form() {
        let a = seq(&[&[5.0, 0.0, 0.0]]);
        let b = seq(&[&[5.0, 1.0, 0.0]]);
        let cfg = McdConfig {
            order: 2,
            ..McdConfig::default()
        };
        let v = mcd_from_cepstra(&a, &b, &cfg).unwrap();
        let expected = 10.0 / core::f64::consts::LN_10 * core::f64::consts::SQRT_2;
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 6.1418515).abs() < 1e-6);
        assert_eq!(mcd_from_cepstra(&a, &a, &cfg).unwrap(), 0.0);
        // c_0 is ignored unless requested.
        let c = seq(&[&[9.0, 0.0, 0.0]]);
        assert_eq!(mcd_from_cepstra(&a, &c, &cfg).unwrap(), 0.0);
        let with_c0 = McdConfig {
            include_c0: true,
            ..cfg
        };
        assert!((mcd_from_cepstra(&a, &c, &with_c0).unwrap() - 4.0 * expected).abs() < 1e-12);
    }

    fn voiced(seconds: f64, rate: u32) -> AudioClip {
        let n = (seconds * f64::from(rate)) as usize;
        AudioClip::new(
            (0..n)
                .map(|i| {
                    let t = i as f64 / f64::from(rate);
                    let env = 0.5 + 0.5 * libm::sin(2.0 * PI * 3.0 * t);
                    0.3 * env
                        * (libm::sin(2.0 * PI * 150.0 * t) + 0.5 * libm::sin(2.0 * PI * 450.0 * t))
                })
                .collect(),
            rate,
        )
    }

    #[test]
    fn mcd_grows_as_snr_falls() {
        let params = FeatureParams {
            sample_rate_hz: 16000,
            ..FeatureParams::default()
        };
        let cfg = McdConfig::default();
        let clean = voiced(1.0, 16000);
        assert_eq!(mcd_dtw(&clean, &clean, &params, &cfg).unwrap(), 0.0);
        let scores: Vec<f64> = [10.0, 20.0, 40.0]
            .iter()
            .map(|&snr| {
                let noisy = add_wgn(&clean, snr, 1).unwrap().clip;
                mcd_dtw(&clean, &noisy, &params, &cfg).unwrap()
            })
            .collect();
        assert!(scores[2] > 0.0);
        assert!(scores[0] > scores[1] && scores[1] > scores[2], "{scores:?}");
    }

    #[test]
    fn leading_silence_only_dilutes_the_mean() {
        let mut rng = CounterRng::new(2);
        let cfg = McdConfig::default();
        let silent = [-23.0; 13];
        for _ in 0..20 {
            let a = random_seq(&mut rng, 20, 13);
            let b = random_seq(&mut rng, 20, 13);
            let (mut a2, mut b2) = (a.clone(), b.clone());
            a2.frames.prepend_rows(&silent, 5);
            b2.frames.prepend_rows(&silent, 5);

            // Distortion summed along the path is unchanged up to two frame
            // pairs at the junction with the silence.
            let sum = |x: &CepstralSequence, y: &CepstralSequence| {
                let len = dtw(x, y, cfg.dims()).unwrap().path_length() as f64;
                mcd_from_cepstra(x, y, &cfg).unwrap() * len
            };
            let max_pair = (0..a.n_frames())
                .flat_map(|i| (0..b.n_frames()).map(move |j| (i, j)))
                .map(|(i, j)| {
                    MCD_SCALE
                        * libm::sqrt(frame_cost(a.frames.row(i), b.frames.row(j), &cfg.dims()))
                })
                .fold(0.0, f64::max);
            assert!((sum(&a2, &b2) - sum(&a, &b)).abs() <= 2.0 * max_pair);
            assert!(
                dtw(&a2, &b2, cfg.dims()).unwrap().total_cost
                    <= dtw(&a, &b, cfg.dims()).unwrap().total_cost + 1e-9
            );
        }
    }

    #[test]
    fn cosine_basics() {
        let a = EmbeddingVector(vec![1.0, 2.0, -0.5]);
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        let neg = EmbeddingVector(a.0.iter().map(|v| -v).collect());
        assert!((cosine_similarity(&a, &neg).unwrap() + 1.0).abs() < 1e-15);
        let x = EmbeddingVector(vec![1.0, 0.0]);
        let y = EmbeddingVector(vec![0.0, 3.0]);
        assert_eq!(cosine_similarity(&x, &y).unwrap(), 0.0);
        assert_eq!(
            cosine_similarity(&x, &EmbeddingVector(vec![0.0, 0.0])),
            Err(MetricsError::ZeroVector)
        );
        assert_eq!(
            cosine_similarity(&x, &a),
            Err(MetricsError::DimensionMismatch(2, 3))
        );
    }

    #[test]
    fn cosine_is_scale_invariant() {
        let mut rng = CounterRng::new(4);
        for _ in 0..100 {
            let a = EmbeddingVector((0..192).map(|_| rng.normal()).collect());
            let b = EmbeddingVector((0..192).map(|_| rng.normal()).collect());
            let lambda = libm::pow(2.0, rng.uniform(-8.0, 8.0).round());
            let scaled = EmbeddingVector(a.0.iter().map(|v| v * lambda).collect());
            assert_eq!(
                cosine_similarity(&scaled, &b).unwrap(),
                cosine_similarity(&a, &b).unwrap()
            );
        }
    }

    #[test]
    fn aggregate_examples() {
        let s = aggregate(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(s.mean, 3.0);
        assert!((s.std_dev - 1.5811).abs() < 1e-4);
        assert!((s.ci95_halfwidth - 1.386).abs() < 1e-3);
        let c = aggregate(&[4.2; 10]).unwrap();
        assert_eq!((c.mean, c.ci95_halfwidth), (4.2, 0.0));
        assert_eq!(aggregate(&[1.0]), Err(MetricsError::TooFewItems(1)));
        let row = Summary {
            n: 100,
            mean: 50.62,
            std_dev: 4.0,
            ci95_halfwidth: 0.784,
        };
        assert_eq!(row.display(1), "50.6 ± 0.8");
    }

    #[test]
    fn duplicated_data_shrinks_halfwidth() {
        let mut rng = CounterRng::new(6);
        let x: Vec<f64> = (0..40).map(|_| rng.uniform(30.0, 70.0)).collect();
        let doubled = [x.clone(), x.clone()].concat();
        let (a, b) = (aggregate(&x).unwrap(), aggregate(&doubled).unwrap());
        let n = x.len() as f64;
        let exact = a.ci95_halfwidth * libm::sqrt((n - 1.0) / (2.0 * n - 1.0));
        assert!((b.ci95_halfwidth - exact).abs() < 1e-9);
        assert!(
            (b.ci95_halfwidth - a.ci95_halfwidth / core::f64::consts::SQRT_2).abs()
                < 0.02 * a.ci95_halfwidth
        );
    }

    #[test]
    fn evaluate_items_failure_policy() {
        let ids = |n: usize| (0..n).map(|i| format!("i{i}")).collect::<Vec<_>>();
        let r = evaluate_items(Metric::Mcd, ids(4), |id| {
            if id == "i0" {
                Err("unreadable")
            } else {
                Ok(1.0)
            }
        })
        .unwrap();
        assert_eq!(r.summary.n, 3);
        assert_eq!(r.failures.len(), 1);
        let err = evaluate_items(Metric::Mcd, ids(4), |id| {
            if id < "i2" {
                Err("unreadable")
            } else {
                Ok(1.0)
            }
        });
        assert_eq!(
            err,
            Err(MetricsError::AllItemsFailed {
                failed: 2,
                total: 4
            })
        );
    }
}
