//! `eval` over a pairs list and Table-style `report` rendering.

use std::path::{Path, PathBuf};

use lrtts_core::metrics::{
    cosine_similarity, evaluate_items, mcd_dtw, EmbeddingVector, EvalReport, McdConfig, Metric,
};
use lrtts_core::FeatureParams;
use rayon::prelude::*;

use crate::error::{io_err, Error, Result};
use crate::formats::load_matrix;
use crate::fsutil::parent_dir;
use crate::wav::load_wav;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    pub id: String,
    pub reference: PathBuf,
    pub synthesized: PathBuf,
}

/// `id<TAB>reference<TAB>synthesized` per line; relative paths resolve
/// against the list's directory.
pub fn load_pairs(path: &Path) -> Result<Vec<EvalPair>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let base = parent_dir(path);
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "expected id, reference and synthesized paths".into(),
            });
        }
        pairs.push(EvalPair {
            id: f[0].to_string(),
            reference: base.join(f[1]),
            synthesized: base.join(f[2]),
        });
    }
    Ok(pairs)
}

fn load_embedding(path: &Path) -> Result<EmbeddingVector> {
    Ok(EmbeddingVector(load_matrix(path)?.as_flat().to_vec()))
}

fn score(metric: Metric, pair: &EvalPair, params: &FeatureParams, mcd: &McdConfig) -> Result<f64> {
    match metric {
        Metric::Mcd => Ok(mcd_dtw(
            &load_wav(&pair.reference)?,
            &load_wav(&pair.synthesized)?,
            params,
            mcd,
        )?),
        Metric::CosSim => Ok(cosine_similarity(
            &load_embedding(&pair.reference)?,
            &load_embedding(&pair.synthesized)?,
        )?),
    }
}

/// Scores pairs in parallel; failures are listed in the report and
/// excluded from the summary.
pub fn evaluate_pairs(
    metric: Metric,
    pairs: &[EvalPair],
    params: &FeatureParams,
    mcd: &McdConfig,
) -> Result<EvalReport> {
    let scores: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|p| score(metric, p, params, mcd))
        .collect();
    let mut scores = scores.into_iter();
    Ok(evaluate_items(
        metric,
        pairs.iter().map(|p| p.id.clone()),
        |_| scores.next().expect("one score per pair"),
    )?)
}

fn metric_label(metric: Metric) -> &'static str {
    match metric {
        Metric::Mcd => "MCD-DTW",
        Metric::CosSim => "cos-sim",
    }
}

/// One row per report: label, metric, n and `mean ± halfwidth`.
pub fn render_table(rows: &[(String, EvalReport)]) -> String {
    let width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(5);
    let mut out = format!(
        "{:<width$}  {:<8}  {:>4}  {}\n",
        "model", "metric", "n", "mean ± 95% CI"
    );
    for (label, r) in rows {
        let s = &r.summary;
        let cell = match r.metric {
            Metric::Mcd => format!("{:.1} ± {:.1}", s.mean, s.ci95_halfwidth),
            Metric::CosSim => format!("{:.2} ± {:.3}", s.mean, s.ci95_halfwidth),
        };
        out.push_str(&format!(
            "{label:<width$}  {:<8}  {:>4}  {cell}\n",
            metric_label(r.metric),
            s.n
        ));
    }
    out
}
