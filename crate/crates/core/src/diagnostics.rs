//! Anisotropy diagnostics: pairwise-similarity distribution summaries and
//! small labelled similarity heatmaps.
//!
//! Both reports are plain serializable data meant for external plotting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::SentenceRecord;
use crate::error::{Error, Result};
use crate::simcore::{percentile, similarity_matrix, PairwisePool};

pub const DEFAULT_BINS: usize = 100;
pub const SUMMARY_QUANTILES: [u32; 9] = [1, 5, 10, 25, 50, 75, 90, 95, 99];
pub const HEATMAP_MIN: usize = 2;
pub const HEATMAP_MAX: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_lower: f64,
    pub bin_upper: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub source_tag: String,
    pub pair_count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// Nearest-rank quantiles keyed by percent.
    pub quantiles: BTreeMap<u32, f64>,
    /// Equal-width bins partitioning [-1, 1]; the last bin includes 1.
    pub histogram: Vec<HistogramBin>,
}

impl DistributionSummary {
    /// Width of the 10-90 interquantile range.
    pub fn spread_10_90(&self) -> f64 {
        self.quantiles[&90] - self.quantiles[&10]
    }
}

pub fn distribution(pool: &PairwisePool, bins: usize) -> Result<DistributionSummary> {
    let scores = &pool.scores;
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    if bins == 0 {
        return Err(Error::InvalidConfig("bins must be positive".into()));
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    let (min, max) = scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));

    let mut sorted = scores.clone();
    sorted.sort_unstable_by(f64::total_cmp);
    let quantiles = SUMMARY_QUANTILES
        .iter()
        .map(|&q| (q, percentile_sorted(&sorted, q)))
        .collect::<BTreeMap<_, _>>();
    debug_assert_eq!(quantiles[&90], percentile(scores, 90.0)?);

    let width = 2.0 / bins as f64;
    let mut counts = vec![0u64; bins];
    for &s in scores {
        let idx = ((s + 1.0) / width).floor();
        let idx = (idx.max(0.0) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let histogram = counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            bin_lower: -1.0 + i as f64 * width,
            bin_upper: if i + 1 == bins {
                1.0
            } else {
                -1.0 + (i + 1) as f64 * width
            },
            count,
        })
        .collect();

    Ok(DistributionSummary {
        source_tag: pool.source_tag.clone(),
        pair_count: pool.pair_count,
        mean,
        std: var.sqrt(),
        min,
        max,
        quantiles,
        histogram,
    })
}

// same rule as simcore::percentile, on an already sorted slice
fn percentile_sorted(sorted: &[f64], p: u32) -> f64 {
    let n = sorted.len();
    let rank = (p as usize * n).div_ceil(100).clamp(1, n);
    sorted[rank - 1]
}

/// Difference in 10-90 interquantile width; positive when `a` is wider.
pub fn anisotropy_gap(a: &DistributionSummary, b: &DistributionSummary) -> f64 {
    a.spread_10_90() - b.spread_10_90()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapReport {
    pub source_tag: String,
    pub ids: Vec<String>,
    pub labels: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
}

/// Pairwise cosine matrix of 2..=64 sentences, labelled with their text.
pub fn heatmap(source_tag: &str, sentences: &[(&SentenceRecord, &[f32])]) -> Result<HeatmapReport> {
    let count = sentences.len();
    if !(HEATMAP_MIN..=HEATMAP_MAX).contains(&count) {
        return Err(Error::CountOutOfRange {
            count,
            min: HEATMAP_MIN,
            max: HEATMAP_MAX,
        });
    }
    let vectors: Vec<&[f32]> = sentences.iter().map(|(_, v)| *v).collect();
    Ok(HeatmapReport {
        source_tag: source_tag.to_string(),
        ids: sentences.iter().map(|(r, _)| r.id.clone()).collect(),
        labels: sentences.iter().map(|(r, _)| r.text.clone()).collect(),
        matrix: similarity_matrix(&vectors)?,
    })
}
