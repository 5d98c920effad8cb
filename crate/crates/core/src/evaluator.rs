//! Ranking evaluation against relevance labels: precision at K, hit rate,
//! and hit rate at a target precision.
//!
//! `hr_at_precision` takes the deepest rank cutoff whose prefix precision still
//! meets the target and counts every item above it as a predicted positive.
//! Unlabeled items inside an evaluated prefix are an error, never assumed
//! irrelevant.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcher::MatchResult;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalLabel {
    pub sentence_id: String,
    #[serde(rename = "topic")]
    pub topic_name: String,
    pub relevant: bool,
}

#[derive(Debug, Clone, Default)]
pub struct LabelSet {
    by_topic: HashMap<String, HashMap<String, bool>>,
}

impl LabelSet {
    pub fn from_labels(labels: impl IntoIterator<Item = EvalLabel>) -> Result<Self> {
        let mut by_topic: HashMap<String, HashMap<String, bool>> = HashMap::new();
        for l in labels {
            let topic = by_topic.entry(l.topic_name.clone()).or_default();
            if topic.insert(l.sentence_id.clone(), l.relevant).is_some() {
                return Err(Error::DuplicateLabel {
                    sentence_id: l.sentence_id,
                    topic: l.topic_name,
                });
            }
        }
        Ok(LabelSet { by_topic })
    }

    /// Newline-delimited `{"sentence_id", "topic", "relevant"}` objects.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut labels = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let malformed = |reason: String| Error::Malformed { line: i + 1, reason };
            let line = line.map_err(|e| malformed(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            labels.push(serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?);
        }
        Self::from_labels(labels)
    }

    pub fn for_topic(&self, topic: &str) -> TopicLabels<'_> {
        TopicLabels {
            labels: self.by_topic.get(topic),
        }
    }

    pub fn topics(&self) -> impl Iterator<Item = &str> {
        self.by_topic.keys().map(String::as_str)
    }
}

/// Labels of a single topic.
#[derive(Debug, Clone, Copy)]
pub struct TopicLabels<'a> {
    labels: Option<&'a HashMap<String, bool>>,
}

impl TopicLabels<'_> {
    pub fn relevance(&self, sentence_id: &str) -> Result<bool> {
        self.labels
            .and_then(|m| m.get(sentence_id).copied())
            .ok_or_else(|| Error::Unlabeled(sentence_id.to_string()))
    }
}

/// Count of relevant items among the first `k`.
pub fn relevant_in_top(ranked: &[MatchResult], labels: TopicLabels<'_>, k: usize) -> Result<usize> {
    if k == 0 || k > ranked.len() {
        return Err(Error::CutoffOutOfRange {
            k,
            len: ranked.len(),
        });
    }
    let mut count = 0;
    for r in &ranked[..k] {
        if labels.relevance(&r.sentence_id)? {
            count += 1;
        }
    }
    Ok(count)
}

pub fn precision_at_k(ranked: &[MatchResult], labels: TopicLabels<'_>, k: usize) -> Result<f64> {
    Ok(relevant_in_top(ranked, labels, k)? as f64 / k as f64)
}

/// Predicted positives over all samples.
pub fn hit_rate(predicted_positives: u64, total: u64) -> Result<f64> {
    if total == 0 {
        return Err(Error::InvalidHitRate("total must be positive".into()));
    }
    if predicted_positives > total {
        return Err(Error::InvalidHitRate(format!(
            "{predicted_positives} predicted positives exceed total {total}"
        )));
    }
    Ok(predicted_positives as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrAtPrecision {
    pub target: f64,
    pub hr: f64,
    /// Deepest cutoff with precision >= target; 0 when no prefix qualifies.
    pub cutoff_k: usize,
    pub total: usize,
}

/// Scans every prefix of a fully labelled ranking.
pub fn hr_at_precision(
    ranked: &[MatchResult],
    labels: TopicLabels<'_>,
    target: f64,
) -> Result<HrAtPrecision> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "target precision {target} outside (0, 1]"
        )));
    }
    if ranked.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut relevant = 0usize;
    let mut cutoff_k = 0usize;
    for (i, r) in ranked.iter().enumerate() {
        if labels.relevance(&r.sentence_id)? {
            relevant += 1;
        }
        let k = i + 1;
        if relevant as f64 / k as f64 >= target {
            cutoff_k = k;
        }
    }
    Ok(HrAtPrecision {
        target,
        hr: hit_rate(cutoff_k as u64, ranked.len() as u64)?,
        cutoff_k,
        total: ranked.len(),
    })
}

/// One ranked list and the configuration label it is reported under.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub config_tag: String,
    pub results: Vec<MatchResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub topic_name: String,
    pub config_tag: String,
    pub prec_at: BTreeMap<usize, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hr_at_precision: Option<HrAtPrecision>,
}

/// One report per ranking, in input order.
pub fn eval_report(
    rankings: &[Ranking],
    labels: &LabelSet,
    topic: &str,
    cutoffs: &[usize],
    target_precision: Option<f64>,
) -> Result<Vec<EvalReport>> {
    let topic_labels = labels.for_topic(topic);
    rankings
        .iter()
        .map(|ranking| {
            let prec_at = cutoffs
                .iter()
                .map(|&k| Ok((k, precision_at_k(&ranking.results, topic_labels, k)?)))
                .collect::<Result<BTreeMap<_, _>>>()?;
            let hr_at_precision = target_precision
                .map(|t| hr_at_precision(&ranking.results, topic_labels, t))
                .transpose()?;
            Ok(EvalReport {
                topic_name: topic.to_string(),
                config_tag: ranking.config_tag.clone(),
                prec_at,
                hr_at_precision,
            })
        })
        .collect()
}

/// Relative hit-rate improvement of `improved` over `base`, from the integer
/// cutoffs. `None` unless both rows have HR over the same total and the base
/// cutoff is positive.
pub fn hr_relative_gain(base: &EvalReport, improved: &EvalReport) -> Option<f64> {
    let (b, i) = (base.hr_at_precision?, improved.hr_at_precision?);
    if b.total != i.total || b.cutoff_k == 0 {
        return None;
    }
    Some((i.cutoff_k as f64 - b.cutoff_k as f64) / b.cutoff_k as f64)
}

/// Fixed-width text table, values to 4 decimal places.
pub fn render_table(reports: &[EvalReport]) -> String {
    let cutoffs: Vec<usize> = reports
        .iter()
        .flat_map(|r| r.prec_at.keys().copied())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let target = reports
        .iter()
        .find_map(|r| r.hr_at_precision.map(|h| h.target));

    let mut header = vec!["config".to_string()];
    header.extend(cutoffs.iter().map(|k| format!("Prec@{k}")));
    if let Some(t) = target {
        header.push(format!("HR@Prec={t}"));
    }
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let mut row = vec![r.config_tag.clone()];
            row.extend(
                cutoffs
                    .iter()
                    .map(|k| r.prec_at.get(k).map_or("-".into(), |p| format!("{p:.4}"))),
            );
            if target.is_some() {
                row.push(r.hr_at_precision.map_or("-".into(), |h| format!("{:.4}", h.hr)));
            }
            row
        })
        .collect();

    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            std::iter::once(&header)
                .chain(&rows)
                .map(|row| row[c].len())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for row in std::iter::once(&header).chain(&rows) {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, w))| {
                if c == 0 {
                    format!("{cell:<w$}")
                } else {
                    format!("{cell:>w$}")
                }
            })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}
