//! Exemplar-defined topics and query scoring/ranking against them.

mod strategy;

pub use strategy::{
    Calibration, ScoreOutcome, ScoringConfig, ScoringStrategy, StrategyRegistry, Unweighted,
    Weighted, DEFAULT_W, UNWEIGHTED, WEIGHTED,
};

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::SentenceRecord;
use crate::embeddings::{l2_norm, normalize, AlignedView, EmbeddingSet};
use crate::error::{Error, Result};
use crate::simcore::{percentile, unit_dot, PairwisePool};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub record: SentenceRecord,
    /// Unit length.
    pub vector: Vec<f32>,
}

/// A named category defined by N >= 1 exemplars of one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TopicRepr")]
pub struct Topic {
    name: String,
    dim: usize,
    exemplars: Vec<Exemplar>,
}

#[derive(Deserialize)]
struct TopicRepr {
    name: String,
    #[allow(dead_code)]
    dim: usize,
    exemplars: Vec<Exemplar>,
}

impl TryFrom<TopicRepr> for Topic {
    type Error = Error;

    fn try_from(r: TopicRepr) -> Result<Self> {
        // stored vectors are already unit length; keep their bits
        build_topic(
            r.name,
            r.exemplars.into_iter().map(|e| (e.record, e.vector)).collect(),
            false,
        )
    }
}

impl Topic {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn exemplars(&self) -> &[Exemplar] {
        &self.exemplars
    }

    /// N.
    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }

    pub fn exemplar_ids(&self) -> HashSet<&str> {
        self.exemplars.iter().map(|e| e.record.id.as_str()).collect()
    }

    /// cos(q, s_i) for every exemplar, in exemplar order.
    pub fn cosines(&self, q: &[f32]) -> Result<Vec<f64>> {
        if q.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: q.len(),
            });
        }
        Ok(self
            .exemplars
            .iter()
            .map(|e| unit_dot(q, &e.vector))
            .collect())
    }
}

/// Builds a topic, normalizing each exemplar vector.
pub fn define_topic(
    name: impl Into<String>,
    exemplars: Vec<(SentenceRecord, Vec<f32>)>,
) -> Result<Topic> {
    build_topic(name.into(), exemplars, true)
}

/// Builds a topic from exemplar records whose vectors are looked up by id.
pub fn topic_from_set(
    name: impl Into<String>,
    records: Vec<SentenceRecord>,
    set: &EmbeddingSet,
) -> Result<Topic> {
    let exemplars = records
        .into_iter()
        .map(|r| {
            let i = set.position(&r.id).ok_or_else(|| Error::UnknownId(r.id.clone()))?;
            Ok((r, set.raw(i).to_vec()))
        })
        .collect::<Result<Vec<_>>>()?;
    define_topic(name, exemplars)
}

const UNIT_TOLERANCE: f64 = 1e-5;

fn build_topic(
    name: String,
    exemplars: Vec<(SentenceRecord, Vec<f32>)>,
    renormalize: bool,
) -> Result<Topic> {
    if name.trim().is_empty() {
        return Err(Error::InvalidName(name));
    }
    let Some(dim) = exemplars.first().map(|(_, v)| v.len()) else {
        return Err(Error::NoExemplars(name));
    };
    let mut out = Vec::with_capacity(exemplars.len());
    for (position, (record, vector)) in exemplars.into_iter().enumerate() {
        if vector.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                found: vector.len(),
            });
        }
        if record.text.trim().is_empty() {
            return Err(Error::EmptyText { position });
        }
        let invalid = |e| Error::InvalidRecord {
            record: position,
            source: Box::new(e),
        };
        let vector = if renormalize {
            normalize(&vector).map_err(invalid)?
        } else {
            if (l2_norm(&vector) - 1.0).abs() > UNIT_TOLERANCE {
                return Err(invalid(Error::InvalidConfig("exemplar vector is not unit length".into())));
            }
            vector
        };
        out.push(Exemplar { record, vector });
    }
    Ok(Topic {
        name,
        dim,
        exemplars: out,
    })
}

/// One query's score against a topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// 1-based position after ranking; 0 before.
    pub rank: usize,
    pub sentence_id: String,
    pub score: f64,
    pub per_exemplar: Vec<f64>,
    pub hits: Vec<bool>,
}

/// A match result as written to ranking files, tagged with what produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub topic: String,
    pub config_tag: String,
    #[serde(flatten)]
    pub result: MatchResult,
}

fn score_query(
    strategy: &dyn ScoringStrategy,
    sentence_id: &str,
    q: &[f32],
    topic: &Topic,
    cfg: &ScoringConfig,
) -> Result<MatchResult> {
    let per_exemplar = topic.cosines(q)?;
    let ScoreOutcome { score, hits } = strategy.score(&per_exemplar, cfg);
    Ok(MatchResult {
        rank: 0,
        sentence_id: sentence_id.to_string(),
        score,
        per_exemplar,
        hits,
    })
}

/// Label for a ranking: the embedding source and the scoring config, e.g.
/// `toy-wide/unweighted`.
pub fn ranking_tag(source_tag: &str, cfg: &ScoringConfig) -> String {
    format!("{source_tag}/{}", cfg.tag())
}

/// Mean cosine to the exemplars.
pub fn unweighted_score(q: &[f32], topic: &Topic) -> Result<MatchResult> {
    score_query(&Unweighted, "", q, topic, &ScoringConfig::unweighted())
}

/// Threshold-boosted mean; `cfg` must be a valid weighted config.
pub fn weighted_score(q: &[f32], topic: &Topic, cfg: &ScoringConfig) -> Result<MatchResult> {
    if cfg.mode != WEIGHTED {
        return Err(Error::InvalidConfig(format!(
            "expected mode {WEIGHTED:?}, got {:?}",
            cfg.mode
        )));
    }
    Weighted.validate(cfg)?;
    score_query(&Weighted, "", q, topic, cfg)
}

/// Threshold at percentile `p` of the pool, with the pool's provenance.
pub fn calibrate_threshold(pool: &PairwisePool, p: f64) -> Result<Calibration> {
    if pool.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(Calibration {
        threshold: percentile(&pool.scores, p)?,
        percentile: p,
        source_tag: pool.source_tag.clone(),
        pair_count: pool.pair_count,
        vector_count: pool.vector_count,
        cap: pool.cap,
        seed: pool.seed,
        sampled: pool.sampled,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RankOptions {
    /// Keep candidates whose id equals an exemplar's id.
    pub include_exemplars: bool,
}

/// Scores every aligned candidate and sorts by score descending, ties by
/// sentence id ascending. Ranks are 1..=n.
pub fn rank(
    view: &AlignedView<'_>,
    topic: &Topic,
    cfg: &ScoringConfig,
    strategies: &StrategyRegistry,
    opts: RankOptions,
) -> Result<Vec<MatchResult>> {
    if view.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    if view.dim() != topic.dim() {
        return Err(Error::DimMismatch {
            expected: topic.dim(),
            found: view.dim(),
        });
    }
    let strategy = strategies.resolve(cfg)?;
    let exemplar_ids = topic.exemplar_ids();
    let mut results: Vec<MatchResult> = (0..view.len())
        .into_par_iter()
        .map(|row| view.get(row))
        .filter(|(record, _)| opts.include_exemplars || !exemplar_ids.contains(record.id.as_str()))
        .map(|(record, q)| score_query(strategy, &record.id, q, topic, cfg))
        .collect::<Result<_>>()?;
    sort_ranked(&mut results);
    Ok(results)
}

/// Canonical order plus dense 1-based ranks.
pub fn sort_ranked(results: &mut [MatchResult]) {
    results.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.sentence_id.cmp(&b.sentence_id))
    });
    for (i, r) in results.iter_mut().enumerate() {
        r.rank = i + 1;
    }
}

/// First `min(k, len)` results.
pub fn top_k(ranked: &[MatchResult], k: usize) -> &[MatchResult] {
    &ranked[..k.min(ranked.len())]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Corpus;
    use crate::embeddings::align;

    fn topic(vectors: &[Vec<f32>]) -> Topic {
        define_topic(
            "T",
            vectors
                .iter()
                .enumerate()
                .map(|(i, v)| (SentenceRecord::new(format!("ex{i}"), "exemplar"), v.clone()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn topic_from_set_looks_up_by_id() {
        let set = EmbeddingSet::from_vectors(
            "s",
            2,
            vec![("a".to_string(), vec![3.0, 4.0]), ("b".to_string(), vec![0.0, 2.0])],
        )
        .unwrap();
        let t = topic_from_set("T", vec![SentenceRecord::new("b", "bee")], &set).unwrap();
        assert_eq!(t.exemplars()[0].vector, [0.0, 1.0]);
        assert!(matches!(
            topic_from_set("T", vec![SentenceRecord::new("zz", "x")], &set),
            Err(Error::UnknownId(id)) if id == "zz"
        ));
    }

    #[test]
    fn define_topic_sizes_and_errors() {
        let t = topic(&vec![vec![1.0, 0.0]; 10]);
        assert_eq!(t.len(), 10);
        assert!(matches!(define_topic("X", vec![]), Err(Error::NoExemplars(n)) if n == "X"));
        assert!(matches!(
            define_topic(
                "X",
                vec![
                    (SentenceRecord::new("a", "a"), vec![1.0, 0.0]),
                    (SentenceRecord::new("b", "b"), vec![1.0])
                ]
            ),
            Err(Error::DimMismatch { .. })
        ));
        assert!(matches!(
            define_topic("X", vec![(SentenceRecord::new("a", " "), vec![1.0])]),
            Err(Error::EmptyText { position: 0 })
        ));
    }

    #[test]
    fn unweighted_examples() {
        let t = topic(&[vec![0.6, 0.8]]);
        assert!((unweighted_score(&[0.6, 0.8], &t).unwrap().score - 1.0).abs() < 1e-6);

        let t = topic(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        let r = unweighted_score(&[0.0, 0.0, 1.0], &t).unwrap();
        assert_eq!(r.score, 0.0);
        assert_eq!(r.hits, vec![false, false]);
        assert!(matches!(
            unweighted_score(&[1.0, 0.0], &t),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn unweighted_mean_of_given_cosines() {
        // exemplars at angles whose cosine with e1 is 0.5, 0.7, 0.9
        let ex: Vec<Vec<f32>> = [0.5f64, 0.7, 0.9]
            .iter()
            .map(|&c| vec![c as f32, (1.0 - c * c).sqrt() as f32])
            .collect();
        let r = unweighted_score(&[1.0, 0.0], &topic(&ex)).unwrap();
        assert!((r.score - 0.7).abs() < 1e-6);
    }

    #[test]
    fn weighted_score_requires_weighted_config() {
        let t = topic(&[vec![1.0, 0.0]]);
        assert!(weighted_score(&[1.0, 0.0], &t, &ScoringConfig::unweighted()).is_err());
        let mut cfg = ScoringConfig::weighted(0.5, 4.0);
        cfg.threshold = None;
        assert!(weighted_score(&[1.0, 0.0], &t, &cfg).is_err());
        let r = weighted_score(&[1.0, 0.0], &t, &ScoringConfig::weighted(0.5, 4.0)).unwrap();
        assert_eq!(r.score, 4.0);
        assert_eq!(r.hits, vec![true]);
    }

    fn view_fixture() -> (Corpus, EmbeddingSet) {
        let corpus = Corpus::from_records(
            "c",
            vec![
                SentenceRecord::new("b", "far"),
                SentenceRecord::new("a", "near"),
                SentenceRecord::new("c", "tied with a"),
                SentenceRecord::new("ex0", "the exemplar itself"),
            ],
        )
        .unwrap();
        let set = EmbeddingSet::from_vectors(
            "t",
            2,
            vec![
                ("a".to_string(), vec![0.9, 0.1]),
                ("b".to_string(), vec![0.1, 0.9]),
                ("c".to_string(), vec![0.9, 0.1]),
                ("ex0".to_string(), vec![1.0, 0.0]),
            ],
        )
        .unwrap();
        (corpus, set)
    }

    #[test]
    fn rank_orders_and_breaks_ties_by_id() {
        let (corpus, set) = view_fixture();
        let view = align(&corpus, &set).unwrap();
        let t = topic(&[vec![1.0, 0.0]]);
        let reg = StrategyRegistry::builtin();
        let ranked = rank(&view, &t, &ScoringConfig::unweighted(), &reg, RankOptions::default()).unwrap();
        let ids: Vec<&str> = ranked.iter().map(|r| r.sentence_id.as_str()).collect();
        assert_eq!(ids, ["a", "c", "b"]);
        assert_eq!(ranked.iter().map(|r| r.rank).collect::<Vec<_>>(), [1, 2, 3]);

        let with = rank(
            &view,
            &t,
            &ScoringConfig::unweighted(),
            &reg,
            RankOptions {
                include_exemplars: true,
            },
        )
        .unwrap();
        assert_eq!(with[0].sentence_id, "ex0");
        assert_eq!(with.len(), 4);
    }

    #[test]
    fn rank_dim_mismatch() {
        let (corpus, set) = view_fixture();
        let view = align(&corpus, &set).unwrap();
        let t = topic(&[vec![1.0, 0.0, 0.0]]);
        assert!(matches!(
            rank(&view, &t, &ScoringConfig::unweighted(), &StrategyRegistry::builtin(), RankOptions::default()),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn top_k_truncates() {
        let results: Vec<MatchResult> = (0..10)
            .map(|i| MatchResult {
                rank: i + 1,
                sentence_id: format!("s{i}"),
                score: 1.0 - i as f64 / 10.0,
                per_exemplar: vec![],
                hits: vec![],
            })
            .collect();
        assert_eq!(top_k(&results, 50).len(), 10);
        assert_eq!(top_k(&results, 3).len(), 3);
        assert_eq!(top_k(&results, 1)[0].sentence_id, "s0");
    }

    #[test]
    fn calibrate_uses_nearest_rank() {
        let pool = PairwisePool {
            source_tag: "t".into(),
            pair_count: 10,
            vector_count: 5,
            cap: None,
            seed: 3,
            sampled: false,
            scores: (1..=10).map(|i| i as f64 / 10.0).collect(),
        };
        let c = calibrate_threshold(&pool, 90.0).unwrap();
        assert_eq!(c.threshold, 0.9);
        assert_eq!((c.pair_count, c.seed, c.source_tag.as_str()), (10, 3, "t"));
        let constant = PairwisePool {
            scores: vec![0.6; 7],
            pair_count: 7,
            ..pool.clone()
        };
        assert_eq!(calibrate_threshold(&constant, 90.0).unwrap().threshold, 0.6);
        let empty = PairwisePool {
            scores: vec![],
            pair_count: 0,
            ..pool
        };
        assert!(calibrate_threshold(&empty, 90.0).is_err());
    }

    #[test]
    fn topic_serde_round_trip_validates() {
        let t = topic(&[vec![3.0, 4.0]]);
        let json = serde_json::to_string(&t).unwrap();
        let back: Topic = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        let bad = r#"{"name":"x","dim":2,"exemplars":[]}"#;
        assert!(serde_json::from_str::<Topic>(bad).is_err());
    }

    #[test]
    fn match_record_flattens() {
        let rec = MatchRecord {
            topic: "Pricing".into(),
            config_tag: "toy/unweighted".into(),
            result: MatchResult {
                rank: 1,
                sentence_id: "q1".into(),
                score: 0.5,
                per_exemplar: vec![0.5],
                hits: vec![false],
            },
        };
        let line = serde_json::to_string(&rec).unwrap();
        assert_eq!(
            line,
            r#"{"topic":"Pricing","config_tag":"toy/unweighted","rank":1,"sentence_id":"q1","score":0.5,"per_exemplar":[0.5],"hits":[false]}"#
        );
        assert_eq!(serde_json::from_str::<MatchRecord>(&line).unwrap(), rec);
    }
}
