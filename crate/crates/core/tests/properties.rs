use std::collections::HashSet;

use proptest::prelude::*;
use qmatch_core::corpus::{corpus_stats, Corpus, SentenceRecord, StopWords};
use qmatch_core::embeddings::{
    align, normalize, read_binary, read_text, EmbeddingFormat, EmbeddingSet,
};
use qmatch_core::evaluator::{precision_at_k, hit_rate, EvalLabel, LabelSet};
use qmatch_core::matcher::{
    define_topic, rank, RankOptions, ScoringConfig, StrategyRegistry, Topic, MatchResult,
};
use qmatch_core::simcore::{cosine, pairwise_pool_of, percentile, similarity_matrix};

fn raw_vector(dim: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-10.0f32..10.0, dim)
        .prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f32>() > 1e-3)
}

fn unit_vectors(n: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f32>>> {
    prop::collection::vec(raw_vector(dim), n)
        .prop_map(|vs| vs.iter().map(|v| normalize(v).unwrap()).collect())
}

fn topic_of(vectors: &[Vec<f32>]) -> Topic {
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

fn corpus_with(n: usize) -> Corpus {
    Corpus::from_records(
        "c",
        (0..n)
            .map(|i| SentenceRecord::new(format!("q{i:03}"), "question"))
            .collect(),
    )
    .unwrap()
}

fn set_with(vectors: &[Vec<f32>]) -> EmbeddingSet {
    let dim = vectors[0].len();
    EmbeddingSet::from_vectors(
        "t",
        dim,
        vectors
            .iter()
            .enumerate()
            .map(|(i, v)| (format!("q{i:03}"), v.clone())),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalize_is_unit_and_idempotent(v in raw_vector(16)) {
        let u = normalize(&v).unwrap();
        let norm: f64 = u.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-6);
        let uu = normalize(&u).unwrap();
        for (a, b) in u.iter().zip(&uu) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn normalize_is_scale_invariant(v in raw_vector(12), c in 0.001f32..1000.0) {
        let scaled: Vec<f32> = v.iter().map(|x| x * c).collect();
        let a = normalize(&v).unwrap();
        let b = normalize(&scaled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn cosine_is_symmetric(vs in unit_vectors(2, 24)) {
        prop_assert_eq!(
            cosine(&vs[0], &vs[1]).unwrap().to_bits(),
            cosine(&vs[1], &vs[0]).unwrap().to_bits()
        );
    }

    #[test]
    fn matrix_symmetric_with_unit_diagonal(vs in unit_vectors(7, 10)) {
        let refs: Vec<&[f32]> = vs.iter().map(Vec::as_slice).collect();
        let m = similarity_matrix(&refs).unwrap();
        for i in 0..vs.len() {
            prop_assert!((m[i][i] - 1.0).abs() < 1e-6);
            for j in 0..vs.len() {
                prop_assert!((m[i][j] - m[j][i]).abs() <= 1e-12);
                prop_assert!((-1.0..=1.0).contains(&m[i][j]));
            }
        }
    }

    #[test]
    fn pool_equals_double_loop(n in 2usize..=50, seed in any::<u64>()) {
        let set = qmatch_core::synthetic::isotropic(n, 8, seed);
        let refs: Vec<&[f32]> = (0..n).map(|i| set.unit(i)).collect();
        let pool = pairwise_pool_of(&refs, "t", None, 0).unwrap();
        prop_assert_eq!(pool.pair_count, n * (n - 1) / 2);

        // independent oracle: raw vectors, explicit norms
        let mut oracle = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (set.raw(i), set.raw(j));
                let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
                let na: f64 = a.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
                let nb: f64 = b.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
                oracle.push(dot / (na * nb));
            }
        }
        let mut got = pool.scores.clone();
        got.sort_by(f64::total_cmp);
        oracle.sort_by(f64::total_cmp);
        for (g, o) in got.iter().zip(&oracle) {
            prop_assert!((g - o).abs() < 1e-6);
        }
    }

    #[test]
    fn percentile_matches_sorted_oracle(
        values in prop::collection::vec(-1.0f64..1.0, 1..300),
        p in 1u32..=100,
    ) {
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let rank = (p as usize * values.len()).div_ceil(100);
        prop_assert_eq!(percentile(&values, p as f64).unwrap(), sorted[rank - 1]);
        prop_assert_eq!(percentile(&values, 100.0).unwrap(), *sorted.last().unwrap());
        if p > 1 {
            prop_assert!(percentile(&values, (p - 1) as f64).unwrap() <= percentile(&values, p as f64).unwrap());
        }
    }

    #[test]
    fn ranking_is_a_stable_permutation(
        queries in unit_vectors(30, 6),
        exemplars in unit_vectors(3, 6),
        t in 0.3f64..0.9,
    ) {
        let corpus = corpus_with(30);
        let set = set_with(&queries);
        let view = align(&corpus, &set).unwrap();
        let topic = topic_of(&exemplars);
        let reg = StrategyRegistry::builtin();
        let cfg = ScoringConfig::weighted(t, 4.0);
        let a = rank(&view, &topic, &cfg, &reg, RankOptions::default()).unwrap();
        let b = rank(&view, &topic, &cfg, &reg, RankOptions::default()).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.iter().map(|r| r.rank).collect::<Vec<_>>(), (1..=30).collect::<Vec<_>>());
        let ids: HashSet<&str> = a.iter().map(|r| r.sentence_id.as_str()).collect();
        prop_assert_eq!(ids.len(), 30);
        for w in a.windows(2) {
            prop_assert!(w[0].score > w[1].score
                || (w[0].score == w[1].score && w[0].sentence_id < w[1].sentence_id));
        }
    }

    #[test]
    fn ranking_unchanged_by_power_of_two_scaling(
        raw_q in prop::collection::vec(raw_vector(6), 20),
        raw_e in prop::collection::vec(raw_vector(6), 3),
        shifts in prop::collection::vec(-8i32..8, 23),
    ) {
        let scale = |v: &Vec<f32>, s: i32| v.iter().map(|x| x * 2f32.powi(s)).collect::<Vec<_>>();
        let corpus = corpus_with(20);
        let reg = StrategyRegistry::builtin();
        let order = |qs: Vec<Vec<f32>>, es: Vec<Vec<f32>>| {
            let set = set_with(&qs);
            let view = align(&corpus, &set).unwrap();
            rank(&view, &topic_of(&es), &ScoringConfig::unweighted(), &reg, RankOptions::default())
                .unwrap()
                .into_iter()
                .map(|r| r.sentence_id)
                .collect::<Vec<_>>()
        };
        let base = order(raw_q.clone(), raw_e.clone());
        let scaled = order(
            raw_q.iter().zip(&shifts).map(|(v, &s)| scale(v, s)).collect(),
            raw_e.iter().zip(&shifts[20..]).map(|(v, &s)| scale(v, s)).collect(),
        );
        prop_assert_eq!(base, scaled);
    }

    #[test]
    fn ranking_order_survives_arbitrary_positive_scaling(
        raw_q in prop::collection::vec(raw_vector(6), 20),
        raw_e in prop::collection::vec(raw_vector(6), 3),
        c in 0.01f32..100.0,
    ) {
        let corpus = corpus_with(20);
        let reg = StrategyRegistry::builtin();
        let scores = |qs: &[Vec<f32>], es: &[Vec<f32>]| {
            let set = set_with(qs);
            let view = align(&corpus, &set).unwrap();
            rank(&view, &topic_of(es), &ScoringConfig::unweighted(), &reg, RankOptions::default()).unwrap()
        };
        let base = scores(&raw_q, &raw_e);
        let scaled_q: Vec<Vec<f32>> = raw_q.iter().map(|v| v.iter().map(|x| x * c).collect()).collect();
        let scaled = scores(&scaled_q, &raw_e);
        // pairs separated by more than rounding noise keep their order
        let pos = |rs: &[MatchResult], id: &str| rs.iter().position(|r| r.sentence_id == id).unwrap();
        for a in &base {
            for b in &base {
                if a.score - b.score > 1e-5 {
                    prop_assert!(pos(&scaled, &a.sentence_id) < pos(&scaled, &b.sentence_id));
                }
            }
        }
    }

    #[test]
    fn text_round_trip_within_tolerance(vs in prop::collection::vec(raw_vector(5), 1..20)) {
        let set = EmbeddingSet::from_vectors("tag", 5, vs.iter().enumerate().map(|(i, v)| (format!("id{i}"), v.clone()))).unwrap();
        let back = read_text(set.to_bytes(EmbeddingFormat::Text).unwrap().as_slice()).unwrap();
        for i in 0..set.len() {
            for (a, b) in set.raw(i).iter().zip(back.raw(i)) {
                prop_assert!((a - b).abs() <= 1e-6);
            }
            let u: f64 = back.unit(i).iter().map(|&x| x as f64 * x as f64).sum();
            prop_assert!((u - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn binary_round_trip_is_bit_exact(vs in prop::collection::vec(raw_vector(5), 1..20)) {
        let set = EmbeddingSet::from_vectors("tag", 5, vs.iter().enumerate().map(|(i, v)| (format!("id-\u{e9}{i}"), v.clone()))).unwrap();
        let bytes = set.to_bytes(EmbeddingFormat::Binary).unwrap();
        let back = read_binary(&bytes, "tag").unwrap();
        prop_assert_eq!(back.ids(), set.ids());
        for i in 0..set.len() {
            let a: Vec<u32> = set.raw(i).iter().map(|x| x.to_bits()).collect();
            let b: Vec<u32> = back.raw(i).iter().map(|x| x.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
        prop_assert_eq!(back.to_bytes(EmbeddingFormat::Binary).unwrap(), bytes);
    }

    #[test]
    fn precision_equals_count_oracle(
        relevant in prop::collection::vec(any::<bool>(), 1..200),
        k_frac in 0.0f64..1.0,
    ) {
        let n = relevant.len();
        let ranked: Vec<MatchResult> = (0..n).map(|i| MatchResult {
            rank: i + 1, sentence_id: format!("s{i}"), score: 0.0, per_exemplar: vec![], hits: vec![],
        }).collect();
        let labels = LabelSet::from_labels(relevant.iter().enumerate().map(|(i, &r)| EvalLabel {
            sentence_id: format!("s{i}"), topic_name: "P".into(), relevant: r,
        })).unwrap();
        let k = 1 + ((n - 1) as f64 * k_frac) as usize;
        let count = relevant[..k].iter().filter(|&&r| r).count();
        prop_assert_eq!(precision_at_k(&ranked, labels.for_topic("P"), k).unwrap(), count as f64 / k as f64);

        // labels outside the top k never change the value
        let mut flipped = relevant.clone();
        for r in flipped[k..].iter_mut() { *r = !*r; }
        let labels2 = LabelSet::from_labels(flipped.iter().enumerate().map(|(i, &r)| EvalLabel {
            sentence_id: format!("s{i}"), topic_name: "P".into(), relevant: r,
        })).unwrap();
        prop_assert_eq!(
            precision_at_k(&ranked, labels.for_topic("P"), k).unwrap(),
            precision_at_k(&ranked, labels2.for_topic("P"), k).unwrap()
        );
    }

    #[test]
    fn hit_rates_are_complementary(total in 1u64..100_000, frac in 0.0f64..=1.0) {
        let a = (total as f64 * frac) as u64;
        // exact in rationals: a/n + (n-a)/n = 1, checked on the integer numerators
        let x = hit_rate(a, total).unwrap();
        let y = hit_rate(total - a, total).unwrap();
        prop_assert_eq!(a + (total - a), total);
        prop_assert!((x + y - 1.0).abs() <= f64::EPSILON);
    }

    #[test]
    fn stats_over_concatenation_combine(
        left in prop::collection::vec("[a-e]{1,3}( [a-e]{1,3}){0,6}", 1..20),
        right in prop::collection::vec("[a-e]{1,3}( [a-e]{1,3}){0,6}", 1..20),
    ) {
        let sw = StopWords::from_words(["a", "b", "ab"]).unwrap();
        let mk = |texts: &[String], prefix: &str| Corpus::from_records("c", texts.iter().enumerate()
            .map(|(i, t)| SentenceRecord::new(format!("{prefix}{i}"), t.clone())).collect()).unwrap();
        let l = corpus_stats(&mk(&left, "l"), &sw).unwrap();
        let r = corpus_stats(&mk(&right, "r"), &sw).unwrap();
        let both: Vec<String> = left.iter().chain(&right).cloned().collect();
        let mut records: Vec<SentenceRecord> = mk(&left, "l").records().to_vec();
        records.extend(mk(&right, "r").records().iter().cloned());
        let all = corpus_stats(&Corpus::from_records("all", records).unwrap(), &sw).unwrap();
        prop_assert_eq!(all.count, l.count + r.count);
        prop_assert_eq!(all.count, both.len());
        // weighted combination in exact integer arithmetic
        prop_assert_eq!(all.stopword_tokens, l.stopword_tokens + r.stopword_tokens);
        prop_assert_eq!(all.total_tokens, l.total_tokens + r.total_tokens);
        prop_assert_eq!(
            all.stopword_fraction,
            (l.stopword_tokens + r.stopword_tokens) as f64 / (l.total_tokens + r.total_tokens) as f64
        );
    }

    #[test]
    fn corpus_export_round_trips(texts in prop::collection::vec("[^\n\r]{0,20}[a-z]", 1..30)) {
        let corpus = Corpus::from_records("c", texts.iter().enumerate()
            .map(|(i, t)| SentenceRecord::new(format!("id {i} \u{2603}"), t.clone())).collect()).unwrap();
        let mut buf = Vec::new();
        corpus.write_to(&mut buf).unwrap();
        let back = qmatch_core::corpus::ingest_sentences(buf.as_slice(), "c").unwrap();
        prop_assert_eq!(back.records(), corpus.records());
    }
}
