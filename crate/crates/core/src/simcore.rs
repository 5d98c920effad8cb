//! Similarity kernels: cosine over unit vectors, all-pairs pools, similarity
//! matrices and nearest-rank percentiles.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingSet;
use crate::error::{Error, Result};

const SAMPLE_CHUNK: usize = 1 << 14;

/// Dot product with 64-bit accumulation, clamped to [-1, 1]. Inputs must be
/// unit length and of equal dimension.
///
/// Each term is `a[i] * b[i]` in f64 and IEEE multiplication is commutative,
/// so swapping operands gives a bit-identical result.
#[inline]
pub(crate) fn unit_dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        acc += x as f64 * y as f64;
    }
    acc.clamp(-1.0, 1.0)
}

/// Cosine similarity of two pre-normalized vectors.
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(unit_dot(a, b))
}

/// Scores of unordered distinct pairs drawn from one embedding source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwisePool {
    pub source_tag: String,
    pub pair_count: usize,
    /// Number of vectors the pairs were drawn from.
    pub vector_count: usize,
    pub cap: Option<usize>,
    pub seed: u64,
    /// True when a seeded subset of pairs was scored instead of all of them.
    pub sampled: bool,
    #[serde(skip)]
    pub scores: Vec<f64>,
}

impl PairwisePool {
    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Number of unordered distinct pairs among `n` items.
pub fn pair_total(n: usize) -> u64 {
    let n = n as u64;
    n * n.saturating_sub(1) / 2
}

/// Maps a linear pair index to `(i, j)` with `i < j`, enumerating
/// (0,1), (0,2), .., (0,n-1), (1,2), ...
pub fn pair_at(n: usize, k: u64) -> (usize, usize) {
    let n64 = n as u64;
    let before = |i: u64| i * n64 - i * (i + 1) / 2;
    let (mut lo, mut hi) = (0u64, n64 - 1);
    // largest i with before(i) <= k
    while lo + 1 < hi {
        let mid = (lo + hi) / 2;
        if before(mid) <= k {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let i = lo;
    let j = k - before(i) + i + 1;
    (i as usize, j as usize)
}

/// Pool over every vector of an embedding set.
pub fn pairwise_pool(set: &EmbeddingSet, cap: Option<usize>, seed: u64) -> Result<PairwisePool> {
    let vectors: Vec<&[f32]> = (0..set.len()).map(|i| set.unit(i)).collect();
    pairwise_pool_of(&vectors, set.source_tag(), cap, seed)
}

/// Scores all unordered pairs of `vectors`, or a seeded uniform sample of
/// `cap` distinct pairs when there are more than `cap`.
///
/// Work is split into independent blocks scored in parallel; the output order
/// is the canonical pair order (or sorted sampled index order) regardless of
/// scheduling.
pub fn pairwise_pool_of(
    vectors: &[&[f32]],
    source_tag: &str,
    cap: Option<usize>,
    seed: u64,
) -> Result<PairwisePool> {
    let n = vectors.len();
    if n < 2 {
        return Err(Error::TooFewVectors {
            required: 2,
            found: n,
        });
    }
    let dim = vectors[0].len();
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::DimMismatch {
            expected: dim,
            found: v.len(),
        });
    }
    if cap == Some(0) {
        return Err(Error::InvalidConfig("pair cap must be positive".into()));
    }
    let total = pair_total(n);
    let sampled = matches!(cap, Some(c) if (c as u64) < total);

    let scores: Vec<f64> = if sampled {
        let picks = sample_pair_indices(total, cap.unwrap(), seed);
        picks
            .par_chunks(SAMPLE_CHUNK)
            .flat_map_iter(|chunk| {
                chunk.iter().map(|&k| {
                    let (i, j) = pair_at(n, k);
                    unit_dot(vectors[i], vectors[j])
                })
            })
            .collect()
    } else {
        (0..n)
            .into_par_iter()
            .flat_map_iter(|i| (i + 1..n).map(move |j| unit_dot(vectors[i], vectors[j])))
            .collect()
    };

    Ok(PairwisePool {
        source_tag: source_tag.to_string(),
        pair_count: scores.len(),
        vector_count: n,
        cap,
        seed,
        sampled,
        scores,
    })
}

/// Floyd's algorithm: `count` distinct indices from `0..total`, sorted.
fn sample_pair_indices(total: u64, count: usize, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = HashSet::with_capacity(count);
    for j in total - count as u64..total {
        let t = rng.random_range(0..=j);
        if !chosen.insert(t) {
            chosen.insert(j);
        }
    }
    let mut out: Vec<u64> = chosen.into_iter().collect();
    out.sort_unstable();
    out
}

/// Square cosine matrix. Only the upper triangle is computed; the lower one
/// is mirrored, so the result is exactly symmetric.
pub fn similarity_matrix(vectors: &[&[f32]]) -> Result<Vec<Vec<f64>>> {
    let n = vectors.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let dim = vectors[0].len();
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::DimMismatch {
            expected: dim,
            found: v.len(),
        });
    }
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| unit_dot(vectors[i], vectors[j])).collect())
        .collect();
    let mut m = vec![vec![0.0; n]; n];
    for (i, row) in upper.iter().enumerate() {
        for (offset, &s) in row.iter().enumerate() {
            let j = i + offset;
            m[i][j] = s;
            m[j][i] = s;
        }
    }
    Ok(m)
}

/// Nearest-rank percentile: the element at 1-based rank `ceil(p/100 * n)` of
/// the ascending sort.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(p > 0.0 && p <= 100.0) {
        return Err(Error::PercentileOutOfRange(p));
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let n = values.len();
    // p * n is exact for integral p, so the division is correctly rounded
    let rank = ((p * n as f64) / 100.0).ceil() as usize;
    let rank = rank.clamp(1, n);
    let mut sorted = values.to_vec();
    let (_, value, _) = sorted.select_nth_unstable_by(rank - 1, f64::total_cmp);
    Ok(*value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::normalize;

    #[test]
    fn cosine_examples() {
        let v = normalize(&[0.3, -1.2, 2.0]).unwrap();
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-6);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let a = normalize(&[1.0, 2.0, 2.0]).unwrap();
        let b = normalize(&[2.0, 1.0, 2.0]).unwrap();
        assert!((cosine(&a, &b).unwrap() - 8.0 / 9.0).abs() < 1e-6);
        assert!(matches!(
            cosine(&[1.0], &[1.0, 0.0]),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn cosine_is_clamped() {
        // slightly over-unit inputs
        let a = [1.0000001f32, 0.0];
        assert_eq!(cosine(&a, &a).unwrap(), 1.0);
        let b = [-1.0000001f32, 0.0];
        assert_eq!(cosine(&a, &b).unwrap(), -1.0);
    }

    #[test]
    fn pair_index_mapping_enumerates_upper_triangle() {
        for n in 2..12 {
            let mut k = 0u64;
            for i in 0..n {
                for j in i + 1..n {
                    assert_eq!(pair_at(n, k), (i, j), "n={n} k={k}");
                    k += 1;
                }
            }
            assert_eq!(k, pair_total(n));
        }
    }

    #[test]
    fn pool_of_two_identical() {
        let v = [0.6f32, 0.8];
        let pool = pairwise_pool_of(&[&v, &v], "t", None, 0).unwrap();
        assert_eq!(pool.pair_count, 1);
        assert!((pool.scores[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn pool_needs_two_vectors() {
        let v = [1.0f32];
        assert!(matches!(
            pairwise_pool_of(&[&v], "t", None, 0),
            Err(Error::TooFewVectors { found: 1, .. })
        ));
    }

    #[test]
    fn capped_pool_is_deterministic() {
        let vs: Vec<Vec<f32>> = (0..100)
            .map(|i| normalize(&[(i as f32).sin(), (i as f32).cos(), 0.5]).unwrap())
            .collect();
        let refs: Vec<&[f32]> = vs.iter().map(Vec::as_slice).collect();
        let a = pairwise_pool_of(&refs, "t", Some(50), 7).unwrap();
        let b = pairwise_pool_of(&refs, "t", Some(50), 7).unwrap();
        assert_eq!(a.pair_count, 50);
        assert!(a.sampled);
        assert_eq!(a.scores, b.scores);
        let c = pairwise_pool_of(&refs, "t", Some(50), 8).unwrap();
        assert_ne!(a.scores, c.scores);
        // cap above the total means no sampling
        let full = pairwise_pool_of(&refs, "t", Some(1_000_000), 7).unwrap();
        assert!(!full.sampled);
        assert_eq!(full.pair_count, 4950);
    }

    #[test]
    fn sampled_indices_are_distinct_and_in_range() {
        let picks = sample_pair_indices(1000, 1000, 3);
        assert_eq!(picks, (0..1000).collect::<Vec<_>>());
        let picks = sample_pair_indices(10_000, 500, 3);
        assert_eq!(picks.len(), 500);
        assert!(picks.windows(2).all(|w| w[0] < w[1]));
        assert!(*picks.last().unwrap() < 10_000);
    }

    #[test]
    fn matrix_examples() {
        let v = [1.0f32, 0.0];
        assert_eq!(similarity_matrix(&[&v]).unwrap(), vec![vec![1.0]]);
        let e1 = [1.0f32, 0.0];
        let e2 = [0.0f32, 1.0];
        assert_eq!(
            similarity_matrix(&[&e1, &e2]).unwrap(),
            vec![vec![1.0, 0.0], vec![0.0, 1.0]]
        );
        assert!(matches!(similarity_matrix(&[]), Err(Error::EmptyInput)));
        assert!(matches!(
            similarity_matrix(&[&e1, &[1.0f32][..]]),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn percentile_examples() {
        let tenths: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        assert_eq!(percentile(&tenths, 90.0).unwrap(), 0.9);
        assert_eq!(percentile(&[0.42], 1.0).unwrap(), 0.42);
        assert_eq!(percentile(&[0.42], 100.0).unwrap(), 0.42);
        assert_eq!(percentile(&[0.5, 0.5, 0.5], 90.0).unwrap(), 0.5);
        assert_eq!(percentile(&tenths, 100.0).unwrap(), 1.0);
        assert_eq!(percentile(&tenths, 0.001).unwrap(), 0.1);
    }

    #[test]
    fn percentile_errors() {
        assert!(matches!(percentile(&[], 90.0), Err(Error::EmptyInput)));
        assert!(matches!(
            percentile(&[1.0], 0.0),
            Err(Error::PercentileOutOfRange(_))
        ));
        assert!(matches!(
            percentile(&[1.0], 100.5),
            Err(Error::PercentileOutOfRange(_))
        ));
        assert!(matches!(
            percentile(&[1.0], f64::NAN),
            Err(Error::PercentileOutOfRange(_))
        ));
        assert!(matches!(
            percentile(&[1.0, f64::NAN], 50.0),
            Err(Error::NonFinite { index: 1 })
        ));
    }
}
