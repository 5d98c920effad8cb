//! Seeded synthetic embedding sets with known similarity structure.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::embeddings::EmbeddingSet;

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / norm).collect()
}

fn into_set(tag: &str, dim: usize, vectors: Vec<Vec<f64>>) -> EmbeddingSet {
    let records = vectors
        .into_iter()
        .enumerate()
        .map(|(i, v)| (format!("v{i:05}"), v.into_iter().map(|x| x as f32).collect()));
    EmbeddingSet::from_vectors(tag, dim, records).expect("synthetic vectors are valid")
}

/// Directions drawn uniformly from the sphere.
pub fn isotropic(n: usize, dim: usize, seed: u64) -> EmbeddingSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vectors = (0..n).map(|_| unit(&gaussian(&mut rng, dim))).collect();
    into_set("isotropic", dim, vectors)
}

/// A shared unit direction plus a random perturbation of Euclidean length
/// `scale`, so every pair sits in a narrow cone.
pub fn cone(n: usize, dim: usize, scale: f64, seed: u64) -> EmbeddingSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = unit(&gaussian(&mut rng, dim));
    let vectors = (0..n)
        .map(|_| {
            let noise = unit(&gaussian(&mut rng, dim));
            base.iter().zip(&noise).map(|(b, e)| b + scale * e).collect()
        })
        .collect();
    into_set("cone", dim, vectors)
}

/// `clusters` random centroids; members are centroid plus noise of length
/// `spread`. Within-cluster pairs are similar, cross-cluster pairs near
/// orthogonal, which gives a wide pairwise distribution.
pub fn clustered(n: usize, dim: usize, clusters: usize, spread: f64, seed: u64) -> EmbeddingSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centroids: Vec<Vec<f64>> = (0..clusters.max(1))
        .map(|_| unit(&gaussian(&mut rng, dim)))
        .collect();
    let vectors = (0..n)
        .map(|i| {
            let c = &centroids[i % centroids.len()];
            let noise = unit(&gaussian(&mut rng, dim));
            c.iter().zip(&noise).map(|(b, e)| b + spread * e).collect()
        })
        .collect();
    into_set("clustered", dim, vectors)
}
