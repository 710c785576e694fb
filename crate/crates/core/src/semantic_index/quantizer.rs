use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans_best_of, nearest};
use super::ItemEmbedding;
use crate::error::{Error, Result};
use crate::rng::{rng_for, streams};

/// `D` levels of `C` centroids each, all of dimension `E`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebooks {
    pub levels: Vec<Vec<Vec<f64>>>,
}

impl Codebooks {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn codebook_size(&self) -> usize {
        self.levels.first().map_or(0, |l| l.len())
    }

    pub fn dim(&self) -> usize {
        self.levels.first().and_then(|l| l.first()).map_or(0, |c| c.len())
    }

    /// Residual left after quantizing `vector` with the first `levels` levels.
    pub fn residual(&self, vector: &[f64], levels: usize) -> Vec<f64> {
        let mut r = vector.to_vec();
        for table in self.levels.iter().take(levels) {
            let j = nearest(&r, table);
            for (x, c) in r.iter_mut().zip(&table[j]) {
                *x -= c;
            }
        }
        r
    }

    /// Mean squared residual norm over the corpus after `levels` levels.
    pub fn quantization_error(&self, embeddings: &[ItemEmbedding], levels: usize) -> f64 {
        let total: f64 = embeddings
            .iter()
            .map(|e| {
                let r = self.residual(&e.vector, levels);
                r.iter().map(|x| x * x).sum::<f64>()
            })
            .sum();
        total / embeddings.len().max(1) as f64
    }
}

/// Coarse-to-fine code assignment: `c_k` is the nearest level-`k` centroid to
/// the residual left by levels `< k`, ties to the lowest index.
pub fn assign_semantic_id(embedding: &[f64], codebooks: &Codebooks) -> Vec<u16> {
    let mut r = embedding.to_vec();
    let mut codes = Vec::with_capacity(codebooks.depth());
    for table in &codebooks.levels {
        let j = nearest(&r, table);
        for (x, c) in r.iter_mut().zip(&table[j]) {
            *x -= c;
        }
        codes.push(j as u16);
    }
    codes
}

/// k-means runs per level; the lowest-inertia fit is kept.
const RESTARTS: usize = 5;

/// Fits `depth` codebooks of `codebook_size` centroids by running k-means on
/// the residuals of the previous levels.
pub fn fit_residual_quantizer(
    embeddings: &[ItemEmbedding],
    depth: usize,
    codebook_size: usize,
    iterations: usize,
    seed: u64,
) -> Result<Codebooks> {
    if depth == 0 {
        return Err(Error::Config("quantizer depth must be >= 1".into()));
    }
    if codebook_size == 0 || codebook_size > u16::MAX as usize {
        return Err(Error::Config(format!("invalid codebook size {codebook_size}")));
    }
    let dim = embeddings.first().map_or(0, |e| e.vector.len());
    for e in embeddings {
        if e.vector.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: e.vector.len() });
        }
        if e.vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config(format!("item {} has a non-finite embedding", e.item_id)));
        }
    }

    let mut residuals: Vec<Vec<f64>> = embeddings.iter().map(|e| e.vector.clone()).collect();
    let mut levels = Vec::with_capacity(depth);
    for level in 0..depth {
        let distinct = count_distinct(&residuals);
        if distinct < codebook_size {
            return Err(Error::DegenerateCorpus { level: level + 1, distinct, required: codebook_size });
        }
        let mut rng = rng_for(seed, streams::KMEANS.wrapping_mul(1000) + level as u64);
        let fit = kmeans_best_of(&residuals, codebook_size, iterations, RESTARTS, &mut rng);
        // Residuals follow the final nearest-centroid assignment so that
        // training and `assign_semantic_id` agree exactly.
        for r in residuals.iter_mut() {
            let j = nearest(r, &fit.centroids);
            for (x, c) in r.iter_mut().zip(&fit.centroids[j]) {
                *x -= c;
            }
        }
        levels.push(fit.centroids);
    }
    Ok(Codebooks { levels })
}

fn count_distinct(points: &[Vec<f64>]) -> usize {
    points.iter().map(|p| p.iter().map(|x| x.to_bits()).collect::<Vec<_>>()).collect::<HashSet<_>>().len()
}
