//! Hierarchical semantic IDs: residual k-means codebooks, collision
//! disambiguation and the prefix trie shared by decoding and bid aggregation.

mod kmeans;
mod quantizer;
mod synth;
mod trie;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use kmeans::{kmeans, kmeans_best_of, KMeansFit};
pub use quantizer::{assign_semantic_id, fit_residual_quantizer, Codebooks};
pub use synth::{synth_embeddings, MixtureSpec, SyntheticCorpus};
pub use trie::{build_trie, NodeId, SidTrie};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemEmbedding {
    pub item_id: u32,
    pub vector: Vec<f64>,
}

/// Code tuple `(c_1..c_D)` plus the collision disambiguator.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SemanticId {
    pub codes: Vec<u16>,
    pub disamb: u16,
}

impl SemanticId {
    pub fn new(codes: Vec<u16>, disamb: u16) -> Self {
        Self { codes, disamb }
    }

    pub fn depth(&self) -> usize {
        self.codes.len()
    }
}

/// Length of the longest common prefix of two code tuples. The
/// disambiguator never counts.
pub fn prefix_match_depth(a: &[u16], b: &[u16]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

/// Gives items that share a code tuple distinct disambiguators `0, 1, 2, ...`
/// in ascending item-id order. The result is sorted by item id, so it does not
/// depend on input order.
pub fn disambiguate(items: &[(u32, Vec<u16>)]) -> Vec<(u32, SemanticId)> {
    let mut sorted: Vec<&(u32, Vec<u16>)> = items.iter().collect();
    sorted.sort_by_key(|(id, _)| *id);

    let mut next: BTreeMap<&[u16], u16> = BTreeMap::new();
    sorted
        .into_iter()
        .map(|(id, codes)| {
            let slot = next.entry(codes.as_slice()).or_insert(0);
            let disamb = *slot;
            *slot += 1;
            (*id, SemanticId::new(codes.clone(), disamb))
        })
        .collect()
}
