use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ItemEmbedding;
use crate::rng::{rng_for, streams};

/// Two-level Gaussian mixture: category centres, subcategory offsets around
/// them, and per-item noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixtureSpec {
    pub categories: usize,
    pub subcategories: usize,
    pub category_scale: f64,
    pub subcategory_scale: f64,
    pub item_scale: f64,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        Self { categories: 16, subcategories: 8, category_scale: 6.0, subcategory_scale: 2.0, item_scale: 0.5 }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub embeddings: Vec<ItemEmbedding>,
    /// Generating category of each item (index-aligned with `embeddings`).
    pub categories: Vec<u16>,
    pub subcategories: Vec<u16>,
}

pub fn synth_embeddings(n_items: usize, dim: usize, spec: &MixtureSpec, seed: u64) -> SyntheticCorpus {
    let mut rng = rng_for(seed, streams::EMBEDDINGS);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let gauss =
        |scale: f64, rng: &mut crate::rng::Rng| -> Vec<f64> { (0..dim).map(|_| unit.sample(rng) * scale).collect() };

    let cats = spec.categories.max(1);
    let subs = spec.subcategories.max(1);
    let centres: Vec<Vec<f64>> = (0..cats).map(|_| gauss(spec.category_scale, &mut rng)).collect();
    let sub_centres: Vec<Vec<Vec<f64>>> = centres
        .iter()
        .map(|c| {
            (0..subs)
                .map(|_| gauss(spec.subcategory_scale, &mut rng).iter().zip(c).map(|(o, x)| o + x).collect())
                .collect()
        })
        .collect();

    let mut out = SyntheticCorpus {
        embeddings: Vec::with_capacity(n_items),
        categories: Vec::with_capacity(n_items),
        subcategories: Vec::with_capacity(n_items),
    };
    for i in 0..n_items {
        let cat = rng.random_range(0..cats);
        let sub = rng.random_range(0..subs);
        let vector = gauss(spec.item_scale, &mut rng).iter().zip(&sub_centres[cat][sub]).map(|(n, x)| n + x).collect();
        out.embeddings.push(ItemEmbedding { item_id: i as u32, vector });
        out.categories.push(cat as u16);
        out.subcategories.push(sub as u16);
    }
    out
}
