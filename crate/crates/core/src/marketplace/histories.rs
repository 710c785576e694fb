use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::Inventory;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_for, streams};

/// One user's organic item sequence before any ads are injected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrganicHistory {
    pub user_id: u32,
    pub items: Vec<u32>,
}

/// Shape of the category-biased random walk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WalkParams {
    /// Probability that a step stays inside the user's home category.
    pub category_bias: f64,
    /// Within the home category, probability of following the current item's
    /// successor list instead of jumping uniformly.
    pub locality: f64,
    /// Successor list length per item, drawn from its nearest code prefix.
    pub successors: usize,
}

impl Default for WalkParams {
    fn default() -> Self {
        Self { category_bias: 0.9, locality: 0.8, successors: 4 }
    }
}

impl WalkParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("category_bias", self.category_bias), ("locality", self.locality)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if self.successors == 0 {
            return Err(Error::Config("successors must be at least 1".into()));
        }
        Ok(())
    }
}

/// Fixed successor list per item: items sharing the deepest available code
/// prefix (at least the category), so the walk has learnable transitions.
fn successor_lists(inventory: &Inventory, n: usize, seed: u64) -> Vec<Vec<usize>> {
    let depth = inventory.depth();
    let items = inventory.items();
    let mut groups: Vec<BTreeMap<&[u16], Vec<usize>>> = vec![BTreeMap::new(); depth + 1];
    for (pos, item) in items.iter().enumerate() {
        for (k, g) in groups.iter_mut().enumerate() {
            g.entry(&item.sid.codes[..k]).or_default().push(pos);
        }
    }
    let mut rng = rng_for(seed, streams::WALK_GRAPH);
    items
        .iter()
        .enumerate()
        .map(|(pos, item)| {
            let level = (1..=depth.min(2)).rev().find(|&k| groups[k][&item.sid.codes[..k]].len() > 1);
            let pool: Vec<usize> = match level {
                Some(k) => groups[k][&item.sid.codes[..k]].iter().copied().filter(|&p| p != pos).collect(),
                None => vec![pos],
            };
            (0..n).map(|_| *pool.choose(&mut rng).expect("pool is nonempty")).collect()
        })
        .collect()
}

/// Category-biased random walks standing in for real interaction logs. Each
/// user draws a home category (first code) and a length uniformly from
/// `length_range`, inclusive.
pub fn synth_organic_histories(
    n_users: usize,
    length_range: (usize, usize),
    inventory: &Inventory,
    walk: &WalkParams,
    seed: u64,
) -> Result<Vec<OrganicHistory>> {
    if inventory.is_empty() {
        return Err(Error::EmptyInventory);
    }
    let (lo, hi) = length_range;
    if lo == 0 || lo > hi {
        return Err(Error::Config(format!("invalid history length range ({lo}, {hi})")));
    }
    walk.validate()?;
    let items = inventory.items();
    let successors = successor_lists(inventory, walk.successors, seed);
    let mut by_category: BTreeMap<u16, Vec<usize>> = BTreeMap::new();
    for (pos, item) in items.iter().enumerate() {
        by_category.entry(item.sid.codes.first().copied().unwrap_or(0)).or_default().push(pos);
    }
    let category_of = |pos: usize| items[pos].sid.codes.first().copied().unwrap_or(0);

    let base = derive_seed(seed, streams::HISTORIES);
    (0..n_users as u32)
        .map(|user_id| {
            let mut rng = rng_for(base, user_id as u64);
            // Home category is drawn in proportion to its size.
            let home_cat = category_of(rng.random_range(0..items.len()));
            let home = &by_category[&home_cat];
            let len = rng.random_range(lo..=hi);
            let mut cur = *home.choose(&mut rng).expect("category is nonempty");
            let mut seq = Vec::with_capacity(len);
            seq.push(items[cur].item_id);
            while seq.len() < len {
                cur = if rng.random::<f64>() < walk.category_bias {
                    if category_of(cur) == home_cat && rng.random::<f64>() < walk.locality {
                        *successors[cur].choose(&mut rng).expect("successor list is nonempty")
                    } else {
                        *home.choose(&mut rng).expect("category is nonempty")
                    }
                } else {
                    rng.random_range(0..items.len())
                };
                seq.push(items[cur].item_id);
            }
            Ok(OrganicHistory { user_id, items: seq })
        })
        .collect()
}
