//! Synthetic marketplace: sponsored inventory with log-normal bids, organic
//! histories, and the data policy that injects auctioned ads into them.

mod bids;
mod histories;
mod policy;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::semantic_index::SemanticId;

pub use bids::{apply_bid_shock, assign_bids, designate_sponsored, normalize_bids, sample_raw_bids, BidShock};
pub use histories::{synth_organic_histories, OrganicHistory, WalkParams};
pub use policy::{
    auction_pick, auction_probabilities, auction_sample, frequency_cap, generate_trajectories, relevance_filter,
    replay_user, GenerationOutput, PolicyParams, UniformSource,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "ORG")]
    Organic,
    #[serde(rename = "AD")]
    Sponsored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interaction {
    pub mode: Mode,
    pub item_id: u32,
}

impl Interaction {
    pub fn organic(item_id: u32) -> Self {
        Self { mode: Mode::Organic, item_id }
    }

    pub fn sponsored(item_id: u32) -> Self {
        Self { mode: Mode::Sponsored, item_id }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub user_id: u32,
    pub events: Vec<Interaction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InventoryItem {
    pub item_id: u32,
    pub sid: SemanticId,
    pub sponsored: bool,
    pub bid: Option<f64>,
}

/// Item universe with sponsored flags and bids, plus a prefix index over the
/// sponsored subset used by the relevance filter.
#[derive(Debug, Clone)]
pub struct Inventory {
    items: Vec<InventoryItem>,
    position: HashMap<u32, usize>,
    /// `by_prefix[k - 1]` maps a depth-`k` code prefix to sponsored item ids.
    by_prefix: Vec<HashMap<Vec<u16>, Vec<u32>>>,
}

impl Inventory {
    pub fn new(mut items: Vec<InventoryItem>) -> Result<Self> {
        items.sort_by_key(|i| i.item_id);
        let depth = items.first().map_or(0, |i| i.sid.depth());
        let mut position = HashMap::with_capacity(items.len());
        let mut by_prefix = vec![HashMap::new(); depth];
        for (pos, item) in items.iter().enumerate() {
            if position.insert(item.item_id, pos).is_some() {
                return Err(Error::Config(format!("item {} listed twice", item.item_id)));
            }
            if item.sid.depth() != depth {
                return Err(Error::Config(format!("item {} has inconsistent code depth", item.item_id)));
            }
            if let Some(b) = item.bid {
                if !item.sponsored {
                    return Err(Error::Config(format!("organic item {} carries a bid", item.item_id)));
                }
                if !(b.is_finite() && b >= 0.0) {
                    return Err(Error::Config(format!("item {} has invalid bid {b}", item.item_id)));
                }
            }
            if item.sponsored {
                for (k, index) in by_prefix.iter_mut().enumerate() {
                    index.entry(item.sid.codes[..=k].to_vec()).or_insert_with(Vec::new).push(item.item_id);
                }
            }
        }
        Ok(Self { items, position, by_prefix })
    }

    pub fn items(&self) -> &[InventoryItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.by_prefix.len()
    }

    pub fn get(&self, item_id: u32) -> Option<&InventoryItem> {
        self.position.get(&item_id).map(|&p| &self.items[p])
    }

    pub fn sid(&self, item_id: u32) -> Option<&SemanticId> {
        self.get(item_id).map(|i| &i.sid)
    }

    pub fn bid(&self, item_id: u32) -> Option<f64> {
        self.get(item_id).and_then(|i| i.bid)
    }

    pub fn sponsored(&self) -> impl Iterator<Item = &InventoryItem> {
        self.items.iter().filter(|i| i.sponsored)
    }

    pub fn sponsored_count(&self) -> usize {
        self.sponsored().count()
    }

    /// Bids of all sponsored items that carry one, keyed by item id.
    pub fn bids(&self) -> BTreeMap<u32, f64> {
        self.items.iter().filter_map(|i| i.bid.map(|b| (i.item_id, b))).collect()
    }

    /// Sponsored items with a positive bid: the eligible set for decoding.
    pub fn eligible(&self) -> Vec<u32> {
        self.items.iter().filter(|i| i.sponsored && i.bid.is_some_and(|b| b > 0.0)).map(|i| i.item_id).collect()
    }

    /// Sponsored items sharing the first `depth` codes with `codes`.
    pub(crate) fn sponsored_with_prefix(&self, codes: &[u16], depth: usize) -> &[u32] {
        if depth == 0 || depth > self.by_prefix.len() {
            return &[];
        }
        self.by_prefix[depth - 1].get(&codes[..depth]).map_or(&[], |v| v.as_slice())
    }

    /// Copy with bids replaced for the given items.
    pub fn with_bids(&self, bids: &BTreeMap<u32, f64>) -> Result<Self> {
        let mut items = self.items.clone();
        for item in items.iter_mut() {
            if let Some(&b) = bids.get(&item.item_id) {
                if !item.sponsored {
                    return Err(Error::Config(format!("cannot bid for organic item {}", item.item_id)));
                }
                item.bid = Some(b);
            }
        }
        Self::new(items)
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use rand::{Rng as _, SeedableRng};

    /// Random inventory over `depth` x `codes` with a sponsored fraction and bids in [0.1, 1].
    pub fn random_inventory(n: usize, depth: usize, codes: u16, sponsored: f64, seed: u64) -> Inventory {
        let mut rng = crate::rng::Rng::seed_from_u64(seed);
        let raw: Vec<(u32, Vec<u16>)> =
            (0..n as u32).map(|i| (i, (0..depth).map(|_| rng.random_range(0..codes)).collect())).collect();
        let items = crate::semantic_index::disambiguate(&raw)
            .into_iter()
            .map(|(id, sid)| {
                let sp = rng.random::<f64>() < sponsored;
                InventoryItem { item_id: id, sid, sponsored: sp, bid: sp.then(|| rng.random_range(0.1..=1.0)) }
            })
            .collect();
        Inventory::new(items).unwrap()
    }
}
