use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::marketplace::Inventory;
use crate::semantic_index::{NodeId, SidTrie};

/// Maximum eligible bid under every trie node. `None` marks subtrees with no
/// eligible item.
#[derive(Debug, Clone, PartialEq)]
pub struct BidLookup {
    node_bid: Vec<Option<f64>>,
    b_max: f64,
}

pub fn build_bid_lookup(trie: &SidTrie, bids: &BTreeMap<u32, f64>, eligible: &[u32]) -> Result<BidLookup> {
    let mut node_bid: Vec<Option<f64>> = vec![None; trie.node_count()];
    for &item in eligible {
        let bid = *bids.get(&item).ok_or(Error::MissingId(item))?;
        if !(bid.is_finite() && bid >= 0.0) {
            return Err(Error::Config(format!("item {item} has invalid bid {bid}")));
        }
        let path = trie.path_nodes(item).ok_or(Error::UnknownItem(item))?;
        for node in std::iter::once(trie.root()).chain(path) {
            let slot = &mut node_bid[node];
            *slot = Some(slot.map_or(bid, |b: f64| b.max(bid)));
        }
    }
    let b_max = node_bid[trie.root()].unwrap_or(0.0);
    Ok(BidLookup { node_bid, b_max })
}

impl BidLookup {
    /// Lookup over the inventory's eligible set (sponsored items with a positive bid).
    pub fn from_inventory(trie: &SidTrie, inventory: &Inventory) -> Result<Self> {
        build_bid_lookup(trie, &inventory.bids(), &inventory.eligible())
    }

    pub fn get(&self, node: NodeId) -> Option<f64> {
        self.node_bid.get(node).copied().flatten()
    }

    pub fn b_max(&self) -> f64 {
        self.b_max
    }

    pub fn has_eligible(&self) -> bool {
        self.node_bid.first().is_some_and(|b| b.is_some())
    }

    /// `ln(1 + B)`, zero for sentinel or off-trie nodes.
    pub fn boost(&self, node: Option<NodeId>) -> f64 {
        node.and_then(|n| self.get(n)).map_or(0.0, f64::ln_1p)
    }
}
