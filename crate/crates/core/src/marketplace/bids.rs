use std::collections::{BTreeMap, BTreeSet};

use rand_distr::{Distribution, LogNormal};

use super::Inventory;
use crate::error::{Error, Result};
use crate::rng::{rng_for, streams, Rng};

pub const BID_FLOOR: f64 = 0.1;
pub const BID_CEIL: f64 = 1.0;
const CLIP_PERCENTILE: f64 = 99.9;

/// Uniformly picks `round(fraction * n)` of the given items as sponsored.
pub fn designate_sponsored(item_ids: &[u32], fraction: f64, seed: u64) -> BTreeSet<u32> {
    let n = item_ids.len();
    let amount = ((fraction.clamp(0.0, 1.0) * n as f64).round() as usize).min(n);
    let mut rng = rng_for(seed, streams::SPONSORED);
    rand::seq::index::sample(&mut rng, n, amount).into_iter().map(|i| item_ids[i]).collect()
}

pub fn sample_raw_bids(n: usize, mu: f64, sigma: f64, rng: &mut Rng) -> Result<Vec<f64>> {
    let dist = LogNormal::new(mu, sigma).map_err(|e| Error::Config(format!("log-normal({mu}, {sigma}): {e}")))?;
    Ok((0..n).map(|_| dist.sample(rng)).collect())
}

/// Linear-interpolated percentile of unsorted data.
fn percentile(values: &[f64], pct: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

/// Clips raw draws at their 99.9th percentile and maps them affinely onto
/// `[0.1, 1.0]`. If everything is equal after clipping, all bids sit at the floor.
pub fn normalize_bids(raw: &[f64]) -> Vec<f64> {
    if raw.is_empty() {
        return Vec::new();
    }
    let cap = percentile(raw, CLIP_PERCENTILE);
    let clipped: Vec<f64> = raw.iter().map(|&b| b.min(cap)).collect();
    let lo = clipped.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = clipped.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return vec![BID_FLOOR; raw.len()];
    }
    clipped
        .iter()
        .map(|&b| (BID_FLOOR + (b - lo) / (hi - lo) * (BID_CEIL - BID_FLOOR)).clamp(BID_FLOOR, BID_CEIL))
        .collect()
}

/// Draws log-normal bids for the sponsored items (in item-id order) and
/// normalises them into `[0.1, 1.0]`. Organic items never carry a bid.
pub fn assign_bids(inventory: &Inventory, mu: f64, sigma: f64, seed: u64) -> Result<Inventory> {
    let ids: Vec<u32> = inventory.sponsored().map(|i| i.item_id).collect();
    if ids.is_empty() {
        return Err(Error::EmptyInventory);
    }
    let mut rng = rng_for(seed, streams::BIDS);
    let bids = normalize_bids(&sample_raw_bids(ids.len(), mu, sigma, &mut rng)?);
    let mut items = inventory.items().to_vec();
    let table: BTreeMap<u32, f64> = ids.into_iter().zip(bids).collect();
    for item in items.iter_mut() {
        item.bid = table.get(&item.item_id).copied();
    }
    Inventory::new(items)
}

#[derive(Debug, Clone)]
pub struct BidShock {
    pub inventory: Inventory,
    pub shocked: BTreeSet<u32>,
}

/// Multiplies the bids of `ceil(fraction * |sponsored|)` uniformly chosen
/// sponsored items by `multiplier`. The input inventory is left untouched.
pub fn apply_bid_shock(inventory: &Inventory, fraction: f64, multiplier: f64, seed: u64) -> Result<BidShock> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("shock fraction {fraction} outside (0, 1]")));
    }
    if !(multiplier.is_finite() && multiplier > 0.0) {
        return Err(Error::Config(format!("shock multiplier {multiplier} must be positive")));
    }
    let ids: Vec<u32> = inventory.sponsored().filter(|i| i.bid.is_some()).map(|i| i.item_id).collect();
    // Guard against 0.05 * 1000 landing a hair above 50.
    let amount = ((fraction * ids.len() as f64 - 1e-9).ceil() as usize).min(ids.len());
    let mut rng = rng_for(seed, streams::SHOCK);
    let shocked: BTreeSet<u32> =
        rand::seq::index::sample(&mut rng, ids.len(), amount).into_iter().map(|i| ids[i]).collect();
    let bids: BTreeMap<u32, f64> = shocked.iter().map(|&id| (id, inventory.bid(id).unwrap() * multiplier)).collect();
    Ok(BidShock { inventory: inventory.with_bids(&bids)?, shocked })
}
