use rand::{Rng as _, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{Interaction, Inventory, OrganicHistory, Trajectory};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, streams, Rng};

/// Parameters of the data-generation policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    /// Required prefix match depth for the relevance filter.
    pub d: usize,
    /// Softmax temperature of the auction.
    pub tau: f64,
    /// Base acceptance rate.
    pub p: f64,
    /// Fatigue recovery rate per step.
    pub r: f64,
}

impl Default for PolicyParams {
    fn default() -> Self {
        Self { d: 2, tau: 0.1, p: 0.4, r: 0.05 }
    }
}

impl PolicyParams {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail
    pub fn validate(&self, depth: usize) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::Config(format!("p must be in [0, 1], got {}", self.p)));
        }
        if !(self.r > 0.0) {
            return Err(Error::Config(format!("r must be > 0, got {}", self.r)));
        }
        if self.d < 1 || self.d > depth {
            return Err(Error::Config(format!("d must be in [1, {depth}], got {}", self.d)));
        }
        Ok(())
    }
}

/// Sponsored items sharing at least `d` leading codes with the target,
/// relaxing `d` one level at a time down to 1. The target itself is never a
/// candidate.
pub fn relevance_filter(target_item: u32, inventory: &Inventory, d: usize) -> Vec<u32> {
    let Some(target) = inventory.sid(target_item) else {
        return Vec::new();
    };
    for depth in (1..=d.min(inventory.depth())).rev() {
        let found: Vec<u32> = inventory
            .sponsored_with_prefix(&target.codes, depth)
            .iter()
            .copied()
            .filter(|&id| id != target_item)
            .collect();
        if !found.is_empty() {
            return found;
        }
    }
    Vec::new()
}

/// Softmax over `bids / tau`, evaluated in the log domain.
pub fn auction_probabilities(bids: &[f64], tau: f64) -> Vec<f64> {
    let logits: Vec<f64> = bids.iter().map(|b| b / tau).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Inverse-CDF pick of an auction winner for a uniform draw `u` in `[0, 1)`.
pub fn auction_pick(bids: &[f64], tau: f64, u: f64) -> Result<usize> {
    if bids.is_empty() {
        return Err(Error::NoCandidates);
    }
    let probs = auction_probabilities(bids, tau);
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(probs.len() - 1)
}

pub fn auction_sample(bids: &[f64], tau: f64, rng: &mut Rng) -> Result<usize> {
    auction_pick(bids, tau, rng.random::<f64>())
}

/// Display acceptance `p * min(1, delta_t * r)`. Pass `f64::INFINITY` when the
/// user has not seen an ad yet.
pub fn frequency_cap(delta_t: f64, p: f64, r: f64) -> f64 {
    if delta_t <= 0.0 {
        return 0.0;
    }
    p * (delta_t * r).min(1.0)
}

/// Source of uniform draws; lets a recorded run be replayed exactly.
pub trait UniformSource {
    fn uniform(&mut self) -> f64;
}

impl UniformSource for Rng {
    fn uniform(&mut self) -> f64 {
        self.random::<f64>()
    }
}

impl<I: Iterator<Item = f64>> UniformSource for std::iter::Peekable<I> {
    fn uniform(&mut self) -> f64 {
        self.next().expect("replay ran out of recorded draws")
    }
}

/// Replays one organic history, injecting an auctioned ad immediately before
/// an organic item whenever the frequency-capped acceptance gate passes.
///
/// `delta_t` counts organic steps since the last injected ad and starts at
/// infinity for every user.
pub fn replay_user(
    history: &OrganicHistory,
    inventory: &Inventory,
    params: &PolicyParams,
    draws: &mut impl UniformSource,
) -> Result<Trajectory> {
    let mut events = Vec::with_capacity(history.items.len() + history.items.len() / 4);
    let mut delta_t = f64::INFINITY;
    let mut bids = Vec::new();
    for &item in &history.items {
        if inventory.get(item).is_none() {
            return Err(Error::UnknownItem(item));
        }
        let candidates = relevance_filter(item, inventory, params.d);
        if !candidates.is_empty() {
            bids.clear();
            bids.extend(candidates.iter().map(|&c| inventory.bid(c).unwrap_or(0.0)));
            let winner = candidates[auction_pick(&bids, params.tau, draws.uniform())?];
            if draws.uniform() < frequency_cap(delta_t, params.p, params.r) {
                events.push(Interaction::sponsored(winner));
                delta_t = 0.0;
            }
        }
        events.push(Interaction::organic(item));
        delta_t += 1.0;
    }
    Ok(Trajectory { user_id: history.user_id, events })
}

#[derive(Debug, Clone)]
pub struct GenerationOutput {
    pub trajectories: Vec<Trajectory>,
    pub ad_events: usize,
    pub total_events: usize,
}

impl GenerationOutput {
    /// Fraction of logged interactions that are sponsored.
    pub fn realized_ad_fraction(&self) -> f64 {
        if self.total_events == 0 {
            0.0
        } else {
            self.ad_events as f64 / self.total_events as f64
        }
    }
}

pub(crate) fn user_rng(seed: u64, user_id: u32) -> Rng {
    Rng::seed_from_u64(derive_seed(derive_seed(seed, streams::TRAJECTORIES), user_id as u64))
}

/// Runs the policy over every history. Each user draws from its own stream,
/// so the output does not depend on the order users are processed in.
pub fn generate_trajectories(
    histories: &[OrganicHistory],
    inventory: &Inventory,
    params: &PolicyParams,
    seed: u64,
) -> Result<GenerationOutput> {
    params.validate(inventory.depth())?;
    let mut out = GenerationOutput { trajectories: Vec::with_capacity(histories.len()), ad_events: 0, total_events: 0 };
    for h in histories {
        let t = replay_user(h, inventory, params, &mut user_rng(seed, h.user_id))?;
        out.total_events += t.events.len();
        out.ad_events += t.events.iter().filter(|e| e.mode == super::Mode::Sponsored).count();
        out.trajectories.push(t);
    }
    Ok(out)
}
