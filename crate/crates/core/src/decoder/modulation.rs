use super::lookup::BidLookup;
use super::FlagMode;
use crate::marketplace::Mode;
use crate::semantic_index::{NodeId, SidTrie};

/// Slot-level shift of the AD logit by `lambda * ln(1 + b_max)`.
pub fn modulate_slot_logits(z_org: f64, z_ad: f64, lambda_slot: f64, b_max: f64) -> (f64, f64) {
    (z_org, z_ad + lambda_slot * b_max.ln_1p())
}

/// Item-level shift of each code logit by `lambda * ln(1 + B(prefix ⊕ c))`.
/// `scores[c]` is the logit of code value `c` under trie node `prefix`
/// (`None` when the prefix has left the trie).
pub fn modulate_item_logits(
    scores: &[f64],
    lambda_item: f64,
    lookup: &BidLookup,
    trie: &SidTrie,
    prefix: Option<NodeId>,
) -> Vec<f64> {
    scores
        .iter()
        .enumerate()
        .map(|(c, &z)| {
            let child = prefix.and_then(|p| trie.child(p, c as u16));
            z + lambda_item * lookup.boost(child)
        })
        .collect()
}

/// `P(AD) = sigmoid(z_ad - z_org)`, evaluated without overflow.
pub fn p_ad(z_org: f64, z_ad: f64) -> f64 {
    let d = z_ad - z_org;
    if d >= 0.0 {
        1.0 / (1.0 + (-d).exp())
    } else {
        let e = d.exp();
        e / (1.0 + e)
    }
}

/// Commits the slot type. In sample mode the flag is AD iff `u < P(AD)`, so a
/// shared `u` couples decisions across lambda values.
pub fn sample_flag(z_org: f64, z_ad: f64, mode: FlagMode, u: f64) -> (Mode, f64) {
    let p = p_ad(z_org, z_ad);
    let flag = match mode {
        FlagMode::ForceOrg => Mode::Organic,
        FlagMode::ForceAd => Mode::Sponsored,
        FlagMode::Sample if u < p => Mode::Sponsored,
        FlagMode::Sample => Mode::Organic,
    };
    (flag, p)
}
