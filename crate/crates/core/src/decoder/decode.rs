use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::beam::{beam_search, Beam};
use super::lookup::BidLookup;
use super::modulation::{modulate_slot_logits, p_ad, sample_flag};
use super::{DecodeConfig, FlagMode};
use crate::error::Result;
use crate::marketplace::{Inventory, Mode};
use crate::rng::Rng;
use crate::semantic_index::SidTrie;
use crate::seq_model::{logits, Scorer, SlotKind, Token};

/// Read-only market state shared by decode requests.
#[derive(Debug, Clone, Copy)]
pub struct Market<'a> {
    pub trie: &'a SidTrie,
    pub inventory: &'a Inventory,
    pub lookup: &'a BidLookup,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecodeResult {
    pub flag: Mode,
    pub codes: Vec<u16>,
    pub disamb: u16,
    pub item_id: Option<u32>,
    pub base_score: f64,
    pub mod_score: f64,
    pub p_ad_pre: f64,
    pub p_ad_post: f64,
    /// First price: the winning ad's bid, zero for organic slots.
    pub price: f64,
    /// Full ranked list behind the top result.
    #[serde(skip)]
    pub beams: Vec<Beam>,
}

/// `(z_org, z_ad, modulated z_ad)` at the flag slot.
fn flag_logits<S: Scorer + ?Sized>(
    model: &S,
    context: &[Token],
    config: &DecodeConfig,
    b_max: f64,
) -> Result<(f64, f64, f64)> {
    let z = logits(model, context, SlotKind::Flag)?;
    let (z_org, z_ad_mod) = modulate_slot_logits(z[0], z[1], config.slot_lambda(), b_max);
    Ok((z_org, z[1], z_ad_mod))
}

/// Decode with an externally supplied uniform for the flag draw, so runs at
/// different lambda can share their randomness.
pub fn decode_with_uniform<S: Scorer + ?Sized>(
    model: &S,
    context: &[Token],
    config: &DecodeConfig,
    market: Market<'_>,
    u: f64,
) -> Result<DecodeResult> {
    config.validate()?;
    let (z_org, z_ad, z_ad_mod) = flag_logits(model, context, config, market.lookup.b_max())?;
    let (flag, p_ad_post) = sample_flag(z_org, z_ad_mod, config.flag_mode, u);
    let beams = beam_search(model, context, flag, config, market.lookup, market.trie)?;
    let top = &beams[0];
    let price = match (flag, top.item_id) {
        (Mode::Sponsored, Some(item)) => market.inventory.bid(item).filter(|&b| b > 0.0).unwrap_or(0.0),
        _ => 0.0,
    };
    Ok(DecodeResult {
        flag,
        codes: top.sid.codes.clone(),
        disamb: top.sid.disamb,
        item_id: top.item_id,
        base_score: top.base_score,
        mod_score: top.score,
        p_ad_pre: p_ad(z_org, z_ad),
        p_ad_post,
        price,
        beams,
    })
}

pub fn decode_next<S: Scorer + ?Sized>(
    model: &S,
    context: &[Token],
    config: &DecodeConfig,
    market: Market<'_>,
    rng: &mut Rng,
) -> Result<DecodeResult> {
    decode_with_uniform(model, context, config, market, rng.random())
}

/// `P_lambda(AD) * 1[top AD beam = item]`, computed without sampling.
pub fn allocation_probability<S: Scorer + ?Sized>(
    item: u32,
    context: &[Token],
    config: &DecodeConfig,
    model: &S,
    market: Market<'_>,
) -> Result<f64> {
    let (z_org, _, z_ad_mod) = flag_logits(model, context, config, market.lookup.b_max())?;
    let beams = beam_search(model, context, Mode::Sponsored, config, market.lookup, market.trie)?;
    Ok(if beams[0].item_id == Some(item) { p_ad(z_org, z_ad_mod) } else { 0.0 })
}

/// JSON decode request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeRequest {
    pub context: Vec<Token>,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_beam")]
    pub beam: usize,
    #[serde(default)]
    pub flag_mode: FlagMode,
    #[serde(default)]
    pub seed: u64,
}

fn default_beam() -> usize {
    DecodeConfig::default().beam_width
}

impl DecodeRequest {
    /// The request's settings layered over `base`.
    pub fn config(&self, base: &DecodeConfig) -> DecodeConfig {
        DecodeConfig { lambda: self.lambda, beam_width: self.beam, flag_mode: self.flag_mode, ..base.clone() }
    }
}
