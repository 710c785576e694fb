//! Bid-aware hierarchical decoding: the slot flag is sampled from modulated
//! flag logits, then a deterministic beam search fills in the semantic ID,
//! steered toward high-bid subtrees when the slot is sponsored.

mod beam;
mod decode;
mod lookup;
mod modulation;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) use beam::search;
pub use beam::{beam_search, Beam};
pub use decode::{allocation_probability, decode_next, decode_with_uniform, DecodeRequest, DecodeResult, Market};
pub use lookup::{build_bid_lookup, BidLookup};
pub use modulation::{modulate_item_logits, modulate_slot_logits, p_ad, sample_flag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagMode {
    #[default]
    Sample,
    ForceOrg,
    ForceAd,
}

impl std::str::FromStr for FlagMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sample" => Ok(Self::Sample),
            "force_org" => Ok(Self::ForceOrg),
            "force_ad" => Ok(Self::ForceAd),
            _ => Err(Error::Config(format!("unknown flag mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeConfig {
    pub lambda: f64,
    pub beam_width: usize,
    /// Overrides `lambda` for the flag logit when set.
    pub lambda_slot: Option<f64>,
    /// Overrides `lambda` for code logits when set.
    pub lambda_item: Option<f64>,
    pub flag_mode: FlagMode,
    /// Restrict generation to paths present in the trie (and, for ads, to
    /// subtrees holding an eligible item).
    pub constrained: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            beam_width: 10,
            lambda_slot: None,
            lambda_item: None,
            flag_mode: FlagMode::Sample,
            constrained: true,
        }
    }
}

impl DecodeConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self { lambda, ..Self::default() }
    }

    pub fn slot_lambda(&self) -> f64 {
        self.lambda_slot.unwrap_or(self.lambda)
    }

    pub fn item_lambda(&self) -> f64 {
        self.lambda_item.unwrap_or(self.lambda)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in
            [("lambda", Some(self.lambda)), ("lambda_slot", self.lambda_slot), ("lambda_item", self.lambda_item)]
        {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
                }
            }
        }
        if self.beam_width == 0 {
            return Err(Error::Config("beam width must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
