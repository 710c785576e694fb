//! Run configuration: every tunable of the pipeline with desk-scale defaults,
//! loadable from TOML with unknown keys rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::decoder::DecodeConfig;
use crate::error::{Error, Result};
use crate::marketplace::{PolicyParams, WalkParams};
use crate::semantic_index::MixtureSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Sparse ads: `p = 0.4`, `r = 0.05`.
    #[default]
    Main,
    /// Dense ads: `p = 1.0`, `r = 0.5`.
    High,
}

impl Preset {
    /// The `(p, r)` acceptance parameters of the logging policy.
    pub fn policy(self) -> (f64, f64) {
        match self {
            Self::Main => (0.4, 0.05),
            Self::High => (1.0, 0.5),
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "main" => Ok(Self::Main),
            "high" => Ok(Self::High),
            _ => Err(Error::Config(format!("unknown preset {s:?}; expected main or high"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub n_items: usize,
    pub dim: usize,
    pub n_users: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub mixture: MixtureSpec,
    pub walk: WalkParams,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_items: 2000,
            dim: 16,
            n_users: 5000,
            min_len: 8,
            max_len: 24,
            mixture: MixtureSpec::default(),
            walk: WalkParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IndexConfig {
    pub depth: usize,
    pub codebook_size: usize,
    pub iterations: usize,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self { depth: 3, codebook_size: 16, iterations: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarketConfig {
    pub sponsored_fraction: f64,
    pub mu: f64,
    pub sigma: f64,
    pub tau: f64,
    pub p: f64,
    pub r: f64,
    pub d: usize,
    pub shock_fraction: f64,
    pub shock_multiplier: f64,
}

impl Default for MarketConfig {
    fn default() -> Self {
        let policy = PolicyParams::default();
        Self {
            sponsored_fraction: 0.2,
            mu: 0.0,
            sigma: 0.2,
            tau: policy.tau,
            p: policy.p,
            r: policy.r,
            d: policy.d,
            shock_fraction: 0.05,
            shock_multiplier: 10.0,
        }
    }
}

impl MarketConfig {
    pub fn policy(&self) -> PolicyParams {
        PolicyParams { d: self.d, tau: self.tau, p: self.p, r: self.r }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub order: usize,
    pub alpha: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { order: 5, alpha: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub lambda_grid: Vec<f64>,
    pub shock_grid: Vec<f64>,
    pub k: usize,
    /// Evaluate only the first this-many held-out users.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_cases: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            lambda_grid: vec![0.0, 0.5, 1.0, 2.0, 5.0, 7.5, 10.0],
            shock_grid: vec![0.0, 0.5, 1.0, 2.0],
            k: 10,
            max_cases: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub preset: Preset,
    pub out: PathBuf,
    pub corpus: CorpusConfig,
    pub index: IndexConfig,
    pub market: MarketConfig,
    pub model: ModelConfig,
    pub decode: DecodeConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            preset: Preset::Main,
            out: PathBuf::from("out"),
            corpus: CorpusConfig::default(),
            index: IndexConfig::default(),
            market: MarketConfig::default(),
            model: ModelConfig::default(),
            decode: DecodeConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let mut cfg = Self::default();
        cfg.apply_preset(preset);
        cfg
    }

    /// Sets the policy acceptance parameters of a preset.
    pub fn apply_preset(&mut self, preset: Preset) {
        self.preset = preset;
        (self.market.p, self.market.r) = preset.policy();
    }

    /// Parses a config file. A `preset` key supplies `p` and `r` unless the
    /// `[market]` table sets them itself.
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut cfg: Self = table.clone().try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let market = table.get("market").and_then(|m| m.as_table());
        let given = |key: &str| market.is_some_and(|m| m.contains_key(key));
        let (p, r) = cfg.preset.policy();
        if !given("p") {
            cfg.market.p = p;
        }
        if !given("r") {
            cfg.market.r = r;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    // Comparisons are negated so that NaN fails them.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let c = &self.corpus;
        if c.n_items < 2 || c.dim < 2 {
            return bad(format!("need at least 2 items of dimension >= 2, got {} x {}", c.n_items, c.dim));
        }
        if c.min_len == 0 || c.min_len > c.max_len {
            return bad(format!("invalid history lengths {}..={}", c.min_len, c.max_len));
        }
        c.walk.validate()?;
        let i = &self.index;
        if i.depth == 0 || i.codebook_size < 2 || i.iterations == 0 {
            return bad(format!(
                "invalid index shape D={}, C={}, iterations={}",
                i.depth, i.codebook_size, i.iterations
            ));
        }
        let m = &self.market;
        if !(m.sponsored_fraction > 0.0 && m.sponsored_fraction <= 1.0) {
            return bad(format!("sponsored_fraction must be in (0, 1], got {}", m.sponsored_fraction));
        }
        if !(m.sigma >= 0.0 && m.sigma.is_finite() && m.mu.is_finite()) {
            return bad(format!("invalid bid distribution mu={}, sigma={}", m.mu, m.sigma));
        }
        m.policy().validate(i.depth)?;
        if !(m.shock_fraction > 0.0 && m.shock_fraction <= 1.0) || !(m.shock_multiplier > 0.0) {
            return bad(format!("invalid shock {} x {}", m.shock_fraction, m.shock_multiplier));
        }
        crate::seq_model::validate_params(self.model.order, self.model.alpha)?;
        self.decode.validate()?;
        if self.eval.k == 0 {
            return bad("k must be at least 1".into());
        }
        for &l in self.eval.lambda_grid.iter().chain(&self.eval.shock_grid) {
            if !(l >= 0.0 && l.is_finite()) {
                return bad(format!("grid value {l} is not a finite non-negative lambda"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::preset(Preset::High);
        assert_eq!((cfg.market.p, cfg.market.r), (1.0, 0.5));
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg = RunConfig::from_toml("seed = 3\n[market]\np = 0.2\n").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.market.p, 0.2);
        assert_eq!(cfg.market.r, 0.05);
        assert_eq!(cfg.index.codebook_size, 16);
    }

    #[test]
    fn preset_key_fills_only_missing_policy_values() {
        let cfg = RunConfig::from_toml("preset = \"high\"\n").unwrap();
        assert_eq!((cfg.market.p, cfg.market.r), (1.0, 0.5));
        let cfg = RunConfig::from_toml("preset = \"high\"\n[market]\nr = 0.2\n").unwrap();
        assert_eq!((cfg.market.p, cfg.market.r), (1.0, 0.2));
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(RunConfig::from_toml("sed = 3").is_err());
        assert!(RunConfig::from_toml("[market]\ntau = 0.0").is_err());
        assert!(RunConfig::from_toml("[market]\nd = 4").is_err());
        assert!(RunConfig::from_toml("[eval]\nk = 0").is_err());
        assert!(RunConfig::from_toml("[model]\nalpha = -1.0").is_err());
        assert!(RunConfig::from_toml("[decode]\nbogus = 1").is_err());
        assert!("medium".parse::<Preset>().is_err());
    }
}
