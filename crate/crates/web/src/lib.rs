//! WebAssembly bindings for the browser demo.
//!
//! A [`Demo`] synthesises a small market, trains the count scorer on it and
//! then answers three questions from the page: how the ad probability of one
//! slot moves with lambda, what the ranked candidates look like at a given
//! lambda, and how revenue responds when a few bids are shocked.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use gemrec_core::config::{CorpusConfig, IndexConfig, RunConfig};
use gemrec_core::decoder::{beam_search, decode_with_uniform, modulate_slot_logits, p_ad, DecodeConfig, FlagMode};
use gemrec_core::eval::{shock_experiment, ShockRow};
use gemrec_core::marketplace::Mode;
use gemrec_core::pipeline::{build_corpus, train_model, Dataset};
use gemrec_core::seq_model::{logits, CountModel, SlotKind};

const CANDIDATES: usize = 5;
const SHOCK_CASES: usize = 400;

// Errors cross into JS as plain strings, which also keeps them usable from
// native tests where no JS host exists.
fn js(e: impl std::fmt::Display) -> String {
    e.to_string()
}

#[derive(Serialize)]
struct CurvePoint {
    lambda: f64,
    p_ad: f64,
}

#[derive(Serialize)]
struct Candidate {
    item_id: Option<u32>,
    codes: Vec<u16>,
    disamb: u16,
    bid: f64,
    base_score: f64,
    score: f64,
}

#[derive(Serialize)]
struct Slot {
    flag: Mode,
    item_id: Option<u32>,
    price: f64,
    p_ad_pre: f64,
    p_ad_post: f64,
    ads: Vec<Candidate>,
    organic: Vec<Candidate>,
    truth: u32,
}

#[derive(Serialize)]
struct Shock<'a> {
    shocked: usize,
    natural_share: f64,
    rows: &'a [ShockRow],
}

#[wasm_bindgen]
pub struct Demo {
    cfg: RunConfig,
    data: Dataset,
    model: CountModel,
    summary: String,
}

#[wasm_bindgen]
impl Demo {
    /// Builds a 400-item market with 800 logged users and trains on it.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Result<Demo, String> {
        let defaults = RunConfig::default();
        let cfg = RunConfig {
            seed: u64::from(seed),
            corpus: CorpusConfig { n_items: 400, n_users: 800, ..defaults.corpus.clone() },
            index: IndexConfig { codebook_size: 8, ..defaults.index.clone() },
            ..defaults
        };
        let corpus = build_corpus(&cfg).map_err(js)?;
        let data = Dataset::from_corpus(&cfg, &corpus).map_err(js)?;
        let model = train_model(&data, cfg.model.order, cfg.model.alpha).map_err(js)?;
        let summary = format!(
            "{} items, {} sponsored, {} users, {:.1}% of logged slots are ads",
            corpus.inventory.len(),
            corpus.inventory.sponsored_count(),
            corpus.trajectories.len(),
            100.0 * corpus.ad_fraction
        );
        Ok(Demo { cfg, data, model, summary })
    }

    pub fn summary(&self) -> String {
        self.summary.clone()
    }

    /// Number of held-out users whose next slot can be decoded.
    pub fn users(&self) -> usize {
        self.data.cases.len()
    }

    /// `P(AD)` for one user's next slot at `points` lambdas evenly spaced in
    /// `[0, lambda_max]`, as JSON.
    pub fn ad_curve(&self, user: usize, lambda_max: f64, points: usize) -> Result<String, String> {
        let case = self.data.cases.get(user).ok_or_else(|| js("no such user"))?;
        let z = logits(&self.model, &case.context, SlotKind::Flag).map_err(js)?;
        let b_max = self.data.lookup.b_max();
        let n = points.max(2);
        let curve: Vec<CurvePoint> = (0..n)
            .map(|i| {
                let lambda = lambda_max * i as f64 / (n - 1) as f64;
                let (z_org, z_ad) = modulate_slot_logits(z[0], z[1], lambda, b_max);
                CurvePoint { lambda, p_ad: p_ad(z_org, z_ad) }
            })
            .collect();
        serde_json::to_string(&curve).map_err(js)
    }

    /// Decodes one user's next slot and lists the top sponsored and organic
    /// candidates behind it, as JSON. `u` is the flag draw in `[0, 1)`.
    pub fn decode(&self, user: usize, lambda: f64, u: f64) -> Result<String, String> {
        let case = self.data.cases.get(user).ok_or_else(|| js("no such user"))?;
        let config = DecodeConfig { lambda, flag_mode: FlagMode::Sample, ..self.cfg.decode.clone() };
        let market = self.data.market();
        let result = decode_with_uniform(&self.model, &case.context, &config, market, u).map_err(js)?;
        let ranked = |mode| -> Result<Vec<Candidate>, String> {
            let beams =
                beam_search(&self.model, &case.context, mode, &config, market.lookup, market.trie).map_err(js)?;
            Ok(beams
                .into_iter()
                .take(CANDIDATES)
                .map(|b| Candidate {
                    bid: b.item_id.and_then(|i| market.inventory.bid(i)).unwrap_or(0.0),
                    item_id: b.item_id,
                    codes: b.sid.codes,
                    disamb: b.sid.disamb,
                    base_score: b.base_score,
                    score: b.score,
                })
                .collect())
        };
        let slot = Slot {
            flag: result.flag,
            item_id: result.item_id,
            price: result.price,
            p_ad_pre: result.p_ad_pre,
            p_ad_post: result.p_ad_post,
            ads: ranked(Mode::Sponsored)?,
            organic: ranked(Mode::Organic)?,
            truth: case.organic_truth,
        };
        serde_json::to_string(&slot).map_err(js)
    }

    /// Multiplies the bids of a random `fraction` of sponsored items and
    /// re-decodes a sample of users at each lambda in `grid`, as JSON.
    pub fn shock(&self, fraction: f64, multiplier: f64, grid: Vec<f64>) -> Result<String, String> {
        let cases = self.data.eval_cases(Some(SHOCK_CASES));
        let report = shock_experiment(
            &self.model,
            cases,
            &self.data.trie,
            &self.data.inventory,
            &grid,
            fraction,
            multiplier,
            &self.cfg.decode,
            self.cfg.eval.k,
            self.cfg.seed,
        )
        .map_err(js)?;
        let shock = Shock { shocked: report.shocked.len(), natural_share: report.natural_share, rows: &report.rows };
        serde_json::to_string(&shock).map_err(js)
    }
}
