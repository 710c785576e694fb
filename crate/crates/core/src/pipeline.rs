//! End-to-end wiring: synthetic corpus, held-out split, training and the
//! market state used for decoding.

use std::collections::BTreeMap;

use crate::config::RunConfig;
use crate::decoder::{BidLookup, Market};
use crate::error::{Error, Result};
use crate::eval::{split_last_group, EvalCase};
use crate::io::{BidRecord, ItemRecord, SidRecord};
use crate::marketplace::{
    assign_bids, designate_sponsored, generate_trajectories, synth_organic_histories, Inventory, InventoryItem,
    Trajectory,
};
use crate::semantic_index::{
    assign_semantic_id, build_trie, disambiguate, fit_residual_quantizer, synth_embeddings, Codebooks, ItemEmbedding,
    SemanticId, SidTrie,
};
use crate::seq_model::{flatten, segment, segment_log_probs, train_scorer, CountModel, Scorer, Token, Vocabulary};

/// Everything `gen-data` produces.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub embeddings: Vec<ItemEmbedding>,
    pub codebooks: Codebooks,
    pub sids: Vec<(u32, SemanticId)>,
    pub inventory: Inventory,
    pub trajectories: Vec<Trajectory>,
    /// Realized share of sponsored interactions in the logs.
    pub ad_fraction: f64,
}

pub fn build_corpus(cfg: &RunConfig) -> Result<Corpus> {
    cfg.validate()?;
    let c = &cfg.corpus;
    let synth = synth_embeddings(c.n_items, c.dim, &c.mixture, cfg.seed);
    let embeddings = synth.embeddings;
    let codebooks =
        fit_residual_quantizer(&embeddings, cfg.index.depth, cfg.index.codebook_size, cfg.index.iterations, cfg.seed)?;
    let codes: Vec<(u32, Vec<u16>)> =
        embeddings.iter().map(|e| (e.item_id, assign_semantic_id(&e.vector, &codebooks))).collect();
    let sids = disambiguate(&codes);
    let ids: Vec<u32> = sids.iter().map(|(i, _)| *i).collect();
    let sponsored = designate_sponsored(&ids, cfg.market.sponsored_fraction, cfg.seed);
    let unpriced = Inventory::new(
        sids.iter()
            .map(|(id, sid)| InventoryItem {
                item_id: *id,
                sid: sid.clone(),
                sponsored: sponsored.contains(id),
                bid: None,
            })
            .collect(),
    )?;
    let inventory = assign_bids(&unpriced, cfg.market.mu, cfg.market.sigma, cfg.seed)?;
    let histories = synth_organic_histories(c.n_users, (c.min_len, c.max_len), &inventory, &c.walk, cfg.seed)?;
    let generated = generate_trajectories(&histories, &inventory, &cfg.market.policy(), cfg.seed)?;
    Ok(Corpus {
        ad_fraction: generated.realized_ad_fraction(),
        embeddings,
        codebooks,
        sids,
        inventory,
        trajectories: generated.trajectories,
    })
}

impl Corpus {
    pub fn item_records(&self) -> Vec<ItemRecord> {
        self.embeddings
            .iter()
            .map(|e| ItemRecord {
                item_id: e.item_id,
                embedding: e.vector.clone(),
                sponsored: self.inventory.get(e.item_id).is_some_and(|i| i.sponsored),
            })
            .collect()
    }

    pub fn sid_records(&self) -> Vec<SidRecord> {
        sid_records(&self.sids)
    }

    pub fn bid_records(&self) -> Vec<BidRecord> {
        bid_records(&self.inventory)
    }
}

pub fn sid_records(sids: &[(u32, SemanticId)]) -> Vec<SidRecord> {
    sids.iter().map(|(id, s)| SidRecord { item_id: *id, codes: s.codes.clone(), disamb: s.disamb }).collect()
}

pub fn bid_records(inventory: &Inventory) -> Vec<BidRecord> {
    inventory.bids().into_iter().map(|(item_id, bid)| BidRecord { item_id, bid }).collect()
}

pub fn sids_from_records(records: &[SidRecord]) -> Vec<(u32, SemanticId)> {
    records.iter().map(|r| (r.item_id, SemanticId::new(r.codes.clone(), r.disamb))).collect()
}

/// Rebuilds the inventory from the three artifact files.
pub fn inventory_from_records(items: &[ItemRecord], sids: &[SidRecord], bids: &[BidRecord]) -> Result<Inventory> {
    let sid_of: BTreeMap<u32, SemanticId> = sids_from_records(sids).into_iter().collect();
    let bid_of: BTreeMap<u32, f64> = bids.iter().map(|b| (b.item_id, b.bid)).collect();
    let rows = items
        .iter()
        .map(|i| {
            Ok(InventoryItem {
                item_id: i.item_id,
                sid: sid_of.get(&i.item_id).cloned().ok_or(Error::MissingId(i.item_id))?,
                sponsored: i.sponsored,
                bid: bid_of.get(&i.item_id).copied(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Inventory::new(rows)
}

/// Split logs plus the read-only decoding state.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub trie: SidTrie,
    pub vocab: Vocabulary,
    pub inventory: Inventory,
    pub lookup: BidLookup,
    pub train: Vec<Trajectory>,
    pub cases: Vec<EvalCase>,
}

impl Dataset {
    pub fn new(
        codebook_size: usize,
        sids: &[(u32, SemanticId)],
        inventory: Inventory,
        trajectories: &[Trajectory],
    ) -> Result<Self> {
        let trie = build_trie(sids)?;
        let vocab = Vocabulary::new(trie.depth(), codebook_size, trie.max_disamb() as usize + 1)?;
        let lookup = BidLookup::from_inventory(&trie, &inventory)?;
        let (train, cases) = split_last_group(trajectories, &trie, &vocab)?;
        Ok(Self { trie, vocab, inventory, lookup, train, cases })
    }

    pub fn from_corpus(cfg: &RunConfig, corpus: &Corpus) -> Result<Self> {
        Self::new(cfg.index.codebook_size, &corpus.sids, corpus.inventory.clone(), &corpus.trajectories)
    }

    pub fn market(&self) -> Market<'_> {
        Market { trie: &self.trie, inventory: &self.inventory, lookup: &self.lookup }
    }

    pub fn train_streams(&self) -> Result<Vec<Vec<Token>>> {
        self.train.iter().map(|t| flatten(t, &self.trie, &self.vocab)).collect()
    }

    /// The first `limit` held-out cases, or all of them.
    pub fn eval_cases(&self, limit: Option<usize>) -> &[EvalCase] {
        &self.cases[..limit.unwrap_or(usize::MAX).min(self.cases.len())]
    }
}

pub fn train_model(dataset: &Dataset, order: usize, alpha: f64) -> Result<CountModel> {
    train_scorer(&dataset.train_streams()?, dataset.vocab, order, alpha)
}

/// Mean per-token NLL of each held-out target segment given its context.
pub fn heldout_nll<S: Scorer + ?Sized>(model: &S, dataset: &Dataset) -> Result<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for case in &dataset.cases {
        let sid = dataset.trie.sid_of(case.truth.item_id).ok_or(Error::MissingId(case.truth.item_id))?;
        let seg = segment(case.truth.mode, sid, &dataset.vocab);
        for lp in segment_log_probs(model, &case.context, &seg)? {
            sum -= lp;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Stream("no held-out tokens".into()));
    }
    Ok(sum / n as f64)
}

/// Token-weighted mean NLL over training streams.
pub fn corpus_nll<S: Scorer + ?Sized>(model: &S, streams: &[Vec<Token>]) -> Result<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for s in streams {
        // BOS and EOS are framing, not predictions.
        let tokens = s.len().saturating_sub(2);
        if tokens == 0 {
            continue;
        }
        sum += crate::seq_model::sequence_nll(model, s)? * tokens as f64;
        n += tokens;
    }
    if n == 0 {
        return Err(Error::Stream("no training tokens".into()));
    }
    Ok(sum / n as f64)
}
