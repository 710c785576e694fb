//! Executable checks of the mechanism's guarantees: allocation monotonicity,
//! safe fallback at lambda 0, lambda-invariance of organic rankings, the
//! ad-free collapse, and beam search against exhaustive enumeration.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::index::sample;
use rand::Rng as _;

use super::sweep::{evaluate, EvalCase};
use crate::decoder::{
    allocation_probability, beam_search, decode_with_uniform, modulate_item_logits, modulate_slot_logits, p_ad, search,
    Beam, BidLookup, DecodeConfig, FlagMode, Market,
};
use crate::error::Result;
use crate::marketplace::{Inventory, InventoryItem, Mode, Trajectory};
use crate::rng::{derive_seed, rng_for, streams};
use crate::semantic_index::{build_trie, NodeId, SemanticId, SidTrie};
use crate::seq_model::{
    flatten, logits, segment, train_scorer, RandomScorer, Scorer, SlotKind, Token, Vocabulary, BOS,
};

/// Negative controls: deliberately broken variants of the mechanism that the
/// audits must catch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Apply item-level modulation on the organic branch too.
    ModulateOrganic,
    /// Flip the sign of both bid boosts.
    NegateBoost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditOutcome {
    pub name: &'static str,
    pub checks: usize,
    pub failure_count: usize,
    /// The first few failures, each naming its instance.
    pub failures: Vec<String>,
}

const KEEP_FAILURES: usize = 5;

impl AuditOutcome {
    fn new(name: &'static str) -> Self {
        Self { name, checks: 0, failure_count: 0, failures: Vec::new() }
    }

    fn check(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failure_count += 1;
            if self.failures.len() < KEEP_FAILURES {
                self.failures.push(describe());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.failure_count == 0
    }
}

impl fmt::Display for AuditOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            write!(f, "PASS {} ({} checks)", self.name, self.checks)
        } else {
            write!(f, "FAIL {} ({} of {} checks failed)", self.name, self.failure_count, self.checks)?;
            for msg in &self.failures {
                write!(f, "\n    {msg}")?;
            }
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub outcomes: Vec<AuditOutcome>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(AuditOutcome::passed)
    }

    pub fn get(&self, name: &str) -> Option<&AuditOutcome> {
        self.outcomes.iter().find(|o| o.name == name)
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for o in &self.outcomes {
            writeln!(f, "{o}")?;
        }
        write!(f, "{}", if self.passed() { "all audits passed" } else { "audit FAILED" })
    }
}

/// Small random market over a pseudo-random scorer.
#[derive(Debug, Clone)]
pub struct ToyInstance {
    pub model: RandomScorer,
    pub trie: SidTrie,
    pub inventory: Inventory,
    pub lookup: BidLookup,
    pub contexts: Vec<Vec<Token>>,
}

impl ToyInstance {
    pub fn market(&self) -> Market<'_> {
        Market { trie: &self.trie, inventory: &self.inventory, lookup: &self.lookup }
    }
}

/// `n_items` distinct code paths (capped at `codes^depth`), a quarter of
/// them with a colliding twin, about half of all items sponsored with bids
/// in [0.1, 1], and `n_contexts` short histories.
pub fn toy_instance(seed: u64, depth: usize, codes: u16, n_items: usize, n_contexts: usize) -> Result<ToyInstance> {
    let mut rng = rng_for(seed, streams::AUDIT);
    let space = (codes as usize).pow(depth as u32);
    let n = n_items.clamp(2, space);
    let mut items: Vec<InventoryItem> = sample(&mut rng, space, n)
        .into_iter()
        .enumerate()
        .map(|(id, mut path)| {
            let mut c = vec![0u16; depth];
            for slot in c.iter_mut().rev() {
                *slot = (path % codes as usize) as u16;
                path /= codes as usize;
            }
            InventoryItem { item_id: id as u32, sid: SemanticId::new(c, 0), sponsored: false, bid: None }
        })
        .collect();
    // Some paths get a colliding twin under disambiguator 1.
    let twins: Vec<InventoryItem> = items
        .iter()
        .filter(|_| rng.random::<f64>() < 0.25)
        .map(|i| InventoryItem {
            item_id: 0,
            sid: SemanticId::new(i.sid.codes.clone(), 1),
            sponsored: false,
            bid: None,
        })
        .collect();
    items.extend(twins);
    for (id, item) in items.iter_mut().enumerate() {
        item.item_id = id as u32;
    }
    let disamb_size = 1 + items.iter().any(|i| i.sid.disamb > 0) as usize;
    for (k, item) in items.iter_mut().enumerate() {
        if k < 2 || rng.random::<f64>() < 0.5 {
            item.sponsored = true;
            item.bid = Some(rng.random_range(0.1..=1.0));
        }
    }
    let sids: Vec<(u32, SemanticId)> = items.iter().map(|i| (i.item_id, i.sid.clone())).collect();
    let trie = build_trie(&sids)?;
    let inventory = Inventory::new(items)?;
    let lookup = BidLookup::from_inventory(&trie, &inventory)?;
    let vocab = Vocabulary::new(depth, codes as usize, disamb_size)?;
    let contexts = (0..n_contexts)
        .map(|_| {
            let mut ctx = vec![BOS];
            for _ in 0..rng.random_range(0..=3) {
                let (_, sid) = &sids[rng.random_range(0..sids.len())];
                let mode = if rng.random::<f64>() < 0.3 { Mode::Sponsored } else { Mode::Organic };
                ctx.extend(segment(mode, sid, &vocab));
            }
            ctx
        })
        .collect();
    Ok(ToyInstance {
        model: RandomScorer { vocab, seed: derive_seed(seed, streams::AUDIT), spread: 3.0 },
        trie,
        inventory,
        lookup,
        contexts,
    })
}

fn allocation<S: Scorer + ?Sized>(
    item: u32,
    context: &[Token],
    config: &DecodeConfig,
    model: &S,
    market: Market<'_>,
    fault: Fault,
) -> Result<f64> {
    if fault != Fault::NegateBoost {
        return allocation_probability(item, context, config, model, market);
    }
    let z = logits(model, context, SlotKind::Flag)?;
    let (z_org, z_ad) = modulate_slot_logits(z[0], z[1], -config.slot_lambda(), market.lookup.b_max());
    let beams = search(
        model,
        context,
        Mode::Sponsored,
        Some(-config.item_lambda()),
        config.beam_width,
        config.constrained,
        market.lookup,
        market.trie,
    )?;
    Ok(if beams[0].item_id == Some(item) { p_ad(z_org, z_ad) } else { 0.0 })
}

/// Ascending grid of `points` bids from 0.1 to 2.0.
pub fn bid_grid(points: usize) -> Vec<f64> {
    let points = points.max(2);
    (0..points).map(|t| 0.1 + 1.9 * t as f64 / (points - 1) as f64).collect()
}

/// Sweeps each eligible item's own bid over the grid with every other bid
/// fixed; the allocation probability must never decrease.
pub fn audit_monotonicity(
    instances: &[ToyInstance],
    grid_points: usize,
    lambdas: &[f64],
    config: &DecodeConfig,
    fault: Fault,
) -> Result<AuditOutcome> {
    let mut out = AuditOutcome::new("monotonicity");
    let grid = bid_grid(grid_points);
    for (n, inst) in instances.iter().enumerate() {
        for item in inst.inventory.eligible() {
            let markets: Vec<(Inventory, BidLookup)> = grid
                .iter()
                .map(|&b| {
                    let inv = inst.inventory.with_bids(&BTreeMap::from([(item, b)]))?;
                    let lookup = BidLookup::from_inventory(&inst.trie, &inv)?;
                    Ok((inv, lookup))
                })
                .collect::<Result<_>>()?;
            for &lambda in lambdas {
                let cfg = DecodeConfig { lambda, ..config.clone() };
                for (c, ctx) in inst.contexts.iter().enumerate() {
                    let mut prev = f64::NEG_INFINITY;
                    for (g, (inv, lookup)) in markets.iter().enumerate() {
                        let market = Market { trie: &inst.trie, inventory: inv, lookup };
                        let x = allocation(item, ctx, &cfg, &inst.model, market, fault)?;
                        out.check(x >= prev, || {
                            format!(
                                "instance {n}, context {c}, item {item}, lambda {lambda}: x fell from {prev} to {x} at bid {}",
                                grid[g]
                            )
                        });
                        prev = x;
                    }
                }
            }
        }
    }
    Ok(out)
}

fn same_beams(a: &[Beam], b: &[Beam]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.sid == y.sid
                && x.item_id == y.item_id
                && x.score.to_bits() == y.score.to_bits()
                && x.base_score.to_bits() == y.base_score.to_bits()
        })
}

/// At lambda 0 every modulated logit equals its base logit bit for bit, and
/// forced-flag decoding reproduces the unmodulated beams exactly.
pub fn audit_safe_fallback<S: Scorer + ?Sized>(
    model: &S,
    contexts: &[Vec<Token>],
    market: Market<'_>,
    config: &DecodeConfig,
) -> Result<AuditOutcome> {
    let mut out = AuditOutcome::new("safe_fallback");
    let cfg = DecodeConfig { lambda: 0.0, lambda_slot: None, lambda_item: None, ..config.clone() };
    let vocab = *model.vocab();
    for (c, ctx) in contexts.iter().enumerate() {
        let z = logits(model, ctx, SlotKind::Flag)?;
        let (zo, za) = modulate_slot_logits(z[0], z[1], 0.0, market.lookup.b_max());
        out.check(zo.to_bits() == z[0].to_bits() && za.to_bits() == z[1].to_bits(), || {
            format!("context {c}: flag logits moved at lambda 0")
        });
        for (mode, flag) in [(FlagMode::ForceOrg, Mode::Organic), (FlagMode::ForceAd, Mode::Sponsored)] {
            if flag == Mode::Sponsored && !market.lookup.has_eligible() {
                continue;
            }
            let got = decode_with_uniform(model, ctx, &DecodeConfig { flag_mode: mode, ..cfg.clone() }, market, 0.5)?;
            let reference =
                search(model, ctx, flag, None, cfg.beam_width, cfg.constrained, market.lookup, market.trie)?;
            out.check(same_beams(&got.beams, &reference), || format!("context {c}: {flag:?} beams differ at lambda 0"));
            // Code logits along every returned path.
            for b in &reference {
                let mut node: Option<NodeId> = Some(market.trie.root());
                let mut buf = ctx.clone();
                buf.push(if flag == Mode::Sponsored { crate::seq_model::AD } else { crate::seq_model::ORG });
                for (k, &code) in b.sid.codes.iter().enumerate() {
                    let z = model.score_slot(&buf, SlotKind::Code(k + 1));
                    let m = modulate_item_logits(&z, 0.0, market.lookup, market.trie, node);
                    out.check(z.iter().zip(&m).all(|(a, b)| a.to_bits() == b.to_bits()), || {
                        format!("context {c}: level-{} code logits moved at lambda 0", k + 1)
                    });
                    buf.push(vocab.code(k + 1, code));
                    node = node.and_then(|n| market.trie.child(n, code));
                }
            }
        }
    }
    Ok(out)
}

/// Organic beams (items, order and scores) must not change with lambda.
pub fn audit_organic_integrity<S: Scorer + ?Sized>(
    model: &S,
    contexts: &[Vec<Token>],
    market: Market<'_>,
    lambdas: &[f64],
    config: &DecodeConfig,
    fault: Fault,
) -> Result<AuditOutcome> {
    let mut out = AuditOutcome::new("organic_integrity");
    for (c, ctx) in contexts.iter().enumerate() {
        let reference = beam_search(
            model,
            ctx,
            Mode::Organic,
            &DecodeConfig { lambda: 0.0, ..config.clone() },
            market.lookup,
            market.trie,
        )?;
        for &lambda in lambdas {
            let cfg = DecodeConfig { lambda, ..config.clone() };
            let beams = match fault {
                Fault::ModulateOrganic => search(
                    model,
                    ctx,
                    Mode::Organic,
                    Some(cfg.item_lambda()),
                    cfg.beam_width,
                    cfg.constrained,
                    market.lookup,
                    market.trie,
                )?,
                _ => beam_search(model, ctx, Mode::Organic, &cfg, market.lookup, market.trie)?,
            };
            let ids = |v: &[Beam]| v.iter().map(|b| b.item_id).collect::<Vec<_>>();
            out.check(ids(&beams) == ids(&reference) && same_beams(&beams, &reference), || {
                format!("context {c}, lambda {lambda}: organic ranking changed")
            });
        }
    }
    Ok(out)
}

/// Result of retraining without any ads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdFreeCheck {
    pub p_ad_bos: f64,
    pub bos_total: u64,
    pub ad_rate: f64,
}

/// Trains on the same logs with every ad removed, then checks that `P(AD | BOS)`
/// sits at the smoothing floor and that lambda 0 almost never shows an ad.
#[allow(clippy::too_many_arguments)]
pub fn audit_ad_free(
    train: &[Trajectory],
    trie: &SidTrie,
    vocab: &Vocabulary,
    order: usize,
    alpha: f64,
    cases: &[EvalCase],
    market: Market<'_>,
    config: &DecodeConfig,
    seed: u64,
) -> Result<(AuditOutcome, AdFreeCheck)> {
    let mut out = AuditOutcome::new("ad_free_generalization");
    let streams = train
        .iter()
        .map(|t| {
            let organic = Trajectory {
                user_id: t.user_id,
                events: t.events.iter().copied().filter(|e| e.mode == Mode::Organic).collect(),
            };
            flatten(&organic, trie, vocab)
        })
        .collect::<Result<Vec<_>>>()?;
    let model = train_scorer(&streams, *vocab, order, alpha)?;
    let total = model.context_total(&[BOS], SlotKind::Flag);
    let p = logits(&model, &[BOS], SlotKind::Flag)?[1].exp();
    out.check(total > 0 && p <= 2.0 * alpha / total as f64, || {
        format!("P(AD|BOS) = {p} exceeds 2*alpha/total = {}", 2.0 * alpha / total as f64)
    });
    out.check((p - alpha / (total as f64 + 2.0 * alpha)).abs() < 1e-12, || {
        format!("P(AD|BOS) = {p} is not the smoothing floor")
    });
    let cfg = DecodeConfig { lambda: 0.0, flag_mode: FlagMode::Sample, ..config.clone() };
    let (_, row) = evaluate(&model, cases, market, &cfg, 10, seed, None)?;
    out.check(row.ad_rate < 0.01, || format!("ad rate at lambda 0 is {}", row.ad_rate));
    Ok((out, AdFreeCheck { p_ad_bos: p, bos_total: total, ad_rate: row.ad_rate }))
}

/// All full IDs scored by direct enumeration and sorted by the decoder's
/// ranking rule. Independent of the beam implementation.
pub fn exhaustive_ranking<S: Scorer + ?Sized>(
    model: &S,
    context: &[Token],
    flag: Mode,
    item_lambda: Option<f64>,
    constrained: bool,
    lookup: &BidLookup,
    trie: &SidTrie,
) -> Vec<Beam> {
    let vocab = *model.vocab();
    let c = vocab.codebook_size;
    let legal = |node: Option<NodeId>| match node {
        None => !constrained,
        Some(n) => !(constrained && flag == Mode::Sponsored) || lookup.get(n).is_some(),
    };
    let norm = |z: &[f64], allowed: &[bool], pick: usize| -> f64 {
        let kept: Vec<f64> = z.iter().zip(allowed).filter(|(_, &a)| a).map(|(&x, _)| x).collect();
        let m = kept.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        z[pick] - (m + kept.iter().map(|x| (x - m).exp()).sum::<f64>().ln())
    };
    let mut out = Vec::new();
    let paths = c.pow(vocab.depth as u32);
    'paths: for idx in 0..paths {
        let mut codes = vec![0u16; vocab.depth];
        let mut rest = idx;
        for slot in codes.iter_mut().rev() {
            *slot = (rest % c) as u16;
            rest /= c;
        }
        let mut ctx = context.to_vec();
        ctx.push(if flag == Mode::Sponsored { crate::seq_model::AD } else { crate::seq_model::ORG });
        let mut node = Some(trie.root());
        let (mut score, mut base) = (0.0, 0.0);
        for (k, &code) in codes.iter().enumerate() {
            let z = model.score_slot(&ctx, SlotKind::Code(k + 1));
            let kids: Vec<Option<NodeId>> = (0..c).map(|v| node.and_then(|n| trie.child(n, v as u16))).collect();
            let allowed: Vec<bool> = kids.iter().map(|&k| legal(k)).collect();
            if !allowed[code as usize] {
                continue 'paths;
            }
            let zm: Vec<f64> = match item_lambda {
                Some(l) => z
                    .iter()
                    .zip(&kids)
                    .map(|(&x, &k)| x + l * k.and_then(|n| lookup.get(n)).map_or(0.0, |b| (1.0 + b).ln()))
                    .collect(),
                None => z.clone(),
            };
            score += norm(&zm, &allowed, code as usize);
            base += norm(&z, &allowed, code as usize);
            ctx.push(vocab.code(k + 1, code));
            node = node.and_then(|n| trie.child(n, code));
        }
        let z = model.score_slot(&ctx, SlotKind::Disamb);
        let leaves: Vec<Option<NodeId>> = (0..z.len()).map(|d| node.and_then(|n| trie.child(n, d as u16))).collect();
        let allowed: Vec<bool> = leaves.iter().map(|&l| legal(l)).collect();
        let zm: Vec<f64> = match item_lambda {
            Some(l) => z
                .iter()
                .zip(&leaves)
                .map(|(&x, &leaf)| x + l * leaf.and_then(|n| lookup.get(n)).map_or(0.0, |b| (1.0 + b).ln()))
                .collect(),
            None => z.clone(),
        };
        for d in (0..z.len()).filter(|&d| allowed[d]) {
            out.push(Beam {
                sid: SemanticId::new(codes.clone(), d as u16),
                item_id: leaves[d].and_then(|l| trie.item(l)),
                score: score + norm(&zm, &allowed, d),
                base_score: base + norm(&z, &allowed, d),
            });
        }
    }
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.sid.codes.cmp(&b.sid.codes))
            .then_with(|| a.sid.disamb.cmp(&b.sid.disamb))
    });
    out
}

/// Beam search with a width covering every full ID must return the
/// exhaustive ranking, for both flags and every lambda.
pub fn audit_beam_oracle(n_models: usize, lambdas: &[f64], seed: u64) -> Result<AuditOutcome> {
    let mut out = AuditOutcome::new("beam_oracle");
    for m in 0..n_models {
        let inst = toy_instance(derive_seed(seed, m as u64), 2, 3, 4 + m % 6, 3)?;
        for (c, ctx) in inst.contexts.iter().enumerate() {
            for flag in [Mode::Organic, Mode::Sponsored] {
                for &lambda in lambdas {
                    let cfg = DecodeConfig { lambda, beam_width: 9, ..DecodeConfig::default() };
                    let beams = beam_search(&inst.model, ctx, flag, &cfg, &inst.lookup, &inst.trie)?;
                    let item_lambda = (flag == Mode::Sponsored).then_some(lambda);
                    let mut oracle =
                        exhaustive_ranking(&inst.model, ctx, flag, item_lambda, true, &inst.lookup, &inst.trie);
                    oracle.truncate(cfg.beam_width);
                    let ok = beams.len() == oracle.len()
                        && beams.iter().zip(&oracle).all(|(a, b)| {
                            a.sid == b.sid
                                && (a.score - b.score).abs() < 1e-12
                                && (a.base_score - b.base_score).abs() < 1e-12
                        });
                    out.check(ok, || format!("model {m}, context {c}, {flag:?}, lambda {lambda}: beam order differs"));
                }
            }
        }
    }
    Ok(out)
}

/// Sizes of the audit suite.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditOptions {
    pub toy_instances: usize,
    pub contexts_per_instance: usize,
    pub grid_points: usize,
    pub monotonicity_lambdas: Vec<f64>,
    pub integrity_contexts: usize,
    pub integrity_lambdas: Vec<f64>,
    pub oracle_models: usize,
    pub oracle_lambdas: Vec<f64>,
    pub fault: Fault,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            toy_instances: 20,
            contexts_per_instance: 20,
            grid_points: 50,
            monotonicity_lambdas: vec![1.0, 5.0],
            integrity_contexts: 1000,
            integrity_lambdas: vec![0.0, 0.5, 1.0, 2.0, 5.0, 10.0],
            oracle_models: 100,
            oracle_lambdas: vec![0.0, 0.5, 1.0, 2.0, 5.0, 7.5, 10.0],
            fault: Fault::None,
        }
    }
}

/// Everything the desk-scale audits read.
pub struct AuditInput<'a, S: Scorer + ?Sized> {
    pub model: &'a S,
    pub train: &'a [Trajectory],
    pub vocab: &'a Vocabulary,
    pub order: usize,
    pub alpha: f64,
    pub cases: &'a [EvalCase],
    pub market: Market<'a>,
    pub config: &'a DecodeConfig,
    pub seed: u64,
}

/// `count` toy instances with random shape: depth 1..=3, 2..=4 codes per
/// level and 4..=30 distinct paths.
pub fn audit_instances(seed: u64, count: usize, contexts: usize) -> Result<Vec<ToyInstance>> {
    (0..count)
        .map(|n| {
            let mut rng = rng_for(seed, streams::AUDIT ^ (n as u64) << 8);
            let depth = rng.random_range(1..=3);
            let codes = rng.random_range(2..=4u16);
            toy_instance(derive_seed(seed, n as u64), depth, codes, rng.random_range(4..=30), contexts)
        })
        .collect()
}

pub fn audit_suite<S: Scorer + ?Sized>(input: &AuditInput<'_, S>, options: &AuditOptions) -> Result<AuditReport> {
    let instances = audit_instances(input.seed, options.toy_instances, options.contexts_per_instance)?;
    let contexts: Vec<Vec<Token>> =
        input.cases.iter().take(options.integrity_contexts).map(|c| c.context.clone()).collect();
    let mut outcomes = vec![
        audit_monotonicity(
            &instances,
            options.grid_points,
            &options.monotonicity_lambdas,
            input.config,
            options.fault,
        )?,
        audit_safe_fallback(input.model, &contexts, input.market, input.config)?,
        audit_organic_integrity(
            input.model,
            &contexts,
            input.market,
            &options.integrity_lambdas,
            input.config,
            options.fault,
        )?,
    ];
    let (ad_free, _) = audit_ad_free(
        input.train,
        input.market.trie,
        input.vocab,
        input.order,
        input.alpha,
        input.cases,
        input.market,
        input.config,
        input.seed,
    )?;
    outcomes.push(ad_free);
    outcomes.push(audit_beam_oracle(options.oracle_models, &options.oracle_lambdas, input.seed)?);
    Ok(AuditReport { outcomes })
}
