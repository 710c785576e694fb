use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;

use super::*;
use crate::eval::audit::{exhaustive_ranking, toy_instance, ToyInstance};
use crate::marketplace::{Inventory, InventoryItem, Mode};
use crate::semantic_index::{build_trie, SemanticId};
use crate::seq_model::{segment, RandomScorer, Scorer, SlotKind, Token, Vocabulary, BOS};

/// Scorer whose conditionals ignore the context entirely.
struct Flat {
    vocab: Vocabulary,
    flag: [f64; 2],
    level: Vec<f64>,
}

impl Scorer for Flat {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn score_slot(&self, _: &[Token], slot: SlotKind) -> Vec<f64> {
        match slot {
            SlotKind::Flag => self.flag.to_vec(),
            SlotKind::Code(_) => self.level.clone(),
            SlotKind::Disamb => vec![0.0; self.vocab.disamb_size],
        }
    }
}

fn full_toy(seed: u64) -> ToyInstance {
    toy_instance(seed, 2, 3, 9, 4).unwrap()
}

#[test]
fn wide_beam_equals_enumeration() {
    for seed in 0..30 {
        let inst = full_toy(seed);
        for ctx in &inst.contexts {
            for flag in [Mode::Organic, Mode::Sponsored] {
                for lambda in [0.0, 1.0, 10.0] {
                    let cfg = DecodeConfig { lambda, beam_width: 9, ..DecodeConfig::default() };
                    let beams = beam_search(&inst.model, ctx, flag, &cfg, &inst.lookup, &inst.trie).unwrap();
                    let il = (flag == Mode::Sponsored).then_some(lambda);
                    let mut oracle = exhaustive_ranking(&inst.model, ctx, flag, il, true, &inst.lookup, &inst.trie);
                    if flag == Mode::Organic {
                        assert_eq!(oracle.len(), inst.inventory.len());
                    }
                    oracle.truncate(9);
                    let ids = |v: &[Beam]| v.iter().map(|b| b.sid.clone()).collect::<Vec<_>>();
                    assert_eq!(ids(&beams), ids(&oracle));
                }
            }
        }
    }
}

#[test]
fn unconstrained_wide_beam_equals_enumeration() {
    let inst = toy_instance(5, 2, 3, 5, 4).unwrap();
    for ctx in &inst.contexts {
        let cfg = DecodeConfig { lambda: 2.0, beam_width: 9, constrained: false, ..DecodeConfig::default() };
        let beams = beam_search(&inst.model, ctx, Mode::Sponsored, &cfg, &inst.lookup, &inst.trie).unwrap();
        let oracle = exhaustive_ranking(&inst.model, ctx, Mode::Sponsored, Some(2.0), false, &inst.lookup, &inst.trie);
        // Every code path under every disambiguator.
        assert_eq!(oracle.len(), 9 * inst.model.vocab.disamb_size);
        assert_eq!(beams.len(), 9);
        for (a, b) in beams.iter().zip(&oracle) {
            assert_eq!(a.sid, b.sid);
            assert!((a.score - b.score).abs() < 1e-12);
        }
        // Off-trie paths come back without an item.
        for b in &beams {
            assert_eq!(b.item_id.is_none(), inst.trie.resolve(&b.sid.codes, b.sid.disamb).is_none());
        }
    }
}

#[test]
fn lambda_zero_flags_share_ranking() {
    let inst = full_toy(3);
    // Identical conditionals under both flags.
    let flat = Flat { vocab: inst.model.vocab, flag: [-0.2, -1.7], level: vec![-1.2, -0.9, -1.25] };
    let cfg = DecodeConfig { constrained: false, ..DecodeConfig::default() };
    let org = beam_search(&flat, &[BOS], Mode::Organic, &cfg, &inst.lookup, &inst.trie).unwrap();
    let ad = beam_search(&flat, &[BOS], Mode::Sponsored, &cfg, &inst.lookup, &inst.trie).unwrap();
    assert_eq!(org, ad);
}

#[test]
fn equal_scores_break_ties_lexicographically() {
    let items = vec![
        (1, SemanticId::new(vec![2, 0], 0)),
        (2, SemanticId::new(vec![0, 2], 0)),
        (3, SemanticId::new(vec![1, 1], 0)),
    ];
    let trie = build_trie(&items).unwrap();
    let lookup = build_bid_lookup(&trie, &BTreeMap::new(), &[]).unwrap();
    let flat = Flat { vocab: Vocabulary::new(2, 3, 1).unwrap(), flag: [0.0, 0.0], level: vec![-1.0; 3] };
    let beams = beam_search(&flat, &[BOS], Mode::Organic, &DecodeConfig::default(), &lookup, &trie).unwrap();
    assert_eq!(beams.iter().map(|b| b.item_id.unwrap()).collect::<Vec<_>>(), vec![2, 3, 1]);
}

#[test]
fn constrained_ad_without_eligible_items_errors() {
    let inst = full_toy(2);
    let empty = build_bid_lookup(&inst.trie, &BTreeMap::new(), &[]).unwrap();
    let err = beam_search(&inst.model, &[BOS], Mode::Sponsored, &DecodeConfig::default(), &empty, &inst.trie);
    assert!(matches!(err, Err(crate::Error::NoAdAvailable)));
    // The organic branch does not care.
    assert!(beam_search(&inst.model, &[BOS], Mode::Organic, &DecodeConfig::default(), &empty, &inst.trie).is_ok());
}

#[test]
fn ad_beams_only_name_eligible_items() {
    let inst = toy_instance(11, 3, 4, 30, 5).unwrap();
    let eligible = inst.inventory.eligible();
    for ctx in &inst.contexts {
        let cfg = DecodeConfig::with_lambda(1.0);
        for b in beam_search(&inst.model, ctx, Mode::Sponsored, &cfg, &inst.lookup, &inst.trie).unwrap() {
            assert!(eligible.contains(&b.item_id.unwrap()));
        }
    }
}

#[test]
fn constant_shift_keeps_rankings() {
    struct Shifted<'a>(&'a RandomScorer, f64);
    impl Scorer for Shifted<'_> {
        fn vocab(&self) -> &Vocabulary {
            self.0.vocab()
        }
        fn score_slot(&self, ctx: &[Token], slot: SlotKind) -> Vec<f64> {
            self.0.score_slot(ctx, slot).into_iter().map(|x| x + self.1).collect()
        }
    }
    let inst = toy_instance(8, 3, 3, 20, 6).unwrap();
    for ctx in &inst.contexts {
        for flag in [Mode::Organic, Mode::Sponsored] {
            let cfg = DecodeConfig::with_lambda(2.0);
            let a = beam_search(&inst.model, ctx, flag, &cfg, &inst.lookup, &inst.trie).unwrap();
            let b = beam_search(&Shifted(&inst.model, 3.25), ctx, flag, &cfg, &inst.lookup, &inst.trie).unwrap();
            let ids = |v: &[Beam]| v.iter().map(|x| x.item_id).collect::<Vec<_>>();
            assert_eq!(ids(&a), ids(&b));
        }
    }
}

fn two_item_market() -> (crate::semantic_index::SidTrie, Inventory) {
    let items = vec![
        InventoryItem { item_id: 1, sid: SemanticId::new(vec![0, 0], 0), sponsored: false, bid: None },
        InventoryItem { item_id: 2, sid: SemanticId::new(vec![1, 2], 0), sponsored: true, bid: Some(0.35) },
    ];
    let trie = build_trie(&items.iter().map(|i| (i.item_id, i.sid.clone())).collect::<Vec<_>>()).unwrap();
    (trie, Inventory::new(items).unwrap())
}

#[test]
fn forced_flags_and_prices() {
    let (trie, inv) = two_item_market();
    let lookup = BidLookup::from_inventory(&trie, &inv).unwrap();
    let market = Market { trie: &trie, inventory: &inv, lookup: &lookup };
    let model = RandomScorer { vocab: Vocabulary::new(2, 3, 1).unwrap(), seed: 4, spread: 2.0 };
    let mut rng = crate::rng::Rng::seed_from_u64(1);
    let org = decode_next(
        &model,
        &[BOS],
        &DecodeConfig { flag_mode: FlagMode::ForceOrg, ..DecodeConfig::with_lambda(3.0) },
        market,
        &mut rng,
    )
    .unwrap();
    assert_eq!((org.flag, org.price), (Mode::Organic, 0.0));
    let ad = decode_next(
        &model,
        &[BOS],
        &DecodeConfig { flag_mode: FlagMode::ForceAd, ..DecodeConfig::default() },
        market,
        &mut rng,
    )
    .unwrap();
    assert_eq!((ad.flag, ad.item_id, ad.price), (Mode::Sponsored, Some(2), 0.35));
    assert!(ad.p_ad_post == ad.p_ad_pre);
}

#[test]
fn colliding_items_compete_on_their_own_bids() {
    let items = vec![
        InventoryItem { item_id: 1, sid: SemanticId::new(vec![0, 1], 0), sponsored: true, bid: Some(0.2) },
        InventoryItem { item_id: 2, sid: SemanticId::new(vec![0, 1], 1), sponsored: true, bid: Some(0.9) },
        InventoryItem { item_id: 3, sid: SemanticId::new(vec![2, 0], 0), sponsored: false, bid: None },
    ];
    let trie = build_trie(&items.iter().map(|i| (i.item_id, i.sid.clone())).collect::<Vec<_>>()).unwrap();
    let inv = Inventory::new(items).unwrap();
    let lookup = BidLookup::from_inventory(&trie, &inv).unwrap();
    let vocab = Vocabulary::new(2, 3, 2).unwrap();
    // Flat code scores; the disambiguator prefers the cheap twin by 2 nats.
    struct Prefers0(Vocabulary);
    impl Scorer for Prefers0 {
        fn vocab(&self) -> &Vocabulary {
            &self.0
        }
        fn score_slot(&self, _: &[Token], slot: SlotKind) -> Vec<f64> {
            match slot {
                SlotKind::Disamb => vec![2.0, 0.0],
                s => vec![0.0; self.0.legal_len(s)],
            }
        }
    }
    let model = Prefers0(vocab);
    let top = |lambda: f64| {
        let cfg = DecodeConfig::with_lambda(lambda);
        beam_search(&model, &[BOS], Mode::Sponsored, &cfg, &lookup, &trie).unwrap()[0].item_id
    };
    assert_eq!(top(0.0), Some(1));
    // ln(1.9) - ln(1.2) = 0.4595 per unit lambda closes the 2-nat gap past 4.35.
    assert_eq!(top(4.0), Some(1));
    assert_eq!(top(5.0), Some(2));
    let organic = |lambda: f64| {
        let beams =
            beam_search(&model, &[BOS], Mode::Organic, &DecodeConfig::with_lambda(lambda), &lookup, &trie).unwrap();
        beams.iter().map(|b| b.item_id.unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(organic(5.0), vec![3, 1, 2]);
    assert_eq!(organic(5.0), organic(0.0));
}

#[test]
fn sampled_allocation_matches_closed_form() {
    let inst = toy_instance(21, 2, 4, 12, 2).unwrap();
    let ctx = &inst.contexts[0];
    let cfg = DecodeConfig::with_lambda(1.5);
    let mut rng = crate::rng::Rng::seed_from_u64(17);
    let n = 50_000;
    let mut wins: BTreeMap<u32, usize> = BTreeMap::new();
    for _ in 0..n {
        let r = decode_next(&inst.model, ctx, &cfg, inst.market(), &mut rng).unwrap();
        if r.flag == Mode::Sponsored {
            *wins.entry(r.item_id.unwrap()).or_default() += 1;
        }
    }
    for item in inst.inventory.eligible() {
        let x = allocation_probability(item, ctx, &cfg, &inst.model, inst.market()).unwrap();
        let got = *wins.get(&item).unwrap_or(&0) as f64 / n as f64;
        let sd = (x * (1.0 - x) / n as f64).sqrt();
        assert!((got - x).abs() <= 3.0 * sd + 1e-12, "item {item}: {got} vs {x}");
    }
}

#[test]
fn allocation_examples() {
    let inst = toy_instance(33, 2, 3, 9, 3).unwrap();
    let ctx = &inst.contexts[0];
    let cfg0 = DecodeConfig::default();
    let winner =
        beam_search(&inst.model, ctx, Mode::Sponsored, &cfg0, &inst.lookup, &inst.trie).unwrap()[0].item_id.unwrap();
    for item in inst.inventory.eligible() {
        let x = allocation_probability(item, ctx, &cfg0, &inst.model, inst.market()).unwrap();
        if item != winner {
            assert_eq!(x, 0.0);
        } else {
            assert!(x > 0.0);
        }
    }
    // Raise one loser to the top of the range, everyone else at the floor.
    let loser = inst.inventory.eligible().into_iter().find(|&i| i != winner).unwrap();
    let bids: BTreeMap<u32, f64> =
        inst.inventory.eligible().into_iter().map(|i| (i, if i == loser { 1.0 } else { 0.1 })).collect();
    let inv = inst.inventory.with_bids(&bids).unwrap();
    let lookup = BidLookup::from_inventory(&inst.trie, &inv).unwrap();
    let market = Market { trie: &inst.trie, inventory: &inv, lookup: &lookup };
    let cfg = DecodeConfig::with_lambda(40.0);
    let x = allocation_probability(loser, ctx, &cfg, &inst.model, market).unwrap();
    let oracle = exhaustive_ranking(&inst.model, ctx, Mode::Sponsored, Some(40.0), true, &lookup, &inst.trie);
    assert_eq!(oracle[0].item_id, Some(loser));
    let z = crate::seq_model::logits(&inst.model, ctx, SlotKind::Flag).unwrap();
    assert_eq!(x, p_ad(z[0], z[1] + 40.0 * 2f64.ln()));
}

#[test]
fn decode_request_json() {
    let req: DecodeRequest =
        serde_json::from_str(r#"{"context":[0],"lambda":1.5,"beam":4,"flag_mode":"force_ad","seed":3}"#).unwrap();
    let cfg = req.config(&DecodeConfig::default());
    assert_eq!((cfg.lambda, cfg.beam_width, cfg.flag_mode), (1.5, 4, FlagMode::ForceAd));
    assert!(serde_json::from_str::<DecodeRequest>(r#"{"context":[0],"bogus":1}"#).is_err());
    assert_eq!("force_org".parse::<FlagMode>().unwrap(), FlagMode::ForceOrg);
    assert!(DecodeConfig { beam_width: 0, ..DecodeConfig::default() }.validate().is_err());
    assert!(DecodeConfig::with_lambda(-1.0).validate().is_err());
}

fn vocab_segment(inst: &ToyInstance, item: u32) -> Vec<Token> {
    segment(Mode::Organic, inst.inventory.sid(item).unwrap(), &inst.model.vocab)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Own-bid monotonicity on one- and two-level instances.
    #[test]
    fn allocation_non_decreasing_in_own_bid(seed in 0u64..10_000, depth in 1usize..=2, codes in 2u16..=4, lambda in 0.0f64..8.0) {
        let inst = toy_instance(seed, depth, codes, 30, 2).unwrap();
        let mut ctx = vec![BOS];
        ctx.extend(vocab_segment(&inst, 0));
        let cfg = DecodeConfig::with_lambda(lambda);
        for item in inst.inventory.eligible() {
            let mut prev = 0.0;
            for t in 0..20 {
                let b = 0.1 + 0.1 * t as f64;
                let inv = inst.inventory.with_bids(&BTreeMap::from([(item, b)])).unwrap();
                let lookup = BidLookup::from_inventory(&inst.trie, &inv).unwrap();
                let x = allocation_probability(item, &ctx, &cfg, &inst.model, Market { trie: &inst.trie, inventory: &inv, lookup: &lookup }).unwrap();
                prop_assert!(x >= prev, "item {} bid {}: {} < {}", item, b, x, prev);
                prev = x;
            }
        }
    }

    /// The organic branch never reads lambda.
    #[test]
    fn organic_beams_ignore_lambda(seed in 0u64..10_000, lambda in 0.0f64..20.0) {
        let inst = toy_instance(seed, 3, 3, 20, 3).unwrap();
        for ctx in &inst.contexts {
            let a = beam_search(&inst.model, ctx, Mode::Organic, &DecodeConfig::default(), &inst.lookup, &inst.trie).unwrap();
            let b = beam_search(&inst.model, ctx, Mode::Organic, &DecodeConfig::with_lambda(lambda), &inst.lookup, &inst.trie).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    /// P(AD) grows with lambda whenever some eligible bid is positive.
    #[test]
    fn p_ad_monotone_in_lambda(z_org in -5.0f64..0.0, z_ad in -5.0f64..0.0, b in 0.01f64..10.0, l1 in 0.0f64..10.0, dl in 0.0f64..10.0) {
        let lo = p_ad(z_org, modulate_slot_logits(z_org, z_ad, l1, b).1);
        let hi = p_ad(z_org, modulate_slot_logits(z_org, z_ad, l1 + dl, b).1);
        prop_assert!(hi >= lo);
    }
}
