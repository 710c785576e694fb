mod common;

use gemrec_core::config::{Preset, RunConfig};
use gemrec_core::pipeline::{build_corpus, corpus_nll, heldout_nll, train_model, Dataset};
use gemrec_core::seq_model::{logits, write_model, SlotKind, BOS};

/// Expected ads per history of `len` organic items under the frequency cap,
/// assuming a candidate is always available: exact recursion over the
/// distribution of steps since the last ad.
fn expected_ads(len: usize, p: f64, r: f64) -> f64 {
    // dist[t] = P(t steps since the last ad); index 0 stands for "never".
    let mut dist = vec![0.0; len + 2];
    dist[0] = 1.0;
    let mut ads = 0.0;
    for _ in 0..len {
        let mut next = vec![0.0; len + 2];
        for (t, &mass) in dist.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let accept = if t == 0 { p } else { p * (t as f64 * r).min(1.0) };
            ads += mass * accept;
            next[1] += mass * accept;
            let stay = if t == 0 { 0 } else { t + 1 };
            next[stay.min(len + 1)] += mass * (1.0 - accept);
        }
        dist = next;
    }
    ads
}

fn expected_fraction(cfg: &RunConfig) -> f64 {
    let (mut ads, mut organic) = (0.0, 0.0);
    for len in cfg.corpus.min_len..=cfg.corpus.max_len {
        ads += expected_ads(len, cfg.market.p, cfg.market.r);
        organic += len as f64;
    }
    ads / (ads + organic)
}

#[test]
fn frequency_cap_oracle_checks() {
    // One item: accepted with the base rate.
    assert!((expected_ads(1, 0.4, 0.05) - 0.4).abs() < 1e-15);
    // Two items: 0.4 + 0.6 * 0.4 + 0.4 * 0.02.
    assert!((expected_ads(2, 0.4, 0.05) - 0.648).abs() < 1e-15);
}

#[test]
fn realized_ad_fraction_matches_frequency_cap_expectation() {
    for preset in [Preset::Main, Preset::High] {
        let cfg = RunConfig::preset(preset);
        let corpus = build_corpus(&cfg).unwrap();
        let expected = expected_fraction(&cfg);
        assert!(
            (corpus.ad_fraction - expected).abs() < 0.005,
            "{preset:?}: realized {} vs expected {expected}",
            corpus.ad_fraction
        );
    }
}

#[test]
fn heldout_nll_not_below_training_nll() {
    let (mut train, mut held) = (0.0, 0.0);
    for seed in 1..=5 {
        let d = common::small(seed);
        train += corpus_nll(&d.model, &d.data.train_streams().unwrap()).unwrap();
        held += heldout_nll(&d.model, &d.data).unwrap();
    }
    assert!(held >= train, "held-out {} < train {}", held / 5.0, train / 5.0);
}

#[test]
fn longer_context_lowers_heldout_nll() {
    let d = common::desk();
    let unigram = train_model(&d.data, 0, d.cfg.model.alpha).unwrap();
    let order4 = train_model(&d.data, 4, d.cfg.model.alpha).unwrap();
    assert!(heldout_nll(&order4, &d.data).unwrap() <= heldout_nll(&unigram, &d.data).unwrap());
}

#[test]
fn same_seed_gives_identical_corpus_and_model_bytes() {
    let d = common::small(3);
    let again = common::small(3);
    assert_eq!(d.corpus.trajectories, again.corpus.trajectories);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    write_model(&d.model, &mut a).unwrap();
    write_model(&again.model, &mut b).unwrap();
    assert_eq!(a, b);
}

#[test]
fn ad_free_logs_leave_only_the_smoothing_floor() {
    let mut cfg = RunConfig::default();
    cfg.corpus.n_items = 300;
    cfg.corpus.n_users = 400;
    cfg.index.codebook_size = 6;
    cfg.market.p = 0.0;
    let corpus = build_corpus(&cfg).unwrap();
    assert_eq!(corpus.ad_fraction, 0.0);
    let data = Dataset::from_corpus(&cfg, &corpus).unwrap();
    let model = train_model(&data, cfg.model.order, cfg.model.alpha).unwrap();
    let total = model.context_total(&[BOS], SlotKind::Flag) as f64;
    let p = logits(&model, &[BOS], SlotKind::Flag).unwrap()[1].exp();
    let alpha = cfg.model.alpha;
    assert!((p - alpha / (total + 2.0 * alpha)).abs() < 1e-12);
}
