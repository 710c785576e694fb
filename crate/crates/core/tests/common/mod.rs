#![allow(dead_code)]

use std::sync::OnceLock;

use gemrec_core::config::{CorpusConfig, IndexConfig, Preset, RunConfig};
use gemrec_core::pipeline::{build_corpus, train_model, Corpus, Dataset};
use gemrec_core::seq_model::CountModel;

pub struct Desk {
    pub cfg: RunConfig,
    pub corpus: Corpus,
    pub data: Dataset,
    pub model: CountModel,
}

fn build(preset: Preset) -> Desk {
    let cfg = RunConfig::preset(preset);
    let corpus = build_corpus(&cfg).unwrap();
    let data = Dataset::from_corpus(&cfg, &corpus).unwrap();
    let model = train_model(&data, cfg.model.order, cfg.model.alpha).unwrap();
    Desk { cfg, corpus, data, model }
}

/// The default desk corpus and model, built once per test binary.
pub fn desk() -> &'static Desk {
    static DESK: OnceLock<Desk> = OnceLock::new();
    DESK.get_or_init(|| build(Preset::Main))
}

/// A smaller corpus for tests that only need something trained.
pub fn small(seed: u64) -> Desk {
    let defaults = RunConfig::default();
    let cfg = RunConfig {
        seed,
        corpus: CorpusConfig { n_items: 300, n_users: 600, ..defaults.corpus.clone() },
        index: IndexConfig { codebook_size: 6, ..defaults.index.clone() },
        ..defaults
    };
    let corpus = build_corpus(&cfg).unwrap();
    let data = Dataset::from_corpus(&cfg, &corpus).unwrap();
    let model = train_model(&data, cfg.model.order, cfg.model.alpha).unwrap();
    Desk { cfg, corpus, data, model }
}
