use std::collections::{BTreeMap, HashMap};

use super::vocab::{SlotKind, Token, Vocabulary, BOS, EOS};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, mix64};

/// Longest context the packed table key can hold.
pub const MAX_ORDER: usize = 7;

/// Autoregressive conditional over the unified vocabulary, restricted to the
/// legal tokens of each slot.
pub trait Scorer {
    fn vocab(&self) -> &Vocabulary;

    /// Log-probabilities over `vocab().legal(slot)`, in token order. The caller
    /// guarantees that `slot` is the slot following `context`.
    fn score_slot(&self, context: &[Token], slot: SlotKind) -> Vec<f64>;
}

/// Checked entry point: rejects a slot that does not follow `context`.
pub fn logits<S: Scorer + ?Sized>(model: &S, context: &[Token], slot: SlotKind) -> Result<Vec<f64>> {
    let expected = model.vocab().slot_after(context)?;
    if expected != slot {
        return Err(Error::Position(format!("context expects {expected:?}, asked for {slot:?}")));
    }
    Ok(model.score_slot(context, slot))
}

/// Per-slot log-probabilities of `segment` continuing `context`.
pub fn segment_log_probs<S: Scorer + ?Sized>(model: &S, context: &[Token], segment: &[Token]) -> Result<Vec<f64>> {
    let vocab = *model.vocab();
    let mut ctx = context.to_vec();
    let mut out = Vec::with_capacity(segment.len());
    for &tok in segment {
        let slot = vocab.slot_after(&ctx)?;
        let legal = vocab.legal(slot);
        if !legal.contains(&tok) {
            return Err(Error::Position(format!("token {tok} is illegal in slot {slot:?}")));
        }
        out.push(model.score_slot(&ctx, slot)[(tok - legal.start) as usize]);
        ctx.push(tok);
    }
    Ok(out)
}

/// Mean negative log-likelihood per predicted token. BOS and EOS are framing
/// and are not predicted.
pub fn sequence_nll<S: Scorer + ?Sized>(model: &S, stream: &[Token]) -> Result<f64> {
    let vocab = *model.vocab();
    if stream.first() != Some(&BOS) {
        return Err(Error::Stream("stream must start with BOS".into()));
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for t in 1..stream.len() {
        let tok = stream[t];
        if tok == EOS {
            break;
        }
        let slot = vocab.slot_after(&stream[..t])?;
        let legal = vocab.legal(slot);
        if !legal.contains(&tok) {
            return Err(Error::Stream(format!("token {tok} is illegal in slot {slot:?}")));
        }
        sum -= model.score_slot(&stream[..t], slot)[(tok - legal.start) as usize];
        n += 1;
    }
    if n == 0 {
        return Err(Error::Stream("stream has no tokens to score".into()));
    }
    Ok(sum / n as f64)
}

fn log_softmax(mut xs: Vec<f64>) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    for x in &mut xs {
        *x -= lse;
    }
    xs
}

#[derive(Debug, Clone, PartialEq)]
pub(super) struct Counts {
    pub total: u64,
    /// Sorted by token.
    pub next: Vec<(Token, u32)>,
}

/// Order-`m` count model with additive smoothing that backs off to the
/// longest context observed in training.
#[derive(Debug, Clone, PartialEq)]
pub struct CountModel {
    pub(super) vocab: Vocabulary,
    pub(super) order: usize,
    pub(super) alpha: f64,
    pub(super) tables: HashMap<u128, Counts>,
}

/// Packs `(slot, context length, tokens)` into one key, 16 bits per token.
pub(super) fn pack_key(slot_index: usize, context: &[Token]) -> u128 {
    let mut k = 0u128;
    for &t in context {
        k = (k << 16) | t as u128;
    }
    k | (context.len() as u128) << 112 | (slot_index as u128) << 116
}

pub fn validate_params(order: usize, alpha: f64) -> Result<()> {
    if order > MAX_ORDER {
        return Err(Error::Config(format!("order {order} exceeds the maximum of {MAX_ORDER}")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("alpha must be positive and finite, got {alpha}")));
    }
    Ok(())
}

pub fn train_scorer(corpus: &[Vec<Token>], vocab: Vocabulary, order: usize, alpha: f64) -> Result<CountModel> {
    validate_params(order, alpha)?;
    let mut raw: HashMap<u128, BTreeMap<Token, u32>> = HashMap::new();
    for stream in corpus {
        if stream.first() != Some(&BOS) {
            return Err(Error::Stream("stream must start with BOS".into()));
        }
        for t in 1..stream.len() {
            let tok = stream[t];
            if tok == EOS {
                break;
            }
            let slot = vocab.slot_after(&stream[..t])?;
            if !vocab.legal(slot).contains(&tok) {
                return Err(Error::Stream(format!("token {tok} is illegal in slot {slot:?}")));
            }
            let si = vocab.slot_index(slot);
            for j in 0..=order.min(t) {
                *raw.entry(pack_key(si, &stream[t - j..t])).or_default().entry(tok).or_insert(0) += 1;
            }
        }
    }
    let tables = raw
        .into_iter()
        .map(|(k, m)| {
            let total = m.values().map(|&c| c as u64).sum();
            (k, Counts { total, next: m.into_iter().collect() })
        })
        .collect();
    Ok(CountModel { vocab, order, alpha, tables })
}

impl CountModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Number of distinct (slot, context) entries.
    pub fn context_count(&self) -> usize {
        self.tables.len()
    }

    /// Training occurrences of the exact `context` (at most `order` tokens)
    /// before `slot`.
    pub fn context_total(&self, context: &[Token], slot: SlotKind) -> u64 {
        self.tables.get(&pack_key(self.vocab.slot_index(slot), context)).map_or(0, |c| c.total)
    }
}

impl Scorer for CountModel {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn score_slot(&self, context: &[Token], slot: SlotKind) -> Vec<f64> {
        let legal = self.vocab.legal(slot);
        let n = (legal.end - legal.start) as usize;
        let si = self.vocab.slot_index(slot);
        let longest = self.order.min(context.len());
        let found = (0..=longest).rev().find_map(|j| self.tables.get(&pack_key(si, &context[context.len() - j..])));
        let Some(counts) = found else {
            return vec![-(n as f64).ln(); n];
        };
        let denom = counts.total as f64 + self.alpha * n as f64;
        let mut out = vec![(self.alpha / denom).ln(); n];
        for &(tok, c) in &counts.next {
            out[(tok - legal.start) as usize] = ((c as f64 + self.alpha) / denom).ln();
        }
        out
    }
}

/// Scorer with pseudo-random conditionals keyed on the current segment
/// prefix. Used to build toy instances for the audits.
#[derive(Debug, Clone)]
pub struct RandomScorer {
    pub vocab: Vocabulary,
    pub seed: u64,
    /// Logits are drawn uniformly from `[0, spread)`.
    pub spread: f64,
}

impl Scorer for RandomScorer {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn score_slot(&self, context: &[Token], slot: SlotKind) -> Vec<f64> {
        // Key on the tokens of the segment being generated, or on the whole
        // previous segment for the flag.
        let tail = match slot {
            SlotKind::Flag => self.vocab.segment_len(),
            SlotKind::Code(k) => k,
            SlotKind::Disamb => self.vocab.depth + 1,
        };
        let mut h = derive_seed(self.seed, self.vocab.slot_index(slot) as u64);
        for &t in &context[context.len().saturating_sub(tail)..] {
            h = mix64(h ^ t as u64);
        }
        let raw = self
            .vocab
            .legal(slot)
            .map(|t| (mix64(h ^ t as u64) >> 11) as f64 / (1u64 << 53) as f64 * self.spread)
            .collect();
        log_softmax(raw)
    }
}
