use std::cmp::Ordering;

use serde::Serialize;

use super::lookup::BidLookup;
use super::modulation::modulate_item_logits;
use super::DecodeConfig;
use crate::error::{Error, Result};
use crate::marketplace::Mode;
use crate::semantic_index::{NodeId, SemanticId, SidTrie};
use crate::seq_model::{Scorer, SlotKind, Token, AD, ORG};

/// One finished hypothesis. `item_id` is `None` when the generated ID names
/// no item, which only happens with the trie constraint off.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Beam {
    pub sid: SemanticId,
    pub item_id: Option<u32>,
    /// Total log-score under the modulated logits.
    pub score: f64,
    /// Total log-score under the scorer's own logits.
    pub base_score: f64,
}

struct Partial {
    codes: Vec<u16>,
    node: Option<NodeId>,
    score: f64,
    base: f64,
}

/// Log-softmax restricted to `allowed`; masked entries are left at -inf.
fn masked_log_softmax(z: &[f64], allowed: &[bool]) -> Vec<f64> {
    let max = z.iter().zip(allowed).filter(|(_, &a)| a).map(|(&x, _)| x).fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = z.iter().zip(allowed).filter(|(_, &a)| a).map(|(&x, _)| (x - max).exp()).sum();
    let lse = max + sum.ln();
    z.iter().zip(allowed).map(|(&x, &a)| if a { x - lse } else { f64::NEG_INFINITY }).collect()
}

fn rank(a_score: f64, a_path: (&[u16], u16), b_score: f64, b_path: (&[u16], u16)) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_path.0.cmp(b_path.0)).then_with(|| a_path.1.cmp(&b_path.1))
}

/// Width-`width` beam search over `c_1..c_D` and the disambiguator.
/// `item_lambda` switches item-level modulation on, including the
/// disambiguation slot, since colliding items carry their own bids.
#[allow(clippy::too_many_arguments)]
pub(crate) fn search<S: Scorer + ?Sized>(
    model: &S,
    context: &[Token],
    flag: Mode,
    item_lambda: Option<f64>,
    width: usize,
    constrained: bool,
    lookup: &BidLookup,
    trie: &SidTrie,
) -> Result<Vec<Beam>> {
    let vocab = *model.vocab();
    if vocab.slot_after(context)? != SlotKind::Flag {
        return Err(Error::Position("context must end on a segment boundary".into()));
    }
    let ad_mask = constrained && flag == Mode::Sponsored;
    if ad_mask && !lookup.has_eligible() {
        return Err(Error::NoAdAvailable);
    }
    let allowed_node = |node: Option<NodeId>| match node {
        None => !constrained,
        Some(n) => !ad_mask || lookup.get(n).is_some(),
    };

    let mut buf = context.to_vec();
    buf.push(if flag == Mode::Sponsored { AD } else { ORG });
    let base_len = buf.len();
    let mut beams =
        vec![Partial { codes: Vec::with_capacity(vocab.depth), node: Some(trie.root()), score: 0.0, base: 0.0 }];

    for level in 1..=vocab.depth {
        let mut cands: Vec<(usize, u16, f64, f64)> = Vec::with_capacity(beams.len() * vocab.codebook_size);
        for (pi, p) in beams.iter().enumerate() {
            buf.truncate(base_len);
            buf.extend(p.codes.iter().enumerate().map(|(k, &c)| vocab.code(k + 1, c)));
            let z = model.score_slot(&buf, SlotKind::Code(level));
            let children: Vec<Option<NodeId>> =
                (0..z.len()).map(|c| p.node.and_then(|n| trie.child(n, c as u16))).collect();
            let allowed: Vec<bool> = children.iter().map(|&ch| allowed_node(ch)).collect();
            if !allowed.contains(&true) {
                continue;
            }
            let base = masked_log_softmax(&z, &allowed);
            let modulated = match item_lambda {
                Some(l) => masked_log_softmax(&modulate_item_logits(&z, l, lookup, trie, p.node), &allowed),
                None => base.clone(),
            };
            for c in (0..z.len()).filter(|&c| allowed[c]) {
                cands.push((pi, c as u16, p.score + modulated[c], p.base + base[c]));
            }
        }
        cands.sort_by(|a, b| {
            b.2.total_cmp(&a.2).then_with(|| beams[a.0].codes.cmp(&beams[b.0].codes)).then_with(|| a.1.cmp(&b.1))
        });
        cands.truncate(width);
        beams = cands
            .into_iter()
            .map(|(pi, c, score, base)| {
                let p = &beams[pi];
                let mut codes = p.codes.clone();
                codes.push(c);
                Partial { codes, node: p.node.and_then(|n| trie.child(n, c)), score, base }
            })
            .collect();
        if beams.is_empty() {
            return Err(if ad_mask { Error::NoAdAvailable } else { Error::NoCandidates });
        }
    }

    let mut done = Vec::with_capacity(beams.len() * 2);
    for p in &beams {
        buf.truncate(base_len);
        buf.extend(p.codes.iter().enumerate().map(|(k, &c)| vocab.code(k + 1, c)));
        let z = model.score_slot(&buf, SlotKind::Disamb);
        let leaves: Vec<Option<NodeId>> = (0..z.len()).map(|d| p.node.and_then(|n| trie.child(n, d as u16))).collect();
        let allowed: Vec<bool> = leaves.iter().map(|&l| allowed_node(l)).collect();
        if !allowed.contains(&true) {
            continue;
        }
        let base = masked_log_softmax(&z, &allowed);
        let modulated = match item_lambda {
            Some(l) => masked_log_softmax(&modulate_item_logits(&z, l, lookup, trie, p.node), &allowed),
            None => base.clone(),
        };
        for d in (0..z.len()).filter(|&d| allowed[d]) {
            done.push(Beam {
                sid: SemanticId::new(p.codes.clone(), d as u16),
                item_id: leaves[d].and_then(|l| trie.item(l)),
                score: p.score + modulated[d],
                base_score: p.base + base[d],
            });
        }
    }
    done.sort_by(|a, b| rank(a.score, (&a.sid.codes, a.sid.disamb), b.score, (&b.sid.codes, b.sid.disamb)));
    done.truncate(width);
    if done.is_empty() {
        return Err(if ad_mask { Error::NoAdAvailable } else { Error::NoCandidates });
    }
    Ok(done)
}

/// Ranked hypotheses for a committed flag. Bids steer the search only when the
/// flag is AD; the organic branch never reads lambda.
pub fn beam_search<S: Scorer + ?Sized>(
    model: &S,
    context: &[Token],
    flag: Mode,
    config: &DecodeConfig,
    lookup: &BidLookup,
    trie: &SidTrie,
) -> Result<Vec<Beam>> {
    config.validate()?;
    let item_lambda = (flag == Mode::Sponsored).then(|| config.item_lambda());
    search(model, context, flag, item_lambda, config.beam_width, config.constrained, lookup, trie)
}
