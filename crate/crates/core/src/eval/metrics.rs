use serde::Serialize;

use crate::error::{Error, Result};
use crate::marketplace::{Interaction, Mode};

/// One ranked prediction: the decoded slot type and the item it names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Prediction {
    pub flag: Mode,
    pub item_id: Option<u32>,
}

/// Hit at rank r iff both the slot type and the item match the target.
pub fn strict_hits(predictions: &[Prediction], truth: Interaction) -> Vec<bool> {
    predictions.iter().map(|p| p.flag == truth.mode && p.item_id == Some(truth.item_id)).collect()
}

/// Item-only hits, used for the organic-conditional metrics.
pub fn item_hits(predictions: &[Prediction], item: u32) -> Vec<bool> {
    predictions.iter().map(|p| p.item_id == Some(item)).collect()
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Config("cutoff k must be at least 1".into()));
    }
    Ok(())
}

/// Binary-relevance NDCG with a single target: `1 / log2(rank + 1)`.
pub fn ndcg_at_k(hits: &[bool], k: usize) -> Result<f64> {
    check_k(k)?;
    Ok(hits.iter().take(k).position(|&h| h).map_or(0.0, |r| 1.0 / ((r + 2) as f64).log2()))
}

pub fn recall_at_k(hits: &[bool], k: usize) -> Result<f64> {
    check_k(k)?;
    Ok(if hits.iter().take(k).any(|&h| h) { 1.0 } else { 0.0 })
}

/// Everything recorded about one decoded test case.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRecord {
    pub user_id: u32,
    pub truth: Interaction,
    /// The organic item of the held-out group (the anchor when the target is an ad).
    pub organic_truth: u32,
    pub flag: Mode,
    pub predictions: Vec<Prediction>,
    pub price: f64,
    /// Prefix match depth between a decoded ad and the organic target.
    pub ad_prefix_depth: Option<usize>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Strict NDCG and recall over all records.
pub fn strict_metrics(records: &[EvalRecord], k: usize) -> Result<(f64, f64)> {
    check_k(k)?;
    let mut nd = Vec::with_capacity(records.len());
    let mut rc = Vec::with_capacity(records.len());
    for r in records {
        let h = strict_hits(&r.predictions, r.truth);
        nd.push(ndcg_at_k(&h, k)?);
        rc.push(recall_at_k(&h, k)?);
    }
    Ok((mean(nd.into_iter()).unwrap_or(0.0), mean(rc.into_iter()).unwrap_or(0.0)))
}

/// Organic NDCG and recall over the cases where the model chose an organic
/// slot, scored against the organic target. `None` when there are no such cases.
pub fn conditional_organic_metrics(records: &[EvalRecord], k: usize) -> Result<Option<(f64, f64)>> {
    check_k(k)?;
    let org: Vec<&EvalRecord> = records.iter().filter(|r| r.flag == Mode::Organic).collect();
    if org.is_empty() {
        return Ok(None);
    }
    let mut nd = 0.0;
    let mut rc = 0.0;
    for r in &org {
        let h = item_hits(&r.predictions, r.organic_truth);
        nd += ndcg_at_k(&h, k)?;
        rc += recall_at_k(&h, k)?;
    }
    Ok(Some((nd / org.len() as f64, rc / org.len() as f64)))
}

/// Strict NDCG over the cases whose target is an ad.
pub fn ad_target_ndcg(records: &[EvalRecord], k: usize) -> Result<Option<f64>> {
    check_k(k)?;
    let mut out = Vec::new();
    for r in records.iter().filter(|r| r.truth.mode == Mode::Sponsored) {
        out.push(ndcg_at_k(&strict_hits(&r.predictions, r.truth), k)?);
    }
    Ok(mean(out.into_iter()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Economics {
    pub ad_rate: f64,
    pub revenue: f64,
    /// Share of displayed ads from the shocked subset; `None` without ads or
    /// outside shock runs.
    pub high_value_share: Option<f64>,
}

pub fn economic_metrics(records: &[EvalRecord], shocked: Option<&std::collections::BTreeSet<u32>>) -> Economics {
    let ads: Vec<&EvalRecord> = records.iter().filter(|r| r.flag == Mode::Sponsored).collect();
    let revenue = records.iter().map(|r| r.price).sum();
    let ad_rate = if records.is_empty() { 0.0 } else { ads.len() as f64 / records.len() as f64 };
    let high_value_share = shocked.and_then(|set| {
        let shown: Vec<u32> = ads.iter().filter_map(|r| r.predictions.first().and_then(|p| p.item_id)).collect();
        (!shown.is_empty()).then(|| shown.iter().filter(|i| set.contains(i)).count() as f64 / shown.len() as f64)
    });
    Economics { ad_rate, revenue, high_value_share }
}
