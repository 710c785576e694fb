use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::metrics::{
    ad_target_ndcg, conditional_organic_metrics, economic_metrics, strict_metrics, EvalRecord, Prediction,
};
use crate::decoder::{decode_with_uniform, p_ad, search, BidLookup, DecodeConfig, DecodeResult, Market};
use crate::error::{Error, Result};
use crate::marketplace::{apply_bid_shock, Interaction, Inventory, Mode, Trajectory};
use crate::rng::{derive_seed, streams, uniform_for};
use crate::semantic_index::{prefix_match_depth, SidTrie};
use crate::seq_model::{flatten, logits, Scorer, SlotKind, Token, Vocabulary, EOS};

/// A held-out prediction task: the context before a user's final group and
/// the group's first event.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalCase {
    pub user_id: u32,
    pub context: Vec<Token>,
    pub truth: Interaction,
    /// Organic item of the final group; equals `truth.item_id` for organic targets.
    pub organic_truth: u32,
}

/// Holds out each user's final group (an ad with its organic anchor, or a
/// lone organic item) and returns the remaining prefixes for training.
pub fn split_last_group(
    trajectories: &[Trajectory],
    trie: &SidTrie,
    vocab: &Vocabulary,
) -> Result<(Vec<Trajectory>, Vec<EvalCase>)> {
    let mut train = Vec::with_capacity(trajectories.len());
    let mut cases = Vec::with_capacity(trajectories.len());
    for t in trajectories {
        let n = t.events.len();
        let Some(last) = t.events.last() else { continue };
        if last.mode != Mode::Organic {
            return Err(Error::Stream(format!("trajectory of user {} ends on an ad", t.user_id)));
        }
        let start = if n >= 2 && t.events[n - 2].mode == Mode::Sponsored { n - 2 } else { n - 1 };
        let prefix = Trajectory { user_id: t.user_id, events: t.events[..start].to_vec() };
        let mut context = flatten(&prefix, trie, vocab)?;
        context.pop();
        debug_assert_ne!(context.last(), Some(&EOS));
        cases.push(EvalCase { user_id: t.user_id, context, truth: t.events[start], organic_truth: last.item_id });
        if start > 0 {
            train.push(prefix);
        }
    }
    Ok((train, cases))
}

/// One sweep row. Optional fields are undefined when their conditioning set
/// is empty and are written as `NA`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub lambda: f64,
    pub ad_rate: f64,
    pub revenue: f64,
    pub ndcg10: f64,
    pub recall10: f64,
    pub o_ndcg10: Option<f64>,
    pub o_recall10: Option<f64>,
    pub ad_ndcg10: Option<f64>,
    pub mean_prefix_depth: Option<f64>,
    pub validity: Option<f64>,
    pub hv_share: Option<f64>,
    pub seed: u64,
}

pub const CSV_HEADER: &str =
    "lambda,ad_rate,revenue,ndcg10,recall10,o_ndcg10,o_recall10,ad_ndcg10,mean_prefix_depth,validity,hv_share,seed";

fn na(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.lambda,
            self.ad_rate,
            self.revenue,
            self.ndcg10,
            self.recall10,
            na(self.o_ndcg10),
            na(self.o_recall10),
            na(self.ad_ndcg10),
            na(self.mean_prefix_depth),
            na(self.validity),
            na(self.hv_share),
            self.seed
        )
    }

    /// Largest absolute difference over all numeric fields; infinite if one
    /// row defines a field the other leaves undefined.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let opt = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(x), Some(y)) => (x - y).abs(),
            (None, None) => 0.0,
            _ => f64::INFINITY,
        };
        [
            (self.lambda - other.lambda).abs(),
            (self.ad_rate - other.ad_rate).abs(),
            (self.revenue - other.revenue).abs(),
            (self.ndcg10 - other.ndcg10).abs(),
            (self.recall10 - other.recall10).abs(),
            opt(self.o_ndcg10, other.o_ndcg10),
            opt(self.o_recall10, other.o_recall10),
            opt(self.ad_ndcg10, other.ad_ndcg10),
            opt(self.mean_prefix_depth, other.mean_prefix_depth),
            opt(self.validity, other.validity),
            opt(self.hv_share, other.hv_share),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn write_csv(rows: &[MetricsRow], mut w: impl Write) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.to_csv())?;
    }
    Ok(())
}

/// Two-column TSV files, one per figure.
pub fn write_plot_data(rows: &[MetricsRow], dir: &Path) -> Result<Vec<PathBuf>> {
    type Col = fn(&MetricsRow) -> Option<f64>;
    let figures: [(&str, &str, Col, &str, Col); 4] = [
        ("pareto.tsv", "revenue", |r| Some(r.revenue), "ndcg10", |r| Some(r.ndcg10)),
        ("steerability.tsv", "lambda", |r| Some(r.lambda), "ad_rate", |r| Some(r.ad_rate)),
        ("integrity.tsv", "ndcg10", |r| Some(r.ndcg10), "o_ndcg10", |r| r.o_ndcg10),
        ("quality.tsv", "revenue", |r| Some(r.revenue), "mean_prefix_depth", |r| r.mean_prefix_depth),
    ];
    let mut out = Vec::new();
    for (name, xh, x, yh, y) in figures {
        let path = dir.join(name);
        let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
        writeln!(f, "{xh}\t{yh}")?;
        for r in rows {
            writeln!(f, "{}\t{}", na(x(r)), na(y(r)))?;
        }
        f.flush()?;
        out.push(path);
    }
    Ok(out)
}

/// Fraction of decoded ads whose generated ID names a real item.
pub fn validity_rate(results: &[DecodeResult], trie: &SidTrie) -> Option<f64> {
    let ads: Vec<&DecodeResult> = results.iter().filter(|r| r.flag == Mode::Sponsored).collect();
    (!ads.is_empty())
        .then(|| ads.iter().filter(|r| trie.resolve(&r.codes, r.disamb).is_some()).count() as f64 / ads.len() as f64)
}

/// Flag draw shared by every lambda for a given user.
fn case_uniform(seed: u64, user_id: u32) -> f64 {
    uniform_for(derive_seed(seed, streams::FLAGS), user_id as u64)
}

fn record(case: &EvalCase, r: &DecodeResult, inventory: &Inventory) -> EvalRecord {
    let ad_prefix_depth = match (r.flag, r.item_id) {
        (Mode::Sponsored, Some(_)) => inventory.sid(case.organic_truth).map(|t| prefix_match_depth(&r.codes, &t.codes)),
        _ => None,
    };
    EvalRecord {
        user_id: case.user_id,
        truth: case.truth,
        organic_truth: case.organic_truth,
        flag: r.flag,
        predictions: r.beams.iter().map(|b| Prediction { flag: r.flag, item_id: b.item_id }).collect(),
        price: r.price,
        ad_prefix_depth,
    }
}

fn summarize(
    lambda: f64,
    records: &[EvalRecord],
    results: &[DecodeResult],
    trie: &SidTrie,
    k: usize,
    seed: u64,
    shocked: Option<&BTreeSet<u32>>,
) -> Result<MetricsRow> {
    let (ndcg10, recall10) = strict_metrics(records, k)?;
    let organic = conditional_organic_metrics(records, k)?;
    let econ = economic_metrics(records, shocked);
    let depths: Vec<f64> = records.iter().filter_map(|r| r.ad_prefix_depth).map(|d| d as f64).collect();
    Ok(MetricsRow {
        lambda,
        ad_rate: econ.ad_rate,
        revenue: econ.revenue,
        ndcg10,
        recall10,
        o_ndcg10: organic.map(|o| o.0),
        o_recall10: organic.map(|o| o.1),
        ad_ndcg10: ad_target_ndcg(records, k)?,
        mean_prefix_depth: (!depths.is_empty()).then(|| depths.iter().sum::<f64>() / depths.len() as f64),
        validity: validity_rate(results, trie),
        hv_share: econ.high_value_share,
        seed,
    })
}

/// Decodes every case at one operating point.
pub fn evaluate<S: Scorer + ?Sized>(
    model: &S,
    cases: &[EvalCase],
    market: Market<'_>,
    config: &DecodeConfig,
    k: usize,
    seed: u64,
    shocked: Option<&BTreeSet<u32>>,
) -> Result<(Vec<EvalRecord>, MetricsRow)> {
    let mut records = Vec::with_capacity(cases.len());
    let mut results = Vec::with_capacity(cases.len());
    for case in cases {
        let r = decode_with_uniform(model, &case.context, config, market, case_uniform(seed, case.user_id))?;
        records.push(record(case, &r, market.inventory));
        results.push(r);
    }
    let row = summarize(config.lambda, &records, &results, market.trie, k, seed, shocked)?;
    Ok((records, row))
}

/// The same protocol run straight off the scorer, with no modulation code in
/// the path. A sweep row at lambda 0 must reproduce it.
pub fn reference_evaluation<S: Scorer + ?Sized>(
    model: &S,
    cases: &[EvalCase],
    market: Market<'_>,
    config: &DecodeConfig,
    k: usize,
    seed: u64,
) -> Result<MetricsRow> {
    let mut records = Vec::with_capacity(cases.len());
    let mut results = Vec::with_capacity(cases.len());
    for case in cases {
        let z = logits(model, &case.context, SlotKind::Flag)?;
        let p = p_ad(z[0], z[1]);
        let flag = if case_uniform(seed, case.user_id) < p { Mode::Sponsored } else { Mode::Organic };
        let beams = search(
            model,
            &case.context,
            flag,
            None,
            config.beam_width,
            config.constrained,
            market.lookup,
            market.trie,
        )?;
        let top = &beams[0];
        let price = match (flag, top.item_id) {
            (Mode::Sponsored, Some(i)) => market.inventory.bid(i).filter(|&b| b > 0.0).unwrap_or(0.0),
            _ => 0.0,
        };
        let r = DecodeResult {
            flag,
            codes: top.sid.codes.clone(),
            disamb: top.sid.disamb,
            item_id: top.item_id,
            base_score: top.base_score,
            mod_score: top.base_score,
            p_ad_pre: p,
            p_ad_post: p,
            price,
            beams,
        };
        records.push(record(case, &r, market.inventory));
        results.push(r);
    }
    summarize(0.0, &records, &results, market.trie, k, seed, None)
}

/// One metrics row per lambda. Every lambda reuses the same per-user flag
/// draws, so rows differ only through the modulation.
#[allow(clippy::too_many_arguments)]
pub fn lambda_sweep<S: Scorer + ?Sized>(
    model: &S,
    cases: &[EvalCase],
    market: Market<'_>,
    grid: &[f64],
    base: &DecodeConfig,
    k: usize,
    seed: u64,
    shocked: Option<&BTreeSet<u32>>,
) -> Result<Vec<MetricsRow>> {
    grid.iter()
        .map(|&lambda| {
            let config = DecodeConfig { lambda, ..base.clone() };
            evaluate(model, cases, market, &config, k, seed, shocked).map(|(_, row)| row)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShockRow {
    pub lambda: f64,
    pub ad_rate: f64,
    pub hv_share: Option<f64>,
    pub revenue: f64,
    /// Revenue relative to the lambda = 0 row of the same shocked market.
    pub uplift: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ShockReport {
    pub shocked: BTreeSet<u32>,
    /// Shocked items as a fraction of the eligible inventory.
    pub natural_share: f64,
    pub rows: Vec<ShockRow>,
}

pub const SHOCK_CSV_HEADER: &str = "lambda,ad_rate,hv_share,revenue,uplift";

pub fn write_shock_csv(report: &ShockReport, mut w: impl Write) -> Result<()> {
    writeln!(w, "{SHOCK_CSV_HEADER}")?;
    for r in &report.rows {
        writeln!(w, "{},{},{},{},{}", r.lambda, r.ad_rate, na(r.hv_share), r.revenue, na(r.uplift))?;
    }
    Ok(())
}

/// Multiplies a random subset of bids, rebuilds only the bid lookup, and
/// re-decodes at every lambda with the unchanged model.
#[allow(clippy::too_many_arguments)]
pub fn shock_experiment<S: Scorer + ?Sized>(
    model: &S,
    cases: &[EvalCase],
    trie: &SidTrie,
    inventory: &Inventory,
    grid: &[f64],
    fraction: f64,
    multiplier: f64,
    base: &DecodeConfig,
    k: usize,
    seed: u64,
) -> Result<ShockReport> {
    let shock = apply_bid_shock(inventory, fraction, multiplier, seed)?;
    let lookup = BidLookup::from_inventory(trie, &shock.inventory)?;
    let market = Market { trie, inventory: &shock.inventory, lookup: &lookup };
    let rows = lambda_sweep(model, cases, market, grid, base, k, seed, Some(&shock.shocked))?;
    let baseline = grid.iter().position(|&l| l == 0.0).map(|i| rows[i].revenue).filter(|&r| r > 0.0);
    let eligible = shock.inventory.eligible().len();
    Ok(ShockReport {
        natural_share: if eligible == 0 { 0.0 } else { shock.shocked.len() as f64 / eligible as f64 },
        shocked: shock.shocked,
        rows: rows
            .iter()
            .map(|r| ShockRow {
                lambda: r.lambda,
                ad_rate: r.ad_rate,
                hv_share: r.hv_share,
                revenue: r.revenue,
                uplift: baseline.map(|b| r.revenue / b),
            })
            .collect(),
    })
}
