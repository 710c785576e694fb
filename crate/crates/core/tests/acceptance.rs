//! Exit criteria on the default desk configuration. Prints one line per
//! criterion and exits non-zero if any fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use gemrec_core::decoder::DecodeConfig;
use gemrec_core::eval::audit::{
    audit_ad_free, audit_beam_oracle, audit_instances, audit_monotonicity, audit_organic_integrity,
    audit_safe_fallback, Fault,
};
use gemrec_core::eval::{lambda_sweep, reference_evaluation, shock_experiment, MetricsRow};
use gemrec_core::marketplace::{auction_probabilities, auction_sample, frequency_cap};
use gemrec_core::rng::Rng;
use gemrec_core::seq_model::Token;
use rand::SeedableRng;

const INTEGRITY_LAMBDAS: [f64; 6] = [0.0, 0.5, 1.0, 2.0, 5.0, 10.0];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn contexts(d: &common::Desk) -> Vec<Vec<Token>> {
    d.data.cases.iter().take(1000).map(|c| c.context.clone()).collect()
}

fn sweep(d: &common::Desk) -> Vec<MetricsRow> {
    lambda_sweep(&d.model, &d.data.cases, d.data.market(), &d.cfg.eval.lambda_grid, &d.cfg.decode, 10, d.cfg.seed, None)
        .unwrap()
}

fn monotonicity(d: &common::Desk) -> Verdict {
    let t = Instant::now();
    let instances = audit_instances(d.cfg.seed, 20, 20).unwrap();
    let out = audit_monotonicity(&instances, 50, &[1.0, 5.0], &d.cfg.decode, Fault::None).unwrap();
    let took = t.elapsed();
    verdict(
        out.passed() && took < Duration::from_secs(120),
        format!(
            "{} instances x 50-point grids, {} checks, {} violations, {}",
            instances.len(),
            out.checks,
            out.failure_count,
            secs(took)
        ),
    )
}

fn safe_fallback(d: &common::Desk, rows: &[MetricsRow]) -> Verdict {
    let t = Instant::now();
    let out = audit_safe_fallback(&d.model, &contexts(d), d.data.market(), &d.cfg.decode).unwrap();
    let reference =
        reference_evaluation(&d.model, &d.data.cases, d.data.market(), &d.cfg.decode, 10, d.cfg.seed).unwrap();
    let diff = rows[0].max_abs_diff(&reference);
    let took = t.elapsed();
    verdict(
        rows[0].lambda == 0.0 && out.passed() && diff <= 1e-12 && took < Duration::from_secs(60),
        format!(
            "{} bit-exact checks, {} failures, lambda-0 row vs reference max diff {diff:e}, {}",
            out.checks,
            out.failure_count,
            secs(took)
        ),
    )
}

fn organic_integrity(d: &common::Desk, rows: &[MetricsRow]) -> Verdict {
    let ctx = contexts(d);
    let out = audit_organic_integrity(&d.model, &ctx, d.data.market(), &INTEGRITY_LAMBDAS, &d.cfg.decode, Fault::None)
        .unwrap();
    let organic: Vec<f64> = rows.iter().filter_map(|r| r.o_ndcg10).collect();
    let base = rows[0].o_ndcg10.unwrap_or(f64::NAN);
    let spread = organic.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - organic.iter().copied().fold(f64::INFINITY, f64::min);
    let variation = spread / base;
    let at10 = rows.iter().find(|r| r.lambda == 10.0).expect("grid contains lambda 10");
    let drop = (rows[0].ndcg10 - at10.ndcg10) / rows[0].ndcg10;
    verdict(
        out.passed() && ctx.len() == 1000 && organic.len() == rows.len() && variation < 0.10 && drop >= 0.30,
        format!(
            "{} contexts x {} lambdas, {} ranking changes; conditional organic NDCG spread {:.1}% of lambda-0 value; strict NDCG drop {:.1}%",
            ctx.len(),
            INTEGRITY_LAMBDAS.len(),
            out.failure_count,
            100.0 * variation,
            100.0 * drop
        ),
    )
}

fn steerability(d: &common::Desk, rows: &[MetricsRow]) -> Verdict {
    let monotone = rows.windows(2).all(|w| w[1].ad_rate >= w[0].ad_rate);
    let trained = d.corpus.ad_fraction;
    let rel = (rows[0].ad_rate - trained).abs() / trained;
    let rates: Vec<String> = rows.iter().map(|r| format!("{:.3}", r.ad_rate)).collect();
    verdict(
        monotone && rel <= 0.5,
        format!(
            "ad_rate over grid [{}], lambda-0 {:.4} vs training {:.4} ({:.1}% off)",
            rates.join(", "),
            rows[0].ad_rate,
            trained,
            100.0 * rel
        ),
    )
}

fn bid_shock(d: &common::Desk) -> Verdict {
    let t = Instant::now();
    let m = &d.cfg.market;
    let report = shock_experiment(
        &d.model,
        &d.data.cases,
        &d.data.trie,
        &d.data.inventory,
        &d.cfg.eval.shock_grid,
        m.shock_fraction,
        m.shock_multiplier,
        &d.cfg.decode,
        10,
        d.cfg.seed,
    )
    .unwrap();
    let took = t.elapsed();
    let shares: Vec<f64> = report.rows.iter().map(|r| r.hv_share.unwrap_or(0.0)).collect();
    let monotone = shares.windows(2).all(|w| w[1] >= w[0]);
    let hit = report
        .rows
        .iter()
        .find(|r| r.lambda <= 2.0 && r.hv_share.is_some_and(|s| s > 0.8) && r.uplift.is_some_and(|u| u >= 5.0));
    let table: Vec<String> = report
        .rows
        .iter()
        .map(|r| {
            format!(
                "lambda {}: share {:.3}, uplift {:.1}x",
                r.lambda,
                r.hv_share.unwrap_or(0.0),
                r.uplift.unwrap_or(0.0)
            )
        })
        .collect();
    verdict(
        m.shock_fraction == 0.05
            && m.shock_multiplier == 10.0
            && monotone
            && hit.is_some()
            && took < Duration::from_secs(300),
        format!("{}; {}", table.join("; "), secs(took)),
    )
}

fn beam_oracle(d: &common::Desk) -> Verdict {
    let out = audit_beam_oracle(100, &d.cfg.eval.lambda_grid, d.cfg.seed).unwrap();
    verdict(out.passed(), format!("100 models, {} comparisons, {} mismatches", out.checks, out.failure_count))
}

fn policy_fidelity() -> Verdict {
    let bids = [1.0, 0.8, 0.75, 0.5, 0.1];
    let tau = 0.1;
    let n = 100_000;
    let probs = auction_probabilities(&bids, tau);
    let mut rng = Rng::seed_from_u64(2024);
    let mut wins = [0usize; 5];
    for _ in 0..n {
        wins[auction_sample(&bids, tau, &mut rng).unwrap()] += 1;
    }
    let worst = probs
        .iter()
        .zip(&wins)
        .map(|(&p, &w)| {
            let sd = (p * (1.0 - p) / n as f64).sqrt();
            if sd == 0.0 {
                if w == 0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                (w as f64 / n as f64 - p).abs() / sd
            }
        })
        .fold(0.0, f64::max);
    let cap = frequency_cap(20.0, 0.4, 0.05);
    verdict(
        worst <= 3.0 && cap == 0.4,
        format!("largest auction deviation {worst:.2} sd over {n} draws; frequency_cap(20, 0.4, 0.05) = {cap}"),
    )
}

fn validity(rows: &[MetricsRow]) -> Verdict {
    let v: Vec<String> = rows.iter().map(|r| r.validity.map_or("NA".into(), |x| format!("{x:.3}"))).collect();
    verdict(rows.iter().all(|r| r.validity == Some(1.0)), format!("validity per lambda [{}]", v.join(", ")))
}

fn ad_free(d: &common::Desk) -> Verdict {
    let cfg = DecodeConfig { lambda: 0.0, ..d.cfg.decode.clone() };
    let (out, check) = audit_ad_free(
        &d.data.train,
        &d.data.trie,
        &d.data.vocab,
        d.cfg.model.order,
        d.cfg.model.alpha,
        &d.data.cases,
        d.data.market(),
        &cfg,
        d.cfg.seed,
    )
    .unwrap();
    let bound = 2.0 * d.cfg.model.alpha / check.bos_total as f64;
    verdict(
        out.passed() && check.p_ad_bos <= bound && check.ad_rate < 0.01,
        format!("P(AD|BOS) {:.3e} <= {bound:.3e}; ad_rate at lambda 0 {:.4}", check.p_ad_bos, check.ad_rate),
    )
}

fn main() -> ExitCode {
    let t = Instant::now();
    let d = common::desk();
    println!("desk corpus and model ready in {}", secs(t.elapsed()));
    let rows = sweep(d);
    let results = [
        ("1 monotonicity", monotonicity(d)),
        ("2 safe fallback", safe_fallback(d, &rows)),
        ("3 organic integrity", organic_integrity(d, &rows)),
        ("4 steerability", steerability(d, &rows)),
        ("5 bid shock", bid_shock(d)),
        ("6 beam oracle", beam_oracle(d)),
        ("7 policy fidelity", policy_fidelity()),
        ("8 validity", validity(&rows)),
        ("9 ad-free generalization", ad_free(d)),
    ];
    let mut failed = 0;
    for (name, v) in &results {
        println!("criterion {name}: {} ({})", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
