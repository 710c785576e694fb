mod common;

use gemrec_core::decoder::{DecodeConfig, FlagMode};
use gemrec_core::eval::audit::{audit_monotonicity, audit_organic_integrity, toy_instance, Fault};
use gemrec_core::eval::{
    evaluate, lambda_sweep, reference_evaluation, shock_experiment, write_csv, write_plot_data, CSV_HEADER,
};

fn toy_set() -> Vec<gemrec_core::eval::audit::ToyInstance> {
    (0..4).map(|s| toy_instance(100 + s, 2, 3, 8, 5).unwrap()).collect()
}

#[test]
fn negated_boost_is_caught_by_monotonicity_audit() {
    let cfg = DecodeConfig::default();
    let clean = audit_monotonicity(&toy_set(), 20, &[1.0, 5.0], &cfg, Fault::None).unwrap();
    assert!(clean.passed(), "{clean}");
    let broken = audit_monotonicity(&toy_set(), 20, &[1.0, 5.0], &cfg, Fault::NegateBoost).unwrap();
    assert!(!broken.passed());
    assert!(broken.failures[0].contains("instance"));
}

#[test]
fn organic_modulation_is_caught_by_integrity_audit() {
    let d = common::small(5);
    let contexts: Vec<_> = d.data.cases.iter().take(100).map(|c| c.context.clone()).collect();
    let lambdas = [0.0, 1.0, 5.0];
    let cfg = DecodeConfig::default();
    let clean = audit_organic_integrity(&d.model, &contexts, d.data.market(), &lambdas, &cfg, Fault::None).unwrap();
    assert!(clean.passed(), "{clean}");
    let broken =
        audit_organic_integrity(&d.model, &contexts, d.data.market(), &lambdas, &cfg, Fault::ModulateOrganic).unwrap();
    assert!(!broken.passed());
}

#[test]
fn sweep_csv_is_reproducible_and_starts_with_header() {
    let d = common::small(2);
    let run = || {
        let rows = lambda_sweep(&d.model, &d.data.cases, d.data.market(), &[0.0, 1.0, 5.0], &d.cfg.decode, 10, 9, None)
            .unwrap();
        let mut out = Vec::new();
        write_csv(&rows, &mut out).unwrap();
        out
    };
    let a = run();
    assert_eq!(a, run());
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    assert_eq!(
        CSV_HEADER,
        "lambda,ad_rate,revenue,ndcg10,recall10,o_ndcg10,o_recall10,ad_ndcg10,mean_prefix_depth,validity,hv_share,seed"
    );
    assert_eq!(lines.count(), 3);
}

#[test]
fn plot_files_are_two_column_tables() {
    let d = common::small(2);
    let rows = lambda_sweep(&d.model, &d.data.cases, d.data.market(), &[0.0, 2.0], &d.cfg.decode, 10, 1, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = write_plot_data(&rows, dir.path()).unwrap();
    assert_eq!(files.len(), 4);
    for f in files {
        let text = std::fs::read_to_string(&f).unwrap();
        assert_eq!(text.lines().count(), 3, "{}", f.display());
        assert!(text.lines().all(|l| l.split('\t').count() == 2));
    }
}

#[test]
fn single_point_grid_equals_reference() {
    let d = common::small(4);
    let rows = lambda_sweep(&d.model, &d.data.cases, d.data.market(), &[0.0], &d.cfg.decode, 10, 4, None).unwrap();
    let reference = reference_evaluation(&d.model, &d.data.cases, d.data.market(), &d.cfg.decode, 10, 4).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].max_abs_diff(&reference), 0.0);
}

#[test]
fn revenue_is_the_sum_of_prices() {
    let d = common::small(6);
    let cfg = DecodeConfig::with_lambda(2.0);
    let (records, row) = evaluate(&d.model, &d.data.cases, d.data.market(), &cfg, 10, 6, None).unwrap();
    let total: f64 = records.iter().map(|r| r.price).sum();
    assert_eq!(row.revenue, total);
    for r in &records {
        let shown = r.predictions[0].item_id.unwrap();
        let bid = d.data.inventory.bid(shown).unwrap_or(0.0);
        assert_eq!(r.price, if r.flag == gemrec_core::marketplace::Mode::Sponsored { bid } else { 0.0 });
    }
}

#[test]
fn unit_multiplier_shock_changes_nothing() {
    let d = common::desk();
    let grid = [0.0, 1.0, 2.0];
    let report = shock_experiment(
        &d.model,
        &d.data.cases,
        &d.data.trie,
        &d.data.inventory,
        &grid,
        0.05,
        1.0,
        &d.cfg.decode,
        10,
        7,
    )
    .unwrap();
    let plain = lambda_sweep(&d.model, &d.data.cases, d.data.market(), &grid, &d.cfg.decode, 10, 7, None).unwrap();
    assert_eq!(report.rows[0].uplift, Some(1.0));
    for (s, p) in report.rows.iter().zip(&plain) {
        assert_eq!((s.ad_rate, s.revenue), (p.ad_rate, p.revenue));
        assert_eq!(s.uplift, Some(p.revenue / plain[0].revenue));
    }
    // Share of displayed ads from the marked subset versus its inventory share.
    let ads = (report.rows[0].ad_rate * d.data.cases.len() as f64).round();
    let share = report.rows[0].hv_share.unwrap();
    let natural = report.natural_share;
    let sd = (natural * (1.0 - natural) / ads).sqrt();
    assert!((share - natural).abs() < 4.0 * sd, "share {share} vs natural {natural} (sd {sd})");
}

#[test]
fn large_lambda_shock_goes_to_the_shocked_subset() {
    let d = common::desk();
    let grid = [0.0, 0.5, 1.0, 2.0, 5.0, 10.0];
    let report = shock_experiment(
        &d.model,
        &d.data.cases,
        &d.data.trie,
        &d.data.inventory,
        &grid,
        0.05,
        10.0,
        &d.cfg.decode,
        10,
        7,
    )
    .unwrap();
    assert_eq!(report.rows[0].uplift, Some(1.0));
    let shares: Vec<f64> = report.rows.iter().map(|r| r.hv_share.unwrap()).collect();
    assert!(shares.windows(2).all(|w| w[1] >= w[0]), "{shares:?}");
    assert!(shares[5] > 0.95);
}

#[test]
fn desk_sweep_trends() {
    let d = common::desk();
    let rows =
        lambda_sweep(&d.model, &d.data.cases, d.data.market(), &d.cfg.eval.lambda_grid, &d.cfg.decode, 10, 7, None)
            .unwrap();
    for w in rows.windows(2) {
        assert!(w[1].ad_rate >= w[0].ad_rate);
        assert!(w[1].revenue >= w[0].revenue);
    }
    assert!(rows.iter().all(|r| r.validity == Some(1.0) && r.ndcg10 <= 1.0));
}

#[test]
fn unconstrained_decoding_stays_mostly_valid() {
    let d = common::desk();
    let cfg = DecodeConfig { constrained: false, ..d.cfg.decode.clone() };
    for lambda in [0.0, 2.0, 10.0] {
        let (_, row) =
            evaluate(&d.model, &d.data.cases, d.data.market(), &DecodeConfig { lambda, ..cfg.clone() }, 10, 7, None)
                .unwrap();
        assert!(row.validity.unwrap() >= 0.95, "lambda {lambda}: {:?}", row.validity);
    }
}

#[test]
fn organic_only_decoder_never_scores_ad_targets() {
    let d = common::small(8);
    let cfg = DecodeConfig { flag_mode: FlagMode::ForceOrg, ..DecodeConfig::default() };
    let (_, row) = evaluate(&d.model, &d.data.cases, d.data.market(), &cfg, 10, 8, None).unwrap();
    assert_eq!(row.ad_rate, 0.0);
    assert_eq!(row.ad_ndcg10, Some(0.0));
    assert_eq!(row.revenue, 0.0);
}
