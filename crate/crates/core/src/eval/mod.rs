//! Evaluation protocols, lambda sweeps, the bid-shock experiment and the
//! invariant audits.

pub mod audit;
mod metrics;
mod sweep;

pub use audit::{audit_suite, AuditInput, AuditOptions, AuditOutcome, AuditReport, Fault};
pub use metrics::{
    ad_target_ndcg, conditional_organic_metrics, economic_metrics, item_hits, ndcg_at_k, recall_at_k, strict_hits,
    strict_metrics, Economics, EvalRecord, Prediction,
};
pub use sweep::{
    evaluate, lambda_sweep, reference_evaluation, shock_experiment, split_last_group, validity_rate, write_csv,
    write_plot_data, write_shock_csv, EvalCase, MetricsRow, ShockReport, ShockRow, CSV_HEADER, SHOCK_CSV_HEADER,
};
