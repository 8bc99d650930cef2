//! Automatic metrics, reports and sweep plots.

pub mod metrics;
pub mod plot;
pub mod report;

pub use metrics::{
    bleu, bleu_corpus, distinct_n, explainability, hit_rate, knowledge_f1, mean_recall,
    mentions_item, recall_at_k, EvalRecord, Locus, Scope, BLEU_SMOOTHING,
};
pub use plot::{emit_plots, sweep_chart, sweep_csv, SWEEP_SERIES};
pub use report::{MetricsReport, REPORT_SCHEMA_VERSION};
