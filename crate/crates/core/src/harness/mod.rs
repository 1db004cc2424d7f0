//! Fuzzing harness: oracles, minimization, deduplication and campaigns.

pub mod campaign;
pub mod minimize;
pub mod oracle;
pub mod report;
pub mod store;
pub mod sweep;

pub use campaign::{
    high_order_admit, make_report, minimize_inconsistency, minimize_verdict, replay, run_campaign,
    test_setup, AdmitRejection, Budget, CampaignConfig, CampaignError, CampaignMetrics,
    CampaignResult, Replay, ReplayError, SeedEntry,
};
pub use minimize::{ddmin, is_one_minimal, NotReproducible};
pub use oracle::{
    chebyshev, exceeds_threshold, normalize_crash, output_distance, test_one, InfraFault,
    OracleConfig, PipelineSampler, ShapeMismatch, TestReport, Verdict,
};
pub use report::{read_report, read_summary, write_reports, CampaignSummary, ReportError};
pub use store::{BugKind, BugReport, BugStore, Provenance, SynthesisStep};
pub use sweep::{
    ablation, mode_patterns, mutant_sweep, patterns_for_mode, AblationRow, KillRecord,
    NOOPT_PAIRS_PER_CORPUS_PAIR,
};
