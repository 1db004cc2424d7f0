use std::sync::OnceLock;

use cgfuzz::corpus::{collect_pairs, generate_corpus};
use cgfuzz::extract::{extract_all, ExtractionMode, Pattern};
use cgfuzz::graph::Graph;
use cgfuzz::harness::{
    read_report, read_summary, replay, run_campaign, write_reports, Budget, CampaignConfig,
    CampaignResult,
};
use cgfuzz::passes::Mutant;
use cgfuzz::seedgen::gen_seed_pool;

struct Pools {
    seeds: Vec<Graph>,
    patterns: Vec<Pattern>,
}

fn pools() -> &'static Pools {
    static POOLS: OnceLock<Pools> = OnceLock::new();
    POOLS.get_or_init(|| {
        let pairs = collect_pairs(&generate_corpus(0)).unwrap();
        Pools {
            seeds: gen_seed_pool(0, 200),
            patterns: extract_all(&pairs, ExtractionMode::Adaptive),
        }
    })
}

fn config(tests: u64, workers: usize, mutant: Option<Mutant>) -> CampaignConfig {
    CampaignConfig {
        budget: Budget::Tests(tests),
        workers,
        mutant,
        ..CampaignConfig::default()
    }
}

fn run(cfg: &CampaignConfig) -> CampaignResult {
    run_campaign(cfg, &pools().seeds, &pools().patterns).unwrap()
}

fn comparable(r: &CampaignResult) -> (String, Vec<String>) {
    let mut m = r.metrics.clone();
    m.wall_clock_secs = 0.0;
    (
        serde_json::to_string(&m).unwrap(),
        r.bugs.iter().map(|b| b.to_json()).collect(),
    )
}

#[test]
fn campaigns_are_deterministic_across_worker_counts() {
    let cfg = config(300, 1, Some(Mutant::FusionNullDeref));
    let one = run(&cfg);
    assert_eq!(comparable(&one), comparable(&run(&cfg)));
    let two = run(&CampaignConfig { workers: 2, ..cfg });
    assert_eq!(comparable(&one), comparable(&two));
}

#[test]
fn metrics_are_consistent() {
    let r = run(&config(300, 1, None));
    let m = &r.metrics;
    assert_eq!(m.tests_generated, 300);
    assert_eq!(
        m.valid + m.discarded.values().sum::<u64>(),
        m.tests_generated
    );
    assert!((m.validity_rate - m.valid as f64 / 300.0).abs() < 1e-12);
    assert!(m.target_triggered <= m.valid);
    assert!(m.pass_triggers.values().all(|&n| n <= m.valid));
    assert_eq!(m.distinct_bugs, 0);
    assert!(r.bugs.is_empty());
    assert!(r.first_bug_at.is_none());
}

#[test]
fn reports_roundtrip_through_disk_and_replay() {
    let cfg = config(300, 1, Some(Mutant::FusionNullDeref));
    let r = run(&cfg);
    assert!(!r.bugs.is_empty());
    assert_eq!(r.metrics.distinct_bugs as usize, r.bugs.len());
    let dir = tempfile::tempdir().unwrap();
    let summary = write_reports(dir.path(), &cfg, &r.metrics, &r.bugs, false).unwrap();
    assert!(write_reports(dir.path(), &cfg, &r.metrics, &r.bugs, false).is_err());
    assert_eq!(read_summary(dir.path()).unwrap(), summary);
    for (entry, bug) in summary.bugs.iter().zip(&r.bugs) {
        let back = read_report(&dir.path().join(&entry.file)).unwrap();
        assert_eq!(&back, bug);
        let again = replay(&back.provenance, &pools().seeds, &pools().patterns).unwrap();
        assert_eq!(again.report.as_ref(), Some(bug));
    }
}
