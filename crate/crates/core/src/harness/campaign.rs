//! Campaign driver: plan, synthesize, test, minimize, deduplicate, admit.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::minimize::ddmin;
use super::oracle::{test_one, InfraFault, OracleConfig, Verdict};
use super::store::{crash_key, verdict_key, BugReport, BugStore, Provenance, SynthesisStep};
use crate::extract::Pattern;
use crate::graph::{validate, Graph};
use crate::passes::{Compiler, Mutant, PassName};
use crate::synth::{synthesize, DiscardReason, StrategyUsage, SynthConfig};

pub const DEFAULT_BATCH: usize = 64;
pub const DEFAULT_TEST_BUDGET: u64 = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Budget {
    Tests(u64),
    Seconds(f64),
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::Tests(n) => write!(f, "{n}"),
            Budget::Seconds(s) => write!(f, "{s}s"),
        }
    }
}

impl FromStr for Budget {
    type Err = String;

    /// `"10000"` is a test count, `"600s"` a wall-clock limit.
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let budget = if let Some(secs) = s.strip_suffix('s') {
            let v: f64 = secs
                .parse()
                .map_err(|_| format!("bad budget `{s}`: expected <tests> or <seconds>s"))?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("budget must be positive, got `{s}`"));
            }
            Budget::Seconds(v)
        } else {
            let n: u64 = s
                .parse()
                .map_err(|_| format!("bad budget `{s}`: expected <tests> or <seconds>s"))?;
            Budget::Tests(n)
        };
        Ok(budget)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub master_seed: u64,
    pub budget: Budget,
    pub oracle: OracleConfig,
    pub synth: SynthConfig,
    pub mutant: Option<Mutant>,
    pub workers: usize,
    /// Plans per synchronization step. Results are deterministic for a fixed
    /// batch size regardless of the worker count.
    pub batch_size: usize,
    pub high_order: bool,
    pub stop_on_first_bug: bool,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            budget: Budget::Tests(DEFAULT_TEST_BUDGET),
            oracle: OracleConfig::default(),
            synth: SynthConfig::default(),
            mutant: None,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            batch_size: DEFAULT_BATCH,
            high_order: true,
            stop_on_first_bug: false,
        }
    }
}

/// A seed pool member and how it was derived from a base seed.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedEntry {
    pub graph: Graph,
    pub base: usize,
    pub steps: Vec<SynthesisStep>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CampaignMetrics {
    pub tests_generated: u64,
    pub valid: u64,
    pub discarded: BTreeMap<String, u64>,
    pub validity_rate: f64,
    /// Valid tests on which each pass fired within the full pipeline.
    pub pass_triggers: BTreeMap<String, u64>,
    /// Valid tests on which the pattern's target pass fired.
    pub target_triggered: u64,
    pub trigger_rate: f64,
    pub raw_findings: u64,
    pub distinct_bugs: u64,
    pub admitted_seeds: u64,
    pub usage: StrategyUsage,
    pub wall_clock_secs: f64,
}

impl CampaignMetrics {
    fn finish(&mut self, started: Instant) {
        self.validity_rate = ratio(self.valid, self.tests_generated);
        self.trigger_rate = ratio(self.target_triggered, self.valid);
        self.wall_clock_secs = started.elapsed().as_secs_f64();
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Clone, Debug)]
pub struct CampaignResult {
    pub metrics: CampaignMetrics,
    pub bugs: Vec<BugReport>,
    /// Number of tests generated when the first bug was found.
    pub first_bug_at: Option<u64>,
}

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("{0} pool is empty")]
    EmptyPool(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Infra(#[from] InfraFault),
}

/// Why a finished test was not admitted as a seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdmitRejection {
    Buggy,
    SizeCap,
}

/// Admission rule for high-order synthesis.
pub fn high_order_admit(
    graph: &Graph,
    verdict: &Verdict,
    node_cap: usize,
) -> Result<(), AdmitRejection> {
    if verdict.is_bug() {
        Err(AdmitRejection::Buggy)
    } else if graph.nodes.len() > node_cap {
        Err(AdmitRejection::SizeCap)
    } else {
        Ok(())
    }
}

/// Pipelines and input seed base for a test, drawn from its plan's RNG seed.
pub fn test_setup(rng_seed: u64, oracle: &OracleConfig) -> (Vec<Vec<PassName>>, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    rng.set_stream(1);
    let pipelines = oracle.sample_pipelines(&mut rng);
    (pipelines, rng.random())
}

/// Turns a bug verdict into a report. Inconsistencies are minimized first.
pub fn make_report(
    compiler: &Compiler,
    graph: Graph,
    verdict: &Verdict,
    provenance: Provenance,
) -> Result<BugReport, InfraFault> {
    match verdict {
        Verdict::Clean => Err(InfraFault("clean verdict has no report".into())),
        Verdict::Crash { message, pipeline } => Ok(BugReport::crash(
            message,
            pipeline.clone(),
            graph,
            provenance,
        )),
        Verdict::Inconsistency { pipeline, distance } => {
            let minimal = minimize_inconsistency(
                compiler,
                &graph,
                pipeline,
                provenance.input_base,
                &provenance.oracle,
            )?;
            Ok(BugReport::inconsistency(
                minimal, *distance, graph, provenance,
            ))
        }
    }
}

/// Smallest order-preserving subset of `pipeline` that still yields an
/// inconsistency on `graph`.
pub fn minimize_inconsistency(
    compiler: &Compiler,
    graph: &Graph,
    pipeline: &[PassName],
    input_base: u64,
    oracle: &OracleConfig,
) -> Result<Vec<PassName>, InfraFault> {
    let mut fault = None;
    let result = ddmin(pipeline, |subset| {
        match test_one(compiler, graph, &[subset.to_vec()], input_base, oracle) {
            Ok(r) => matches!(r.verdict, Verdict::Inconsistency { .. }),
            Err(e) => {
                fault.get_or_insert(e);
                false
            }
        }
    });
    if let Some(e) = fault {
        return Err(e);
    }
    result.map_err(|e| InfraFault(e.to_string()))
}

/// Minimal pass set that still reproduces `verdict` on `graph`: the same
/// crash key for crashes, any inconsistency for inconsistencies. `None` for a
/// clean verdict, which has nothing to minimize.
pub fn minimize_verdict(
    compiler: &Compiler,
    graph: &Graph,
    verdict: &Verdict,
    input_base: u64,
    oracle: &OracleConfig,
) -> Result<Option<Vec<PassName>>, InfraFault> {
    match verdict {
        Verdict::Clean => Ok(None),
        Verdict::Inconsistency { pipeline, .. } => {
            minimize_inconsistency(compiler, graph, pipeline, input_base, oracle).map(Some)
        }
        Verdict::Crash { message, pipeline } => {
            let key = crash_key(message);
            let mut fault = None;
            let result = ddmin(pipeline, |subset| {
                match test_one(compiler, graph, &[subset.to_vec()], input_base, oracle) {
                    Ok(r) => verdict_key(&r.verdict).as_deref() == Some(key.as_str()),
                    Err(e) => {
                        fault.get_or_insert(e);
                        false
                    }
                }
            });
            if let Some(e) = fault {
                return Err(e);
            }
            result.map(Some).map_err(|e| InfraFault(e.to_string()))
        }
    }
}

struct Plan {
    seed: usize,
    pattern: usize,
    point: usize,
    rng_seed: u64,
}

enum Record {
    Discarded(DiscardReason, StrategyUsage),
    Tested {
        usage: StrategyUsage,
        target_fired: bool,
        fired: Vec<PassName>,
        report: Option<Box<BugReport>>,
        admit: Option<Box<SeedEntry>>,
    },
}

fn run_plan(
    cfg: &CampaignConfig,
    compiler: &Compiler,
    entry: &SeedEntry,
    pattern: &Pattern,
    plan: &Plan,
) -> Result<Record, InfraFault> {
    let outcome = synthesize(&entry.graph, pattern, plan.point, plan.rng_seed, &cfg.synth);
    let graph = match outcome.result {
        Ok(g) => g,
        Err(reason) => return Ok(Record::Discarded(reason, outcome.usage)),
    };
    if let Some(v) = validate(&graph).first() {
        return Err(InfraFault(format!(
            "synthesized graph failed validation: {v}"
        )));
    }
    let target_fired = compiler
        .run_pass(pattern.target, &graph)
        .is_ok_and(|o| o.fired());
    let (pipelines, input_base) = test_setup(plan.rng_seed, &cfg.oracle);
    let tested = test_one(compiler, &graph, &pipelines, input_base, &cfg.oracle)?;
    let mut steps = entry.steps.clone();
    steps.push(SynthesisStep {
        pattern: pattern.canonical_hash(),
        point: plan.point,
        rng_seed: plan.rng_seed,
    });
    let admit = (cfg.high_order
        && high_order_admit(&graph, &tested.verdict, cfg.synth.node_cap).is_ok())
    .then(|| {
        Box::new(SeedEntry {
            graph: graph.clone(),
            base: entry.base,
            steps: steps.clone(),
        })
    });
    let report = if tested.verdict.is_bug() {
        let provenance = Provenance {
            base_seed: entry.base,
            steps,
            pipelines,
            input_base,
            synth: cfg.synth.clone(),
            oracle: cfg.oracle.clone(),
            mutant: cfg.mutant.map(|m| m.name().to_string()),
        };
        Some(Box::new(make_report(
            compiler,
            graph,
            &tested.verdict,
            provenance,
        )?))
    } else {
        None
    };
    Ok(Record::Tested {
        usage: outcome.usage,
        target_fired,
        fired: tested.fired.into_iter().collect(),
        report,
        admit,
    })
}

fn add_usage(total: &mut StrategyUsage, u: &StrategyUsage) {
    total.reused_concrete += u.reused_concrete;
    total.reused_abstract += u.reused_abstract;
    total.bridged += u.bridged;
    total.bridge_nodes += u.bridge_nodes;
    total.rewired_outputs += u.rewired_outputs;
    total.appended_outputs += u.appended_outputs;
}

/// Runs a campaign over `seeds` and `patterns`. With a test budget the result
/// is a pure function of the configuration (worker count aside).
pub fn run_campaign(
    cfg: &CampaignConfig,
    seeds: &[Graph],
    patterns: &[Pattern],
) -> Result<CampaignResult, CampaignError> {
    let started = Instant::now();
    cfg.oracle.check().map_err(CampaignError::Config)?;
    if cfg.batch_size == 0 || cfg.workers == 0 {
        return Err(CampaignError::Config(
            "batch size and worker count must be positive".into(),
        ));
    }
    let mut metrics = CampaignMetrics::default();
    if matches!(cfg.budget, Budget::Tests(0)) {
        metrics.finish(started);
        return Ok(CampaignResult {
            metrics,
            bugs: Vec::new(),
            first_bug_at: None,
        });
    }
    if seeds.is_empty() {
        return Err(CampaignError::EmptyPool("seed"));
    }
    if patterns.is_empty() {
        return Err(CampaignError::EmptyPool("pattern"));
    }
    let deadline = match cfg.budget {
        Budget::Seconds(s) => Some(started + Duration::from_secs_f64(s)),
        Budget::Tests(_) => None,
    };
    let compiler = Compiler::with_mutant(cfg.mutant);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CampaignError::Config(e.to_string()))?;

    let mut entries: Vec<SeedEntry> = seeds
        .iter()
        .enumerate()
        .map(|(i, g)| SeedEntry {
            graph: g.clone(),
            base: i,
            steps: Vec::new(),
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
    let mut store = BugStore::new();
    let mut first_bug_at = None;

    'campaign: loop {
        let want = match cfg.budget {
            Budget::Tests(n) => {
                let left = n - metrics.tests_generated;
                if left == 0 {
                    break;
                }
                left.min(cfg.batch_size as u64) as usize
            }
            Budget::Seconds(_) => {
                if Instant::now() >= deadline.expect("seconds budget has a deadline") {
                    break;
                }
                cfg.batch_size
            }
        };
        let plans: Vec<Plan> = (0..want)
            .map(|_| {
                let seed = rng.random_range(0..entries.len());
                let pattern = rng.random_range(0..patterns.len());
                let point = rng.random_range(0..=entries[seed].graph.nodes.len());
                Plan {
                    seed,
                    pattern,
                    point,
                    rng_seed: rng.random(),
                }
            })
            .collect();
        let records: Vec<Option<Result<Record, InfraFault>>> = pool.install(|| {
            plans
                .par_iter()
                .map(|plan| {
                    if deadline.is_some_and(|d| Instant::now() >= d) {
                        return None;
                    }
                    Some(run_plan(
                        cfg,
                        &compiler,
                        &entries[plan.seed],
                        &patterns[plan.pattern],
                        plan,
                    ))
                })
                .collect()
        });
        let mut admitted = Vec::new();
        for record in records.into_iter().flatten() {
            metrics.tests_generated += 1;
            match record? {
                Record::Discarded(reason, usage) => {
                    add_usage(&mut metrics.usage, &usage);
                    *metrics
                        .discarded
                        .entry(reason.name().to_string())
                        .or_default() += 1;
                }
                Record::Tested {
                    usage,
                    target_fired,
                    fired,
                    report,
                    admit,
                } => {
                    add_usage(&mut metrics.usage, &usage);
                    metrics.valid += 1;
                    metrics.target_triggered += target_fired as u64;
                    for p in fired {
                        *metrics
                            .pass_triggers
                            .entry(p.as_str().to_string())
                            .or_default() += 1;
                    }
                    admitted.extend(admit.map(|a| *a));
                    if let Some(report) = report {
                        metrics.raw_findings += 1;
                        if store.insert(*report) {
                            metrics.distinct_bugs += 1;
                        }
                        first_bug_at.get_or_insert(metrics.tests_generated);
                        if cfg.stop_on_first_bug {
                            break 'campaign;
                        }
                    }
                }
            }
        }
        metrics.admitted_seeds += admitted.len() as u64;
        entries.extend(admitted);
    }
    metrics.finish(started);
    Ok(CampaignResult {
        metrics,
        bugs: store.into_reports(),
        first_bug_at,
    })
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("base seed {0} is not in the seed pool")]
    UnknownSeed(usize),
    #[error("pattern {0} is not in the pattern pool")]
    UnknownPattern(String),
    #[error("step {step} no longer synthesizes: {reason}")]
    Discarded { step: usize, reason: &'static str },
    #[error("unknown mutant `{0}`")]
    UnknownMutant(String),
    #[error(transparent)]
    Infra(#[from] InfraFault),
}

#[derive(Clone, Debug)]
pub struct Replay {
    pub graph: Graph,
    pub verdict: Verdict,
    pub report: Option<BugReport>,
}

/// Re-derives a test from its provenance and re-runs its oracles.
pub fn replay(
    provenance: &Provenance,
    seeds: &[Graph],
    patterns: &[Pattern],
) -> Result<Replay, ReplayError> {
    let by_hash: HashMap<String, &Pattern> =
        patterns.iter().map(|p| (p.canonical_hash(), p)).collect();
    let mut graph = seeds
        .get(provenance.base_seed)
        .ok_or(ReplayError::UnknownSeed(provenance.base_seed))?
        .clone();
    for (k, step) in provenance.steps.iter().enumerate() {
        let pattern = by_hash
            .get(&step.pattern)
            .ok_or_else(|| ReplayError::UnknownPattern(step.pattern.clone()))?;
        graph = synthesize(
            &graph,
            pattern,
            step.point,
            step.rng_seed,
            &provenance.synth,
        )
        .result
        .map_err(|r| ReplayError::Discarded {
            step: k,
            reason: r.name(),
        })?;
    }
    let compiler = match &provenance.mutant {
        Some(name) => {
            Compiler::activate(name).map_err(|_| ReplayError::UnknownMutant(name.clone()))?
        }
        None => Compiler::new(),
    };
    let verdict = test_one(
        &compiler,
        &graph,
        &provenance.pipelines,
        provenance.input_base,
        &provenance.oracle,
    )?
    .verdict;
    let report = if verdict.is_bug() {
        Some(make_report(
            &compiler,
            graph.clone(),
            &verdict,
            provenance.clone(),
        )?)
    } else {
        None
    };
    Ok(Replay {
        graph,
        verdict,
        report,
    })
}
