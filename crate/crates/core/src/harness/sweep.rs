//! Mutant kill sweeps and the extraction-mode ablation.

use serde::{Deserialize, Serialize};

use super::campaign::{run_campaign, CampaignConfig, CampaignError};
use crate::corpus::noopt_pairs;
use crate::extract::{extract_all, sample_patterns, ExtractionMode, Pattern};
use crate::graph::Graph;
use crate::passes::{Mutant, MutantId, PassTracePair};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KillRecord {
    pub mutant: MutantId,
    pub killed: bool,
    /// Tests generated up to the kill, or the whole budget when not killed.
    pub tests: u64,
    pub bug_kind: Option<String>,
    pub bug_key: Option<String>,
}

/// One sub-campaign per mutant, each stopping at its first bug.
pub fn mutant_sweep(
    base: &CampaignConfig,
    mutants: &[Mutant],
    seeds: &[Graph],
    patterns: &[Pattern],
) -> Result<Vec<KillRecord>, CampaignError> {
    mutants
        .iter()
        .map(|&m| {
            let cfg = CampaignConfig {
                mutant: Some(m),
                stop_on_first_bug: true,
                ..base.clone()
            };
            let r = run_campaign(&cfg, seeds, patterns)?;
            let bug = r.bugs.first();
            Ok(KillRecord {
                mutant: m.id(),
                killed: bug.is_some(),
                tests: r.first_bug_at.unwrap_or(r.metrics.tests_generated),
                bug_kind: bug.map(|b| b.verdict_kind().to_string()),
                bug_key: bug.map(|b| b.key.clone()),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub mode: ExtractionMode,
    pub patterns: usize,
    pub kills: usize,
    pub records: Vec<KillRecord>,
}

/// Pattern pool for one extraction mode. The non-optimization mode draws as
/// many patterns as adaptive extraction yields, from the `noopt` pairs.
pub fn patterns_for_mode(
    mode: ExtractionMode,
    corpus_pairs: &[(String, PassTracePair)],
    noopt: &[(String, PassTracePair)],
    seed: u64,
) -> Vec<Pattern> {
    match mode {
        ExtractionMode::NoOpt => {
            let count = extract_all(corpus_pairs, ExtractionMode::Adaptive).len();
            sample_patterns(noopt, count, seed)
        }
        _ => extract_all(corpus_pairs, mode),
    }
}

/// Random graphs drawn for the non-optimization pool, per corpus pair.
pub const NOOPT_PAIRS_PER_CORPUS_PAIR: usize = 4;

/// Pattern pool for `mode` from corpus pairs alone, drawing the random
/// graphs for the non-optimization mode from `master_seed`.
pub fn mode_patterns(
    mode: ExtractionMode,
    corpus_pairs: &[(String, PassTracePair)],
    master_seed: u64,
) -> Vec<Pattern> {
    let noopt = if mode == ExtractionMode::NoOpt {
        noopt_pairs(
            master_seed,
            NOOPT_PAIRS_PER_CORPUS_PAIR * corpus_pairs.len(),
        )
    } else {
        Vec::new()
    };
    patterns_for_mode(mode, corpus_pairs, &noopt, master_seed)
}

/// Runs the mutant sweep once per extraction mode.
pub fn ablation(
    base: &CampaignConfig,
    mutants: &[Mutant],
    seeds: &[Graph],
    corpus_pairs: &[(String, PassTracePair)],
    noopt: &[(String, PassTracePair)],
) -> Result<Vec<AblationRow>, CampaignError> {
    ExtractionMode::ALL
        .iter()
        .map(|&mode| {
            let patterns = patterns_for_mode(mode, corpus_pairs, noopt, base.master_seed);
            let records = if patterns.is_empty() {
                mutants
                    .iter()
                    .map(|m| KillRecord {
                        mutant: m.id(),
                        killed: false,
                        tests: 0,
                        bug_kind: None,
                        bug_key: None,
                    })
                    .collect()
            } else {
                mutant_sweep(base, mutants, seeds, &patterns)?
            };
            Ok(AblationRow {
                mode,
                patterns: patterns.len(),
                kills: records.iter().filter(|r| r.killed).count(),
                records,
            })
        })
        .collect()
}
