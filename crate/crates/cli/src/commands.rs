use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use cgfuzz::corpus::{collect_pairs, generate_corpus, read_corpus, write_corpus};
use cgfuzz::extract::{ExtractionMode, Pattern};
use cgfuzz::harness::{
    ablation, minimize_verdict, mode_patterns, mutant_sweep as sweep_mutants, read_report,
    read_summary, replay as replay_report, run_campaign, test_one, write_reports, AblationRow,
    KillRecord, Provenance, Verdict,
};
use cgfuzz::passes::{list_mutants, Compiler, Mutant, PassName, DEFAULT_PIPELINE};
use cgfuzz::pool::{read_patterns, read_seeds, write_patterns, write_seeds};
use cgfuzz::seedgen::gen_seed_pool;
use cgfuzz::serial::{graph_hash, parse_with_provenance};
use serde::Serialize;
use serde_json::json;

use crate::config::{Config, Layered};

pub struct Ctx {
    pub cfg: Config,
    pub layers: Layered,
    pub json: bool,
    pub force: bool,
}

const MANIFEST: &str = "manifest.json";
const EXTRACTION_REPORT: &str = "extraction-report.json";
const MUTANT_CATALOG: &str = "mutants.json";
const KILL_MATRIX: &str = "kill-matrix.json";
const ABLATION: &str = "ablation.json";

fn emit<T: Serialize>(ctx: &Ctx, value: &T, human: impl FnOnce() -> String) {
    if ctx.json {
        println!(
            "{}",
            serde_json::to_string_pretty(value).expect("output serializes")
        );
    } else {
        print!("{}", human());
    }
}

fn write_guarded(path: &Path, text: &str, force: bool) -> Result<()> {
    if !force && path.exists() {
        bail!(
            "{} already exists (pass --force to overwrite)",
            path.display()
        );
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn to_pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("output serializes")
}

#[derive(Serialize)]
struct Manifest {
    master_seed: u64,
    corpus_entries: usize,
    entries_per_pass: BTreeMap<String, usize>,
    seed_count: usize,
    corpus_dir: String,
    seeds_dir: String,
}

pub fn corpus_gen(ctx: &Ctx) -> Result<u8> {
    let cfg = &ctx.cfg;
    let manifest_path = cfg.corpus_dir.join(MANIFEST);
    if !ctx.force && manifest_path.exists() {
        bail!(
            "{} already exists (pass --force to overwrite)",
            manifest_path.display()
        );
    }
    let seed = cfg.campaign.master_seed;
    let entries = generate_corpus(seed);
    write_corpus(&cfg.corpus_dir, &entries, ctx.force)?;
    let seeds = gen_seed_pool(seed, cfg.seed_count);
    write_seeds(&cfg.seeds_dir, &seeds, ctx.force)?;
    let mut per_pass = BTreeMap::new();
    for e in &entries {
        if let Some(p) = e.passes.first() {
            *per_pass.entry(p.to_string()).or_insert(0) += 1;
        }
    }
    let manifest = Manifest {
        master_seed: seed,
        corpus_entries: entries.len(),
        entries_per_pass: per_pass,
        seed_count: seeds.len(),
        corpus_dir: cfg.corpus_dir.display().to_string(),
        seeds_dir: cfg.seeds_dir.display().to_string(),
    };
    write_guarded(&manifest_path, &to_pretty(&manifest), true)?;
    emit(ctx, &manifest, || {
        format!(
            "wrote {} corpus entries to {} and {} seeds to {}\n",
            manifest.corpus_entries, manifest.corpus_dir, manifest.seed_count, manifest.seeds_dir
        )
    });
    Ok(0)
}

#[derive(Serialize)]
struct ExtractionReport {
    mode: ExtractionMode,
    corpus_entries: usize,
    trace_pairs: usize,
    patterns: usize,
    per_pass: BTreeMap<String, usize>,
}

pub fn extract(ctx: &Ctx) -> Result<u8> {
    let cfg = &ctx.cfg;
    let report_path = cfg.patterns_dir.join(EXTRACTION_REPORT);
    if !ctx.force && report_path.exists() {
        bail!(
            "{} already exists (pass --force to overwrite)",
            report_path.display()
        );
    }
    let entries = read_corpus(&cfg.corpus_dir)?;
    if entries.is_empty() {
        eprintln!(
            "warning: corpus {} is empty; the pattern pool will be empty",
            cfg.corpus_dir.display()
        );
    }
    let pairs = collect_pairs(&entries)?;
    let patterns = mode_patterns(cfg.mode, &pairs, cfg.campaign.master_seed);
    write_patterns(&cfg.patterns_dir, &patterns, ctx.force)?;
    let mut per_pass: BTreeMap<String, usize> =
        PassName::ALL.iter().map(|p| (p.to_string(), 0)).collect();
    for p in &patterns {
        *per_pass.entry(p.target.to_string()).or_insert(0) += 1;
    }
    let report = ExtractionReport {
        mode: cfg.mode,
        corpus_entries: entries.len(),
        trace_pairs: pairs.len(),
        patterns: patterns.len(),
        per_pass,
    };
    write_guarded(&report_path, &to_pretty(&report), true)?;
    emit(ctx, &report, || {
        let mut s = format!(
            "{} patterns ({} mode) from {} trace pairs\n",
            report.patterns,
            report.mode.name(),
            report.trace_pairs
        );
        for (pass, n) in &report.per_pass {
            s.push_str(&format!("  {pass:40} {n}\n"));
        }
        s
    });
    Ok(0)
}

fn load_pools(cfg: &Config) -> Result<(Vec<cgfuzz::graph::Graph>, Vec<Pattern>)> {
    let seeds = read_seeds(&cfg.seeds_dir)?;
    let patterns = read_patterns(&cfg.patterns_dir)?;
    Ok((seeds, patterns))
}

fn write_catalog(dir: &Path) -> Result<()> {
    write_guarded(&dir.join(MUTANT_CATALOG), &to_pretty(&list_mutants()), true)
}

pub fn fuzz(ctx: &Ctx) -> Result<u8> {
    let cfg = &ctx.cfg;
    if !ctx.force && cfg.reports_dir.join("campaign.json").exists() {
        bail!(
            "{} already contains reports (pass --force to overwrite)",
            cfg.reports_dir.display()
        );
    }
    let (seeds, patterns) = load_pools(cfg)?;
    let result = run_campaign(&cfg.campaign, &seeds, &patterns)?;
    let summary = write_reports(
        &cfg.reports_dir,
        &cfg.campaign,
        &result.metrics,
        &result.bugs,
        ctx.force,
    )?;
    write_catalog(&cfg.reports_dir)?;
    emit(ctx, &summary, || {
        let m = &summary.metrics;
        let mut s = format!(
            "{} tests ({} valid, validity {:.3}, trigger rate {:.3}) in {:.1}s\n{} distinct bugs\n",
            m.tests_generated,
            m.valid,
            m.validity_rate,
            m.trigger_rate,
            m.wall_clock_secs,
            m.distinct_bugs
        );
        for b in &summary.bugs {
            s.push_str(&format!("  {}  {}\n", b.file, b.key));
        }
        s
    });
    Ok(if result.bugs.is_empty() { 0 } else { 1 })
}

#[derive(Serialize)]
struct ReplayOutcome {
    report: String,
    verdict: &'static str,
    expected_key: String,
    key: Option<String>,
    graph_hash_matches: bool,
    report_identical: bool,
    reproduced: bool,
}

pub fn replay(ctx: &Ctx, path: &Path) -> Result<u8> {
    let original = read_report(path)?;
    let (seeds, patterns) = load_pools(&ctx.cfg)?;
    let r = replay_report(&original.provenance, &seeds, &patterns)?;
    let graph_hash_matches = graph_hash(&r.graph) == original.graph_hash
        && graph_hash(&original.reproducer) == original.graph_hash;
    let report_identical = r
        .report
        .as_ref()
        .is_some_and(|rep| rep.to_json() == original.to_json());
    let out = ReplayOutcome {
        report: path.display().to_string(),
        verdict: r.verdict.kind(),
        expected_key: original.key.clone(),
        key: r.report.as_ref().map(|rep| rep.key.clone()),
        graph_hash_matches,
        report_identical,
        reproduced: graph_hash_matches && report_identical,
    };
    emit(ctx, &out, || {
        format!(
            "{}: verdict {}, key {}, graph {}, report {}\n",
            out.report,
            out.verdict,
            out.key.as_deref().unwrap_or("-"),
            if out.graph_hash_matches {
                "identical"
            } else {
                "differs"
            },
            if out.report_identical {
                "identical"
            } else {
                "differs"
            },
        )
    });
    Ok(if out.reproduced { 1 } else { 2 })
}

fn parse_passes(list: &str) -> Result<Vec<PassName>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<PassName>().map_err(|e| anyhow!("{e}")))
        .collect()
}

#[derive(Serialize)]
struct MinimizeOutcome {
    verdict: Verdict,
    pipeline: Vec<PassName>,
    minimal: Vec<PassName>,
}

pub fn minimize(
    ctx: &Ctx,
    path: &Path,
    pipeline: Option<&str>,
    input_base: Option<u64>,
) -> Result<u8> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let (graph, header) =
        parse_with_provenance(&text).with_context(|| path.display().to_string())?;
    let provenance: Option<Provenance> = header.and_then(|h| serde_json::from_value(h).ok());
    let pipelines = match (pipeline, &provenance) {
        (Some(p), _) => vec![parse_passes(p)?],
        (None, Some(prov)) => prov.pipelines.clone(),
        (None, None) => vec![DEFAULT_PIPELINE.to_vec()],
    };
    let input_base = input_base
        .or(provenance.as_ref().map(|p| p.input_base))
        .unwrap_or(0);
    let mutant = match (
        ctx.cfg.campaign.mutant,
        provenance.as_ref().and_then(|p| p.mutant.as_deref()),
    ) {
        (Some(m), _) => Some(m),
        (None, Some(name)) => Some(name.parse::<Mutant>()?),
        (None, None) => None,
    };
    let compiler = Compiler::with_mutant(mutant);
    let oracle = &ctx.cfg.campaign.oracle;
    let verdict = test_one(&compiler, &graph, &pipelines, input_base, oracle)?.verdict;
    let Some(minimal) = minimize_verdict(&compiler, &graph, &verdict, input_base, oracle)? else {
        bail!("the graph is clean under the given pipeline; nothing to minimize");
    };
    let pipeline = match &verdict {
        Verdict::Crash { pipeline, .. } | Verdict::Inconsistency { pipeline, .. } => {
            pipeline.clone()
        }
        Verdict::Clean => Vec::new(),
    };
    let out = MinimizeOutcome {
        verdict,
        pipeline,
        minimal,
    };
    emit(ctx, &out, || {
        let names: Vec<&str> = out.minimal.iter().map(|p| p.as_str()).collect();
        format!(
            "{}: minimal passes [{}]\n",
            out.verdict.kind(),
            names.join(", ")
        )
    });
    Ok(1)
}

fn select_mutants(list: Option<&str>) -> Result<Vec<Mutant>> {
    match list {
        None => Ok(Mutant::ALL.to_vec()),
        Some(l) => l
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<Mutant>().map_err(|e| anyhow!("{e}")))
            .collect(),
    }
}

fn matrix_text(records: &[KillRecord]) -> String {
    records
        .iter()
        .map(|r| {
            let status = if r.killed { "killed" } else { "survived" };
            format!(
                "  {:32} {status:8} after {} tests  {}\n",
                r.mutant.name,
                r.tests,
                r.bug_key.as_deref().unwrap_or("")
            )
        })
        .collect()
}

pub fn mutant_sweep(ctx: &Ctx, list: Option<&str>, with_ablation: bool) -> Result<u8> {
    let cfg = &ctx.cfg;
    let out_path = cfg
        .reports_dir
        .join(if with_ablation { ABLATION } else { KILL_MATRIX });
    if !ctx.force && out_path.exists() {
        bail!(
            "{} already exists (pass --force to overwrite)",
            out_path.display()
        );
    }
    let mutants = select_mutants(list)?;
    let seeds = read_seeds(&cfg.seeds_dir)?;
    if with_ablation {
        let pairs = collect_pairs(&read_corpus(&cfg.corpus_dir)?)?;
        let noopt = cgfuzz::corpus::noopt_pairs(
            cfg.campaign.master_seed,
            cgfuzz::harness::NOOPT_PAIRS_PER_CORPUS_PAIR * pairs.len(),
        );
        let rows: Vec<AblationRow> = if mutants.is_empty() {
            Vec::new()
        } else {
            ablation(&cfg.campaign, &mutants, &seeds, &pairs, &noopt)?
        };
        write_guarded(&out_path, &to_pretty(&rows), true)?;
        write_catalog(&cfg.reports_dir)?;
        emit(ctx, &rows, || {
            rows.iter()
                .map(|r| {
                    format!(
                        "{:14} {:3} patterns  {}/{} killed\n{}",
                        r.mode.name(),
                        r.patterns,
                        r.kills,
                        r.records.len(),
                        matrix_text(&r.records)
                    )
                })
                .collect()
        });
    } else {
        let patterns = read_patterns(&cfg.patterns_dir)?;
        let records = if mutants.is_empty() {
            Vec::new()
        } else {
            sweep_mutants(&cfg.campaign, &mutants, &seeds, &patterns)?
        };
        write_guarded(&out_path, &to_pretty(&records), true)?;
        write_catalog(&cfg.reports_dir)?;
        emit(ctx, &records, || {
            let kills = records.iter().filter(|r| r.killed).count();
            format!(
                "{kills}/{} mutants killed\n{}",
                records.len(),
                matrix_text(&records)
            )
        });
    }
    Ok(0)
}

pub fn report(ctx: &Ctx) -> Result<u8> {
    let dir = &ctx.cfg.reports_dir;
    let summary = read_summary(dir)?;
    let read_json = |name: &str| -> Result<Option<serde_json::Value>> {
        let path = dir.join(name);
        if !path.exists() {
            return Ok(None);
        }
        let text =
            fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Some(
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
        ))
    };
    let kill_matrix = read_json(KILL_MATRIX)?;
    let ablation_rows = read_json(ABLATION)?;
    let out = json!({
        "campaign": summary,
        "kill_matrix": kill_matrix,
        "ablation": ablation_rows,
        "config": ctx.layers.as_map(),
    });
    emit(ctx, &out, || {
        let m = &summary.metrics;
        let mut s = format!(
            "campaign: {} tests, {} valid, validity {:.3}, trigger rate {:.3}, {:.1}s\n",
            m.tests_generated, m.valid, m.validity_rate, m.trigger_rate, m.wall_clock_secs
        );
        s.push_str(&format!("distinct bugs: {}\n", summary.bugs.len()));
        for b in &summary.bugs {
            s.push_str(&format!("  {:14} {}  {}\n", b.kind, b.file, b.key));
        }
        if !m.pass_triggers.is_empty() {
            s.push_str("pass triggers:\n");
            for (p, n) in &m.pass_triggers {
                s.push_str(&format!("  {p:40} {n}\n"));
            }
        }
        if let Some(serde_json::Value::Array(records)) = &kill_matrix {
            let kills = records.iter().filter(|r| r["killed"] == true).count();
            s.push_str(&format!(
                "kill matrix: {kills}/{} mutants killed\n",
                records.len()
            ));
        }
        if let Some(serde_json::Value::Array(rows)) = &ablation_rows {
            s.push_str("ablation:\n");
            for r in rows {
                s.push_str(&format!(
                    "  {:14} {} kills\n",
                    r["mode"].as_str().unwrap_or("?"),
                    r["kills"]
                ));
            }
        }
        s
    });
    Ok(0)
}
