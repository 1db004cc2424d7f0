//! Layered configuration: built-in defaults, then a flat `key = value` file,
//! then `CGFUZZ_<KEY>` environment variables, then command-line flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use cgfuzz::extract::ExtractionMode;
use cgfuzz::harness::{Budget, CampaignConfig, OracleConfig, PipelineSampler};
use cgfuzz::passes::Mutant;
use cgfuzz::synth::{Strategy, SynthConfig};

pub const ENV_PREFIX: &str = "CGFUZZ_";

/// Every config key with its default and a one-line description. The same
/// table drives `--help`, file parsing, env lookup and the effective dump.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("corpus_dir", "corpus", "documented-test corpus directory"),
    ("seeds_dir", "seeds", "seed pool directory"),
    ("patterns_dir", "patterns", "pattern pool directory"),
    (
        "reports_dir",
        "reports",
        "bug reports and sweep results directory",
    ),
    ("master_seed", "0", "RNG master seed"),
    ("seed_count", "4000", "seeds written by corpus-gen"),
    ("budget", "10000", "campaign budget: <tests> or <seconds>s"),
    (
        "threshold",
        "0.001",
        "Chebyshev distance that counts as an inconsistency",
    ),
    ("input_seeds", "3", "random input sets per test"),
    (
        "sampler",
        "random-subsets",
        "pipeline sampler: random-subsets | full-pipeline-vs-none",
    ),
    ("random_subsets", "2", "extra random pass subsets per test"),
    (
        "mode",
        "adaptive",
        "extraction mode: adaptive | block-only | subgraph-only | whole-graph | noopt",
    ),
    ("mutant", "none", "active seeded defect, or none"),
    ("workers", "auto", "worker threads, or auto for one per CPU"),
    ("batch_size", "64", "plans per synchronization step"),
    ("node_cap", "200", "largest synthesized graph, in nodes"),
    ("bridge_cap", "4", "most bridge ops on one repaired edge"),
    (
        "strategy",
        "repair",
        "synthesis strategy: repair | direct-insert",
    ),
    (
        "high_order",
        "true",
        "admit clean synthesized tests back into the seed pool",
    ),
];

/// Resolved key/value pairs with the layer each value came from.
#[derive(Clone, Debug)]
pub struct Layered {
    values: BTreeMap<&'static str, (String, &'static str)>,
}

fn known(key: &str) -> Option<&'static str> {
    KEYS.iter().map(|k| k.0).find(|k| *k == key)
}

impl Layered {
    pub fn resolve(
        file: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
        flags: &[(String, String)],
    ) -> Result<Self> {
        let mut values: BTreeMap<&'static str, (String, &'static str)> = KEYS
            .iter()
            .map(|(k, d, _)| (*k, (d.to_string(), "default")))
            .collect();
        if let Some(path) = file {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config file {}", path.display()))?;
            for (lineno, (k, v)) in
                parse_file(&text).with_context(|| format!("in config file {}", path.display()))?
            {
                let key = known(&k)
                    .ok_or_else(|| anyhow!("{}:{lineno}: unknown key `{k}`", path.display()))?;
                values.insert(key, (v, "file"));
            }
        }
        for (name, v) in env {
            let Some(rest) = name.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let lower = rest.to_ascii_lowercase();
            if let Some(key) = known(&lower) {
                values.insert(key, (v, "env"));
            }
        }
        for (k, v) in flags {
            let key = known(k).ok_or_else(|| anyhow!("unknown config key `{k}`"))?;
            values.insert(key, (v.clone(), "flag"));
        }
        Ok(Layered { values })
    }

    pub fn get(&self, key: &str) -> &str {
        &self.values[key].0
    }

    /// `key = value  # source` lines, in table order.
    pub fn dump(&self) -> String {
        KEYS.iter()
            .map(|(k, _, _)| {
                let (v, src) = &self.values[k];
                format!("{k} = {v}  # {src}\n")
            })
            .collect()
    }

    pub fn as_map(&self) -> BTreeMap<String, String> {
        self.values
            .iter()
            .map(|(k, (v, _))| (k.to_string(), v.clone()))
            .collect()
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .parse()
            .map_err(|e| anyhow!("config key `{key}`: {e}"))
    }
}

/// `key = value` per line; `#` starts a comment; blank lines are skipped.
pub fn parse_file(text: &str) -> Result<Vec<(usize, (String, String))>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("line {}: expected `key = value`", i + 1);
        };
        out.push((i + 1, (k.trim().to_string(), v.trim().to_string())));
    }
    Ok(out)
}

/// Typed configuration used by the commands.
#[derive(Clone, Debug)]
pub struct Config {
    pub corpus_dir: PathBuf,
    pub seeds_dir: PathBuf,
    pub patterns_dir: PathBuf,
    pub reports_dir: PathBuf,
    pub seed_count: usize,
    pub mode: ExtractionMode,
    pub campaign: CampaignConfig,
}

impl Config {
    pub fn from_layers(l: &Layered) -> Result<Self> {
        let budget: Budget = l.parse("budget")?;
        if budget == Budget::Tests(0) {
            bail!("config key `budget`: must be positive");
        }
        let sampler = PipelineSampler::parse(l.get("sampler")).ok_or_else(|| {
            anyhow!(
                "config key `sampler`: unknown sampler `{}`",
                l.get("sampler")
            )
        })?;
        let mode = ExtractionMode::parse(l.get("mode"))
            .ok_or_else(|| anyhow!("config key `mode`: unknown mode `{}`", l.get("mode")))?;
        let strategy = Strategy::parse(l.get("strategy")).ok_or_else(|| {
            anyhow!(
                "config key `strategy`: unknown strategy `{}`",
                l.get("strategy")
            )
        })?;
        let mutant = match l.get("mutant") {
            "none" | "" => None,
            name => Some(
                name.parse::<Mutant>()
                    .map_err(|e| anyhow!("config key `mutant`: {e}"))?,
            ),
        };
        let workers = match l.get("workers") {
            "auto" => std::thread::available_parallelism().map_or(1, |n| n.get()),
            _ => l.parse("workers")?,
        };
        if workers == 0 {
            bail!("config key `workers`: must be at least 1");
        }
        let batch_size: usize = l.parse("batch_size")?;
        if batch_size == 0 {
            bail!("config key `batch_size`: must be at least 1");
        }
        let oracle = OracleConfig {
            threshold: l.parse("threshold")?,
            input_seeds: l.parse("input_seeds")?,
            sampler,
            random_subsets: l.parse("random_subsets")?,
        };
        oracle.check().map_err(|e| anyhow!("oracle config: {e}"))?;
        let campaign = CampaignConfig {
            master_seed: l.parse("master_seed")?,
            budget,
            oracle,
            synth: SynthConfig {
                node_cap: l.parse("node_cap")?,
                bridge_cap: l.parse("bridge_cap")?,
                strategy,
            },
            mutant,
            workers,
            batch_size,
            high_order: l.parse("high_order")?,
            stop_on_first_bug: false,
        };
        Ok(Config {
            corpus_dir: l.get("corpus_dir").into(),
            seeds_dir: l.get("seeds_dir").into(),
            patterns_dir: l.get("patterns_dir").into(),
            reports_dir: l.get("reports_dir").into(),
            seed_count: l.parse("seed_count")?,
            mode,
            campaign,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn precedence_is_default_file_env_flag() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("cg.conf");
        fs::write(
            &file,
            "# campaign\nbudget = 500\nthreshold = 0.5\nmaster_seed=9\n",
        )
        .unwrap();
        let env = vec![
            ("CGFUZZ_THRESHOLD".to_string(), "0.25".to_string()),
            ("CGFUZZ_MASTER_SEED".to_string(), "11".to_string()),
            ("UNRELATED".to_string(), "x".to_string()),
        ];
        let l = Layered::resolve(Some(&file), env, &flags(&[("master_seed", "12")])).unwrap();
        assert_eq!(l.get("budget"), "500");
        assert_eq!(l.get("threshold"), "0.25");
        assert_eq!(l.get("master_seed"), "12");
        assert_eq!(l.get("mode"), "adaptive");
        let dump = l.dump();
        assert!(dump.contains("budget = 500  # file"));
        assert!(dump.contains("master_seed = 12  # flag"));
        assert!(dump.contains("mode = adaptive  # default"));
    }

    #[test]
    fn unknown_file_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("cg.conf");
        fs::write(&file, "budgte = 5\n").unwrap();
        let err = Layered::resolve(Some(&file), vec![], &[]).unwrap_err();
        assert!(format!("{err:#}").contains("unknown key `budgte`"));
    }

    #[test]
    fn typed_config_validates() {
        let ok = Layered::resolve(None, vec![], &[]).unwrap();
        let cfg = Config::from_layers(&ok).unwrap();
        assert_eq!(cfg.campaign.budget, Budget::Tests(10_000));
        assert_eq!(cfg.seed_count, 4000);
        for (k, v) in [
            ("budget", "0"),
            ("mode", "global"),
            ("mutant", "nope"),
            ("workers", "0"),
        ] {
            let l = Layered::resolve(None, vec![], &flags(&[(k, v)])).unwrap();
            assert!(Config::from_layers(&l).is_err(), "{k}={v} accepted");
        }
        let l = Layered::resolve(
            None,
            vec![],
            &flags(&[("mutant", "fold-through-i32"), ("budget", "2.5s")]),
        )
        .unwrap();
        let cfg = Config::from_layers(&l).unwrap();
        assert_eq!(cfg.campaign.mutant, Some(Mutant::FoldThroughI32));
        assert_eq!(cfg.campaign.budget, Budget::Seconds(2.5));
    }
}
