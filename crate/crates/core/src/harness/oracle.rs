//! Crash and inconsistency oracles.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, TensorType};
use crate::interp::{execute, gen_inputs, TensorValue};
use crate::passes::{Compiler, PassError, PassName, DEFAULT_PIPELINE};

pub const DEFAULT_THRESHOLD: f64 = 1e-3;
pub const DEFAULT_INPUT_SEEDS: usize = 3;
pub const DEFAULT_RANDOM_SUBSETS: usize = 2;

/// Which pipelines a test compares against the unoptimized graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineSampler {
    /// Only the full default pipeline.
    FullPipelineVsNone,
    /// The full pipeline plus `random_subsets` order-preserving random subsets.
    #[default]
    RandomSubsets,
}

impl PipelineSampler {
    pub fn name(self) -> &'static str {
        match self {
            PipelineSampler::FullPipelineVsNone => "full-pipeline-vs-none",
            PipelineSampler::RandomSubsets => "random-subsets",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::FullPipelineVsNone, Self::RandomSubsets]
            .into_iter()
            .find(|m| m.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub threshold: f64,
    pub input_seeds: usize,
    pub sampler: PipelineSampler,
    pub random_subsets: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            input_seeds: DEFAULT_INPUT_SEEDS,
            sampler: PipelineSampler::default(),
            random_subsets: DEFAULT_RANDOM_SUBSETS,
        }
    }
}

impl OracleConfig {
    pub fn check(&self) -> Result<(), String> {
        if self.threshold.is_nan() || self.threshold <= 0.0 {
            return Err(format!("threshold must be > 0, got {}", self.threshold));
        }
        if self.input_seeds == 0 {
            return Err("input seeds per test must be at least 1".into());
        }
        Ok(())
    }

    /// Pipelines for one test. The full pipeline always comes first.
    pub fn sample_pipelines(&self, rng: &mut ChaCha8Rng) -> Vec<Vec<PassName>> {
        let mut out = vec![DEFAULT_PIPELINE.to_vec()];
        if self.sampler == PipelineSampler::RandomSubsets {
            for _ in 0..self.random_subsets {
                let mut subset: Vec<PassName> = DEFAULT_PIPELINE
                    .iter()
                    .copied()
                    .filter(|_| rng.random_bool(0.5))
                    .collect();
                if subset.is_empty() {
                    subset.push(DEFAULT_PIPELINE[rng.random_range(0..DEFAULT_PIPELINE.len())]);
                }
                out.push(subset);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("shape mismatch: {0} vs {1}")]
pub struct ShapeMismatch(pub TensorType, pub TensorType);

/// Maximum absolute elementwise difference. A NaN at any position is an
/// infinite discrepancy, even when both sides hold one.
pub fn chebyshev(a: &TensorValue, b: &TensorValue) -> Result<f64, ShapeMismatch> {
    if a.ty != b.ty || a.data.len() != b.data.len() {
        return Err(ShapeMismatch(a.ty.clone(), b.ty.clone()));
    }
    let mut worst = 0.0f64;
    for (&x, &y) in a.data.iter().zip(&b.data) {
        if x.is_nan() || y.is_nan() {
            return Ok(f64::INFINITY);
        }
        let d = if x == y { 0.0 } else { (x - y).abs() };
        if d > worst {
            worst = d;
        }
    }
    Ok(worst)
}

/// The inconsistency decision: strictly above the threshold, or NaN.
pub fn exceeds_threshold(distance: f64, threshold: f64) -> bool {
    distance > threshold || distance.is_nan()
}

/// Distance between two output lists. Differing arity or types count as an
/// infinite discrepancy.
pub fn output_distance(a: &[TensorValue], b: &[TensorValue]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| chebyshev(x, y).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max)
}

/// Replaces backticked identifiers with `_` and digit runs with `#`, so one
/// defect reached through different graphs yields one message.
pub fn normalize_crash(message: &str) -> String {
    let mut out = String::with_capacity(message.len());
    let mut chars = message.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '`' {
            let mut closed = false;
            for d in chars.by_ref() {
                if d == '`' {
                    closed = true;
                    break;
                }
            }
            out.push_str(if closed { "`_`" } else { "`" });
        } else if c.is_ascii_digit() {
            while chars.peek().is_some_and(|d| d.is_ascii_digit()) {
                chars.next();
            }
            out.push('#');
        } else {
            out.push(c);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Verdict {
    Clean,
    Crash {
        message: String,
        /// The pipeline prefix up to and including the crashing pass.
        pipeline: Vec<PassName>,
    },
    Inconsistency {
        pipeline: Vec<PassName>,
        distance: f64,
    },
}

impl Verdict {
    pub fn is_bug(&self) -> bool {
        !matches!(self, Verdict::Clean)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Verdict::Clean => "clean",
            Verdict::Crash { .. } => "crash",
            Verdict::Inconsistency { .. } => "inconsistency",
        }
    }
}

/// A failure of the harness itself rather than of the compiler under test.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("infrastructure fault: {0}")]
pub struct InfraFault(pub String);

#[derive(Clone, Debug, PartialEq)]
pub struct TestReport {
    pub verdict: Verdict,
    /// Passes that rewrote something in the first pipeline.
    pub fired: BTreeSet<PassName>,
}

/// Runs `passes` in order. Skipping passes leave the graph unchanged.
pub fn run_lenient(
    compiler: &Compiler,
    passes: &[PassName],
    graph: &Graph,
) -> Result<(Graph, BTreeSet<PassName>), (usize, String)> {
    let mut current = graph.clone();
    let mut fired = BTreeSet::new();
    for (i, &pass) in passes.iter().enumerate() {
        match compiler.run_pass(pass, &current) {
            Ok(out) => {
                if out.fired() {
                    fired.insert(pass);
                }
                current = out.graph;
            }
            Err(PassError::Skip(_)) => {}
            Err(PassError::Crash(m)) => return Err((i, m)),
        }
    }
    Ok((current, fired))
}

/// Input seeds used for a test whose base seed is `base`.
pub fn input_seeds(base: u64, cfg: &OracleConfig) -> Vec<u64> {
    (0..cfg.input_seeds as u64)
        .map(|k| base.wrapping_add(k))
        .collect()
}

/// Crash oracle over every pipeline first, then the inconsistency oracle.
pub fn test_one(
    compiler: &Compiler,
    graph: &Graph,
    pipelines: &[Vec<PassName>],
    input_base: u64,
    cfg: &OracleConfig,
) -> Result<TestReport, InfraFault> {
    let mut optimized = Vec::with_capacity(pipelines.len());
    let mut fired = BTreeSet::new();
    for (k, pipeline) in pipelines.iter().enumerate() {
        match run_lenient(compiler, pipeline, graph) {
            Ok((g, f)) => {
                if k == 0 {
                    fired = f;
                }
                optimized.push(g);
            }
            Err((index, message)) => {
                return Ok(TestReport {
                    verdict: Verdict::Crash {
                        message,
                        pipeline: pipeline[..=index].to_vec(),
                    },
                    fired,
                })
            }
        }
    }
    for seed in input_seeds(input_base, cfg) {
        let inputs = gen_inputs(graph, seed);
        let reference = execute(graph, &inputs)
            .map_err(|e| InfraFault(format!("reference execution failed: {e}")))?;
        for (pipeline, g) in pipelines.iter().zip(&optimized) {
            let distance = match execute(g, &inputs) {
                Ok(out) => output_distance(&reference, &out),
                Err(_) => f64::INFINITY,
            };
            if exceeds_threshold(distance, cfg.threshold) {
                return Ok(TestReport {
                    verdict: Verdict::Inconsistency {
                        pipeline: pipeline.clone(),
                        distance,
                    },
                    fired,
                });
            }
        }
    }
    Ok(TestReport {
        verdict: Verdict::Clean,
        fired,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::DType;
    use rand::SeedableRng;

    fn t(data: &[f64]) -> TensorValue {
        TensorValue::new(TensorType::new(DType::F64, [data.len()]), data.to_vec())
    }

    #[test]
    fn chebyshev_basics() {
        assert_eq!(chebyshev(&t(&[1.0, 2.0]), &t(&[1.0, 2.0])).unwrap(), 0.0);
        let d = chebyshev(&t(&[1.0, 2.0]), &t(&[1.0, 2.0005])).unwrap();
        assert!((d - 0.0005).abs() < 1e-12);
        assert_eq!(
            chebyshev(&t(&[0.0]), &t(&[f64::NAN])).unwrap(),
            f64::INFINITY
        );
        assert_eq!(
            chebyshev(&t(&[f64::NAN]), &t(&[f64::NAN])).unwrap(),
            f64::INFINITY
        );
        assert!(chebyshev(&t(&[1.0]), &t(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn normalization_erases_ids_and_numbers() {
        assert_eq!(
            normalize_crash("[DCE] post-pass validation: value `n12_v3` undefined at 4"),
            "[DCE] post-pass validation: value `_` undefined at #"
        );
        assert_eq!(normalize_crash("operand 1"), normalize_crash("operand 22"));
    }

    #[test]
    fn sampler_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = OracleConfig::default();
        let p = cfg.sample_pipelines(&mut rng);
        assert_eq!(p.len(), 3);
        assert_eq!(p[0], DEFAULT_PIPELINE.to_vec());
        for s in &p[1..] {
            assert!(!s.is_empty());
            let pos: Vec<usize> = s
                .iter()
                .map(|x| DEFAULT_PIPELINE.iter().position(|y| y == x).unwrap())
                .collect();
            assert!(pos.windows(2).all(|w| w[0] < w[1]));
        }
        let full = OracleConfig {
            sampler: PipelineSampler::FullPipelineVsNone,
            ..OracleConfig::default()
        };
        assert_eq!(full.sample_pipelines(&mut rng).len(), 1);
    }
}
