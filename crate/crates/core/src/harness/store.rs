//! Bug reports, provenance and the deduplicating bug store.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::oracle::{normalize_crash, OracleConfig, Verdict};
use crate::graph::Graph;
use crate::passes::PassName;
use crate::serial::graph_hash;
use crate::synth::SynthConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BugKind {
    Crash,
    Inconsistency,
}

/// One splice applied on the way from a base seed to a test graph.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisStep {
    /// Canonical hash of the pattern.
    pub pattern: String,
    pub point: usize,
    pub rng_seed: u64,
}

/// Everything needed to re-derive a test and re-run its oracles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Index into the base seed pool.
    pub base_seed: usize,
    /// Earlier splices (high-order synthesis) followed by the test's own.
    pub steps: Vec<SynthesisStep>,
    pub pipelines: Vec<Vec<PassName>>,
    pub input_base: u64,
    pub synth: SynthConfig,
    pub oracle: OracleConfig,
    pub mutant: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BugReport {
    pub kind: BugKind,
    pub key: String,
    /// Raw crash message.
    pub message: Option<String>,
    /// Minimal pass set for inconsistencies; the crashing pipeline prefix for crashes.
    pub passes: Vec<PassName>,
    #[serde(with = "distance_serde")]
    pub distance: Option<f64>,
    pub graph_hash: String,
    pub provenance: Provenance,
    #[serde(skip)]
    pub reproducer: Graph,
}

impl BugReport {
    pub fn crash(
        message: &str,
        pipeline: Vec<PassName>,
        graph: Graph,
        provenance: Provenance,
    ) -> Self {
        BugReport {
            kind: BugKind::Crash,
            key: crash_key(message),
            message: Some(message.to_string()),
            passes: pipeline,
            distance: None,
            graph_hash: graph_hash(&graph),
            provenance,
            reproducer: graph,
        }
    }

    pub fn inconsistency(
        minimal: Vec<PassName>,
        distance: f64,
        graph: Graph,
        provenance: Provenance,
    ) -> Self {
        BugReport {
            kind: BugKind::Inconsistency,
            key: inconsistency_key(&minimal),
            message: None,
            passes: minimal,
            distance: Some(distance),
            graph_hash: graph_hash(&graph),
            provenance,
            reproducer: graph,
        }
    }

    pub fn mutant(&self) -> Option<&str> {
        self.provenance.mutant.as_deref()
    }

    /// The verdict this report stands for.
    pub fn verdict_kind(&self) -> &'static str {
        match self.kind {
            BugKind::Crash => "crash",
            BugKind::Inconsistency => "inconsistency",
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }
}

pub fn crash_key(message: &str) -> String {
    format!("crash:{}", normalize_crash(message))
}

pub fn inconsistency_key(passes: &[PassName]) -> String {
    let mut names: Vec<&str> = passes.iter().map(|p| p.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    format!("inconsistency:{}", names.join(","))
}

/// Key a verdict would get before minimization; crashes only.
pub fn verdict_key(v: &Verdict) -> Option<String> {
    match v {
        Verdict::Crash { message, .. } => Some(crash_key(message)),
        _ => None,
    }
}

/// Distinct bugs by dedup key. Only the first report per key is kept.
#[derive(Clone, Debug, Default)]
pub struct BugStore {
    bugs: BTreeMap<String, BugReport>,
    order: Vec<String>,
}

impl BugStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns true when the report's key was new.
    pub fn insert(&mut self, report: BugReport) -> bool {
        if self.bugs.contains_key(&report.key) {
            return false;
        }
        self.order.push(report.key.clone());
        self.bugs.insert(report.key.clone(), report);
        true
    }

    pub fn len(&self) -> usize {
        self.bugs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bugs.is_empty()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.bugs.contains_key(key)
    }

    /// Reports in discovery order.
    pub fn reports(&self) -> impl Iterator<Item = &BugReport> {
        self.order.iter().map(|k| &self.bugs[k])
    }

    pub fn into_reports(mut self) -> Vec<BugReport> {
        self.order
            .iter()
            .map(|k| self.bugs.remove(k).expect("order tracks keys"))
            .collect()
    }
}

/// Serializes non-finite distances as strings, since JSON numbers cannot hold them.
mod distance_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(d: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match d {
            None => s.serialize_none(),
            Some(x) if x.is_finite() => s.serialize_some(&Repr::Num(*x)),
            Some(x) if x.is_nan() => s.serialize_some(&Repr::Text("nan".into())),
            Some(x) if *x > 0.0 => s.serialize_some(&Repr::Text("inf".into())),
            Some(_) => s.serialize_some(&Repr::Text("-inf".into())),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        let r: Option<Repr> = Option::deserialize(d)?;
        match r {
            None => Ok(None),
            Some(Repr::Num(x)) => Ok(Some(x)),
            Some(Repr::Text(t)) => match t.as_str() {
                "inf" => Ok(Some(f64::INFINITY)),
                "-inf" => Ok(Some(f64::NEG_INFINITY)),
                "nan" => Ok(Some(f64::NAN)),
                other => Err(serde::de::Error::custom(format!("bad distance `{other}`"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prov() -> Provenance {
        Provenance {
            base_seed: 0,
            steps: vec![],
            pipelines: vec![],
            input_base: 0,
            synth: SynthConfig::default(),
            oracle: OracleConfig::default(),
            mutant: None,
        }
    }

    #[test]
    fn dedup_rules() {
        let mut store = BugStore::new();
        let g = Graph::default();
        assert!(store.insert(BugReport::crash(
            "[DCE] lost `a1`",
            vec![PassName::DeadCodeElimination],
            g.clone(),
            prov()
        )));
        assert!(!store.insert(BugReport::crash(
            "[DCE] lost `b7`",
            vec![PassName::DeadCodeElimination],
            g.clone(),
            prov()
        )));
        let ic = |passes: Vec<PassName>| BugReport::inconsistency(passes, 0.5, g.clone(), prov());
        assert!(store.insert(ic(vec![
            PassName::ConstantFolding,
            PassName::DeadCodeElimination
        ])));
        assert!(!store.insert(ic(vec![
            PassName::DeadCodeElimination,
            PassName::ConstantFolding
        ])));
        assert!(store.insert(ic(vec![PassName::DeadCodeElimination])));
        assert_eq!(store.len(), 3);
    }

    #[test]
    fn infinite_distance_roundtrips() {
        let r = BugReport::inconsistency(
            vec![PassName::ElementwiseFusion],
            f64::INFINITY,
            Graph::default(),
            prov(),
        );
        let back: BugReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back.distance, Some(f64::INFINITY));
        assert_eq!(back.key, r.key);
    }
}
