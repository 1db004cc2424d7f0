//! Python bindings: graphs, the pass pipeline, seeded defects, pattern
//! extraction, synthesis and small fuzzing campaigns.

use std::collections::BTreeMap;

use ::cgfuzz::corpus::{collect_pairs, generate_corpus};
use ::cgfuzz::extract::{extract_all, ExtractionMode};
use ::cgfuzz::graph::{validate, DType, TensorType};
use ::cgfuzz::harness::{self, run_campaign, Budget, CampaignConfig};
use ::cgfuzz::interp::{execute, gen_inputs, TensorValue};
use ::cgfuzz::passes::{list_mutants, Compiler, Mutant, PassName, DEFAULT_PIPELINE};
use ::cgfuzz::seedgen::gen_seed_pool;
use ::cgfuzz::serial;
use ::cgfuzz::synth::{synthesize as synth, SynthConfig};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn json_to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    use serde_json::Value;
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(u)) => u.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, json_to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

/// `(dtype, shape, data)` for one tensor.
type PyTensor = (String, Vec<usize>, Vec<f64>);

fn parse_passes(names: &[String]) -> PyResult<Vec<PassName>> {
    names.iter().map(|n| n.parse().map_err(value_err)).collect()
}

fn parse_mutant(name: Option<&str>) -> PyResult<Option<Mutant>> {
    name.map(|n| n.parse().map_err(value_err)).transpose()
}

/// A computational graph.
#[pyclass(name = "Graph", module = "cgfuzz", skip_from_py_object)]
#[derive(Clone)]
struct PyGraph(::cgfuzz::graph::Graph);

#[pymethods]
impl PyGraph {
    /// Parses the JSON graph format.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        serial::parse(text).map(PyGraph).map_err(value_err)
    }

    fn to_json(&self) -> String {
        serial::serialize(&self.0)
    }

    /// Content hash of the canonical serialization.
    fn hash(&self) -> String {
        serial::graph_hash(&self.0)
    }

    /// Validation messages; empty when the graph is well formed.
    fn validate(&self) -> Vec<String> {
        validate(&self.0)
            .violations
            .iter()
            .map(ToString::to_string)
            .collect()
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.0.nodes.len()
    }

    /// Operator names in definition order.
    fn ops(&self) -> Vec<String> {
        self.0.nodes.iter().map(|n| n.op.to_string()).collect()
    }

    /// Runs the graph on the deterministic inputs for `seed` and returns
    /// `(dtype, shape, data)` per output.
    #[pyo3(signature = (seed = 0))]
    fn execute(&self, seed: u64) -> PyResult<Vec<PyTensor>> {
        let outputs = execute(&self.0, &gen_inputs(&self.0, seed)).map_err(runtime_err)?;
        Ok(outputs
            .into_iter()
            .map(|t| (t.ty.dtype.to_string(), t.ty.shape, t.data))
            .collect())
    }

    /// Applies `passes` (default: the full pipeline), optionally with a
    /// seeded defect active.
    #[pyo3(signature = (passes = None, mutant = None))]
    fn optimize(&self, passes: Option<Vec<String>>, mutant: Option<&str>) -> PyResult<Self> {
        let passes = match passes {
            Some(p) => parse_passes(&p)?,
            None => DEFAULT_PIPELINE.to_vec(),
        };
        let compiler = Compiler::with_mutant(parse_mutant(mutant)?);
        compiler
            .run_pipeline(&passes, &self.0)
            .map(|run| PyGraph(run.graph))
            .map_err(|f| runtime_err(format!("{} failed: {}", f.pass, f.error)))
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!(
            "Graph(inputs={}, nodes={}, outputs={})",
            self.0.inputs.len(),
            self.0.nodes.len(),
            self.0.outputs.len()
        )
    }
}

/// A subgraph extracted from an optimization trace.
#[pyclass(name = "Pattern", module = "cgfuzz", skip_from_py_object)]
#[derive(Clone)]
struct PyPattern(::cgfuzz::extract::Pattern);

#[pymethods]
impl PyPattern {
    #[getter]
    fn target(&self) -> String {
        self.0.target.to_string()
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.0.nodes.len()
    }

    fn hash(&self) -> String {
        self.0.canonical_hash()
    }

    fn __repr__(&self) -> String {
        format!(
            "Pattern(target={}, nodes={})",
            self.0.target,
            self.0.nodes.len()
        )
    }
}

/// Pass names in default pipeline order.
#[pyfunction]
fn pass_names() -> Vec<String> {
    DEFAULT_PIPELINE.iter().map(ToString::to_string).collect()
}

/// The seeded-defect catalog as a list of dicts.
#[pyfunction]
fn mutants(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    let v = serde_json::to_value(list_mutants()).map_err(runtime_err)?;
    json_to_py(py, &v)
}

/// The deterministic seed pool.
#[pyfunction]
#[pyo3(signature = (count, master_seed = 0))]
fn seed_graphs(count: usize, master_seed: u64) -> Vec<PyGraph> {
    gen_seed_pool(master_seed, count)
        .into_iter()
        .map(PyGraph)
        .collect()
}

/// Patterns extracted from the built-in corpus.
#[pyfunction]
#[pyo3(signature = (mode = "adaptive"))]
fn extract_patterns(mode: &str) -> PyResult<Vec<PyPattern>> {
    let mode = ExtractionMode::parse(mode)
        .ok_or_else(|| value_err(format!("unknown extraction mode `{mode}`")))?;
    let pairs = collect_pairs(&generate_corpus(0)).map_err(runtime_err)?;
    Ok(extract_all(&pairs, mode)
        .into_iter()
        .map(PyPattern)
        .collect())
}

/// Splices `pattern` into `seed` at topological position `point`. Returns
/// `None` when the attempt is discarded.
#[pyfunction]
#[pyo3(signature = (seed, pattern, point, rng_seed = 0))]
fn synthesize(seed: &PyGraph, pattern: &PyPattern, point: usize, rng_seed: u64) -> Option<PyGraph> {
    synth(
        &seed.0,
        &pattern.0,
        point,
        rng_seed,
        &SynthConfig::default(),
    )
    .result
    .ok()
    .map(PyGraph)
}

/// Chebyshev distance between two flat F64 vectors of equal length.
#[pyfunction]
fn chebyshev(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    let wrap = |d: Vec<f64>| TensorValue::new(TensorType::new(DType::F64, [d.len()]), d);
    harness::chebyshev(&wrap(a), &wrap(b)).map_err(value_err)
}

/// Runs a test-count-bounded campaign on a fresh seed pool and adaptive
/// patterns; returns metrics and the deduplicated bug keys.
#[pyfunction]
#[pyo3(signature = (tests, mutant = None, master_seed = 0, seed_count = 200))]
fn campaign<'py>(
    py: Python<'py>,
    tests: u64,
    mutant: Option<&str>,
    master_seed: u64,
    seed_count: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = CampaignConfig {
        master_seed,
        budget: Budget::Tests(tests),
        mutant: parse_mutant(mutant)?,
        ..CampaignConfig::default()
    };
    let pairs = collect_pairs(&generate_corpus(0)).map_err(runtime_err)?;
    let patterns = extract_all(&pairs, ExtractionMode::Adaptive);
    let seeds = gen_seed_pool(master_seed, seed_count);
    let r = py
        .detach(|| run_campaign(&cfg, &seeds, &patterns))
        .map_err(runtime_err)?;
    let mut out = BTreeMap::new();
    out.insert(
        "metrics",
        serde_json::to_value(&r.metrics).map_err(runtime_err)?,
    );
    out.insert(
        "bugs",
        r.bugs
            .iter()
            .map(|b| b.key.clone())
            .collect::<Vec<_>>()
            .into(),
    );
    json_to_py(py, &serde_json::to_value(out).map_err(runtime_err)?)
}

#[pymodule]
fn cgfuzz(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PyPattern>()?;
    m.add_function(wrap_pyfunction!(pass_names, m)?)?;
    m.add_function(wrap_pyfunction!(mutants, m)?)?;
    m.add_function(wrap_pyfunction!(seed_graphs, m)?)?;
    m.add_function(wrap_pyfunction!(extract_patterns, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(chebyshev, m)?)?;
    m.add_function(wrap_pyfunction!(campaign, m)?)?;
    Ok(())
}
