//! Documented-test corpus: small graphs that each exercise one optimization,
//! stored as `<name>.cg.json` plus a `<name>.passes.json` sidecar listing the
//! pipeline the test runs.
//!
//! Every generated entry wraps an optimization site in dataflow block `b0`
//! with unblocked producer and consumer nodes around it, the way a unit test
//! embeds the construct it checks in a little surrounding model.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{attrs, validate, AttrValue, DType, Graph, GraphBuilder, TensorType, ValueId};
use crate::ops::OpKind;
use crate::passes::{Compiler, PassError, PassName, PassTracePair};
use crate::seedgen::{gen_seed, seed_rng};
use crate::serial;

const NOOPT_STREAM: u64 = 0x6e6f_6f70_7400;

/// Entries generated per pass.
pub const DOCS_PER_PASS: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub name: String,
    pub graph: Graph,
    pub passes: Vec<PassName>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    passes: Vec<PassName>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{file}: {cause}")]
    Entry { file: PathBuf, cause: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} already exists (pass --force to overwrite)")]
    Exists(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn f32t(shape: &[usize]) -> TensorType {
    TensorType::new(DType::F32, shape.to_vec())
}

fn random_shape(rng: &mut ChaCha8Rng, rank: usize) -> Vec<usize> {
    (0..rank).map(|_| rng.random_range(2..=4)).collect()
}

fn random_payload(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.random_range(-2.0f32..=2.0) as f64)
        .collect()
}

fn cast_attr(d: DType) -> crate::graph::Attrs {
    attrs([("dtype", AttrValue::Str(d.name().into()))])
}

/// Unblocked producer feeding the optimization site.
fn lead_in(b: &mut GraphBuilder, ty: TensorType, rng: &mut ChaCha8Rng) -> ValueId {
    b.set_block(None);
    let x = b.input(ty.clone());
    let op = if ty.dtype.is_float() && rng.random_bool(0.5) {
        OpKind::Sigmoid
    } else {
        OpKind::Relu
    };
    b.op(op, &[&x], attrs([])).unwrap()
}

/// Unblocked consumer keeping the site's result live.
fn lead_out(b: &mut GraphBuilder, v: &str) {
    b.set_block(None);
    let ty = b.type_of(v).unwrap().clone();
    let op = if ty.dtype.is_float() {
        OpKind::Sigmoid
    } else {
        OpKind::Relu
    };
    let y = b.op(op, &[v], attrs([])).unwrap();
    b.output(&y);
}

fn constant_folding(rng: &mut ChaCha8Rng, k: usize) -> (Graph, Vec<PassName>) {
    let mut b = GraphBuilder::new();
    let dtype = if k % 3 == 2 { DType::F64 } else { DType::F32 };
    let ty = TensorType::new(dtype, random_shape(rng, 1 + k % 2));
    let x = lead_in(&mut b, ty.clone(), rng);
    b.set_block(Some("b0"));
    let c0 = b.constant(ty.clone(), random_payload(rng, ty.element_count()));
    let c1 = b.constant(ty.clone(), random_payload(rng, ty.element_count()));
    let op = *[OpKind::Add, OpKind::Sub, OpKind::Mul].choose(rng).unwrap();
    let mut folded = b.op(op, &[&c0, &c1], attrs([])).unwrap();
    if k % 2 == 1 {
        folded = b.op(OpKind::Sigmoid, &[&folded], attrs([])).unwrap();
    }
    let mixed = b.op(OpKind::Add, &[&x, &folded], attrs([])).unwrap();
    lead_out(&mut b, &mixed);
    let passes = if k == DOCS_PER_PASS - 1 {
        // Folding strands the operand constants; DCE cleans them up.
        vec![PassName::ConstantFolding, PassName::DeadCodeElimination]
    } else {
        vec![PassName::ConstantFolding]
    };
    (b.build(), passes)
}

fn algebraic_simplification(rng: &mut ChaCha8Rng, k: usize) -> (Graph, Vec<PassName>) {
    let mut b = GraphBuilder::new();
    let ty = f32t(&random_shape(rng, 1 + k % 3));
    let x = lead_in(&mut b, ty.clone(), rng);
    b.set_block(Some("b0"));
    let (op, id, left) = [
        (OpKind::Mul, 1.0, false),
        (OpKind::Mul, 1.0, true),
        (OpKind::Add, 0.0, false),
        (OpKind::Add, 0.0, true),
        (OpKind::Sub, 0.0, false),
        (OpKind::Mul, 1.0, false),
    ][k % 6];
    let c = b.splat(ty.clone(), id);
    let y = if left {
        b.op(op, &[&c, &x], attrs([])).unwrap()
    } else {
        b.op(op, &[&x, &c], attrs([])).unwrap()
    };
    lead_out(&mut b, &y);
    (b.build(), vec![PassName::AlgebraicSimplification])
}

fn elementwise_fusion(rng: &mut ChaCha8Rng, k: usize) -> (Graph, Vec<PassName>) {
    let mut b = GraphBuilder::new();
    let ty = f32t(&random_shape(rng, 1 + k % 3));
    let x = lead_in(&mut b, ty.clone(), rng);
    let y = lead_in(&mut b, ty.clone(), rng);
    b.set_block(Some("b0"));
    let s = b.op(OpKind::Add, &[&x, &y], attrs([])).unwrap();
    let r = b.op(OpKind::Relu, &[&s], attrs([])).unwrap();
    lead_out(&mut b, &r);
    (b.build(), vec![PassName::ElementwiseFusion])
}

fn reorder_permute(rng: &mut ChaCha8Rng, k: usize) -> (Graph, Vec<PassName>) {
    let mut b = GraphBuilder::new();
    let rank = 2 + k % 2;
    let shape = random_shape(rng, rank);
    let mut perm: Vec<i64> = (0..rank as i64).collect();
    while perm.iter().enumerate().all(|(i, &p)| p == i as i64) {
        perm.shuffle(rng);
    }
    let axis = rng.random_range(0..rank);
    let mut other = shape.clone();
    // Concatenation runs along permuted axis `axis`, i.e. source axis perm[axis].
    other[perm[axis] as usize] += rng.random_range(1..=2);
    let a = lead_in(&mut b, f32t(&shape), rng);
    let c = lead_in(&mut b, f32t(&other), rng);
    b.set_block(Some("b0"));
    let axes = AttrValue::Ints(perm);
    let pa = b
        .op(OpKind::PermuteDims, &[&a], attrs([("axes", axes.clone())]))
        .unwrap();
    let pc = b
        .op(OpKind::PermuteDims, &[&c], attrs([("axes", axes)]))
        .unwrap();
    let j = b
        .op(
            OpKind::Concat,
            &[&pa, &pc],
            attrs([("axis", AttrValue::Int(axis as i64))]),
        )
        .unwrap();
    lead_out(&mut b, &j);
    (b.build(), vec![PassName::ReorderPermuteDimsAfterConcat])
}

fn redundant_cast(rng: &mut ChaCha8Rng, k: usize) -> (Graph, Vec<PassName>) {
    let mut b = GraphBuilder::new();
    let shape = random_shape(rng, 1 + k % 2);
    let (src, chain): (DType, &[DType]) = match k % 6 {
        0 => (DType::F32, &[DType::F32]),
        1 => (DType::F64, &[DType::F64]),
        2 => (DType::F32, &[DType::F64, DType::F32]),
        3 => (DType::I32, &[DType::I64, DType::F32]),
        4 => (DType::I32, &[DType::F64, DType::I32]),
        _ => (DType::F32, &[DType::F64, DType::F64]),
    };
    let x = lead_in(&mut b, TensorType::new(src, shape), rng);
    b.set_block(Some("b0"));
    let mut v = x;
    for &d in chain {
        v = b.op(OpKind::Cast, &[&v], cast_attr(d)).unwrap();
    }
    lead_out(&mut b, &v);
    (b.build(), vec![PassName::RedundantCastElimination])
}

fn dead_code(rng: &mut ChaCha8Rng, k: usize) -> (Graph, Vec<PassName>) {
    let mut b = GraphBuilder::new();
    let ty = f32t(&random_shape(rng, 1 + k % 3));
    let x = b.input(ty.clone());
    let live = b.op(OpKind::Relu, &[&x], attrs([])).unwrap();
    let dead = b.op(OpKind::Sigmoid, &[&x], attrs([])).unwrap();
    if k % 2 == 1 {
        b.op(OpKind::Mul, &[&dead, &live], attrs([])).unwrap();
    }
    if k % 3 == 2 {
        let c = b.constant(ty.clone(), random_payload(rng, ty.element_count()));
        b.op(OpKind::Add, &[&live, &c], attrs([])).unwrap();
    }
    let out = b.op(OpKind::Sigmoid, &[&live], attrs([])).unwrap();
    b.output(&out);
    (b.build(), vec![PassName::DeadCodeElimination])
}

fn common_subexpression(rng: &mut ChaCha8Rng, k: usize) -> (Graph, Vec<PassName>) {
    let mut b = GraphBuilder::new();
    let ty = f32t(&random_shape(rng, 2 + k % 2));
    let x = b.input(ty.clone());
    let (op, a) = match k % 6 {
        0 => (OpKind::Relu, attrs([])),
        1 => (OpKind::Sigmoid, attrs([])),
        2 => (OpKind::Softmax, attrs([("axis", AttrValue::Int(1))])),
        3 => (
            OpKind::PermuteDims,
            attrs([(
                "axes",
                AttrValue::Ints((0..ty.rank() as i64).rev().collect()),
            )]),
        ),
        4 => (OpKind::Cast, cast_attr(DType::F64)),
        _ => (
            OpKind::Pad,
            attrs([("amounts", AttrValue::Ints(vec![1; ty.rank()]))]),
        ),
    };
    let p = b.op(op, &[&x], a.clone()).unwrap();
    let q = b.op(op, &[&x], a).unwrap();
    let s = b.op(OpKind::Add, &[&p, &q], attrs([])).unwrap();
    b.output(&s);
    (b.build(), vec![PassName::CommonSubexpressionElimination])
}

/// The generated documented-test corpus: [`DOCS_PER_PASS`] entries per pass.
pub fn generate_corpus(master: u64) -> Vec<CorpusEntry> {
    type Template = fn(&mut ChaCha8Rng, usize) -> (Graph, Vec<PassName>);
    let templates: [(PassName, Template); 7] = [
        (PassName::ConstantFolding, constant_folding),
        (PassName::AlgebraicSimplification, algebraic_simplification),
        (PassName::ElementwiseFusion, elementwise_fusion),
        (PassName::ReorderPermuteDimsAfterConcat, reorder_permute),
        (PassName::RedundantCastElimination, redundant_cast),
        (PassName::DeadCodeElimination, dead_code),
        (
            PassName::CommonSubexpressionElimination,
            common_subexpression,
        ),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    let mut out = Vec::new();
    for (pass, template) in templates {
        for k in 0..DOCS_PER_PASS {
            let (graph, passes) = template(&mut rng, k);
            out.push(CorpusEntry {
                name: format!("{}-{k:02}", pass.as_str().to_lowercase()),
                graph,
                passes,
            });
        }
    }
    out
}

/// Trace pairs for the non-optimization ablation: random seed-style graphs,
/// each labelled with a pass round-robin, with no regard to whether the pass
/// does anything on it.
pub fn noopt_pairs(master: u64, count: usize) -> Vec<(String, PassTracePair)> {
    (0..count)
        .map(|i| {
            let graph = gen_seed(&mut seed_rng(master ^ NOOPT_STREAM, i as u64));
            let pass = PassName::ALL[i % PassName::ALL.len()];
            (format!("noopt-{i:03}"), PassTracePair { graph, pass })
        })
        .collect()
}

fn entry_paths(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{name}.cg.json")),
        dir.join(format!("{name}.passes.json")),
    )
}

/// Writes entries into `dir`, refusing to replace existing files unless `force`.
pub fn write_corpus(dir: &Path, entries: &[CorpusEntry], force: bool) -> Result<(), CorpusError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for e in entries {
        let (graph_path, sidecar_path) = entry_paths(dir, &e.name);
        for p in [&graph_path, &sidecar_path] {
            if !force && p.exists() {
                return Err(CorpusError::Exists(p.clone()));
            }
        }
        fs::write(&graph_path, serial::serialize(&e.graph)).map_err(io_err(&graph_path))?;
        let sidecar = serde_json::to_string_pretty(&Sidecar {
            passes: e.passes.clone(),
        })
        .expect("sidecar serializes");
        fs::write(&sidecar_path, sidecar).map_err(io_err(&sidecar_path))?;
    }
    Ok(())
}

/// Reads every `*.cg.json` in `dir` (sorted by name) with its sidecar.
pub fn read_corpus(dir: &Path) -> Result<Vec<CorpusEntry>, CorpusError> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            e.file_name()
                .to_str()
                .and_then(|n| n.strip_suffix(".cg.json"))
                .map(str::to_owned)
        })
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|name| {
            let (graph_path, sidecar_path) = entry_paths(dir, &name);
            let bad = |cause: String| CorpusError::Entry {
                file: graph_path.clone(),
                cause,
            };
            let text = fs::read_to_string(&graph_path).map_err(io_err(&graph_path))?;
            let graph = serial::parse(&text).map_err(|e| bad(e.to_string()))?;
            if let Some(v) = validate(&graph).first() {
                return Err(bad(format!("invalid graph: {v}")));
            }
            let side = fs::read_to_string(&sidecar_path).map_err(io_err(&sidecar_path))?;
            let sidecar: Sidecar = serde_json::from_str(&side).map_err(|e| CorpusError::Entry {
                file: sidecar_path.clone(),
                cause: e.to_string(),
            })?;
            Ok(CorpusEntry {
                name,
                graph,
                passes: sidecar.passes,
            })
        })
        .collect()
}

/// Runs every entry's pipeline on the unmutated compiler and records one
/// `<graph, pass>` pair per pass invocation, in execution order. A skipped pass
/// leaves the graph unchanged for the next one.
pub fn collect_pairs(entries: &[CorpusEntry]) -> Result<Vec<(String, PassTracePair)>, CorpusError> {
    let compiler = Compiler::new();
    let mut out = Vec::new();
    for e in entries {
        let (result, traces) = crate::passes::collect_traces(|| {
            let mut g = e.graph.clone();
            for &p in &e.passes {
                match compiler.run_pass(p, &g) {
                    Ok(o) => g = o.graph,
                    Err(PassError::Skip(_)) => {}
                    Err(PassError::Crash(m)) => return Err(m),
                }
            }
            Ok(())
        });
        result.map_err(|cause| CorpusError::Entry {
            file: PathBuf::from(&e.name),
            cause,
        })?;
        out.extend(traces.into_iter().map(|t| (e.name.clone(), t)));
    }
    Ok(out)
}
