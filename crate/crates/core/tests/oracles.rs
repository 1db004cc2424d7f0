//! Worked examples checked against oracles written out here: index-loop
//! tensor code, hand-built witness graphs and recorded golden hashes.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use cgfuzz::bridge::plan_bridge;
use cgfuzz::corpus::generate_corpus;
use cgfuzz::graph::{attrs, AttrValue, DType, Graph, GraphBuilder, TensorType};
use cgfuzz::harness::{test_one, OracleConfig, Verdict};
use cgfuzz::interp::{eval_op, execute, gen_inputs, TensorValue};
use cgfuzz::ops::OpKind;
use cgfuzz::passes::{Compiler, Mutant, PassName, DEFAULT_PIPELINE};
use cgfuzz::serial::graph_hash;
use cgfuzz::synth::{synthesize, DiscardReason, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn f32t(shape: &[usize]) -> TensorType {
    TensorType::new(DType::F32, shape)
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

fn unflatten(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for i in (0..shape.len()).rev() {
        idx[i] = flat % shape[i];
        flat /= shape[i];
    }
    idx
}

/// `out[i] = in[j]` with `out` axis `k` reading input axis `axes[k]`.
fn permute(data: &[f64], shape: &[usize], axes: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let st = strides(shape);
    let data = (0..data.len())
        .map(|flat| {
            let idx = unflatten(flat, &out_shape);
            let src: usize = idx.iter().zip(axes).map(|(&i, &a)| i * st[a]).sum();
            data[src]
        })
        .collect();
    (data, out_shape)
}

fn concat(a: &[f64], sa: &[usize], b: &[f64], sb: &[usize], axis: usize) -> (Vec<f64>, Vec<usize>) {
    let mut shape = sa.to_vec();
    shape[axis] += sb[axis];
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|flat| {
            let mut idx = unflatten(flat, &shape);
            if idx[axis] < sa[axis] {
                let st = strides(sa);
                a[idx.iter().zip(&st).map(|(i, s)| i * s).sum::<usize>()]
            } else {
                idx[axis] -= sa[axis];
                let st = strides(sb);
                b[idx.iter().zip(&st).map(|(i, s)| i * s).sum::<usize>()]
            }
        })
        .collect();
    (data, shape)
}

fn permute_concat(shape: &[usize], axes: &[i64], axis: i64) -> Graph {
    let mut b = GraphBuilder::new();
    let x = b.input(f32t(shape));
    let y = b.input(f32t(shape));
    b.set_block(Some("b0"));
    let perm = attrs([("axes", AttrValue::Ints(axes.to_vec()))]);
    let px = b.op(OpKind::PermuteDims, &[&x], perm.clone()).unwrap();
    let py = b.op(OpKind::PermuteDims, &[&y], perm).unwrap();
    let out = b
        .op(
            OpKind::Concat,
            &[&px, &py],
            attrs([("axis", AttrValue::Int(axis))]),
        )
        .unwrap();
    b.output(&out);
    b.build()
}

#[test]
fn reorder_rewrite_agrees_with_index_loops() {
    let cases: [(&[usize], &[i64], i64); 4] = [
        (&[2, 3], &[1, 0], 0),
        (&[2, 3], &[1, 0], 1),
        (&[2, 3, 4], &[2, 0, 1], 1),
        (&[2, 3, 4], &[1, 2, 0], 2),
    ];
    for (shape, axes, axis) in cases {
        let g = permute_concat(shape, axes, axis);
        let out = Compiler::new()
            .run_pass(PassName::ReorderPermuteDimsAfterConcat, &g)
            .unwrap();
        assert!(out.fired(), "{axes:?} axis {axis}");
        let ops: Vec<OpKind> = out.graph.nodes.iter().map(|n| n.op).collect();
        assert_eq!(ops, [OpKind::Concat, OpKind::PermuteDims]);
        let axes_u: Vec<usize> = axes.iter().map(|&a| a as usize).collect();
        for seed in 0..10 {
            let inputs = gen_inputs(&g, seed);
            let (x, y) = (&inputs["x0"].data, &inputs["x1"].data);
            let (px, ps) = permute(x, shape, &axes_u);
            let (py, _) = permute(y, shape, &axes_u);
            let (want, want_shape) = concat(&px, &ps, &py, &ps, axis as usize);
            let got = execute(&out.graph, &inputs).unwrap();
            assert_eq!(got[0].ty.shape, want_shape);
            assert_eq!(got[0].data, want);
        }
    }
}

#[test]
fn reorder_wrong_axis_witness_is_inconsistent() {
    let g = permute_concat(&[2, 3], &[1, 0], 0);
    let compiler = Compiler::with_mutant(Some(Mutant::ReorderWrongAxis));
    let r = test_one(
        &compiler,
        &g,
        &[vec![PassName::ReorderPermuteDimsAfterConcat]],
        0,
        &OracleConfig::default(),
    )
    .unwrap();
    let Verdict::Inconsistency { distance, .. } = r.verdict else {
        panic!("expected an inconsistency, got {:?}", r.verdict);
    };
    assert!(distance > 1e3 * 1e-3);

    let inputs = gen_inputs(&g, 0);
    let (px, ps) = permute(&inputs["x0"].data, &[2, 3], &[1, 0]);
    let (py, _) = permute(&inputs["x1"].data, &[2, 3], &[1, 0]);
    let (want, want_shape) = concat(&px, &ps, &py, &ps, 0);
    let reference = execute(&g, &inputs).unwrap();
    assert_eq!(reference[0].data, want);
    let broken = compiler
        .run_pass(PassName::ReorderPermuteDimsAfterConcat, &g)
        .unwrap();
    let got = execute(&broken.graph, &inputs).unwrap();
    assert_ne!(got[0].ty.shape, want_shape);
}

#[test]
fn fused_add_relu_equals_relu_of_add() {
    let mut rng = ChaCha8Rng::seed_from_u64(181);
    for _ in 0..100 {
        let n = rng.random_range(1..=12);
        let ty = TensorType::new(DType::F64, [n]);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let want: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x + y).max(0.0)).collect();
        let (ta, tb) = (
            TensorValue::new(ty.clone(), a),
            TensorValue::new(ty.clone(), b),
        );
        let fused = eval_op(
            OpKind::FusedAddRelu,
            &Default::default(),
            &[&ta, &tb],
            std::slice::from_ref(&ty),
        )
        .unwrap();
        let sum = eval_op(
            OpKind::Add,
            &Default::default(),
            &[&ta, &tb],
            std::slice::from_ref(&ty),
        )
        .unwrap();
        let relu = eval_op(
            OpKind::Relu,
            &Default::default(),
            &[&sum[0]],
            std::slice::from_ref(&ty),
        )
        .unwrap();
        assert_eq!(fused[0].data, want);
        assert_eq!(relu[0].data, want);
    }
}

#[test]
fn fusion_null_deref_crash_is_stable() {
    let mut b = GraphBuilder::new();
    let x = b.input(f32t(&[4]));
    let s = b.op(OpKind::Add, &[&x, &x], attrs([])).unwrap();
    let r = b.op(OpKind::Relu, &[&s], attrs([])).unwrap();
    b.output(&r);
    let g = b.build();
    let compiler = Compiler::with_mutant(Some(Mutant::FusionNullDeref));
    let messages: Vec<String> = (0..3)
        .map(|seed| {
            match test_one(
                &compiler,
                &g,
                &[DEFAULT_PIPELINE.to_vec()],
                seed,
                &OracleConfig::default(),
            )
            .unwrap()
            .verdict
            {
                Verdict::Crash { message, pipeline } => {
                    assert_eq!(pipeline.last(), Some(&PassName::ElementwiseFusion));
                    message
                }
                v => panic!("expected a crash, got {v:?}"),
            }
        })
        .collect();
    assert!(messages.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn dce_dropping_a_live_block_output_is_caught() {
    let mut b = GraphBuilder::new();
    let x = b.input(f32t(&[3]));
    b.set_block(Some("b0"));
    let y = b.op(OpKind::Sigmoid, &[&x], attrs([])).unwrap();
    b.output(&y);
    let g = b.build();
    let clean = test_one(
        &Compiler::new(),
        &g,
        &[DEFAULT_PIPELINE.to_vec()],
        0,
        &OracleConfig::default(),
    )
    .unwrap();
    assert_eq!(clean.verdict, Verdict::Clean);
    let broken = test_one(
        &Compiler::with_mutant(Some(Mutant::DceDropsBlockOutput)),
        &g,
        &[vec![PassName::DeadCodeElimination]],
        0,
        &OracleConfig::default(),
    )
    .unwrap();
    assert!(broken.verdict.is_bug(), "{:?}", broken.verdict);
}

#[test]
fn float_matrix_bridges_to_int_cube_through_the_flat_tail() {
    let steps = plan_bridge(
        &TensorType::new(DType::F32, [2, 32]),
        &TensorType::new(DType::I32, [4, 4, 5]),
    )
    .unwrap();
    let ops: Vec<OpKind> = steps.iter().map(|s| s.op).collect();
    // 16 extra elements are not a whole number of 32-wide rows, so the tail
    // is padded on the flattened tensor.
    assert_eq!(
        ops,
        [OpKind::Reshape, OpKind::Pad, OpKind::Reshape, OpKind::Cast]
    );
    assert_eq!(steps[0].ty, TensorType::new(DType::F32, [64]));
    assert_eq!(steps[1].attrs["amounts"], AttrValue::Ints(vec![80 - 64]));
    assert_eq!(steps[1].ty, TensorType::new(DType::F32, [80]));
    assert_eq!(steps[2].ty, TensorType::new(DType::F32, [4, 4, 5]));
    assert_eq!(steps[3].ty, TensorType::new(DType::I32, [4, 4, 5]));

    let same = TensorType::new(DType::F32, [4, 4, 5]);
    assert!(plan_bridge(&same, &same).unwrap().is_empty());
}

#[test]
fn oversized_synthesis_is_discarded_for_size() {
    let mut b = GraphBuilder::new();
    let mut v = b.input(f32t(&[4]));
    for _ in 0..200 {
        v = b.op(OpKind::Relu, &[&v], attrs([])).unwrap();
    }
    b.output(&v);
    let seed = b.build();
    assert!(cgfuzz::graph::validate(&seed).is_ok());
    let entries = generate_corpus(0);
    let pairs = cgfuzz::corpus::collect_pairs(&entries).unwrap();
    let pattern =
        &cgfuzz::extract::extract_all(&pairs, cgfuzz::extract::ExtractionMode::Adaptive)[0];
    let out = synthesize(&seed, pattern, 100, 1, &SynthConfig::default());
    assert_eq!(out.result, Err(DiscardReason::SizeCap));
}

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/pipeline_hashes.json")
}

/// The full pipeline on the corpus reaches a fixed point after one run, and
/// the optimized graphs match hashes recorded from a verified run. Set
/// `CGFUZZ_BLESS=1` to re-record after an intended pass change.
#[test]
fn pipeline_is_idempotent_on_the_corpus_and_matches_golden() {
    let compiler = Compiler::new();
    let mut hashes = BTreeMap::new();
    for e in generate_corpus(0) {
        let once = compiler
            .run_pipeline(&DEFAULT_PIPELINE, &e.graph)
            .unwrap()
            .graph;
        let twice = compiler
            .run_pipeline(&DEFAULT_PIPELINE, &once)
            .unwrap()
            .graph;
        assert_eq!(
            graph_hash(&once),
            graph_hash(&twice),
            "{} is not a fixed point",
            e.name
        );
        hashes.insert(e.name, graph_hash(&once));
    }
    let path = golden_path();
    if std::env::var_os("CGFUZZ_BLESS").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, serde_json::to_string_pretty(&hashes).unwrap() + "\n").unwrap();
    }
    let golden: BTreeMap<String, String> =
        serde_json::from_str(&fs::read_to_string(&path).expect("golden file present")).unwrap();
    assert_eq!(hashes, golden);
}
