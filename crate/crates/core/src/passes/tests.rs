use super::*;
use crate::graph::{attrs, AttrValue, DType, GraphBuilder, TensorType};
use crate::interp::{execute, gen_inputs};
use crate::ops::OpKind;
use crate::serial::graph_hash;

fn f32t(shape: &[usize]) -> TensorType {
    TensorType::new(DType::F32, shape.to_vec())
}

fn max_diff(a: &Graph, b: &Graph, seed: u64) -> f64 {
    let inputs = gen_inputs(a, seed);
    let x = execute(a, &inputs).unwrap();
    let y = execute(b, &inputs).unwrap();
    assert_eq!(x.len(), y.len());
    x.iter()
        .zip(&y)
        .flat_map(|(p, q)| {
            assert_eq!(p.ty, q.ty);
            p.data.iter().zip(&q.data).map(|(u, v)| (u - v).abs())
        })
        .fold(0.0, f64::max)
}

fn permute_concat(axes: [i64; 2], axis: i64) -> Graph {
    let mut b = GraphBuilder::new();
    let a = b.input(f32t(&[2, 3]));
    let c = b.input(f32t(&[2, 3]));
    b.set_block(Some("b0"));
    let pa = b
        .op(
            OpKind::PermuteDims,
            &[&a],
            attrs([("axes", AttrValue::Ints(axes.to_vec()))]),
        )
        .unwrap();
    let pc = b
        .op(
            OpKind::PermuteDims,
            &[&c],
            attrs([("axes", AttrValue::Ints(axes.to_vec()))]),
        )
        .unwrap();
    let out = b
        .op(
            OpKind::Concat,
            &[&pa, &pc],
            attrs([("axis", AttrValue::Int(axis))]),
        )
        .unwrap();
    b.output(&out);
    b.build()
}

#[test]
fn dce_removes_unreachable_node() {
    let mut b = GraphBuilder::new();
    let x = b.input(f32t(&[4]));
    let y = b.op(OpKind::Relu, &[&x], attrs([])).unwrap();
    let _dead = b.op(OpKind::Sigmoid, &[&x], attrs([])).unwrap();
    b.output(&y);
    let g = b.build();
    let out = Compiler::new()
        .run_pass(PassName::DeadCodeElimination, &g)
        .unwrap();
    assert_eq!(out.rewrites, 1);
    assert_eq!(out.graph.nodes.len(), 1);
    assert_eq!(out.graph.outputs, g.outputs);
}

#[test]
fn mul_by_one_becomes_passthrough() {
    let mut b = GraphBuilder::new();
    let x = b.input(f32t(&[2, 2]));
    let one = b.splat(f32t(&[2, 2]), 1.0);
    let y = b.op(OpKind::Mul, &[&x, &one], attrs([])).unwrap();
    b.output(&y);
    let g = b.build();
    let out = Compiler::new()
        .run_pass(PassName::AlgebraicSimplification, &g)
        .unwrap();
    assert!(out.fired());
    assert!(out.graph.nodes.is_empty());
    assert_eq!(out.graph.outputs, vec![x]);
}

#[test]
fn reorder_matches_interpreter() {
    for axis in 0..2 {
        let g = permute_concat([1, 0], axis);
        let out = Compiler::new()
            .run_pass(PassName::ReorderPermuteDimsAfterConcat, &g)
            .unwrap();
        assert!(out.fired());
        assert_eq!(out.graph.nodes.len(), 2);
        assert_eq!(out.graph.nodes[1].op, OpKind::PermuteDims);
        for seed in 0..5 {
            assert!(max_diff(&g, &out.graph, seed) <= 1e-3);
        }
    }
}

#[test]
fn fusion_fuses_single_use_add() {
    let mut b = GraphBuilder::new();
    let x = b.input(f32t(&[3]));
    let y = b.input(f32t(&[3]));
    let s = b.op(OpKind::Add, &[&x, &y], attrs([])).unwrap();
    let r = b.op(OpKind::Relu, &[&s], attrs([])).unwrap();
    b.output(&r);
    let g = b.build();
    let out = Compiler::new()
        .run_pass(PassName::ElementwiseFusion, &g)
        .unwrap();
    assert_eq!(out.graph.nodes.len(), 1);
    assert_eq!(out.graph.nodes[0].op, OpKind::FusedAddRelu);
    assert_eq!(max_diff(&g, &out.graph, 1), 0.0);
}

#[test]
fn cast_chain_collapses_only_when_inner_is_lossless() {
    let build = |inner: &str, outer: &str| {
        let mut b = GraphBuilder::new();
        let x = b.input(f32t(&[4]));
        let c1 = b
            .op(
                OpKind::Cast,
                &[&x],
                attrs([("dtype", AttrValue::Str(inner.into()))]),
            )
            .unwrap();
        let c2 = b
            .op(
                OpKind::Cast,
                &[&c1],
                attrs([("dtype", AttrValue::Str(outer.into()))]),
            )
            .unwrap();
        b.output(&c2);
        b.build()
    };
    let lossless = build("f64", "i32");
    assert!(Compiler::new()
        .run_pass(PassName::RedundantCastElimination, &lossless)
        .unwrap()
        .fired());
    let lossy = build("i32", "f64");
    assert!(!Compiler::new()
        .run_pass(PassName::RedundantCastElimination, &lossy)
        .unwrap()
        .fired());

    let mutant = Compiler::with_mutant(Some(Mutant::CastElimLossyInner));
    let out = mutant
        .run_pass(PassName::RedundantCastElimination, &lossy)
        .unwrap();
    assert!(out.fired());
    assert!(max_diff(&lossy, &out.graph, 3) > 1e-3);
}

#[test]
fn cse_merges_duplicates_but_respects_attrs() {
    let mut b = GraphBuilder::new();
    let x = b.input(f32t(&[3, 3]));
    let s0 = b
        .op(OpKind::Softmax, &[&x], attrs([("axis", AttrValue::Int(0))]))
        .unwrap();
    let s1 = b
        .op(OpKind::Softmax, &[&x], attrs([("axis", AttrValue::Int(1))]))
        .unwrap();
    let s2 = b
        .op(OpKind::Softmax, &[&x], attrs([("axis", AttrValue::Int(0))]))
        .unwrap();
    b.output(&s0);
    b.output(&s1);
    b.output(&s2);
    let g = b.build();
    let out = Compiler::new()
        .run_pass(PassName::CommonSubexpressionElimination, &g)
        .unwrap();
    assert_eq!(out.rewrites, 1);
    assert_eq!(max_diff(&g, &out.graph, 0), 0.0);

    let bad = Compiler::with_mutant(Some(Mutant::CseIgnoresAttrs))
        .run_pass(PassName::CommonSubexpressionElimination, &g)
        .unwrap();
    assert_eq!(bad.rewrites, 2);
    assert!(max_diff(&g, &bad.graph, 0) > 1e-3);
}

#[test]
fn constant_folding_then_dce_leaves_constant_output() {
    let mut b = GraphBuilder::new();
    let c0 = b.constant(f32t(&[2]), vec![0.25, 1.5]);
    let c1 = b.constant(f32t(&[2]), vec![2.0, -1.0]);
    let m = b.op(OpKind::Mul, &[&c0, &c1], attrs([])).unwrap();
    let r = b.op(OpKind::Relu, &[&m], attrs([])).unwrap();
    b.output(&r);
    let g = b.build();
    let run = Compiler::new()
        .run_pipeline(
            &[PassName::ConstantFolding, PassName::DeadCodeElimination],
            &g,
        )
        .unwrap();
    assert!(run.graph.nodes.is_empty());
    assert_eq!(run.graph.constants.len(), 1);
    assert_eq!(run.graph.constants[0].data, vec![0.5, 0.0]);

    let crash = Compiler::with_mutant(Some(Mutant::DceDropsConstantOutput))
        .run_pipeline(
            &[PassName::ConstantFolding, PassName::DeadCodeElimination],
            &g,
        )
        .unwrap_err();
    assert_eq!(crash.index, 1);
    assert!(matches!(crash.error, PassError::Crash(ref m) if m.contains("post-pass validation")));

    // arithmetic folds are unaffected by the i32 mutant; data movement is not
    let fold = Compiler::with_mutant(Some(Mutant::FoldThroughI32));
    let same = fold.run_pass(PassName::ConstantFolding, &g).unwrap();
    assert_eq!(max_diff(&g, &same.graph, 0), 0.0);
    let mut b = GraphBuilder::new();
    let c = b.constant(f32t(&[2, 2]), vec![0.25, 1.5, -0.5, 2.0]);
    let r = b
        .op(
            OpKind::Reshape,
            &[&c],
            attrs([("shape", AttrValue::Ints(vec![4]))]),
        )
        .unwrap();
    b.output(&r);
    let g = b.build();
    let truncated = fold.run_pass(PassName::ConstantFolding, &g).unwrap();
    assert!(max_diff(&g, &truncated.graph, 0) > 1e-3);
}

#[test]
fn conv2d_folding_is_skipped() {
    let mut b = GraphBuilder::new();
    let x = b.splat(f32t(&[1, 1, 3, 3]), 1.0);
    let w = b.splat(f32t(&[1, 1, 2, 2]), 1.0);
    let y = b.op(OpKind::Conv2d, &[&x, &w], attrs([])).unwrap();
    b.output(&y);
    let err = Compiler::new()
        .run_pass(PassName::ConstantFolding, &b.build())
        .unwrap_err();
    assert!(matches!(err, PassError::Skip(ref m) if m.contains("unsupported")));
}

#[test]
fn empty_pipeline_is_identity() {
    let g = permute_concat([1, 0], 0);
    let run = Compiler::new().run_pipeline(&[], &g).unwrap();
    assert_eq!(run.graph, g);
    assert_eq!(run.fired().count(), 0);
}

#[test]
fn run_pass_does_not_mutate_input() {
    let g = permute_concat([1, 0], 1);
    let before = graph_hash(&g);
    for pass in PassName::ALL {
        let _ = Compiler::new().run_pass(pass, &g);
    }
    assert_eq!(graph_hash(&g), before);
}

#[test]
fn instrumentation_records_pairs_in_order() {
    let g = permute_concat([1, 0], 0);
    let passes = [
        PassName::ReorderPermuteDimsAfterConcat,
        PassName::CommonSubexpressionElimination,
        PassName::DeadCodeElimination,
    ];
    let (_, traces) = collect_traces(|| Compiler::new().run_pipeline(&passes, &g).unwrap());
    assert_eq!(traces.iter().map(|t| t.pass).collect::<Vec<_>>(), passes);
    // the first snapshot predates the rewrite
    assert_eq!(traces[0].graph, g);
    assert_ne!(traces[1].graph, g);

    let (_, outer) = collect_traces(|| {
        let (_, inner) =
            collect_traces(|| Compiler::new().run_pass(PassName::DeadCodeElimination, &g));
        assert_eq!(inner.len(), 1);
        Compiler::new().run_pass(PassName::ConstantFolding, &g)
    });
    assert_eq!(
        outer.iter().map(|t| t.pass).collect::<Vec<_>>(),
        vec![PassName::DeadCodeElimination, PassName::ConstantFolding]
    );
}

#[test]
fn reorder_wrong_axis_changes_result_signature() {
    let g = permute_concat([1, 0], 0);
    let out = Compiler::with_mutant(Some(Mutant::ReorderWrongAxis))
        .run_pass(PassName::ReorderPermuteDimsAfterConcat, &g)
        .unwrap();
    let inputs = gen_inputs(&g, 0);
    let want = execute(&g, &inputs).unwrap();
    let got = execute(&out.graph, &inputs).unwrap();
    assert_ne!(want[0].ty, got[0].ty);
}

#[test]
fn reorder_wrong_axis_backs_off_when_inference_fails() {
    let mut b = GraphBuilder::new();
    let a = b.input(f32t(&[2, 3]));
    let c = b.input(f32t(&[2, 5]));
    b.set_block(Some("b0"));
    let axes = attrs([("axes", AttrValue::Ints(vec![1, 0]))]);
    let pa = b.op(OpKind::PermuteDims, &[&a], axes.clone()).unwrap();
    let pc = b.op(OpKind::PermuteDims, &[&c], axes).unwrap();
    let j = b
        .op(
            OpKind::Concat,
            &[&pa, &pc],
            attrs([("axis", AttrValue::Int(0))]),
        )
        .unwrap();
    b.output(&j);
    let g = b.build();
    let out = Compiler::with_mutant(Some(Mutant::ReorderWrongAxis))
        .run_pass(PassName::ReorderPermuteDimsAfterConcat, &g)
        .unwrap();
    assert!(!out.fired());
}

#[test]
fn fusion_mutants() {
    let mut b = GraphBuilder::new();
    let x = b.input(TensorType::new(DType::F64, [3]));
    let s = b.op(OpKind::Add, &[&x, &x], attrs([])).unwrap();
    let r = b.op(OpKind::Relu, &[&s], attrs([])).unwrap();
    b.output(&r);
    let g = b.build();
    let ok = Compiler::new()
        .run_pass(PassName::ElementwiseFusion, &g)
        .unwrap();
    assert!(ok.fired());
    let a = Compiler::with_mutant(Some(Mutant::FusionNullDeref))
        .run_pass(PassName::ElementwiseFusion, &g)
        .unwrap_err();
    let b2 = Compiler::with_mutant(Some(Mutant::FusionNullDeref))
        .run_pass(PassName::ElementwiseFusion, &g)
        .unwrap_err();
    assert_eq!(a, b2);
    assert!(
        matches!(a, PassError::Crash(ref m) if m.starts_with("[ElementwiseFusion] internal error"))
    );
    let c = Compiler::with_mutant(Some(Mutant::FusionF32Only))
        .run_pass(PassName::ElementwiseFusion, &g)
        .unwrap_err();
    assert!(matches!(c, PassError::Crash(ref m) if m.contains("output type mismatch")));
}

#[test]
fn algsimp_mutants() {
    let mul_by_one = |ty: TensorType| {
        let mut b = GraphBuilder::new();
        let x = b.input(ty.clone());
        let one = b.splat(ty, 1.0);
        let y = b.op(OpKind::Mul, &[&x, &one], attrs([])).unwrap();
        b.output(&y);
        b.build()
    };
    let wrong = Compiler::with_mutant(Some(Mutant::AlgSimpForwardWrongOperand));
    let g = mul_by_one(f32t(&[2]));
    let out = wrong
        .run_pass(PassName::AlgebraicSimplification, &g)
        .unwrap();
    assert_eq!(max_diff(&g, &out.graph, 2), 0.0);
    let gi = mul_by_one(TensorType::new(DType::I32, [6]));
    let out = wrong
        .run_pass(PassName::AlgebraicSimplification, &gi)
        .unwrap();
    assert!(max_diff(&gi, &out.graph, 2) > 1e-3);
    let crash = Compiler::with_mutant(Some(Mutant::AlgSimpMissesGraphOutput))
        .run_pass(PassName::AlgebraicSimplification, &g)
        .unwrap_err();
    assert!(matches!(crash, PassError::Crash(ref m) if m.contains("not defined")));
}

#[test]
fn dce_drops_block_output_mutant() {
    let mut b = GraphBuilder::new();
    let x = b.input(f32t(&[3]));
    b.set_block(Some("b0"));
    let y = b.op(OpKind::Sigmoid, &[&x], attrs([])).unwrap();
    b.output(&y);
    let g = b.build();
    let out = Compiler::with_mutant(Some(Mutant::DceDropsBlockOutput))
        .run_pass(PassName::DeadCodeElimination, &g)
        .unwrap();
    assert!(out.graph.nodes.is_empty());
    assert!(max_diff(&g, &out.graph, 0) > 1e-3);
    assert!(!Compiler::new()
        .run_pass(PassName::DeadCodeElimination, &g)
        .unwrap()
        .fired());
}

#[test]
fn mutant_catalog() {
    let all = list_mutants();
    assert_eq!(all.len(), 10);
    assert!(all.iter().any(|m| m.symptom == Symptom::Crash));
    assert!(all.iter().any(|m| m.symptom == Symptom::Inconsistency));
    for m in &all {
        assert_eq!(m.name.parse::<Mutant>().unwrap().id(), *m);
    }
    assert!("nope".parse::<Mutant>().is_err());
    assert!(Compiler::activate("fold-through-i32").is_ok());
}
