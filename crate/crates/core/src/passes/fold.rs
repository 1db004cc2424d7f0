use crate::graph::{Constant, DType, Graph};
use crate::interp::{eval_op, TensorValue};
use crate::ops::OpKind;

use super::rewrite::is_constant;
use super::{Compiler, Mutant, PassError};

/// Folded tensors larger than this stay as nodes.
const MAX_FOLD_ELEMENTS: usize = 4096;

pub(super) fn run(compiler: &Compiler, graph: &mut Graph) -> Result<usize, PassError> {
    let mut rewrites = 0;
    let mut i = 0;
    while i < graph.nodes.len() {
        let node = &graph.nodes[i];
        let foldable = !node.inputs.is_empty()
            && node.outputs.len() == 1
            && node.inputs.iter().all(|id| is_constant(graph, id));
        if !foldable {
            i += 1;
            continue;
        }
        if node.op == OpKind::Conv2d {
            return Err(PassError::Skip(
                "unsupported: constant folding of Conv2D".into(),
            ));
        }
        let out = node.outputs[0].clone();
        if out.ty.element_count() > MAX_FOLD_ELEMENTS {
            i += 1;
            continue;
        }
        let args: Vec<TensorValue> = node
            .inputs
            .iter()
            .map(|id| {
                let c = graph.constant(id).expect("checked constant");
                TensorValue::new(c.ty.clone(), c.data.clone())
            })
            .collect();
        let refs: Vec<&TensorValue> = args.iter().collect();
        let value = eval_op(node.op, &node.attrs, &refs, std::slice::from_ref(&out.ty))
            .map_err(|e| PassError::Crash(format!("evaluation failed: {e}")))?
            .remove(0);
        if value.data.iter().any(|v| !v.is_finite()) {
            i += 1;
            continue;
        }
        let mut data = value.data;
        let data_movement = matches!(
            node.op,
            OpKind::Reshape | OpKind::PermuteDims | OpKind::Pad | OpKind::Crop | OpKind::Concat
        );
        if compiler.is(Mutant::FoldThroughI32) && data_movement && out.ty.dtype.is_float() {
            for v in &mut data {
                *v = *v as i32 as f64;
            }
        }
        debug_assert!(out.ty.dtype != DType::Bool || data.iter().all(|v| *v == 0.0 || *v == 1.0));
        graph.nodes.remove(i);
        graph.constants.push(Constant {
            id: out.id,
            ty: out.ty,
            data,
        });
        rewrites += 1;
    }
    Ok(rewrites)
}
