use crate::graph::{DType, Graph};
use crate::ops::{attr_dtype, OpKind};

use super::rewrite::{producer_node, replace_uses};
use super::{Compiler, Mutant, PassError};

/// Whether every `from` value survives a round trip through `to`.
pub(crate) fn lossless(from: DType, to: DType) -> bool {
    use DType::*;
    from == to || matches!((from, to), (F32, F64) | (I32, I64) | (I32, F64) | (Bool, _))
}

pub(super) fn run(compiler: &Compiler, graph: &mut Graph) -> Result<usize, PassError> {
    let mut rewrites = 0;
    loop {
        let before = rewrites;
        let mut i = 0;
        while i < graph.nodes.len() {
            let node = &graph.nodes[i];
            if node.op != OpKind::Cast {
                i += 1;
                continue;
            }
            let src = node.inputs[0].clone();
            let out = node.outputs[0].clone();
            let src_ty = graph.type_of(&src).cloned().expect("operand defined");
            if src_ty == out.ty {
                graph.nodes.remove(i);
                replace_uses(graph, &out.id, &src, true);
                rewrites += 1;
                continue;
            }
            if let Some(j) = producer_node(graph, &src) {
                let inner = &graph.nodes[j];
                if inner.op == OpKind::Cast && inner.block == graph.nodes[i].block {
                    let origin = inner.inputs[0].clone();
                    let a = graph.type_of(&origin).expect("operand defined").dtype;
                    let b = attr_dtype(&inner.attrs, "dtype").unwrap_or(src_ty.dtype);
                    let c = out.ty.dtype;
                    let safe = if compiler.is(Mutant::CastElimLossyInner) {
                        lossless(b, c)
                    } else {
                        lossless(a, b)
                    };
                    if safe {
                        graph.nodes[i].inputs[0] = origin;
                        rewrites += 1;
                    }
                }
            }
            i += 1;
        }
        if rewrites == before {
            return Ok(rewrites);
        }
    }
}
