use crate::graph::Graph;
use crate::ops::OpKind;

use super::rewrite::{is_splat, replace_uses};
use super::{Compiler, Mutant, PassError};

/// Which operand survives an identity rewrite, if the node is one.
fn identity_operand(graph: &Graph, op: OpKind, a: &str, b: &str) -> Option<usize> {
    match op {
        OpKind::Mul if is_splat(graph, b, 1.0) => Some(0),
        OpKind::Mul if is_splat(graph, a, 1.0) => Some(1),
        OpKind::Add if is_splat(graph, b, 0.0) => Some(0),
        OpKind::Add if is_splat(graph, a, 0.0) => Some(1),
        OpKind::Sub if is_splat(graph, b, 0.0) => Some(0),
        _ => None,
    }
}

pub(super) fn run(compiler: &Compiler, graph: &mut Graph) -> Result<usize, PassError> {
    let mut rewrites = 0;
    let mut i = 0;
    while i < graph.nodes.len() {
        let node = &graph.nodes[i];
        if node.inputs.len() != 2 || node.outputs.len() != 1 {
            i += 1;
            continue;
        }
        let Some(keep) = identity_operand(graph, node.op, &node.inputs[0], &node.inputs[1]) else {
            i += 1;
            continue;
        };
        let int_mul = node.op == OpKind::Mul && node.outputs[0].ty.dtype.is_int();
        let slot = if int_mul && compiler.is(Mutant::AlgSimpForwardWrongOperand) {
            1 - keep
        } else {
            keep
        };
        let forward = node.inputs[slot].clone();
        let out = node.outputs[0].id.clone();
        let fix_outputs = !compiler.is(Mutant::AlgSimpMissesGraphOutput);
        graph.nodes.remove(i);
        replace_uses(graph, &out, &forward, fix_outputs);
        rewrites += 1;
    }
    Ok(rewrites)
}
