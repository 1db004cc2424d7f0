use crate::graph::{DType, Graph};
use crate::ops::OpKind;

use super::rewrite::{producer_node, use_count};
use super::{Compiler, Mutant, PassError};

pub(super) fn run(compiler: &Compiler, graph: &mut Graph) -> Result<usize, PassError> {
    let mut rewrites = 0;
    let mut i = 0;
    while i < graph.nodes.len() {
        let relu = &graph.nodes[i];
        if relu.op != OpKind::Relu {
            i += 1;
            continue;
        }
        let sum = &relu.inputs[0];
        let Some(j) = producer_node(graph, sum) else {
            i += 1;
            continue;
        };
        let add = &graph.nodes[j];
        if add.op != OpKind::Add
            || add.block != relu.block
            || use_count(graph, sum) != 1
            || graph.is_output(sum)
        {
            i += 1;
            continue;
        }
        if compiler.is(Mutant::FusionNullDeref) && add.inputs[0] == add.inputs[1] {
            return Err(PassError::Crash(
                "internal error: null producer dereferenced for operand 1 of fused Add".into(),
            ));
        }
        let operands = add.inputs.clone();
        let relu = &mut graph.nodes[i];
        relu.op = OpKind::FusedAddRelu;
        relu.inputs = operands;
        if compiler.is(Mutant::FusionF32Only) {
            relu.outputs[0].ty.dtype = DType::F32;
        }
        graph.nodes.remove(j);
        rewrites += 1;
        // the add sat before the relu, so the relu moved to index i - 1
    }
    Ok(rewrites)
}
