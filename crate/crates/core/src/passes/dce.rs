use std::collections::HashSet;

use crate::graph::Graph;

use super::{Compiler, Mutant, PassError};

pub(super) fn run(compiler: &Compiler, graph: &mut Graph) -> Result<usize, PassError> {
    let drop_block_outputs = compiler.is(Mutant::DceDropsBlockOutput);
    let mut live: HashSet<String> = graph.outputs.iter().cloned().collect();
    if drop_block_outputs {
        for node in graph.nodes.iter().filter(|n| n.block.is_some()) {
            for o in &node.outputs {
                live.remove(&o.id);
            }
        }
    }
    let mut keep = vec![false; graph.nodes.len()];
    for (i, node) in graph.nodes.iter().enumerate().rev() {
        if node.outputs.iter().any(|o| live.contains(&o.id)) {
            keep[i] = true;
            live.extend(node.inputs.iter().cloned());
        }
    }

    let mut removed = 0;
    let mut forwards = Vec::new();
    let mut idx = 0;
    graph.nodes.retain(|node| {
        let k = keep[idx];
        idx += 1;
        if !k {
            removed += 1;
            for o in &node.outputs {
                forwards.push((o.id.clone(), node.inputs[0].clone(), o.ty.clone()));
            }
        }
        k
    });
    if drop_block_outputs {
        // Outputs of removed nodes fall back to the first operand when it has
        // the same type.
        for (gone, operand, ty) in forwards {
            if graph.type_of(&operand) == Some(&ty) {
                for out in graph.outputs.iter_mut().filter(|o| **o == gone) {
                    *out = operand.clone();
                }
            }
        }
    }

    let used: HashSet<&str> = graph
        .nodes
        .iter()
        .flat_map(|n| n.inputs.iter().map(String::as_str))
        .chain(
            graph
                .outputs
                .iter()
                .map(String::as_str)
                .filter(|_| !compiler.is(Mutant::DceDropsConstantOutput)),
        )
        .collect();
    let used: HashSet<String> = used.into_iter().map(str::to_owned).collect();
    let before = graph.constants.len();
    graph.constants.retain(|c| used.contains(&c.id));
    removed += before - graph.constants.len();
    Ok(removed)
}
