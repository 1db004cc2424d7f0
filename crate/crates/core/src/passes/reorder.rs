use crate::graph::{AttrValue, Graph, NameGen, Node, ValueDecl};
use crate::ops::{attr_int, attr_ints, infer, OpKind};

use super::rewrite::{producer_node, use_count};
use super::{Compiler, Mutant, PassError};

/// Shared permutation of every Concat operand, when all operands are
/// same-block PermuteDims nodes.
fn common_permutation(graph: &Graph, concat: &Node) -> Option<(Vec<i64>, Vec<usize>)> {
    if concat.inputs.len() < 2 {
        return None;
    }
    let mut perm: Option<Vec<i64>> = None;
    let mut producers = Vec::with_capacity(concat.inputs.len());
    for input in &concat.inputs {
        let j = producer_node(graph, input)?;
        let p = &graph.nodes[j];
        if p.op != OpKind::PermuteDims || p.block != concat.block {
            return None;
        }
        let axes = attr_ints(&p.attrs, "axes")?.to_vec();
        match &perm {
            Some(q) if *q != axes => return None,
            Some(_) => {}
            None => perm = Some(axes),
        }
        producers.push(j);
    }
    perm.map(|p| (p, producers))
}

pub(super) fn run(compiler: &Compiler, graph: &mut Graph) -> Result<usize, PassError> {
    let mut names = NameGen::for_graph(graph);
    let mut rewrites = 0;
    let mut i = 0;
    while i < graph.nodes.len() {
        let node = &graph.nodes[i];
        if node.op != OpKind::Concat {
            i += 1;
            continue;
        }
        let Some((perm, producers)) = common_permutation(graph, node) else {
            i += 1;
            continue;
        };
        let axis = attr_int(&node.attrs, "axis").unwrap_or(0);
        let inner_axis = if compiler.is(Mutant::ReorderWrongAxis) {
            axis
        } else {
            perm[axis as usize]
        };
        let sources: Vec<String> = producers
            .iter()
            .map(|&j| graph.nodes[j].inputs[0].clone())
            .collect();
        let source_types = sources
            .iter()
            .map(|s| graph.type_of(s).cloned().expect("operand defined"))
            .collect::<Vec<_>>();
        let mut concat_attrs = node.attrs.clone();
        concat_attrs.insert("axis".into(), AttrValue::Int(inner_axis));
        let joined_ty = match infer(OpKind::Concat, &source_types, &concat_attrs) {
            Ok(mut t) => t.remove(0),
            Err(_) if compiler.is(Mutant::ReorderWrongAxis) => {
                i += 1;
                continue;
            }
            Err(e) => {
                return Err(PassError::Crash(format!(
                    "rewritten Concat failed shape inference: {e}"
                )))
            }
        };
        let mut perm_attrs = crate::graph::Attrs::new();
        perm_attrs.insert("axes".into(), AttrValue::Ints(perm.clone()));
        let permuted_ty = infer(
            OpKind::PermuteDims,
            std::slice::from_ref(&joined_ty),
            &perm_attrs,
        )
        .map_err(|e| {
            PassError::Crash(format!("rewritten PermuteDims failed shape inference: {e}"))
        })?
        .remove(0);

        let joined = names.fresh("reorder_v");
        let concat_node = Node {
            id: names.fresh("reorder_n"),
            op: OpKind::Concat,
            inputs: sources,
            attrs: concat_attrs,
            block: node.block.clone(),
            outputs: vec![ValueDecl::new(joined.clone(), joined_ty)],
        };
        let permute_node = Node {
            id: node.id.clone(),
            op: OpKind::PermuteDims,
            inputs: vec![joined],
            attrs: perm_attrs,
            block: node.block.clone(),
            outputs: vec![ValueDecl::new(node.outputs[0].id.clone(), permuted_ty)],
        };
        graph.nodes[i] = permute_node;
        graph.nodes.insert(i, concat_node);

        // Drop operand permutations that no longer have readers.
        let mut dead: Vec<usize> = producers
            .into_iter()
            .filter(|&j| {
                let out = &graph.nodes[j].outputs[0].id;
                use_count(graph, out) == 0 && !graph.is_output(out)
            })
            .collect();
        dead.sort_unstable();
        dead.dedup();
        for &j in dead.iter().rev() {
            graph.nodes.remove(j);
        }
        i = i + 2 - dead.len();
        rewrites += 1;
    }
    Ok(rewrites)
}
