//! Small graph-surgery helpers shared by the passes.

use crate::graph::Graph;

/// Redirects every node operand reading `old` to `new`; graph outputs too when
/// `outputs` is set. Returns the number of redirected sites.
pub(super) fn replace_uses(graph: &mut Graph, old: &str, new: &str, outputs: bool) -> usize {
    let mut n = 0;
    for node in &mut graph.nodes {
        for input in &mut node.inputs {
            if input == old {
                *input = new.to_string();
                n += 1;
            }
        }
    }
    if outputs {
        for out in &mut graph.outputs {
            if out == old {
                *out = new.to_string();
                n += 1;
            }
        }
    }
    n
}

/// True when `id` names a constant whose every element equals `value`.
pub(super) fn is_splat(graph: &Graph, id: &str, value: f64) -> bool {
    graph
        .constant(id)
        .and_then(|c| c.splat_value())
        .is_some_and(|v| v == value)
}

pub(super) fn is_constant(graph: &Graph, id: &str) -> bool {
    graph.constants.iter().any(|c| c.id == id)
}

/// Index of the node producing `id`, if any.
pub(super) fn producer_node(graph: &Graph, id: &str) -> Option<usize> {
    graph
        .nodes
        .iter()
        .position(|n| n.outputs.iter().any(|o| o.id == id))
}

pub(super) fn use_count(graph: &Graph, id: &str) -> usize {
    graph
        .nodes
        .iter()
        .flat_map(|n| n.inputs.iter())
        .filter(|i| *i == id)
        .count()
}
