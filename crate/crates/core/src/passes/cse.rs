use std::collections::HashMap;

use crate::graph::{AttrValue, Graph};

use super::rewrite::replace_uses;
use super::{Compiler, Mutant, PassError};

pub(super) fn run(compiler: &Compiler, graph: &mut Graph) -> Result<usize, PassError> {
    let string_attrs_only = compiler.is(Mutant::CseIgnoresAttrs);
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut rewrites = 0;
    let mut i = 0;
    while i < graph.nodes.len() {
        let node = &graph.nodes[i];
        let key = format!(
            "{}|{}|{}",
            node.op,
            node.inputs.join(","),
            if string_attrs_only {
                let kept: Vec<_> = node
                    .attrs
                    .iter()
                    .filter(|(_, v)| matches!(v, AttrValue::Str(_)))
                    .collect();
                format!("{kept:?}")
            } else {
                format!("{:?}", node.attrs)
            }
        );
        match seen.get(&key) {
            Some(&j) => {
                let pairs: Vec<(String, String)> = node
                    .outputs
                    .iter()
                    .zip(&graph.nodes[j].outputs)
                    .map(|(dup, orig)| (dup.id.clone(), orig.id.clone()))
                    .collect();
                graph.nodes.remove(i);
                for (dup, orig) in pairs {
                    replace_uses(graph, &dup, &orig, true);
                }
                rewrites += 1;
            }
            None => {
                seen.insert(key, i);
                i += 1;
            }
        }
    }
    Ok(rewrites)
}
