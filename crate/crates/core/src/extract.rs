//! Pattern extraction from `<graph, pass>` trace pairs.
//!
//! A pattern is an induced sub-DAG of a traced graph plus the cut edges that
//! connect it to the rest: dangling inputs (operands produced outside) and
//! dangling outputs (values read outside, or graph outputs). Subgraph-level
//! passes get whole connected components; block-level passes get the
//! components' same-block regions.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::graph::{Attrs, Constant, Graph, Node, NodeId, TensorType, ValueDecl, ValueId};
use crate::ops::{check_compatible, InputRequirement, OpKind};
use crate::passes::{Compiler, Granularity, PassName, PassTracePair};
use crate::serial::{ConstantDoc, NodeDoc, ParseError};

/// How patterns are cut out of traced graphs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractionMode {
    /// Block regions for block-level passes, components for subgraph-level ones.
    #[default]
    Adaptive,
    BlockOnly,
    SubgraphOnly,
    /// The whole traced graph is one pattern.
    WholeGraph,
    /// Patterns cut from random graphs unrelated to any optimization.
    NoOpt,
}

impl ExtractionMode {
    pub const ALL: [ExtractionMode; 5] = [
        ExtractionMode::Adaptive,
        ExtractionMode::BlockOnly,
        ExtractionMode::SubgraphOnly,
        ExtractionMode::WholeGraph,
        ExtractionMode::NoOpt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExtractionMode::Adaptive => "adaptive",
            ExtractionMode::BlockOnly => "block-only",
            ExtractionMode::SubgraphOnly => "subgraph-only",
            ExtractionMode::WholeGraph => "whole-graph",
            ExtractionMode::NoOpt => "noopt",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    fn scope_for(self, pass: PassName) -> Scope {
        match self {
            ExtractionMode::Adaptive | ExtractionMode::NoOpt => match pass.granularity() {
                Granularity::Block => Scope::Block,
                Granularity::Subgraph => Scope::Subgraph,
            },
            ExtractionMode::BlockOnly => Scope::Block,
            ExtractionMode::SubgraphOnly => Scope::Subgraph,
            ExtractionMode::WholeGraph => Scope::WholeGraph,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    Block,
    Subgraph,
    WholeGraph,
}

/// An operand slot whose producer lies outside the pattern.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DanglingInput {
    pub node: NodeId,
    pub slot: usize,
    /// The outside value the slot read in the traced graph. Slots sharing a
    /// source are bound together at synthesis time.
    pub source: ValueId,
    pub ty: TensorType,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DanglingOutput {
    pub value: ValueId,
    pub ty: TensorType,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternProvenance {
    pub corpus_file: String,
    pub extraction_index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pattern {
    pub target: PassName,
    pub scope: Scope,
    /// Induced nodes in definition-before-use order.
    pub nodes: Vec<Node>,
    /// Pattern-local copies of the constants the nodes read.
    pub constants: Vec<Constant>,
    pub inputs: Vec<DanglingInput>,
    pub outputs: Vec<DanglingOutput>,
    pub provenance: PatternProvenance,
}

/// One outside value feeding the pattern, with every slot it reaches.
#[derive(Clone, Debug, PartialEq)]
pub struct InputGroup {
    pub source: ValueId,
    pub ty: TensorType,
    /// (node index within the pattern, slot)
    pub uses: Vec<(usize, usize)>,
}

impl Pattern {
    /// Dangling inputs grouped by source value, in first-use order.
    pub fn input_groups(&self) -> Vec<InputGroup> {
        let mut groups: Vec<InputGroup> = Vec::new();
        for d in &self.inputs {
            let idx = self
                .nodes
                .iter()
                .position(|n| n.id == d.node)
                .expect("dangling input names a pattern node");
            match groups.iter_mut().find(|g| g.source == d.source) {
                Some(g) => g.uses.push((idx, d.slot)),
                None => groups.push(InputGroup {
                    source: d.source.clone(),
                    ty: d.ty.clone(),
                    uses: vec![(idx, d.slot)],
                }),
            }
        }
        groups
    }

    /// Content hash over a canonical renaming, so isomorphic patterns with the
    /// same target collide.
    pub fn canonical_hash(&self) -> String {
        let mut names: HashMap<&str, String> = HashMap::new();
        for d in &self.inputs {
            let next = names.len();
            names.entry(&d.source).or_insert_with(|| format!("i{next}"));
        }
        for (k, c) in self.constants.iter().enumerate() {
            names.insert(&c.id, format!("c{k}"));
        }
        let mut blocks: HashMap<&str, String> = HashMap::new();
        let mut values = 0;
        let mut nodes = Vec::new();
        for n in &self.nodes {
            let inputs: Vec<String> = n.inputs.iter().map(|i| names[i.as_str()].clone()).collect();
            let block = n.block.as_deref().map(|b| {
                let next = blocks.len();
                blocks
                    .entry(b)
                    .or_insert_with(|| format!("b{next}"))
                    .clone()
            });
            let outs: Vec<String> = n.outputs.iter().map(|o| o.ty.to_string()).collect();
            for o in &n.outputs {
                names.insert(&o.id, format!("v{values}"));
                values += 1;
            }
            nodes.push(serde_json::json!([
                n.op.name(),
                inputs,
                n.attrs,
                block,
                outs
            ]));
        }
        let inputs: Vec<String> = self
            .input_groups()
            .iter()
            .map(|g| g.ty.to_string())
            .collect();
        let constants: Vec<serde_json::Value> = self
            .constants
            .iter()
            .map(|c| serde_json::json!([c.ty.to_string(), ConstantDoc::from(c).data]))
            .collect();
        let outputs: Vec<&String> = self
            .outputs
            .iter()
            .map(|o| &names[o.value.as_str()])
            .collect();
        let doc = serde_json::json!({
            "target": self.target,
            "scope": self.scope,
            "inputs": inputs,
            "constants": constants,
            "nodes": nodes,
            "outputs": outputs,
        });
        hex::encode(Sha256::digest(doc.to_string().as_bytes()))
    }

    /// Standalone embedding: dangling inputs become graph inputs with their
    /// concrete types, dangling outputs become graph outputs.
    pub fn embed(&self) -> Graph {
        Graph {
            inputs: self
                .input_groups()
                .into_iter()
                .map(|g| ValueDecl::new(g.source, g.ty))
                .collect(),
            constants: self.constants.clone(),
            nodes: self.nodes.clone(),
            outputs: self.outputs.iter().map(|o| o.value.clone()).collect(),
        }
    }

    /// Whether the target pass rewrites the standalone embedding.
    pub fn triggers(&self) -> bool {
        Compiler::new()
            .run_pass(self.target, &self.embed())
            .is_ok_and(|o| o.fired())
    }
}

/// A type-erased node: operator, edges and attributes only.
#[derive(Clone, Debug, PartialEq)]
pub struct AbstractNode {
    pub id: NodeId,
    pub op: OpKind,
    pub inputs: Vec<ValueId>,
    pub attrs: Attrs,
    pub block: Option<String>,
    pub outputs: Vec<ValueId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AbstractInput {
    pub node: NodeId,
    pub slot: usize,
    pub source: ValueId,
    pub requirement: InputRequirement,
}

/// A pattern whose dangling inputs carry only the operators' intrinsic
/// requirements and whose internal types are left to inference.
#[derive(Clone, Debug, PartialEq)]
pub struct AbstractPattern {
    pub target: PassName,
    pub scope: Scope,
    pub nodes: Vec<AbstractNode>,
    pub constants: Vec<Constant>,
    pub inputs: Vec<AbstractInput>,
    pub outputs: Vec<ValueId>,
}

impl AbstractPattern {
    /// Whether `ty` may feed every slot the given source reaches.
    pub fn admits(&self, source: &str, ty: &TensorType) -> bool {
        self.inputs
            .iter()
            .filter(|i| i.source == source)
            .all(|i| check_compatible(ty, &i.requirement))
    }
}

pub fn abstract_pattern(pattern: &Pattern) -> AbstractPattern {
    let inputs = pattern
        .inputs
        .iter()
        .map(|d| {
            let op = pattern
                .nodes
                .iter()
                .find(|n| n.id == d.node)
                .expect("dangling input names a pattern node")
                .op;
            AbstractInput {
                node: d.node.clone(),
                slot: d.slot,
                source: d.source.clone(),
                requirement: InputRequirement::intrinsic(op, d.slot),
            }
        })
        .collect();
    AbstractPattern {
        target: pattern.target,
        scope: pattern.scope,
        nodes: pattern
            .nodes
            .iter()
            .map(|n| AbstractNode {
                id: n.id.clone(),
                op: n.op,
                inputs: n.inputs.clone(),
                attrs: n.attrs.clone(),
                block: n.block.clone(),
                outputs: n.outputs.iter().map(|o| o.id.clone()).collect(),
            })
            .collect(),
        constants: pattern.constants.clone(),
        inputs,
        outputs: pattern.outputs.iter().map(|o| o.value.clone()).collect(),
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut c = x;
        while self.0[c] != r {
            let next = self.0[c];
            self.0[c] = r;
            c = next;
        }
        r
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
    /// Classes as sorted member lists, ordered by smallest member.
    fn classes(&mut self, members: &[usize]) -> Vec<Vec<usize>> {
        let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &m in members {
            let r = self.find(m);
            by_root.entry(r).or_default().push(m);
        }
        let mut out: Vec<Vec<usize>> = by_root.into_values().collect();
        for c in &mut out {
            c.sort_unstable();
        }
        out.sort_by_key(|c| c[0]);
        out
    }
}

/// Maximal groups of nodes connected through shared non-constant tensors.
pub fn subgraph_groups(graph: &Graph) -> Vec<Vec<usize>> {
    let constants: HashSet<&str> = graph.constants.iter().map(|c| c.id.as_str()).collect();
    let mut uf = UnionFind::new(graph.nodes.len());
    let mut toucher: HashMap<&str, usize> = HashMap::new();
    for (i, n) in graph.nodes.iter().enumerate() {
        for v in n.inputs.iter().map(String::as_str).chain(n.output_ids()) {
            if constants.contains(v) {
                continue;
            }
            match toucher.get(v) {
                Some(&j) => uf.union(i, j),
                None => {
                    toucher.insert(v, i);
                }
            }
        }
    }
    let all: Vec<usize> = (0..graph.nodes.len()).collect();
    uf.classes(&all)
}

/// Same-block regions of each subgraph group, joined by producer-consumer edges.
pub fn block_groups(graph: &Graph) -> Vec<Vec<usize>> {
    let mut producer: HashMap<&str, usize> = HashMap::new();
    for (i, n) in graph.nodes.iter().enumerate() {
        for o in n.output_ids() {
            producer.insert(o, i);
        }
    }
    let mut out = Vec::new();
    for group in subgraph_groups(graph) {
        let mut uf = UnionFind::new(graph.nodes.len());
        for &i in &group {
            for v in &graph.nodes[i].inputs {
                if let Some(&p) = producer.get(v.as_str()) {
                    if graph.nodes[p].block == graph.nodes[i].block {
                        uf.union(p, i);
                    }
                }
            }
        }
        out.extend(uf.classes(&group));
    }
    out.sort_by_key(|c| c[0]);
    out
}

/// Builds the pattern induced by `members` (indices into `graph.nodes`).
pub fn induced_pattern(
    graph: &Graph,
    members: &[usize],
    target: PassName,
    scope: Scope,
    provenance: PatternProvenance,
) -> Pattern {
    let set: HashSet<usize> = members.iter().copied().collect();
    let inside_values: HashSet<&str> = members
        .iter()
        .flat_map(|&i| graph.nodes[i].output_ids())
        .collect();
    let nodes: Vec<Node> = members.iter().map(|&i| graph.nodes[i].clone()).collect();

    let mut constants = Vec::new();
    let mut inputs = Vec::new();
    let mut seen_constants = HashSet::new();
    for n in &nodes {
        for (slot, v) in n.inputs.iter().enumerate() {
            if inside_values.contains(v.as_str()) {
                continue;
            }
            if let Some(c) = graph.constant(v) {
                if seen_constants.insert(v.as_str()) {
                    constants.push(c.clone());
                }
                continue;
            }
            inputs.push(DanglingInput {
                node: n.id.clone(),
                slot,
                source: v.clone(),
                ty: graph.type_of(v).cloned().expect("valid graph"),
            });
        }
    }

    let read_outside: HashSet<&str> = graph
        .nodes
        .iter()
        .enumerate()
        .filter(|(i, _)| !set.contains(i))
        .flat_map(|(_, n)| n.inputs.iter().map(String::as_str))
        .chain(graph.outputs.iter().map(String::as_str))
        .collect();
    let mut outputs: Vec<DanglingOutput> = nodes
        .iter()
        .flat_map(|n| n.outputs.iter())
        .filter(|o| read_outside.contains(o.id.as_str()))
        .map(|o| DanglingOutput {
            value: o.id.clone(),
            ty: o.ty.clone(),
        })
        .collect();
    if outputs.is_empty() {
        let read_inside: HashSet<&str> = nodes
            .iter()
            .flat_map(|n| n.inputs.iter().map(String::as_str))
            .collect();
        outputs = nodes
            .iter()
            .flat_map(|n| n.outputs.iter())
            .filter(|o| !read_inside.contains(o.id.as_str()))
            .map(|o| DanglingOutput {
                value: o.id.clone(),
                ty: o.ty.clone(),
            })
            .collect();
    }

    if scope == Scope::WholeGraph {
        // The whole graph includes constants no node reads; stranding them is
        // exactly what some traced passes clean up.
        for c in &graph.constants {
            if seen_constants.insert(c.id.as_str()) {
                constants.push(c.clone());
            }
        }
    }

    Pattern {
        target,
        scope,
        nodes,
        constants,
        inputs,
        outputs,
        provenance,
    }
}

/// Cuts the patterns of one trace pair. Optimization-derived modes keep only
/// patterns whose standalone embedding fires the pair's pass.
pub fn extract(
    pair: &PassTracePair,
    mode: ExtractionMode,
    corpus_file: &str,
    first_index: usize,
) -> Vec<Pattern> {
    let graph = &pair.graph;
    if graph.nodes.is_empty() {
        return Vec::new();
    }
    let scope = mode.scope_for(pair.pass);
    let groups = match scope {
        Scope::Block => block_groups(graph),
        Scope::Subgraph => subgraph_groups(graph),
        Scope::WholeGraph => vec![(0..graph.nodes.len()).collect()],
    };
    let filter = matches!(
        mode,
        ExtractionMode::Adaptive | ExtractionMode::BlockOnly | ExtractionMode::SubgraphOnly
    );
    groups
        .iter()
        .enumerate()
        .map(|(k, members)| {
            induced_pattern(
                graph,
                members,
                pair.pass,
                scope,
                PatternProvenance {
                    corpus_file: corpus_file.to_string(),
                    extraction_index: first_index + k,
                },
            )
        })
        .filter(|p| !filter || p.triggers())
        .collect()
}

/// Extracts from every pair and drops duplicates by canonical hash, keeping
/// first occurrences in pair order. Whole-graph mode keeps one pattern per pair.
pub fn extract_all(pairs: &[(String, PassTracePair)], mode: ExtractionMode) -> Vec<Pattern> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (file, pair) in pairs {
        let first = index.entry(file.as_str()).or_insert(0);
        let patterns = extract(pair, mode, file, *first);
        *first += patterns.len().max(1);
        for p in patterns {
            if mode == ExtractionMode::WholeGraph || seen.insert(p.canonical_hash()) {
                out.push(p);
            }
        }
    }
    out
}

/// Non-optimization pool: `count` patterns drawn at random from those cut
/// out of `pairs`.
pub fn sample_patterns(pairs: &[(String, PassTracePair)], count: usize, seed: u64) -> Vec<Pattern> {
    let mut all = extract_all(pairs, ExtractionMode::NoOpt);
    all.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    all.truncate(count);
    all
}

#[derive(Serialize, Deserialize)]
struct PatternDoc {
    target: PassName,
    scope: Scope,
    inputs: Vec<DanglingInput>,
    constants: Vec<ConstantDoc>,
    nodes: Vec<NodeDoc>,
    outputs: Vec<DanglingOutput>,
    provenance: PatternProvenance,
}

impl Pattern {
    pub fn to_json(&self) -> String {
        let doc = PatternDoc {
            target: self.target,
            scope: self.scope,
            inputs: self.inputs.clone(),
            constants: self.constants.iter().map(ConstantDoc::from).collect(),
            nodes: self.nodes.iter().map(NodeDoc::from).collect(),
            outputs: self.outputs.clone(),
            provenance: self.provenance.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("patterns always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, ParseError> {
        let doc: PatternDoc = serde_json::from_str(text)?;
        let nodes = doc
            .nodes
            .into_iter()
            .enumerate()
            .map(|(i, n)| n.into_node(&format!("nodes[{i}]")))
            .collect::<Result<_, _>>()?;
        Ok(Pattern {
            target: doc.target,
            scope: doc.scope,
            nodes,
            constants: doc.constants.into_iter().map(Constant::from).collect(),
            inputs: doc.inputs,
            outputs: doc.outputs,
            provenance: doc.provenance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{attrs, AttrValue, DType, GraphBuilder};

    fn t(shape: &[usize]) -> TensorType {
        TensorType::new(DType::F32, shape.to_vec())
    }

    #[test]
    fn two_chains_give_two_subgraphs() {
        let mut b = GraphBuilder::new();
        let x = b.input(t(&[3]));
        let y = b.input(t(&[3]));
        let a = b.op(OpKind::Relu, &[&x], attrs([])).unwrap();
        let a2 = b.op(OpKind::Sigmoid, &[&a], attrs([])).unwrap();
        let c = b.op(OpKind::Relu, &[&y], attrs([])).unwrap();
        b.output(&a2);
        b.output(&c);
        let g = b.build();
        assert_eq!(subgraph_groups(&g), vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn shared_constant_does_not_join_components() {
        let mut b = GraphBuilder::new();
        let x = b.input(t(&[3]));
        let y = b.input(t(&[3]));
        let k = b.splat(t(&[3]), 2.0);
        let p = b.op(OpKind::Mul, &[&x, &k], attrs([])).unwrap();
        let q = b.op(OpKind::Mul, &[&y, &k], attrs([])).unwrap();
        b.output(&p);
        b.output(&q);
        assert_eq!(subgraph_groups(&b.build()).len(), 2);
    }

    #[test]
    fn blocks_split_components() {
        let mut b = GraphBuilder::new();
        let x = b.input(t(&[2, 4]));
        let pre = b.op(OpKind::Sigmoid, &[&x], attrs([])).unwrap();
        b.set_block(Some("b0"));
        let one = b.splat(t(&[2, 4]), 1.0);
        let m = b.op(OpKind::Mul, &[&pre, &one], attrs([])).unwrap();
        let r = b.op(OpKind::Relu, &[&m], attrs([])).unwrap();
        b.set_block(None);
        let post = b.op(OpKind::Sigmoid, &[&r], attrs([])).unwrap();
        b.output(&post);
        let g = b.build();
        assert_eq!(block_groups(&g), vec![vec![0], vec![1, 2], vec![3]]);

        let pair = PassTracePair {
            graph: g,
            pass: PassName::AlgebraicSimplification,
        };
        let pats = extract(&pair, ExtractionMode::Adaptive, "doc", 0);
        assert_eq!(pats.len(), 1);
        let p = &pats[0];
        assert_eq!(p.nodes.len(), 2);
        assert_eq!(p.inputs.len(), 1);
        assert_eq!(p.inputs[0].ty, t(&[2, 4]));
        assert_eq!(p.outputs.len(), 1);
        assert_eq!(p.constants.len(), 1);
        assert!(p.triggers());
    }

    #[test]
    fn single_node_pattern_has_all_inputs_dangling() {
        let mut b = GraphBuilder::new();
        let x = b.input(t(&[2, 2]));
        let y = b.input(t(&[2, 2]));
        let z = b.op(OpKind::MatMul, &[&x, &y], attrs([])).unwrap();
        b.output(&z);
        let g = b.build();
        let p = induced_pattern(
            &g,
            &[0],
            PassName::CommonSubexpressionElimination,
            Scope::Subgraph,
            PatternProvenance {
                corpus_file: "f".into(),
                extraction_index: 0,
            },
        );
        assert_eq!(p.inputs.len(), 2);
        let a = abstract_pattern(&p);
        assert_eq!(
            a.inputs[0].requirement,
            InputRequirement::Abstract {
                rank: crate::ops::RankRule::Exact(2),
                class: crate::ops::DTypeClass::Numeric
            }
        );
    }

    #[test]
    fn pattern_json_round_trip_and_hash() {
        let mut b = GraphBuilder::new();
        let x = b.input(t(&[2, 3]));
        b.set_block(Some("b0"));
        let p = b
            .op(
                OpKind::PermuteDims,
                &[&x],
                attrs([("axes", AttrValue::Ints(vec![1, 0]))]),
            )
            .unwrap();
        let q = b
            .op(
                OpKind::PermuteDims,
                &[&x],
                attrs([("axes", AttrValue::Ints(vec![1, 0]))]),
            )
            .unwrap();
        let c = b
            .op(
                OpKind::Concat,
                &[&p, &q],
                attrs([("axis", AttrValue::Int(0))]),
            )
            .unwrap();
        b.output(&c);
        let pair = PassTracePair {
            graph: b.build(),
            pass: PassName::ReorderPermuteDimsAfterConcat,
        };
        let pats = extract(&pair, ExtractionMode::Adaptive, "doc", 0);
        assert_eq!(pats.len(), 1);
        let back = Pattern::from_json(&pats[0].to_json()).unwrap();
        assert_eq!(back, pats[0]);
        assert_eq!(back.canonical_hash(), pats[0].canonical_hash());
        assert_eq!(pats[0].input_groups().len(), 1);
        assert_eq!(pats[0].input_groups()[0].uses.len(), 2);
    }
}
