//! Computational-graph data model: tensor types, values, nodes and graphs,
//! plus well-formedness validation and deterministic topological ordering.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ops::{self, OpKind};

/// Maximum tensor rank accepted anywhere in the framework.
pub const MAX_RANK: usize = 8;
/// Maximum extent of a single axis.
pub const MAX_EXTENT: usize = 1 << 16;

pub type ValueId = String;
pub type NodeId = String;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
    I32,
    I64,
    Bool,
}

impl DType {
    pub const ALL: [DType; 5] = [DType::F32, DType::F64, DType::I32, DType::I64, DType::Bool];

    pub fn is_float(self) -> bool {
        matches!(self, DType::F32 | DType::F64)
    }

    pub fn is_int(self) -> bool {
        matches!(self, DType::I32 | DType::I64)
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::F32 => "f32",
            DType::F64 => "f64",
            DType::I32 => "i32",
            DType::I64 => "i64",
            DType::Bool => "bool",
        }
    }

    pub fn parse(s: &str) -> Option<DType> {
        DType::ALL.into_iter().find(|d| d.name() == s)
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Element dtype plus static shape. Rank 0 is a scalar.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TensorType {
    pub dtype: DType,
    pub shape: Vec<usize>,
}

impl TensorType {
    pub fn new(dtype: DType, shape: impl Into<Vec<usize>>) -> Self {
        Self {
            dtype,
            shape: shape.into(),
        }
    }

    pub fn scalar(dtype: DType) -> Self {
        Self::new(dtype, Vec::new())
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Product of extents; the empty product is 1.
    pub fn element_count(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn with_dtype(&self, dtype: DType) -> Self {
        Self::new(dtype, self.shape.clone())
    }

    pub fn check_caps(&self) -> Result<(), String> {
        if self.rank() > MAX_RANK {
            return Err(format!("rank {} exceeds cap {MAX_RANK}", self.rank()));
        }
        if let Some(e) = self.shape.iter().find(|&&e| e > MAX_EXTENT) {
            return Err(format!("extent {e} exceeds cap {MAX_EXTENT}"));
        }
        Ok(())
    }
}

impl fmt::Display for TensorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[", self.dtype)?;
        for (i, e) in self.shape.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{e}")?;
        }
        f.write_str("]")
    }
}

/// Scalar or integer-list node attribute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Int(i64),
    Float(f64),
    Ints(Vec<i64>),
    Str(String),
}

pub type Attrs = BTreeMap<String, AttrValue>;

/// A typed value declaration: graph inputs and node outputs.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ValueDecl {
    pub id: ValueId,
    pub ty: TensorType,
}

impl ValueDecl {
    pub fn new(id: impl Into<ValueId>, ty: TensorType) -> Self {
        Self { id: id.into(), ty }
    }
}

/// Literal tensor stored inline, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Constant {
    pub id: ValueId,
    pub ty: TensorType,
    pub data: Vec<f64>,
}

impl Constant {
    /// The single value every element holds, if the payload is uniform.
    pub fn splat_value(&self) -> Option<f64> {
        let first = *self.data.first()?;
        self.data
            .iter()
            .all(|v| v.to_bits() == first.to_bits())
            .then_some(first)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub op: OpKind,
    pub inputs: Vec<ValueId>,
    pub attrs: Attrs,
    /// Dataflow-block membership; block-level passes never rewrite across blocks.
    pub block: Option<String>,
    pub outputs: Vec<ValueDecl>,
}

impl Node {
    pub fn output_ids(&self) -> impl Iterator<Item = &str> {
        self.outputs.iter().map(|o| o.id.as_str())
    }
}

/// Where a value comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Producer {
    Input(usize),
    Constant(usize),
    /// Node index and output slot.
    Node(usize, usize),
}

/// A static DAG of operator nodes. `nodes` is kept in definition-before-use order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Graph {
    pub inputs: Vec<ValueDecl>,
    pub constants: Vec<Constant>,
    pub nodes: Vec<Node>,
    pub outputs: Vec<ValueId>,
}

impl Graph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn producers(&self) -> HashMap<&str, Producer> {
        let mut map = HashMap::new();
        for (i, v) in self.inputs.iter().enumerate() {
            map.insert(v.id.as_str(), Producer::Input(i));
        }
        for (i, c) in self.constants.iter().enumerate() {
            map.insert(c.id.as_str(), Producer::Constant(i));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            for (s, o) in n.outputs.iter().enumerate() {
                map.insert(o.id.as_str(), Producer::Node(i, s));
            }
        }
        map
    }

    pub fn value_types(&self) -> HashMap<&str, &TensorType> {
        let mut map = HashMap::new();
        for v in &self.inputs {
            map.insert(v.id.as_str(), &v.ty);
        }
        for c in &self.constants {
            map.insert(c.id.as_str(), &c.ty);
        }
        for n in &self.nodes {
            for o in &n.outputs {
                map.insert(o.id.as_str(), &o.ty);
            }
        }
        map
    }

    pub fn type_of(&self, id: &str) -> Option<&TensorType> {
        self.inputs
            .iter()
            .find(|v| v.id == id)
            .map(|v| &v.ty)
            .or_else(|| self.constants.iter().find(|c| c.id == id).map(|c| &c.ty))
            .or_else(|| {
                self.nodes
                    .iter()
                    .flat_map(|n| n.outputs.iter())
                    .find(|o| o.id == id)
                    .map(|o| &o.ty)
            })
    }

    pub fn constant(&self, id: &str) -> Option<&Constant> {
        self.constants.iter().find(|c| c.id == id)
    }

    /// Number of node-input slots reading each value.
    pub fn use_counts(&self) -> HashMap<&str, usize> {
        let mut map = HashMap::new();
        for n in &self.nodes {
            for i in &n.inputs {
                *map.entry(i.as_str()).or_insert(0) += 1;
            }
        }
        map
    }

    pub fn is_output(&self, id: &str) -> bool {
        self.outputs.iter().any(|o| o == id)
    }

    pub fn all_value_ids(&self) -> impl Iterator<Item = &str> {
        self.inputs
            .iter()
            .map(|v| v.id.as_str())
            .chain(self.constants.iter().map(|c| c.id.as_str()))
            .chain(self.nodes.iter().flat_map(|n| n.output_ids()))
    }
}

/// Allocates identifiers that do not collide with anything already in a graph.
#[derive(Debug, Clone)]
pub struct NameGen {
    taken: HashSet<String>,
    counter: usize,
}

impl NameGen {
    pub fn for_graph(graph: &Graph) -> Self {
        let mut taken: HashSet<String> = graph.all_value_ids().map(str::to_owned).collect();
        taken.extend(graph.nodes.iter().map(|n| n.id.clone()));
        taken.extend(graph.nodes.iter().filter_map(|n| n.block.clone()));
        Self { taken, counter: 0 }
    }

    pub fn fresh(&mut self, prefix: &str) -> String {
        loop {
            let candidate = format!("{prefix}{}", self.counter);
            self.counter += 1;
            if self.taken.insert(candidate.clone()) {
                return candidate;
            }
        }
    }
}

/// Orders identifiers like `n2` before `n10`.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    fn split(s: &str) -> (&str, Option<u64>) {
        let digits = s.len() - s.trim_end_matches(|c: char| c.is_ascii_digit()).len();
        let (head, tail) = s.split_at(s.len() - digits);
        (head, tail.parse().ok())
    }
    let (ha, na) = split(a);
    let (hb, nb) = split(b);
    ha.cmp(hb).then(na.cmp(&nb)).then(a.cmp(b))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    DuplicateValue,
    DuplicateNode,
    TypeCap,
    ConstantPayload,
    UseBeforeDefinition,
    UndefinedValue,
    Constraint,
    OutputTypeMismatch,
    UndefinedOutput,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first(&self) -> Option<&Violation> {
        self.violations.first()
    }

    fn push(&mut self, kind: ViolationKind, message: String) {
        self.violations.push(Violation { kind, message });
    }
}

/// Checks every structural and typing invariant of `graph`, re-running shape
/// inference on every node.
pub fn validate(graph: &Graph) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen_values: HashSet<&str> = HashSet::new();
    let mut seen_nodes: HashSet<&str> = HashSet::new();
    let mut defined: HashMap<&str, &TensorType> = HashMap::new();

    let later_defs: HashSet<&str> = graph.nodes.iter().flat_map(|n| n.output_ids()).collect();

    for v in &graph.inputs {
        if !seen_values.insert(&v.id) {
            report.push(
                ViolationKind::DuplicateValue,
                format!("duplicate value id `{}`", v.id),
            );
        }
        if let Err(e) = v.ty.check_caps() {
            report.push(ViolationKind::TypeCap, format!("input `{}`: {e}", v.id));
        }
        defined.insert(&v.id, &v.ty);
    }
    for c in &graph.constants {
        if !seen_values.insert(&c.id) {
            report.push(
                ViolationKind::DuplicateValue,
                format!("duplicate value id `{}`", c.id),
            );
        }
        if let Err(e) = c.ty.check_caps() {
            report.push(ViolationKind::TypeCap, format!("constant `{}`: {e}", c.id));
        }
        if c.data.len() != c.ty.element_count() {
            report.push(
                ViolationKind::ConstantPayload,
                format!(
                    "constant `{}` payload has {} elements, type {} needs {}",
                    c.id,
                    c.data.len(),
                    c.ty,
                    c.ty.element_count()
                ),
            );
        }
        defined.insert(&c.id, &c.ty);
    }

    for node in &graph.nodes {
        if !seen_nodes.insert(&node.id) {
            report.push(
                ViolationKind::DuplicateNode,
                format!("duplicate node id `{}`", node.id),
            );
        }
        let mut input_types = Vec::with_capacity(node.inputs.len());
        let mut inputs_ok = true;
        for input in &node.inputs {
            match defined.get(input.as_str()) {
                Some(ty) => input_types.push((*ty).clone()),
                None => {
                    inputs_ok = false;
                    if later_defs.contains(input.as_str()) {
                        report.push(
                            ViolationKind::UseBeforeDefinition,
                            format!("use before definition: node `{}` reads `{input}`", node.id),
                        );
                    } else {
                        report.push(
                            ViolationKind::UndefinedValue,
                            format!("undefined value: node `{}` reads `{input}`", node.id),
                        );
                    }
                }
            }
        }
        if inputs_ok {
            match ops::infer(node.op, &input_types, &node.attrs) {
                Ok(inferred) => {
                    let declared: Vec<&TensorType> = node.outputs.iter().map(|o| &o.ty).collect();
                    if inferred.len() != declared.len()
                        || inferred.iter().zip(&declared).any(|(a, b)| a != *b)
                    {
                        let shown: Vec<String> = inferred.iter().map(|t| t.to_string()).collect();
                        let decl: Vec<String> = declared.iter().map(|t| t.to_string()).collect();
                        report.push(
                            ViolationKind::OutputTypeMismatch,
                            format!(
                                "output type mismatch at node `{}` ({}): declared [{}], inferred [{}]",
                                node.id,
                                node.op,
                                decl.join(", "),
                                shown.join(", ")
                            ),
                        );
                    }
                }
                Err(e) => report.push(
                    ViolationKind::Constraint,
                    format!("constraint violation at node `{}`: {e}", node.id),
                ),
            }
        }
        for o in &node.outputs {
            if !seen_values.insert(&o.id) {
                report.push(
                    ViolationKind::DuplicateValue,
                    format!("duplicate value id `{}`", o.id),
                );
            }
            if let Err(e) = o.ty.check_caps() {
                report.push(ViolationKind::TypeCap, format!("value `{}`: {e}", o.id));
            }
            defined.insert(&o.id, &o.ty);
        }
    }

    for out in &graph.outputs {
        if !defined.contains_key(out.as_str()) {
            report.push(
                ViolationKind::UndefinedOutput,
                format!("graph output `{out}` is not defined"),
            );
        }
    }
    report
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("cycle detected among nodes {0:?}")]
pub struct CycleDetected(pub Vec<NodeId>);

/// Kahn's algorithm with ready nodes drawn in natural id order. Returns node
/// indices into `graph.nodes`.
pub fn topo_order(graph: &Graph) -> Result<Vec<usize>, CycleDetected> {
    let mut producer: HashMap<&str, usize> = HashMap::new();
    for (i, n) in graph.nodes.iter().enumerate() {
        for o in n.output_ids() {
            producer.insert(o, i);
        }
    }
    let mut indegree = vec![0usize; graph.nodes.len()];
    let mut successors: Vec<Vec<usize>> = vec![Vec::new(); graph.nodes.len()];
    for (i, n) in graph.nodes.iter().enumerate() {
        let preds: BTreeSet<usize> = n
            .inputs
            .iter()
            .filter_map(|v| producer.get(v.as_str()).copied())
            .collect();
        indegree[i] = preds.len();
        for p in preds {
            successors[p].push(i);
        }
    }

    #[derive(PartialEq, Eq)]
    struct Ready<'a>(&'a str, usize);
    impl Ord for Ready<'_> {
        fn cmp(&self, other: &Self) -> Ordering {
            natural_cmp(self.0, other.0).then(self.1.cmp(&other.1))
        }
    }
    impl PartialOrd for Ready<'_> {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }

    let mut ready: BTreeSet<Ready> = indegree
        .iter()
        .enumerate()
        .filter(|(_, &d)| d == 0)
        .map(|(i, _)| Ready(&graph.nodes[i].id, i))
        .collect();
    let mut order = Vec::with_capacity(graph.nodes.len());
    while let Some(Ready(_, i)) = ready.pop_first() {
        order.push(i);
        for &s in &successors[i] {
            indegree[s] -= 1;
            if indegree[s] == 0 {
                ready.insert(Ready(&graph.nodes[s].id, s));
            }
        }
    }
    if order.len() != graph.nodes.len() {
        let stuck = indegree
            .iter()
            .enumerate()
            .filter(|(_, &d)| d > 0)
            .map(|(i, _)| graph.nodes[i].id.clone())
            .collect();
        return Err(CycleDetected(stuck));
    }
    Ok(order)
}

/// Incremental graph construction with inferred output types.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    graph: Graph,
    types: HashMap<ValueId, TensorType>,
    values: usize,
    nodes: usize,
    block: Option<String>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn next_value(&mut self) -> ValueId {
        let id = format!("v{}", self.values);
        self.values += 1;
        id
    }

    pub fn input(&mut self, ty: TensorType) -> ValueId {
        let id = format!("x{}", self.graph.inputs.len());
        self.types.insert(id.clone(), ty.clone());
        self.graph.inputs.push(ValueDecl::new(id.clone(), ty));
        id
    }

    pub fn constant(&mut self, ty: TensorType, data: Vec<f64>) -> ValueId {
        let id = format!("c{}", self.graph.constants.len());
        self.types.insert(id.clone(), ty.clone());
        self.graph.constants.push(Constant {
            id: id.clone(),
            ty,
            data,
        });
        id
    }

    pub fn splat(&mut self, ty: TensorType, value: f64) -> ValueId {
        let n = ty.element_count();
        self.constant(ty, vec![value; n])
    }

    /// Sets the block attribute applied to subsequently added nodes.
    pub fn set_block(&mut self, block: Option<&str>) {
        self.block = block.map(str::to_owned);
    }

    pub fn node(
        &mut self,
        op: OpKind,
        inputs: &[&str],
        attrs: Attrs,
    ) -> Result<Vec<ValueId>, ops::ConstraintViolation> {
        let input_types: Vec<TensorType> = inputs
            .iter()
            .map(|i| {
                self.types
                    .get(*i)
                    .cloned()
                    .unwrap_or_else(|| panic!("builder: unknown value {i}"))
            })
            .collect();
        let out_types = ops::infer(op, &input_types, &attrs)?;
        let id = format!("n{}", self.nodes);
        self.nodes += 1;
        let outputs: Vec<ValueDecl> = out_types
            .into_iter()
            .map(|t| {
                let v = self.next_value();
                self.types.insert(v.clone(), t.clone());
                ValueDecl::new(v, t)
            })
            .collect();
        let ids = outputs.iter().map(|o| o.id.clone()).collect();
        self.graph.nodes.push(Node {
            id,
            op,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            attrs,
            block: self.block.clone(),
            outputs,
        });
        Ok(ids)
    }

    /// Single-output convenience wrapper around [`GraphBuilder::node`].
    pub fn op(
        &mut self,
        op: OpKind,
        inputs: &[&str],
        attrs: Attrs,
    ) -> Result<ValueId, ops::ConstraintViolation> {
        Ok(self.node(op, inputs, attrs)?.remove(0))
    }

    pub fn type_of(&self, id: &str) -> Option<&TensorType> {
        self.types.get(id)
    }

    pub fn output(&mut self, id: &str) {
        self.graph.outputs.push(id.to_string());
    }

    pub fn build(self) -> Graph {
        self.graph
    }
}

/// Shorthand for building attribute maps.
pub fn attrs<const N: usize>(items: [(&str, AttrValue); N]) -> Attrs {
    items.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn relu_graph(declared: TensorType) -> Graph {
        Graph {
            inputs: vec![ValueDecl::new("x", TensorType::new(DType::F32, [2, 3]))],
            constants: vec![],
            nodes: vec![Node {
                id: "n0".into(),
                op: OpKind::Relu,
                inputs: vec!["x".into()],
                attrs: Attrs::new(),
                block: None,
                outputs: vec![ValueDecl::new("y", declared)],
            }],
            outputs: vec!["y".into()],
        }
    }

    #[test]
    fn relu_identity_shape_validates() {
        assert!(validate(&relu_graph(TensorType::new(DType::F32, [2, 3]))).is_ok());
    }

    #[test]
    fn wrong_declared_shape_is_reported() {
        let r = validate(&relu_graph(TensorType::new(DType::F32, [3, 2])));
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].kind, ViolationKind::OutputTypeMismatch);
        assert!(r.violations[0].message.contains("output type mismatch"));
    }

    #[test]
    fn use_before_definition_is_reported() {
        let t = TensorType::new(DType::F32, [2]);
        let g = Graph {
            inputs: vec![ValueDecl::new("x", t.clone())],
            constants: vec![],
            nodes: vec![
                Node {
                    id: "n0".into(),
                    op: OpKind::Relu,
                    inputs: vec!["b".into()],
                    attrs: Attrs::new(),
                    block: None,
                    outputs: vec![ValueDecl::new("a", t.clone())],
                },
                Node {
                    id: "n1".into(),
                    op: OpKind::Relu,
                    inputs: vec!["x".into()],
                    attrs: Attrs::new(),
                    block: None,
                    outputs: vec![ValueDecl::new("b", t)],
                },
            ],
            outputs: vec!["a".into()],
        };
        let r = validate(&g);
        assert!(r
            .violations
            .iter()
            .any(|v| v.kind == ViolationKind::UseBeforeDefinition
                && v.message.contains("use before definition")));
    }

    #[test]
    fn undefined_output_and_duplicates() {
        let mut g = relu_graph(TensorType::new(DType::F32, [2, 3]));
        g.outputs.push("nope".into());
        g.nodes.push(g.nodes[0].clone());
        let kinds: Vec<_> = validate(&g)
            .violations
            .into_iter()
            .map(|v| v.kind)
            .collect();
        assert!(kinds.contains(&ViolationKind::UndefinedOutput));
        assert!(kinds.contains(&ViolationKind::DuplicateNode));
        assert!(kinds.contains(&ViolationKind::DuplicateValue));
    }

    fn unary(id: &str, input: &str, out: &str) -> Node {
        Node {
            id: id.into(),
            op: OpKind::Relu,
            inputs: vec![input.into()],
            attrs: Attrs::new(),
            block: None,
            outputs: vec![ValueDecl::new(out, TensorType::new(DType::F32, [1]))],
        }
    }

    #[test]
    fn topo_order_empty_chain_and_diamond() {
        assert!(topo_order(&Graph::default()).unwrap().is_empty());

        let mut chain = Graph {
            inputs: vec![ValueDecl::new("x", TensorType::new(DType::F32, [1]))],
            ..Graph::default()
        };
        let mut prev = "x".to_string();
        for i in 0..5 {
            let out = format!("v{i}");
            chain.nodes.push(unary(&format!("n{i}"), &prev, &out));
            prev = out;
        }
        assert_eq!(topo_order(&chain).unwrap(), vec![0, 1, 2, 3, 4]);

        // a -> {c, b} -> d, listed with c before b; ties break by id.
        let t = TensorType::new(DType::F32, [1]);
        let diamond = Graph {
            inputs: vec![ValueDecl::new("x", t.clone())],
            constants: vec![],
            nodes: vec![
                unary("a", "x", "va"),
                unary("c", "va", "vc"),
                unary("b", "va", "vb"),
                Node {
                    id: "d".into(),
                    op: OpKind::Add,
                    inputs: vec!["vb".into(), "vc".into()],
                    attrs: Attrs::new(),
                    block: None,
                    outputs: vec![ValueDecl::new("vd", t)],
                },
            ],
            outputs: vec!["vd".into()],
        };
        assert_eq!(topo_order(&diamond).unwrap(), vec![0, 2, 1, 3]);
        assert_eq!(topo_order(&diamond), topo_order(&diamond));
    }

    #[test]
    fn topo_order_detects_cycle() {
        let g = Graph {
            nodes: vec![unary("a", "vb", "va"), unary("b", "va", "vb")],
            ..Graph::default()
        };
        assert!(topo_order(&g).is_err());
    }

    #[test]
    fn natural_order() {
        assert_eq!(natural_cmp("n2", "n10"), Ordering::Less);
        assert_eq!(natural_cmp("a", "b"), Ordering::Less);
        assert_eq!(natural_cmp("n10", "n10"), Ordering::Equal);
    }

    #[test]
    fn element_count_of_scalar_is_one() {
        assert_eq!(TensorType::scalar(DType::F32).element_count(), 1);
        assert_eq!(TensorType::new(DType::F32, [2, 0, 3]).element_count(), 0);
    }
}
