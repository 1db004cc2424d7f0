//! `.cg.json` graph format.
//!
//! ```json
//! {
//!   "schema": "cgfuzz.graph/1",
//!   "provenance": { ... },                 // optional, synthesized graphs only
//!   "inputs":    [{"id": "x0", "dtype": "f32", "shape": [2, 4]}],
//!   "constants": [{"id": "c0", "dtype": "f32", "shape": [2], "data": [1.0, 1.0]}],
//!   "nodes": [{"id": "n0", "op": "Add", "inputs": ["x0", "c0"], "attrs": {},
//!              "block": "b0", "outputs": [{"id": "v0", "dtype": "f32", "shape": [2]}]}],
//!   "outputs": ["v0"]
//! }
//! ```
//!
//! Keys are emitted in the fixed order above. Edges are implied by node input
//! ids. Constant payloads are flat row-major arrays; non-finite elements are
//! written as the strings `"nan"`, `"inf"` and `"-inf"`.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{Attrs, Constant, DType, Graph, Node, TensorType, ValueDecl};
use crate::ops::OpKind;

pub const GRAPH_SCHEMA: &str = "cgfuzz.graph/1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub struct ParseError {
    /// 1-based line in the source text, when known.
    pub line: Option<usize>,
    /// JSON path of the offending field, when known.
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("parse error")?;
        if let Some(l) = self.line {
            write!(f, " at line {l}")?;
        }
        if let Some(field) = &self.field {
            write!(f, " in `{field}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl ParseError {
    fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            line: None,
            field: Some(field.into()),
            message: message.into(),
        }
    }
}

impl From<serde_json::Error> for ParseError {
    fn from(e: serde_json::Error) -> Self {
        Self {
            line: Some(e.line()),
            field: None,
            message: e.to_string(),
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub(crate) struct ValueDoc {
    pub id: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
}

impl From<&ValueDecl> for ValueDoc {
    fn from(v: &ValueDecl) -> Self {
        Self {
            id: v.id.clone(),
            dtype: v.ty.dtype,
            shape: v.ty.shape.clone(),
        }
    }
}

impl From<ValueDoc> for ValueDecl {
    fn from(v: ValueDoc) -> Self {
        ValueDecl::new(v.id, TensorType::new(v.dtype, v.shape))
    }
}

/// A payload element that survives JSON even when non-finite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Scalar(pub f64);

impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_nan() {
            s.serialize_str("nan")
        } else if v == f64::INFINITY {
            s.serialize_str("inf")
        } else if v == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(v)
        }
    }
}

impl<'de> Deserialize<'de> for Scalar {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Scalar(v)),
            Raw::Str(s) => match s.as_str() {
                "nan" => Ok(Scalar(f64::NAN)),
                "inf" => Ok(Scalar(f64::INFINITY)),
                "-inf" => Ok(Scalar(f64::NEG_INFINITY)),
                other => Err(serde::de::Error::custom(format!("bad scalar `{other}`"))),
            },
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub(crate) struct ConstantDoc {
    pub id: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub data: Vec<Scalar>,
}

impl From<&Constant> for ConstantDoc {
    fn from(c: &Constant) -> Self {
        Self {
            id: c.id.clone(),
            dtype: c.ty.dtype,
            shape: c.ty.shape.clone(),
            data: c.data.iter().map(|&v| Scalar(v)).collect(),
        }
    }
}

impl From<ConstantDoc> for Constant {
    fn from(c: ConstantDoc) -> Self {
        Constant {
            id: c.id,
            ty: TensorType::new(c.dtype, c.shape),
            data: c.data.into_iter().map(|s| s.0).collect(),
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub(crate) struct NodeDoc {
    pub id: String,
    pub op: String,
    pub inputs: Vec<String>,
    #[serde(default)]
    pub attrs: Attrs,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block: Option<String>,
    pub outputs: Vec<ValueDoc>,
}

impl From<&Node> for NodeDoc {
    fn from(n: &Node) -> Self {
        Self {
            id: n.id.clone(),
            op: n.op.name().to_string(),
            inputs: n.inputs.clone(),
            attrs: n.attrs.clone(),
            block: n.block.clone(),
            outputs: n.outputs.iter().map(ValueDoc::from).collect(),
        }
    }
}

impl NodeDoc {
    pub(crate) fn into_node(self, path: &str) -> Result<Node, ParseError> {
        let op: OpKind = self
            .op
            .parse()
            .map_err(|e: String| ParseError::field(format!("{path}.op"), e))?;
        Ok(Node {
            id: self.id,
            op,
            inputs: self.inputs,
            attrs: self.attrs,
            block: self.block,
            outputs: self.outputs.into_iter().map(ValueDecl::from).collect(),
        })
    }
}

#[derive(Serialize, Deserialize, Debug)]
struct GraphDoc {
    schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<serde_json::Value>,
    inputs: Vec<ValueDoc>,
    #[serde(default)]
    constants: Vec<ConstantDoc>,
    nodes: Vec<NodeDoc>,
    outputs: Vec<String>,
}

fn to_doc(graph: &Graph, provenance: Option<serde_json::Value>) -> GraphDoc {
    GraphDoc {
        schema: GRAPH_SCHEMA.to_string(),
        provenance,
        inputs: graph.inputs.iter().map(ValueDoc::from).collect(),
        constants: graph.constants.iter().map(ConstantDoc::from).collect(),
        nodes: graph.nodes.iter().map(NodeDoc::from).collect(),
        outputs: graph.outputs.clone(),
    }
}

pub fn serialize(graph: &Graph) -> String {
    serde_json::to_string_pretty(&to_doc(graph, None)).expect("graph documents always serialize")
}

/// Serializes with a provenance header that is ignored by [`parse`].
pub fn serialize_with_provenance<P: Serialize>(graph: &Graph, provenance: &P) -> String {
    let header = serde_json::to_value(provenance).expect("provenance serializes");
    serde_json::to_string_pretty(&to_doc(graph, Some(header)))
        .expect("graph documents always serialize")
}

/// Stable content hash: hex SHA-256 of the canonical serialization.
pub fn graph_hash(graph: &Graph) -> String {
    hex::encode(Sha256::digest(serialize(graph).as_bytes()))
}

pub fn parse(text: &str) -> Result<Graph, ParseError> {
    let (graph, _) = parse_with_provenance(text)?;
    Ok(graph)
}

pub fn parse_with_provenance(text: &str) -> Result<(Graph, Option<serde_json::Value>), ParseError> {
    let doc: GraphDoc = serde_json::from_str(text)?;
    if doc.schema != GRAPH_SCHEMA {
        return Err(ParseError::field(
            "schema",
            format!("unsupported schema `{}`", doc.schema),
        ));
    }
    let mut nodes = Vec::with_capacity(doc.nodes.len());
    for (i, n) in doc.nodes.into_iter().enumerate() {
        nodes.push(n.into_node(&format!("nodes[{i}]"))?);
    }
    let graph = Graph {
        inputs: doc.inputs.into_iter().map(ValueDecl::from).collect(),
        constants: doc.constants.into_iter().map(Constant::from).collect(),
        nodes,
        outputs: doc.outputs,
    };
    check_references(&graph)?;
    Ok((graph, doc.provenance))
}

/// Identifier-level integrity: unique ids and no dangling references. Typing
/// is left to [`crate::graph::validate`].
fn check_references(graph: &Graph) -> Result<(), ParseError> {
    let mut values = HashSet::new();
    for (i, v) in graph.inputs.iter().enumerate() {
        if !values.insert(v.id.as_str()) {
            return Err(ParseError::field(
                format!("inputs[{i}].id"),
                format!("duplicate value id `{}`", v.id),
            ));
        }
    }
    for (i, c) in graph.constants.iter().enumerate() {
        if !values.insert(c.id.as_str()) {
            return Err(ParseError::field(
                format!("constants[{i}].id"),
                format!("duplicate value id `{}`", c.id),
            ));
        }
    }
    let mut node_ids = HashSet::new();
    for (i, n) in graph.nodes.iter().enumerate() {
        if !node_ids.insert(n.id.as_str()) {
            return Err(ParseError::field(
                format!("nodes[{i}].id"),
                format!("duplicate node id `{}`", n.id),
            ));
        }
        for (s, o) in n.outputs.iter().enumerate() {
            if !values.insert(o.id.as_str()) {
                return Err(ParseError::field(
                    format!("nodes[{i}].outputs[{s}].id"),
                    format!("duplicate value id `{}`", o.id),
                ));
            }
        }
    }
    for (i, n) in graph.nodes.iter().enumerate() {
        for (s, input) in n.inputs.iter().enumerate() {
            if !values.contains(input.as_str()) {
                return Err(ParseError::field(
                    format!("nodes[{i}].inputs[{s}]"),
                    format!("reference to undefined value `{input}`"),
                ));
            }
        }
    }
    for (i, o) in graph.outputs.iter().enumerate() {
        if !values.contains(o.as_str()) {
            return Err(ParseError::field(
                format!("outputs[{i}]"),
                format!("reference to undefined value `{o}`"),
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{attrs, AttrValue, GraphBuilder};

    fn sample() -> Graph {
        let mut b = GraphBuilder::new();
        let x = b.input(TensorType::new(DType::F32, [2, 4]));
        let c = b.constant(TensorType::new(DType::F32, [2, 4]), vec![0.5; 8]);
        b.set_block(Some("b0"));
        let s = b.op(OpKind::Add, &[&x, &c], Attrs::new()).unwrap();
        let r = b
            .op(
                OpKind::Reshape,
                &[&s],
                attrs([("shape", AttrValue::Ints(vec![8]))]),
            )
            .unwrap();
        b.set_block(None);
        let p = b
            .op(
                OpKind::Pad,
                &[&r],
                attrs([
                    ("amounts", AttrValue::Ints(vec![2])),
                    ("value", AttrValue::Float(0.0)),
                ]),
            )
            .unwrap();
        b.output(&p);
        b.build()
    }

    #[test]
    fn round_trip() {
        let g = sample();
        let text = serialize(&g);
        assert_eq!(parse(&text).unwrap(), g);
        assert_eq!(serialize(&parse(&text).unwrap()), text);
    }

    #[test]
    fn key_order_is_fixed() {
        let text = serialize(&sample());
        let pos = |k: &str| text.find(&format!("\"{k}\"")).unwrap();
        assert!(pos("schema") < pos("inputs"));
        assert!(pos("inputs") < pos("constants"));
        assert!(pos("constants") < pos("nodes"));
    }

    #[test]
    fn non_finite_constants_survive() {
        let mut g = sample();
        g.constants[0].data[0] = f64::NAN;
        g.constants[0].data[1] = f64::NEG_INFINITY;
        let back = parse(&serialize(&g)).unwrap();
        assert!(back.constants[0].data[0].is_nan());
        assert_eq!(back.constants[0].data[1], f64::NEG_INFINITY);
    }

    #[test]
    fn duplicate_node_id_rejected() {
        let mut g = sample();
        g.nodes[1].id = g.nodes[0].id.clone();
        let err = parse(&serialize(&g)).unwrap_err();
        assert!(err.message.contains("duplicate node id"), "{err}");
        assert_eq!(err.field.as_deref(), Some("nodes[1].id"));
    }

    #[test]
    fn missing_reference_rejected() {
        let mut g = sample();
        g.nodes[1].inputs[0] = "ghost".into();
        let err = parse(&serialize(&g)).unwrap_err();
        assert!(err.message.contains("undefined value `ghost`"), "{err}");
    }

    #[test]
    fn malformed_json_has_line() {
        let err = parse("{\n  \"schema\": \"cgfuzz.graph/1\",\n  \"inputs\": [\n}").unwrap_err();
        assert!(err.line.is_some());
    }

    #[test]
    fn provenance_header_is_optional() {
        let g = sample();
        let text = serialize_with_provenance(&g, &serde_json::json!({"seed": 3}));
        let (back, prov) = parse_with_provenance(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(prov.unwrap()["seed"], 3);
    }
}
