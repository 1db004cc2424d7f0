//! Bridge chains that turn an arbitrary context value into one of a required
//! type: Pad/Crop on the flat tail to equalize element counts, Reshape to the
//! target shape, Cast to the target dtype. Each step is emitted only when needed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{AttrValue, Attrs, NameGen, Node, TensorType, ValueDecl, ValueId};
use crate::ops::{infer, OpKind};

/// Default limit on nodes per bridged edge.
pub const DEFAULT_BRIDGE_CAP: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum BridgeError {
    #[error("cannot bridge {from} to {to}: exactly one of them is empty")]
    Impossible { from: TensorType, to: TensorType },
    #[error("bridge from {from} to {to} needs {needed} nodes, cap is {cap}")]
    TooLong {
        from: TensorType,
        to: TensorType,
        needed: usize,
        cap: usize,
    },
}

/// One planned bridge node: operator, attributes and resulting type.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeStep {
    pub op: OpKind,
    pub attrs: Attrs,
    pub ty: TensorType,
}

fn ints(v: impl IntoIterator<Item = usize>) -> AttrValue {
    AttrValue::Ints(v.into_iter().map(|x| x as i64).collect())
}

fn step(op: OpKind, attrs: Attrs, from: &TensorType) -> BridgeStep {
    let ty = infer(op, std::slice::from_ref(from), &attrs)
        .expect("bridge steps are constructed to type-check")
        .remove(0);
    BridgeStep { op, attrs, ty }
}

/// Plans the chain from `from` to `to` without a length cap.
pub fn plan_bridge(from: &TensorType, to: &TensorType) -> Result<Vec<BridgeStep>, BridgeError> {
    let (n_from, n_to) = (from.element_count(), to.element_count());
    if (n_from == 0) != (n_to == 0) {
        return Err(BridgeError::Impossible {
            from: from.clone(),
            to: to.clone(),
        });
    }
    let mut steps = Vec::new();
    let mut cur = from.clone();
    if n_from != n_to {
        // Resizing axis 0 alone equals a flat-tail edit when the difference is a
        // whole number of rows; otherwise flatten first.
        let rest: usize = cur.shape.iter().skip(1).product();
        let diff = n_from.abs_diff(n_to);
        let row_aligned = cur.rank() >= 1 && rest > 0 && diff % rest == 0;
        if !row_aligned {
            let s = step(
                OpKind::Reshape,
                [("shape".to_string(), ints([n_from]))].into(),
                &cur,
            );
            cur = s.ty.clone();
            steps.push(s);
        }
        let rest: usize = cur.shape.iter().skip(1).product();
        let rows = diff / rest;
        let s = if n_to > n_from {
            let mut amounts = vec![0; cur.rank()];
            amounts[0] = rows;
            step(
                OpKind::Pad,
                [
                    ("amounts".to_string(), ints(amounts)),
                    ("value".to_string(), AttrValue::Float(0.0)),
                ]
                .into(),
                &cur,
            )
        } else {
            let mut end = cur.shape.clone();
            end[0] -= rows;
            step(
                OpKind::Crop,
                [
                    ("begin".to_string(), ints(vec![0; cur.rank()])),
                    ("end".to_string(), ints(end)),
                ]
                .into(),
                &cur,
            )
        };
        cur = s.ty.clone();
        steps.push(s);
    }
    if cur.shape != to.shape {
        let s = step(
            OpKind::Reshape,
            [("shape".to_string(), ints(to.shape.iter().copied()))].into(),
            &cur,
        );
        cur = s.ty.clone();
        steps.push(s);
    }
    if cur.dtype != to.dtype {
        let s = step(
            OpKind::Cast,
            [(
                "dtype".to_string(),
                AttrValue::Str(to.dtype.name().to_string()),
            )]
            .into(),
            &cur,
        );
        cur = s.ty.clone();
        steps.push(s);
    }
    debug_assert_eq!(&cur, to);
    Ok(steps)
}

/// Materialized bridge: nodes in execution order and the value carrying the
/// required type (the source itself when no node was needed).
#[derive(Debug, Clone, PartialEq)]
pub struct Bridge {
    pub nodes: Vec<Node>,
    pub terminal: ValueId,
}

pub fn bridge(
    source: &str,
    source_ty: &TensorType,
    target: &TensorType,
    cap: usize,
    names: &mut NameGen,
) -> Result<Bridge, BridgeError> {
    let steps = plan_bridge(source_ty, target)?;
    if steps.len() > cap {
        return Err(BridgeError::TooLong {
            from: source_ty.clone(),
            to: target.clone(),
            needed: steps.len(),
            cap,
        });
    }
    let mut nodes = Vec::with_capacity(steps.len());
    let mut cur = source.to_string();
    for s in steps {
        let out = names.fresh("bridge_v");
        nodes.push(Node {
            id: names.fresh("bridge_n"),
            op: s.op,
            inputs: vec![cur],
            attrs: s.attrs,
            block: None,
            outputs: vec![ValueDecl::new(out.clone(), s.ty)],
        });
        cur = out;
    }
    Ok(Bridge {
        nodes,
        terminal: cur,
    })
}
