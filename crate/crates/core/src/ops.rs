//! Operator registry: arity, intrinsic input constraints, attribute schemas
//! and shape/type inference for every operator kind.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{AttrValue, Attrs, DType, TensorType};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    #[serde(rename = "ReLU")]
    Relu,
    Sigmoid,
    Softmax,
    MatMul,
    Concat,
    PermuteDims,
    Reshape,
    Pad,
    Crop,
    Cast,
    #[serde(rename = "Conv2D")]
    Conv2d,
    BiasAdd,
    /// Only produced by the fusion pass; `FusedAddReLU(a, b) == ReLU(Add(a, b))`.
    #[serde(rename = "FusedAddReLU")]
    FusedAddRelu,
}

impl OpKind {
    pub const ALL: [OpKind; 16] = [
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Relu,
        OpKind::Sigmoid,
        OpKind::Softmax,
        OpKind::MatMul,
        OpKind::Concat,
        OpKind::PermuteDims,
        OpKind::Reshape,
        OpKind::Pad,
        OpKind::Crop,
        OpKind::Cast,
        OpKind::Conv2d,
        OpKind::BiasAdd,
        OpKind::FusedAddRelu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Add => "Add",
            OpKind::Sub => "Sub",
            OpKind::Mul => "Mul",
            OpKind::Relu => "ReLU",
            OpKind::Sigmoid => "Sigmoid",
            OpKind::Softmax => "Softmax",
            OpKind::MatMul => "MatMul",
            OpKind::Concat => "Concat",
            OpKind::PermuteDims => "PermuteDims",
            OpKind::Reshape => "Reshape",
            OpKind::Pad => "Pad",
            OpKind::Crop => "Crop",
            OpKind::Cast => "Cast",
            OpKind::Conv2d => "Conv2D",
            OpKind::BiasAdd => "BiasAdd",
            OpKind::FusedAddRelu => "FusedAddReLU",
        }
    }

    pub fn is_elementwise_binary(self) -> bool {
        matches!(
            self,
            OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::FusedAddRelu
        )
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OpKind::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| format!("unknown operator `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankRule {
    Exact(usize),
    Min(usize),
    Any,
}

impl RankRule {
    pub fn admits(self, rank: usize) -> bool {
        match self {
            RankRule::Exact(r) => rank == r,
            RankRule::Min(r) => rank >= r,
            RankRule::Any => true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DTypeClass {
    Float,
    Numeric,
    Any,
}

impl DTypeClass {
    pub fn admits(self, dtype: DType) -> bool {
        match self {
            DTypeClass::Float => dtype.is_float(),
            DTypeClass::Numeric => dtype != DType::Bool,
            DTypeClass::Any => true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InputRule {
    pub rank: RankRule,
    pub class: DTypeClass,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttrKind {
    Int,
    Ints,
    Float,
    DType,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttrSpec {
    pub name: &'static str,
    pub kind: AttrKind,
    pub required: bool,
}

/// Structural requirements of one operator. These never pin concrete extents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OpConstraint {
    pub op: OpKind,
    pub min_inputs: usize,
    pub max_inputs: usize,
    /// Per-slot rules; the last entry applies to any further variadic slots.
    pub inputs: &'static [InputRule],
    pub attrs: &'static [AttrSpec],
    pub rule: &'static str,
}

impl OpConstraint {
    pub fn input_rule(&self, slot: usize) -> InputRule {
        self.inputs[slot.min(self.inputs.len() - 1)]
    }
}

const fn rule(rank: RankRule, class: DTypeClass) -> InputRule {
    InputRule { rank, class }
}

const fn attr(name: &'static str, kind: AttrKind, required: bool) -> AttrSpec {
    AttrSpec {
        name,
        kind,
        required,
    }
}

const NUMERIC_ANY: InputRule = rule(RankRule::Any, DTypeClass::Numeric);

static CONSTRAINTS: [OpConstraint; 16] = [
    OpConstraint {
        op: OpKind::Add,
        min_inputs: 2,
        max_inputs: 2,
        inputs: &[NUMERIC_ANY],
        attrs: &[],
        rule: "elementwise-same-type",
    },
    OpConstraint {
        op: OpKind::Sub,
        min_inputs: 2,
        max_inputs: 2,
        inputs: &[NUMERIC_ANY],
        attrs: &[],
        rule: "elementwise-same-type",
    },
    OpConstraint {
        op: OpKind::Mul,
        min_inputs: 2,
        max_inputs: 2,
        inputs: &[NUMERIC_ANY],
        attrs: &[],
        rule: "elementwise-same-type",
    },
    OpConstraint {
        op: OpKind::Relu,
        min_inputs: 1,
        max_inputs: 1,
        inputs: &[NUMERIC_ANY],
        attrs: &[],
        rule: "identity",
    },
    OpConstraint {
        op: OpKind::Sigmoid,
        min_inputs: 1,
        max_inputs: 1,
        inputs: &[rule(RankRule::Any, DTypeClass::Float)],
        attrs: &[],
        rule: "identity",
    },
    OpConstraint {
        op: OpKind::Softmax,
        min_inputs: 1,
        max_inputs: 1,
        inputs: &[rule(RankRule::Min(1), DTypeClass::Float)],
        attrs: &[attr("axis", AttrKind::Int, true)],
        rule: "identity",
    },
    OpConstraint {
        op: OpKind::MatMul,
        min_inputs: 2,
        max_inputs: 2,
        inputs: &[rule(RankRule::Exact(2), DTypeClass::Numeric)],
        attrs: &[],
        rule: "matmul",
    },
    OpConstraint {
        op: OpKind::Concat,
        min_inputs: 1,
        max_inputs: 16,
        inputs: &[rule(RankRule::Min(1), DTypeClass::Any)],
        attrs: &[attr("axis", AttrKind::Int, true)],
        rule: "concat",
    },
    OpConstraint {
        op: OpKind::PermuteDims,
        min_inputs: 1,
        max_inputs: 1,
        inputs: &[rule(RankRule::Any, DTypeClass::Any)],
        attrs: &[attr("axes", AttrKind::Ints, true)],
        rule: "permute",
    },
    OpConstraint {
        op: OpKind::Reshape,
        min_inputs: 1,
        max_inputs: 1,
        inputs: &[rule(RankRule::Any, DTypeClass::Any)],
        attrs: &[attr("shape", AttrKind::Ints, true)],
        rule: "reshape",
    },
    OpConstraint {
        op: OpKind::Pad,
        min_inputs: 1,
        max_inputs: 1,
        inputs: &[rule(RankRule::Min(1), DTypeClass::Any)],
        attrs: &[
            attr("amounts", AttrKind::Ints, true),
            attr("value", AttrKind::Float, false),
        ],
        rule: "pad",
    },
    OpConstraint {
        op: OpKind::Crop,
        min_inputs: 1,
        max_inputs: 1,
        inputs: &[rule(RankRule::Min(1), DTypeClass::Any)],
        attrs: &[
            attr("begin", AttrKind::Ints, true),
            attr("end", AttrKind::Ints, true),
        ],
        rule: "crop",
    },
    OpConstraint {
        op: OpKind::Cast,
        min_inputs: 1,
        max_inputs: 1,
        inputs: &[rule(RankRule::Any, DTypeClass::Any)],
        attrs: &[attr("dtype", AttrKind::DType, true)],
        rule: "cast",
    },
    OpConstraint {
        op: OpKind::Conv2d,
        min_inputs: 2,
        max_inputs: 2,
        inputs: &[rule(RankRule::Exact(4), DTypeClass::Float)],
        attrs: &[],
        rule: "conv2d-nchw-valid",
    },
    OpConstraint {
        op: OpKind::BiasAdd,
        min_inputs: 2,
        max_inputs: 2,
        inputs: &[
            rule(RankRule::Min(2), DTypeClass::Numeric),
            rule(RankRule::Exact(1), DTypeClass::Numeric),
        ],
        attrs: &[],
        rule: "bias-add-axis1",
    },
    OpConstraint {
        op: OpKind::FusedAddRelu,
        min_inputs: 2,
        max_inputs: 2,
        inputs: &[NUMERIC_ANY],
        attrs: &[],
        rule: "elementwise-same-type",
    },
];

pub fn constraint(op: OpKind) -> &'static OpConstraint {
    CONSTRAINTS
        .iter()
        .find(|c| c.op == op)
        .expect("every operator has a constraint record")
}

/// What a dangling input slot will accept.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum InputRequirement {
    Concrete { ty: TensorType },
    Abstract { rank: RankRule, class: DTypeClass },
}

impl InputRequirement {
    pub fn concrete(ty: TensorType) -> Self {
        InputRequirement::Concrete { ty }
    }

    /// The intrinsic requirement an operator places on one input slot.
    pub fn intrinsic(op: OpKind, slot: usize) -> Self {
        let r = constraint(op).input_rule(slot);
        InputRequirement::Abstract {
            rank: r.rank,
            class: r.class,
        }
    }
}

pub fn check_compatible(candidate: &TensorType, requirement: &InputRequirement) -> bool {
    match requirement {
        InputRequirement::Concrete { ty } => candidate == ty,
        InputRequirement::Abstract { rank, class } => {
            rank.admits(candidate.rank()) && class.admits(candidate.dtype)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailedRule {
    Arity,
    Rank,
    DType,
    Shape,
    Attr,
}

impl fmt::Display for FailedRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailedRule::Arity => "arity",
            FailedRule::Rank => "rank",
            FailedRule::DType => "dtype",
            FailedRule::Shape => "shape",
            FailedRule::Attr => "attr",
        })
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{op}: {rule} constraint: {detail}")]
pub struct ConstraintViolation {
    pub op: OpKind,
    pub rule: FailedRule,
    pub detail: String,
}

fn violation(op: OpKind, rule: FailedRule, detail: impl Into<String>) -> ConstraintViolation {
    ConstraintViolation {
        op,
        rule,
        detail: detail.into(),
    }
}

pub fn attr_int(attrs: &Attrs, name: &str) -> Option<i64> {
    match attrs.get(name)? {
        AttrValue::Int(v) => Some(*v),
        _ => None,
    }
}

pub fn attr_ints<'a>(attrs: &'a Attrs, name: &str) -> Option<&'a [i64]> {
    match attrs.get(name)? {
        AttrValue::Ints(v) => Some(v),
        _ => None,
    }
}

pub fn attr_float(attrs: &Attrs, name: &str) -> Option<f64> {
    match attrs.get(name)? {
        AttrValue::Float(v) => Some(*v),
        AttrValue::Int(v) => Some(*v as f64),
        _ => None,
    }
}

pub fn attr_dtype(attrs: &Attrs, name: &str) -> Option<DType> {
    match attrs.get(name)? {
        AttrValue::Str(s) => DType::parse(s),
        _ => None,
    }
}

fn check_attrs(c: &OpConstraint, attrs: &Attrs) -> Result<(), ConstraintViolation> {
    for spec in c.attrs {
        let present = match spec.kind {
            AttrKind::Int => attr_int(attrs, spec.name).is_some(),
            AttrKind::Ints => attr_ints(attrs, spec.name).is_some(),
            AttrKind::Float => attr_float(attrs, spec.name).is_some(),
            AttrKind::DType => attr_dtype(attrs, spec.name).is_some(),
        };
        if !present && (spec.required || attrs.contains_key(spec.name)) {
            return Err(violation(
                c.op,
                FailedRule::Attr,
                format!("attribute `{}` missing or ill-typed", spec.name),
            ));
        }
    }
    if let Some(k) = attrs.keys().find(|k| !c.attrs.iter().any(|s| s.name == *k)) {
        return Err(violation(
            c.op,
            FailedRule::Attr,
            format!("unexpected attribute `{k}`"),
        ));
    }
    Ok(())
}

fn axis_in(op: OpKind, axis: i64, rank: usize) -> Result<usize, ConstraintViolation> {
    if axis < 0 || axis as usize >= rank {
        return Err(violation(
            op,
            FailedRule::Attr,
            format!("axis {axis} out of range for rank {rank}"),
        ));
    }
    Ok(axis as usize)
}

fn non_negative(op: OpKind, name: &str, v: &[i64]) -> Result<Vec<usize>, ConstraintViolation> {
    v.iter()
        .map(|&x| {
            usize::try_from(x).map_err(|_| {
                violation(
                    op,
                    FailedRule::Attr,
                    format!("`{name}` entries must be non-negative"),
                )
            })
        })
        .collect()
}

/// Infers output types, checking arity, intrinsic rules and attribute schemas.
pub fn infer(
    op: OpKind,
    inputs: &[TensorType],
    attrs: &Attrs,
) -> Result<Vec<TensorType>, ConstraintViolation> {
    let c = constraint(op);
    if inputs.len() < c.min_inputs || inputs.len() > c.max_inputs {
        return Err(violation(
            op,
            FailedRule::Arity,
            format!(
                "expected {}..={} inputs, got {}",
                c.min_inputs,
                c.max_inputs,
                inputs.len()
            ),
        ));
    }
    for (slot, t) in inputs.iter().enumerate() {
        let r = c.input_rule(slot);
        if !r.rank.admits(t.rank()) {
            let need = match r.rank {
                RankRule::Exact(n) => format!("rank {n} required"),
                RankRule::Min(n) => format!("rank >= {n} required"),
                RankRule::Any => unreachable!(),
            };
            return Err(violation(
                op,
                FailedRule::Rank,
                format!("{need} for input {slot}, got rank {}", t.rank()),
            ));
        }
        if !r.class.admits(t.dtype) {
            return Err(violation(
                op,
                FailedRule::DType,
                format!("input {slot} dtype {} not admitted", t.dtype),
            ));
        }
    }
    check_attrs(c, attrs)?;

    let out = match op {
        OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::FusedAddRelu => {
            if inputs[0] != inputs[1] {
                return Err(violation(
                    op,
                    FailedRule::Shape,
                    format!(
                        "operands must have identical types (no broadcasting): {} vs {}",
                        inputs[0], inputs[1]
                    ),
                ));
            }
            inputs[0].clone()
        }
        OpKind::Relu | OpKind::Sigmoid => inputs[0].clone(),
        OpKind::Softmax => {
            axis_in(op, attr_int(attrs, "axis").unwrap_or(0), inputs[0].rank())?;
            inputs[0].clone()
        }
        OpKind::MatMul => {
            let (a, b) = (&inputs[0], &inputs[1]);
            if a.dtype != b.dtype {
                return Err(violation(op, FailedRule::DType, "operand dtypes differ"));
            }
            if a.shape[1] != b.shape[0] {
                return Err(violation(
                    op,
                    FailedRule::Shape,
                    format!("inner extents differ: {} vs {}", a.shape[1], b.shape[0]),
                ));
            }
            TensorType::new(a.dtype, [a.shape[0], b.shape[1]])
        }
        OpKind::Concat => {
            let first = &inputs[0];
            let axis = axis_in(op, attr_int(attrs, "axis").unwrap_or(0), first.rank())?;
            let mut shape = first.shape.clone();
            for t in &inputs[1..] {
                if t.dtype != first.dtype {
                    return Err(violation(op, FailedRule::DType, "operand dtypes differ"));
                }
                if t.rank() != first.rank() {
                    return Err(violation(op, FailedRule::Rank, "operand ranks differ"));
                }
                for (i, (&a, &b)) in first.shape.iter().zip(&t.shape).enumerate() {
                    if i != axis && a != b {
                        return Err(violation(
                            op,
                            FailedRule::Shape,
                            format!("extent mismatch on axis {i}: {a} vs {b}"),
                        ));
                    }
                }
                shape[axis] += t.shape[axis];
            }
            TensorType::new(first.dtype, shape)
        }
        OpKind::PermuteDims => {
            let axes = non_negative(op, "axes", attr_ints(attrs, "axes").unwrap_or(&[]))?;
            let rank = inputs[0].rank();
            let mut seen = vec![false; rank];
            if axes.len() != rank {
                return Err(violation(
                    op,
                    FailedRule::Attr,
                    format!("axes has {} entries for rank {rank}", axes.len()),
                ));
            }
            for &a in &axes {
                if a >= rank || std::mem::replace(&mut seen[a], true) {
                    return Err(violation(op, FailedRule::Attr, "axes is not a permutation"));
                }
            }
            TensorType::new(
                inputs[0].dtype,
                axes.iter().map(|&a| inputs[0].shape[a]).collect::<Vec<_>>(),
            )
        }
        OpKind::Reshape => {
            let shape = non_negative(op, "shape", attr_ints(attrs, "shape").unwrap_or(&[]))?;
            let target = TensorType::new(inputs[0].dtype, shape);
            if target.element_count() != inputs[0].element_count() {
                return Err(violation(
                    op,
                    FailedRule::Shape,
                    format!(
                        "element count {} cannot be reshaped to {}",
                        inputs[0].element_count(),
                        target
                    ),
                ));
            }
            target
        }
        OpKind::Pad => {
            let amounts = non_negative(op, "amounts", attr_ints(attrs, "amounts").unwrap_or(&[]))?;
            if amounts.len() != inputs[0].rank() {
                return Err(violation(
                    op,
                    FailedRule::Attr,
                    "amounts length must equal rank",
                ));
            }
            TensorType::new(
                inputs[0].dtype,
                inputs[0]
                    .shape
                    .iter()
                    .zip(&amounts)
                    .map(|(e, a)| e + a)
                    .collect::<Vec<_>>(),
            )
        }
        OpKind::Crop => {
            let begin = non_negative(op, "begin", attr_ints(attrs, "begin").unwrap_or(&[]))?;
            let end = non_negative(op, "end", attr_ints(attrs, "end").unwrap_or(&[]))?;
            let t = &inputs[0];
            if begin.len() != t.rank() || end.len() != t.rank() {
                return Err(violation(
                    op,
                    FailedRule::Attr,
                    "begin/end length must equal rank",
                ));
            }
            let mut shape = Vec::with_capacity(t.rank());
            for ((&b, &e), &ext) in begin.iter().zip(&end).zip(&t.shape) {
                if b > e || e > ext {
                    return Err(violation(
                        op,
                        FailedRule::Attr,
                        format!("crop window [{b}, {e}) outside extent {ext}"),
                    ));
                }
                shape.push(e - b);
            }
            TensorType::new(t.dtype, shape)
        }
        OpKind::Cast => inputs[0].with_dtype(attr_dtype(attrs, "dtype").expect("checked above")),
        OpKind::Conv2d => {
            let (x, w) = (&inputs[0], &inputs[1]);
            if x.dtype != w.dtype {
                return Err(violation(op, FailedRule::DType, "operand dtypes differ"));
            }
            if x.shape[1] != w.shape[1] {
                return Err(violation(
                    op,
                    FailedRule::Shape,
                    format!("channel mismatch: {} vs {}", x.shape[1], w.shape[1]),
                ));
            }
            if w.shape[2] > x.shape[2]
                || w.shape[3] > x.shape[3]
                || w.shape[2] == 0
                || w.shape[3] == 0
            {
                return Err(violation(
                    op,
                    FailedRule::Shape,
                    "kernel does not fit input",
                ));
            }
            TensorType::new(
                x.dtype,
                [
                    x.shape[0],
                    w.shape[0],
                    x.shape[2] - w.shape[2] + 1,
                    x.shape[3] - w.shape[3] + 1,
                ],
            )
        }
        OpKind::BiasAdd => {
            let (x, b) = (&inputs[0], &inputs[1]);
            if x.dtype != b.dtype {
                return Err(violation(op, FailedRule::DType, "operand dtypes differ"));
            }
            if b.shape[0] != x.shape[1] {
                return Err(violation(
                    op,
                    FailedRule::Shape,
                    format!(
                        "bias length {} != channel extent {}",
                        b.shape[0], x.shape[1]
                    ),
                ));
            }
            x.clone()
        }
    };
    if let Err(e) = out.check_caps() {
        return Err(violation(op, FailedRule::Shape, e));
    }
    Ok(vec![out])
}
