//! Reference interpreter. Every operator is evaluated in `f64` and rounded to
//! the declared dtype at the node boundary.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{topo_order, Attrs, DType, Graph, TensorType, ValueId};
use crate::ops::{attr_dtype, attr_float, attr_int, attr_ints, OpKind};

#[derive(Clone, Debug, PartialEq)]
pub struct TensorValue {
    pub ty: TensorType,
    /// Row-major; length equals `ty.element_count()`.
    pub data: Vec<f64>,
}

impl TensorValue {
    pub fn new(ty: TensorType, data: Vec<f64>) -> Self {
        debug_assert_eq!(ty.element_count(), data.len());
        Self { ty, data }
    }

    pub fn from_f32(shape: &[usize], data: &[f64]) -> Self {
        Self::new(
            TensorType::new(DType::F32, shape),
            round_all(DType::F32, data),
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExecError {
    #[error("missing input `{0}`")]
    MissingInput(ValueId),
    #[error("input `{id}` has type {got}, graph declares {expected}")]
    InputType {
        id: ValueId,
        expected: TensorType,
        got: TensorType,
    },
    #[error("node `{node}`: {cause}")]
    Node { node: String, cause: String },
}

/// Rounds an f64 result to what `dtype` can hold. Float-to-int truncates toward
/// zero and saturates; bool maps nonzero to 1.
pub fn round_to(dtype: DType, x: f64) -> f64 {
    match dtype {
        DType::F64 => x,
        DType::F32 => x as f32 as f64,
        DType::I32 => x as i32 as f64,
        DType::I64 => x as i64 as f64,
        DType::Bool => {
            if x != 0.0 && !x.is_nan() {
                1.0
            } else {
                0.0
            }
        }
    }
}

fn round_all(dtype: DType, data: &[f64]) -> Vec<f64> {
    data.iter().map(|&x| round_to(dtype, x)).collect()
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

fn relu(x: f64) -> f64 {
    if x > 0.0 || x.is_nan() {
        x
    } else {
        0.0
    }
}

/// Evaluates one operator on concrete operands, producing values already
/// rounded to `out_types`.
pub fn eval_op(
    op: OpKind,
    attrs: &Attrs,
    inputs: &[&TensorValue],
    out_types: &[TensorType],
) -> Result<Vec<TensorValue>, String> {
    let out_ty = out_types
        .first()
        .ok_or_else(|| "operator has no declared output".to_string())?;
    let n = out_ty.element_count();
    let zip2 = |f: fn(f64, f64) -> f64| -> Vec<f64> {
        inputs[0]
            .data
            .iter()
            .zip(&inputs[1].data)
            .map(|(&a, &b)| f(a, b))
            .collect()
    };
    let raw: Vec<f64> = match op {
        OpKind::Add => zip2(|a, b| a + b),
        OpKind::Sub => zip2(|a, b| a - b),
        OpKind::Mul => zip2(|a, b| a * b),
        OpKind::FusedAddRelu => zip2(|a, b| relu(a + b)),
        OpKind::Relu => inputs[0].data.iter().map(|&x| relu(x)).collect(),
        OpKind::Sigmoid => inputs[0]
            .data
            .iter()
            .map(|&x| 1.0 / (1.0 + (-x).exp()))
            .collect(),
        OpKind::Softmax => {
            let t = &inputs[0].ty;
            let axis = attr_int(attrs, "axis").unwrap_or(0) as usize;
            let len = t.shape[axis];
            let inner: usize = t.shape[axis + 1..].iter().product();
            let outer: usize = t.shape[..axis].iter().product();
            let x = &inputs[0].data;
            let mut out = vec![0.0; n];
            for o in 0..outer {
                for i in 0..inner {
                    let idx = |k: usize| (o * len + k) * inner + i;
                    let max = (0..len)
                        .map(|k| x[idx(k)])
                        .fold(f64::NEG_INFINITY, f64::max);
                    let sum: f64 = (0..len).map(|k| (x[idx(k)] - max).exp()).sum();
                    for k in 0..len {
                        out[idx(k)] = (x[idx(k)] - max).exp() / sum;
                    }
                }
            }
            out
        }
        OpKind::MatMul => {
            let (a, b) = (inputs[0], inputs[1]);
            let (m, k, p) = (a.ty.shape[0], a.ty.shape[1], b.ty.shape[1]);
            let mut out = vec![0.0; m * p];
            for i in 0..m {
                for j in 0..p {
                    out[i * p + j] = (0..k).map(|t| a.data[i * k + t] * b.data[t * p + j]).sum();
                }
            }
            out
        }
        OpKind::Concat => {
            let axis = attr_int(attrs, "axis").unwrap_or(0) as usize;
            let outer: usize = out_ty.shape[..axis].iter().product();
            let mut out = Vec::with_capacity(n);
            for o in 0..outer {
                for t in inputs {
                    let chunk: usize = t.ty.shape[axis..].iter().product();
                    out.extend_from_slice(&t.data[o * chunk..(o + 1) * chunk]);
                }
            }
            out
        }
        OpKind::PermuteDims => {
            let axes = attr_ints(attrs, "axes").unwrap_or(&[]);
            let in_strides = strides(&inputs[0].ty.shape);
            let out_shape = &out_ty.shape;
            let mut out = Vec::with_capacity(n);
            let mut idx = vec![0usize; out_shape.len()];
            for _ in 0..n {
                let src: usize = idx
                    .iter()
                    .zip(axes)
                    .map(|(&j, &a)| j * in_strides[a as usize])
                    .sum();
                out.push(inputs[0].data[src]);
                advance(&mut idx, out_shape);
            }
            out
        }
        OpKind::Reshape | OpKind::Cast => inputs[0].data.clone(),
        OpKind::Pad => {
            let value = attr_float(attrs, "value").unwrap_or(0.0);
            let in_shape = &inputs[0].ty.shape;
            let in_strides = strides(in_shape);
            let mut out = Vec::with_capacity(n);
            let mut idx = vec![0usize; out_ty.rank()];
            for _ in 0..n {
                if idx.iter().zip(in_shape).all(|(i, e)| i < e) {
                    let src: usize = idx.iter().zip(&in_strides).map(|(i, s)| i * s).sum();
                    out.push(inputs[0].data[src]);
                } else {
                    out.push(value);
                }
                advance(&mut idx, &out_ty.shape);
            }
            out
        }
        OpKind::Crop => {
            let begin = attr_ints(attrs, "begin").unwrap_or(&[]);
            let in_strides = strides(&inputs[0].ty.shape);
            let mut out = Vec::with_capacity(n);
            let mut idx = vec![0usize; out_ty.rank()];
            for _ in 0..n {
                let src: usize = idx
                    .iter()
                    .zip(begin)
                    .zip(&in_strides)
                    .map(|((i, b), s)| (i + *b as usize) * s)
                    .sum();
                out.push(inputs[0].data[src]);
                advance(&mut idx, &out_ty.shape);
            }
            out
        }
        OpKind::Conv2d => {
            let (x, w) = (inputs[0], inputs[1]);
            let [bn, c, h, wd] = [x.ty.shape[0], x.ty.shape[1], x.ty.shape[2], x.ty.shape[3]];
            let [o, _, kh, kw] = [w.ty.shape[0], w.ty.shape[1], w.ty.shape[2], w.ty.shape[3]];
            let (oh, ow) = (h - kh + 1, wd - kw + 1);
            let mut out = vec![0.0; n];
            for b in 0..bn {
                for oc in 0..o {
                    for y in 0..oh {
                        for xx in 0..ow {
                            let mut acc = 0.0;
                            for ic in 0..c {
                                for ky in 0..kh {
                                    for kx in 0..kw {
                                        acc += x.data[((b * c + ic) * h + y + ky) * wd + xx + kx]
                                            * w.data[((oc * c + ic) * kh + ky) * kw + kx];
                                    }
                                }
                            }
                            out[((b * o + oc) * oh + y) * ow + xx] = acc;
                        }
                    }
                }
            }
            out
        }
        OpKind::BiasAdd => {
            let x = inputs[0];
            let c = x.ty.shape[1];
            let inner: usize = x.ty.shape[2..].iter().product();
            x.data
                .iter()
                .enumerate()
                .map(|(i, &v)| v + inputs[1].data[(i / inner) % c])
                .collect()
        }
    };
    if raw.len() != n {
        return Err(format!(
            "{op} produced {} elements, expected {n}",
            raw.len()
        ));
    }
    let dtype = match op {
        OpKind::Cast => attr_dtype(attrs, "dtype").unwrap_or(out_ty.dtype),
        _ => out_ty.dtype,
    };
    Ok(vec![TensorValue::new(
        out_ty.clone(),
        round_all(dtype, &raw),
    )])
}

fn advance(idx: &mut [usize], shape: &[usize]) {
    for i in (0..idx.len()).rev() {
        idx[i] += 1;
        if idx[i] < shape[i] {
            return;
        }
        idx[i] = 0;
    }
}

/// Runs `graph` on `inputs`, returning graph outputs positionally.
pub fn execute(
    graph: &Graph,
    inputs: &BTreeMap<ValueId, TensorValue>,
) -> Result<Vec<TensorValue>, ExecError> {
    let mut env: HashMap<&str, TensorValue> = HashMap::new();
    for decl in &graph.inputs {
        let v = inputs
            .get(&decl.id)
            .ok_or_else(|| ExecError::MissingInput(decl.id.clone()))?;
        if v.ty != decl.ty || v.data.len() != decl.ty.element_count() {
            return Err(ExecError::InputType {
                id: decl.id.clone(),
                expected: decl.ty.clone(),
                got: v.ty.clone(),
            });
        }
        env.insert(&decl.id, v.clone());
    }
    for c in &graph.constants {
        env.insert(&c.id, TensorValue::new(c.ty.clone(), c.data.clone()));
    }
    let order = topo_order(graph).map_err(|e| ExecError::Node {
        node: String::new(),
        cause: e.to_string(),
    })?;
    for i in order {
        let node = &graph.nodes[i];
        let args: Vec<&TensorValue> = node
            .inputs
            .iter()
            .map(|id| {
                env.get(id.as_str()).ok_or_else(|| ExecError::Node {
                    node: node.id.clone(),
                    cause: format!("operand `{id}` unavailable"),
                })
            })
            .collect::<Result<_, _>>()?;
        let out_types: Vec<TensorType> = node.outputs.iter().map(|o| o.ty.clone()).collect();
        let results =
            eval_op(node.op, &node.attrs, &args, &out_types).map_err(|cause| ExecError::Node {
                node: node.id.clone(),
                cause,
            })?;
        for (decl, value) in node.outputs.iter().zip(results) {
            env.insert(&decl.id, value);
        }
    }
    graph
        .outputs
        .iter()
        .map(|id| {
            env.get(id.as_str())
                .cloned()
                .ok_or_else(|| ExecError::Node {
                    node: String::new(),
                    cause: format!("graph output `{id}` never computed"),
                })
        })
        .collect()
}

/// Deterministic random inputs: floats uniform in [-1, 1], integers uniform in
/// [-4, 4], bools fair coin flips.
pub fn gen_inputs(graph: &Graph, seed: u64) -> BTreeMap<ValueId, TensorValue> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    graph
        .inputs
        .iter()
        .map(|decl| {
            let n = decl.ty.element_count();
            let data = (0..n)
                .map(|_| match decl.ty.dtype {
                    DType::F32 | DType::F64 => {
                        round_to(decl.ty.dtype, rng.random_range(-1.0..=1.0))
                    }
                    DType::I32 | DType::I64 => rng.random_range(-4i64..=4) as f64,
                    DType::Bool => f64::from(u8::from(rng.random_bool(0.5))),
                })
                .collect();
            (decl.id.clone(), TensorValue::new(decl.ty.clone(), data))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{attrs, AttrValue, GraphBuilder};

    fn run1(g: &Graph, x: TensorValue) -> Vec<TensorValue> {
        let mut inputs = BTreeMap::new();
        inputs.insert(g.inputs[0].id.clone(), x);
        execute(g, &inputs).unwrap()
    }

    #[test]
    fn add_zero_constant_is_identity() {
        let mut b = GraphBuilder::new();
        let t = TensorType::new(DType::F32, [3]);
        let x = b.input(t.clone());
        let z = b.splat(t, 0.0);
        let y = b.op(OpKind::Add, &[&x, &z], Attrs::new()).unwrap();
        b.output(&y);
        let out = run1(&b.build(), TensorValue::from_f32(&[3], &[1.0, 2.0, 3.0]));
        assert_eq!(out[0].data, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn relu_values() {
        let mut b = GraphBuilder::new();
        let x = b.input(TensorType::new(DType::F32, [3]));
        let y = b.op(OpKind::Relu, &[&x], Attrs::new()).unwrap();
        b.output(&y);
        let out = run1(&b.build(), TensorValue::from_f32(&[3], &[-1.0, 0.0, 2.0]));
        assert_eq!(out[0].data, vec![0.0, 0.0, 2.0]);
    }

    #[test]
    fn cast_truncates_toward_zero() {
        let mut b = GraphBuilder::new();
        let x = b.input(TensorType::new(DType::F32, [4]));
        let y = b
            .op(
                OpKind::Cast,
                &[&x],
                attrs([("dtype", AttrValue::Str("i32".into()))]),
            )
            .unwrap();
        let z = b
            .op(
                OpKind::Cast,
                &[&x],
                attrs([("dtype", AttrValue::Str("bool".into()))]),
            )
            .unwrap();
        b.output(&y);
        b.output(&z);
        let out = run1(
            &b.build(),
            TensorValue::from_f32(&[4], &[-1.5, -0.5, 0.0, 2.75]),
        );
        assert_eq!(out[0].data, vec![-1.0, 0.0, 0.0, 2.0]);
        assert_eq!(out[1].data, vec![1.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn permute_concat_pad_crop_reference_values() {
        let mut b = GraphBuilder::new();
        let x = b.input(TensorType::new(DType::F32, [2, 3]));
        let p = b
            .op(
                OpKind::PermuteDims,
                &[&x],
                attrs([("axes", AttrValue::Ints(vec![1, 0]))]),
            )
            .unwrap();
        let c = b
            .op(
                OpKind::Concat,
                &[&x, &x],
                attrs([("axis", AttrValue::Int(1))]),
            )
            .unwrap();
        let pad = b
            .op(
                OpKind::Pad,
                &[&x],
                attrs([("amounts", AttrValue::Ints(vec![1, 0]))]),
            )
            .unwrap();
        let crop = b
            .op(
                OpKind::Crop,
                &[&x],
                attrs([
                    ("begin", AttrValue::Ints(vec![0, 1])),
                    ("end", AttrValue::Ints(vec![2, 3])),
                ]),
            )
            .unwrap();
        for v in [&p, &c, &pad, &crop] {
            b.output(v);
        }
        let out = run1(
            &b.build(),
            TensorValue::from_f32(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
        );
        assert_eq!(out[0].data, vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        assert_eq!(
            out[1].data,
            vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 4.0, 5.0, 6.0]
        );
        assert_eq!(
            out[2].data,
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 0.0, 0.0, 0.0]
        );
        assert_eq!(out[3].data, vec![2.0, 3.0, 5.0, 6.0]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut b = GraphBuilder::new();
        let x = b.input(TensorType::new(DType::F64, [2, 3]));
        let y = b
            .op(OpKind::Softmax, &[&x], attrs([("axis", AttrValue::Int(1))]))
            .unwrap();
        b.output(&y);
        let g = b.build();
        let out = execute(&g, &gen_inputs(&g, 3)).unwrap();
        for row in out[0].data.chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn conv2d_against_hand_computed() {
        let mut b = GraphBuilder::new();
        let x = b.input(TensorType::new(DType::F64, [1, 1, 3, 3]));
        let w = b.constant(
            TensorType::new(DType::F64, [1, 1, 2, 2]),
            vec![1.0, 0.0, 0.0, 1.0],
        );
        let y = b.op(OpKind::Conv2d, &[&x, &w], Attrs::new()).unwrap();
        b.output(&y);
        let g = b.build();
        let mut inputs = BTreeMap::new();
        inputs.insert(
            "x0".to_string(),
            TensorValue::new(
                TensorType::new(DType::F64, [1, 1, 3, 3]),
                (1..=9).map(f64::from).collect(),
            ),
        );
        let out = execute(&g, &inputs).unwrap();
        // Diagonal kernel sums x[i][j] + x[i+1][j+1].
        assert_eq!(out[0].data, vec![6.0, 8.0, 12.0, 14.0]);
    }

    #[test]
    fn gen_inputs_deterministic_and_ranged() {
        let mut b = GraphBuilder::new();
        b.input(TensorType::scalar(DType::F32));
        b.input(TensorType::new(DType::I32, [50]));
        let g = b.build();
        let a = gen_inputs(&g, 7);
        assert_eq!(a, gen_inputs(&g, 7));
        assert_ne!(a, gen_inputs(&g, 8));
        let s = &a["x0"].data;
        assert_eq!(s.len(), 1);
        assert!((-1.0..=1.0).contains(&s[0]));
        assert!(a["x1"]
            .data
            .iter()
            .all(|v| (-4.0..=4.0).contains(v) && v.fract() == 0.0));
    }

    #[test]
    fn missing_input_reported() {
        let mut b = GraphBuilder::new();
        let x = b.input(TensorType::new(DType::F32, [1]));
        b.output(&x);
        assert_eq!(
            execute(&b.build(), &BTreeMap::new()),
            Err(ExecError::MissingInput("x0".into()))
        );
    }
}
