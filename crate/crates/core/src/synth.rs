//! Splicing patterns into seed graphs.
//!
//! The pattern goes in at a synthesis point of the seed's topological order.
//! Each dangling input is repaired by reusing a preceding context value (exact
//! type first, then any value meeting the operators' intrinsic requirements),
//! or failing that by a bridge chain from a random preceding value. Each
//! dangling output is wired into a succeeding consumer slot of identical type
//! or, if none exists, becomes a graph output.

use std::collections::HashMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bridge::{bridge, plan_bridge, DEFAULT_BRIDGE_CAP};
use crate::extract::{abstract_pattern, Pattern};
use crate::graph::{
    topo_order, validate, Constant, Graph, NameGen, Node, NodeId, TensorType, ValueDecl, ValueId,
};
use crate::ops::{infer, OpKind};

pub const DEFAULT_NODE_CAP: usize = 200;
/// Largest tensor a synthesized graph may carry.
pub const MAX_SYNTH_ELEMENTS: usize = 1 << 14;
/// Candidates examined per dangling input before moving to the next strategy.
const CANDIDATE_TRIES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Reuse and bridge repairs.
    #[default]
    Repair,
    /// Baseline: bind dangling edges to random context values, no repairs.
    DirectInsert,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Repair => "repair",
            Strategy::DirectInsert => "direct-insert",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Strategy::Repair, Strategy::DirectInsert]
            .into_iter()
            .find(|m| m.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub node_cap: usize,
    pub bridge_cap: usize,
    pub strategy: Strategy,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            node_cap: DEFAULT_NODE_CAP,
            bridge_cap: DEFAULT_BRIDGE_CAP,
            strategy: Strategy::Repair,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscardReason {
    NoBridgeSource,
    InferenceConflict,
    SizeCap,
}

impl DiscardReason {
    pub fn name(self) -> &'static str {
        match self {
            DiscardReason::NoBridgeSource => "no-bridge-source",
            DiscardReason::InferenceConflict => "inference-conflict",
            DiscardReason::SizeCap => "size-cap",
        }
    }
}

/// Where a synthesized test comes from: a seed, a pattern, a point and an RNG seed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisPlan {
    pub seed: usize,
    /// Canonical hash of the pattern.
    pub pattern: String,
    pub point: usize,
    pub rng_seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyUsage {
    pub reused_concrete: usize,
    pub reused_abstract: usize,
    pub bridged: usize,
    pub bridge_nodes: usize,
    pub rewired_outputs: usize,
    pub appended_outputs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisOutcome {
    pub result: Result<Graph, DiscardReason>,
    pub usage: StrategyUsage,
    /// Ids of the spliced pattern nodes in the result graph, in pattern order.
    pub pattern_nodes: Vec<NodeId>,
}

/// Context around a synthesis point.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextPools {
    /// Topological order of the seed's nodes.
    pub order: Vec<usize>,
    pub point: usize,
    /// Graph inputs, constants and outputs of nodes before the point.
    pub preceding: Vec<(ValueId, TensorType)>,
    /// (node index, slot) of every operand of nodes at or after the point.
    pub succeeding: Vec<(usize, usize)>,
}

pub fn context_pools(graph: &Graph, point: usize) -> ContextPools {
    let order = topo_order(graph).expect("seed graphs are acyclic");
    let point = point.min(order.len());
    let mut preceding: Vec<(ValueId, TensorType)> = graph
        .inputs
        .iter()
        .map(|v| (v.id.clone(), v.ty.clone()))
        .chain(graph.constants.iter().map(|c| (c.id.clone(), c.ty.clone())))
        .collect();
    for &i in &order[..point] {
        preceding.extend(
            graph.nodes[i]
                .outputs
                .iter()
                .map(|o| (o.id.clone(), o.ty.clone())),
        );
    }
    let succeeding = order[point..]
        .iter()
        .flat_map(|&i| (0..graph.nodes[i].inputs.len()).map(move |s| (i, s)))
        .collect();
    ContextPools {
        order,
        point,
        preceding,
        succeeding,
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Operand {
    Group(usize),
    Internal(ValueId),
    Const(usize),
}

struct Group {
    concrete: TensorType,
}

/// The pattern with fresh names and dangling slots replaced by group references.
struct Renamed {
    nodes: Vec<(Node, Vec<Operand>)>,
    constants: Vec<Constant>,
    splat: Vec<Option<f64>>,
    groups: Vec<Group>,
    outputs: Vec<ValueId>,
}

fn rename(pattern: &Pattern, names: &mut NameGen) -> Renamed {
    let mut map: HashMap<&str, ValueId> = HashMap::new();
    let mut blocks: HashMap<&str, String> = HashMap::new();
    let constants: Vec<Constant> = pattern
        .constants
        .iter()
        .map(|c| Constant {
            id: names.fresh("p_c"),
            ..c.clone()
        })
        .collect();
    let const_index: HashMap<&str, usize> = pattern
        .constants
        .iter()
        .enumerate()
        .map(|(i, c)| (c.id.as_str(), i))
        .collect();
    let groups_src = pattern.input_groups();
    let mut group_of: HashMap<(usize, usize), usize> = HashMap::new();
    for (g, grp) in groups_src.iter().enumerate() {
        for &u in &grp.uses {
            group_of.insert(u, g);
        }
    }
    let mut nodes = Vec::with_capacity(pattern.nodes.len());
    for (ni, n) in pattern.nodes.iter().enumerate() {
        let operands: Vec<Operand> = n
            .inputs
            .iter()
            .enumerate()
            .map(|(slot, v)| {
                if let Some(&g) = group_of.get(&(ni, slot)) {
                    Operand::Group(g)
                } else if let Some(mapped) = map.get(v.as_str()) {
                    Operand::Internal(mapped.clone())
                } else {
                    Operand::Const(const_index[v.as_str()])
                }
            })
            .collect();
        let outputs: Vec<ValueDecl> = n
            .outputs
            .iter()
            .map(|o| {
                let id = names.fresh("p_v");
                map.insert(&o.id, id.clone());
                ValueDecl::new(id, o.ty.clone())
            })
            .collect();
        let block = n.block.as_deref().map(|b| {
            blocks
                .entry(b)
                .or_insert_with(|| names.fresh("blk"))
                .clone()
        });
        nodes.push((
            Node {
                id: names.fresh("p_n"),
                op: n.op,
                inputs: n.inputs.clone(),
                attrs: n.attrs.clone(),
                block,
                outputs,
            },
            operands,
        ));
    }
    Renamed {
        splat: pattern
            .constants
            .iter()
            .map(Constant::splat_value)
            .collect(),
        constants,
        groups: groups_src
            .into_iter()
            .map(|g| Group { concrete: g.ty })
            .collect(),
        outputs: pattern
            .outputs
            .iter()
            .map(|o| map[o.value.as_str()].clone())
            .collect(),
        nodes,
    }
}

/// Types flowing through the spliced pattern for a (partial) group binding.
struct Typing {
    values: HashMap<ValueId, TensorType>,
    constants: Vec<Option<TensorType>>,
}

/// Re-infers the pattern under `bound`. Nodes with an unknown operand are
/// skipped; any inference failure is a conflict.
fn infer_pattern(r: &Renamed, bound: &[Option<TensorType>]) -> Result<Typing, ()> {
    let mut t = Typing {
        values: HashMap::new(),
        constants: vec![None; r.constants.len()],
    };
    for (node, operands) in &r.nodes {
        let known = |t: &Typing, o: &Operand| -> Option<TensorType> {
            match o {
                Operand::Group(g) => bound[*g].clone(),
                Operand::Internal(v) => t.values.get(v).cloned(),
                Operand::Const(c) => t.constants[*c].clone(),
            }
        };
        // Resolve constants first: uniform ones follow their operand partner.
        for (slot, o) in operands.iter().enumerate() {
            let Operand::Const(c) = o else { continue };
            if t.constants[*c].is_some() {
                continue;
            }
            let original = r.constants[*c].ty.clone();
            let resolved = if r.splat[*c].is_none() {
                Some(original)
            } else if node.op.is_elementwise_binary() {
                let other = &operands[1 - slot];
                match other {
                    Operand::Const(_) => Some(original),
                    _ => known(&t, other),
                }
            } else if node.op == OpKind::BiasAdd && slot == 1 {
                known(&t, &operands[0])
                    .filter(|x| x.rank() >= 2)
                    .map(|x| TensorType::new(x.dtype, [x.shape[1]]))
            } else {
                Some(original)
            };
            t.constants[*c] = resolved;
        }
        let types: Option<Vec<TensorType>> = operands.iter().map(|o| known(&t, o)).collect();
        let Some(types) = types else { continue };
        let out = infer(node.op, &types, &node.attrs).map_err(|_| ())?;
        for (decl, ty) in node.outputs.iter().zip(out) {
            if ty.check_caps().is_err() || ty.element_count() > MAX_SYNTH_ELEMENTS {
                return Err(());
            }
            t.values.insert(decl.id.clone(), ty);
        }
    }
    Ok(t)
}

#[derive(Clone, Debug)]
enum Binding {
    Reuse(ValueId, TensorType, bool),
    Bridge(ValueId, TensorType, TensorType),
}

impl Binding {
    fn ty(&self) -> &TensorType {
        match self {
            Binding::Reuse(_, t, _) => t,
            Binding::Bridge(_, _, t) => t,
        }
    }
}

fn bind_groups(
    r: &Renamed,
    abstract_ok: &[Vec<bool>],
    preceding: &[(ValueId, TensorType)],
    cfg: &SynthConfig,
    concrete_only: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Binding>, DiscardReason> {
    let mut bound: Vec<Option<TensorType>> = vec![None; r.groups.len()];
    let mut out = Vec::with_capacity(r.groups.len());
    for (g, grp) in r.groups.iter().enumerate() {
        let consistent = |ty: &TensorType, bound: &mut Vec<Option<TensorType>>| {
            bound[g] = Some(ty.clone());
            let ok = infer_pattern(r, bound).is_ok();
            bound[g] = None;
            ok
        };
        let mut exact: Vec<usize> = (0..preceding.len())
            .filter(|&i| preceding[i].1 == grp.concrete)
            .collect();
        exact.shuffle(rng);
        let mut chosen = exact
            .iter()
            .take(CANDIDATE_TRIES)
            .find(|&&i| consistent(&preceding[i].1, &mut bound))
            .map(|&i| Binding::Reuse(preceding[i].0.clone(), preceding[i].1.clone(), true));
        if chosen.is_none() && !concrete_only {
            let mut loose: Vec<usize> = (0..preceding.len())
                .filter(|&i| abstract_ok[g][i] && preceding[i].1 != grp.concrete)
                .collect();
            loose.shuffle(rng);
            chosen = loose
                .iter()
                .take(CANDIDATE_TRIES)
                .find(|&&i| consistent(&preceding[i].1, &mut bound))
                .map(|&i| Binding::Reuse(preceding[i].0.clone(), preceding[i].1.clone(), false));
        }
        if chosen.is_none() {
            if !consistent(&grp.concrete, &mut bound) {
                return Err(DiscardReason::InferenceConflict);
            }
            let mut sources: Vec<usize> = (0..preceding.len()).collect();
            sources.shuffle(rng);
            chosen = sources
                .iter()
                .find(|&&i| {
                    plan_bridge(&preceding[i].1, &grp.concrete)
                        .is_ok_and(|steps| steps.len() <= cfg.bridge_cap)
                })
                .map(|&i| {
                    Binding::Bridge(
                        preceding[i].0.clone(),
                        preceding[i].1.clone(),
                        grp.concrete.clone(),
                    )
                });
        }
        let Some(b) = chosen else {
            return Err(DiscardReason::NoBridgeSource);
        };
        bound[g] = Some(b.ty().clone());
        out.push(b);
    }
    Ok(out)
}

/// Splices `pattern` into `seed` at topological position `point`. Pure in its
/// arguments: the same inputs always give the same outcome.
pub fn synthesize(
    seed: &Graph,
    pattern: &Pattern,
    point: usize,
    rng_seed: u64,
    cfg: &SynthConfig,
) -> SynthesisOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let pools = context_pools(seed, point);
    let mut names = NameGen::for_graph(seed);
    let r = rename(pattern, &mut names);
    let mut usage = StrategyUsage::default();
    let pattern_nodes: Vec<NodeId> = r.nodes.iter().map(|(n, _)| n.id.clone()).collect();
    let discard = |reason, usage| SynthesisOutcome {
        result: Err(reason),
        usage,
        pattern_nodes: pattern_nodes.clone(),
    };

    if seed.nodes.len() + pattern.nodes.len() > cfg.node_cap {
        return discard(DiscardReason::SizeCap, usage);
    }

    let (bindings, typing) = match cfg.strategy {
        Strategy::Repair => {
            let abs = abstract_pattern(pattern);
            let group_sources: Vec<ValueId> = pattern
                .input_groups()
                .into_iter()
                .map(|g| g.source)
                .collect();
            let abstract_ok: Vec<Vec<bool>> = group_sources
                .iter()
                .map(|s| {
                    pools
                        .preceding
                        .iter()
                        .map(|(_, ty)| abs.admits(s, ty))
                        .collect()
                })
                .collect();
            let first = bind_groups(&r, &abstract_ok, &pools.preceding, cfg, false, &mut rng);
            let bindings = match first {
                Ok(b) => b,
                Err(DiscardReason::InferenceConflict) => {
                    match bind_groups(&r, &abstract_ok, &pools.preceding, cfg, true, &mut rng) {
                        Ok(b) => b,
                        Err(reason) => return discard(reason, usage),
                    }
                }
                Err(reason) => return discard(reason, usage),
            };
            let bound: Vec<Option<TensorType>> =
                bindings.iter().map(|b| Some(b.ty().clone())).collect();
            match infer_pattern(&r, &bound) {
                Ok(t) => (bindings, Some(t)),
                Err(()) => return discard(DiscardReason::InferenceConflict, usage),
            }
        }
        Strategy::DirectInsert => {
            let bindings = r
                .groups
                .iter()
                .map(|_| {
                    let (v, t) = pools
                        .preceding
                        .choose(&mut rng)
                        .expect("seeds have inputs")
                        .clone();
                    Binding::Reuse(v, t, false)
                })
                .collect();
            (bindings, None)
        }
    };

    // Materialize bindings.
    let mut bridge_nodes = Vec::new();
    let mut group_values = Vec::with_capacity(bindings.len());
    for b in &bindings {
        match b {
            Binding::Reuse(v, _, exact) => {
                if *exact {
                    usage.reused_concrete += 1;
                } else {
                    usage.reused_abstract += 1;
                }
                group_values.push(v.clone());
            }
            Binding::Bridge(src, src_ty, target) => {
                let br = bridge(src, src_ty, target, cfg.bridge_cap, &mut names)
                    .expect("planned bridge materializes");
                usage.bridged += 1;
                usage.bridge_nodes += br.nodes.len();
                bridge_nodes.extend(br.nodes);
                group_values.push(br.terminal);
            }
        }
    }

    let mut constants = seed.constants.clone();
    for (c, constant) in r.constants.iter().enumerate() {
        let mut constant = constant.clone();
        if let (Some(t), Some(v)) = (&typing, r.splat[c]) {
            if let Some(ty) = &t.constants[c] {
                constant.data = vec![v; ty.element_count()];
                constant.ty = ty.clone();
            }
        }
        constants.push(constant);
    }

    let mut spliced: Vec<Node> = Vec::with_capacity(r.nodes.len());
    for (node, operands) in &r.nodes {
        let mut node = node.clone();
        node.inputs = operands
            .iter()
            .map(|o| match o {
                Operand::Group(g) => group_values[*g].clone(),
                Operand::Internal(v) => v.clone(),
                Operand::Const(c) => r.constants[*c].id.clone(),
            })
            .collect();
        if let Some(t) = &typing {
            for o in &mut node.outputs {
                o.ty = t.values[&o.id].clone();
            }
        }
        spliced.push(node);
    }

    let mut after: Vec<Node> = pools.order[pools.point..]
        .iter()
        .map(|&i| seed.nodes[i].clone())
        .collect();
    let offset: HashMap<usize, usize> = pools.order[pools.point..]
        .iter()
        .enumerate()
        .map(|(k, &i)| (i, k))
        .collect();
    let seed_types = seed.value_types();
    let mut taken = vec![false; pools.succeeding.len()];
    let mut outputs = seed.outputs.clone();
    let out_types: HashMap<&str, &TensorType> = spliced
        .iter()
        .flat_map(|n| n.outputs.iter().map(|o| (o.id.as_str(), &o.ty)))
        .collect();
    for out in &r.outputs {
        let ty = out_types[out.as_str()];
        let sites: Vec<usize> = (0..pools.succeeding.len())
            .filter(|&k| {
                let (ni, slot) = pools.succeeding[k];
                !taken[k]
                    && (cfg.strategy == Strategy::DirectInsert
                        || seed_types.get(seed.nodes[ni].inputs[slot].as_str()) == Some(&ty))
            })
            .collect();
        match sites.choose(&mut rng) {
            Some(&k) if cfg.strategy == Strategy::Repair || rng.random_bool(0.5) => {
                taken[k] = true;
                let (ni, slot) = pools.succeeding[k];
                after[offset[&ni]].inputs[slot] = out.clone();
                usage.rewired_outputs += 1;
            }
            _ => {
                outputs.push(out.clone());
                usage.appended_outputs += 1;
            }
        }
    }

    let mut nodes: Vec<Node> = pools.order[..pools.point]
        .iter()
        .map(|&i| seed.nodes[i].clone())
        .collect();
    nodes.extend(bridge_nodes);
    nodes.extend(spliced);
    nodes.extend(after);
    let graph = Graph {
        inputs: seed.inputs.clone(),
        constants,
        nodes,
        outputs,
    };
    if graph.nodes.len() > cfg.node_cap {
        return discard(DiscardReason::SizeCap, usage);
    }
    if !validate(&graph).is_ok() {
        return discard(DiscardReason::InferenceConflict, usage);
    }
    SynthesisOutcome {
        result: Ok(graph),
        usage,
        pattern_nodes,
    }
}
