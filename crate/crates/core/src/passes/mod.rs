//! The toy optimizing compiler under test.
//!
//! Seven semantics-preserving passes run through [`Compiler::run_pass`], which
//! is also the single instrumentation point: every invocation reports a
//! pre-transformation snapshot to the hooks installed by [`with_instrumentation`].
//! A [`Compiler`] may carry one seeded defect ([`Mutant`]) to give the fuzzer a
//! known ground truth.

mod algebraic;
mod cast;
mod cse;
mod dce;
mod fold;
mod fusion;
mod mutants;
mod reorder;
mod rewrite;

use std::cell::RefCell;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{validate, Graph};

pub use mutants::{list_mutants, BugCategory, Mutant, MutantId, Symptom, UnknownMutant};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PassName {
    ConstantFolding,
    AlgebraicSimplification,
    ElementwiseFusion,
    ReorderPermuteDimsAfterConcat,
    RedundantCastElimination,
    DeadCodeElimination,
    CommonSubexpressionElimination,
}

impl PassName {
    pub const ALL: [PassName; 7] = [
        PassName::ConstantFolding,
        PassName::AlgebraicSimplification,
        PassName::ElementwiseFusion,
        PassName::ReorderPermuteDimsAfterConcat,
        PassName::RedundantCastElimination,
        PassName::DeadCodeElimination,
        PassName::CommonSubexpressionElimination,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PassName::ConstantFolding => "ConstantFolding",
            PassName::AlgebraicSimplification => "AlgebraicSimplification",
            PassName::ElementwiseFusion => "ElementwiseFusion",
            PassName::ReorderPermuteDimsAfterConcat => "ReorderPermuteDimsAfterConcat",
            PassName::RedundantCastElimination => "RedundantCastElimination",
            PassName::DeadCodeElimination => "DeadCodeElimination",
            PassName::CommonSubexpressionElimination => "CommonSubexpressionElimination",
        }
    }

    pub fn descriptor(self) -> &'static PassDescriptor {
        DESCRIPTORS
            .iter()
            .find(|d| d.name == self)
            .expect("every pass has a descriptor")
    }

    pub fn granularity(self) -> Granularity {
        self.descriptor().granularity
    }
}

impl fmt::Display for PassName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PassName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PassName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown pass `{s}`"))
    }
}

/// The default full pipeline, in execution order.
pub const DEFAULT_PIPELINE: [PassName; 7] = [
    PassName::RedundantCastElimination,
    PassName::AlgebraicSimplification,
    PassName::ConstantFolding,
    PassName::ReorderPermuteDimsAfterConcat,
    PassName::ElementwiseFusion,
    PassName::CommonSubexpressionElimination,
    PassName::DeadCodeElimination,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    Block,
    Subgraph,
}

#[derive(Debug, Clone, Serialize)]
pub struct PassDescriptor {
    pub name: PassName,
    pub granularity: Granularity,
    pub description: &'static str,
    pub matches: &'static str,
}

pub static DESCRIPTORS: [PassDescriptor; 7] = [
    PassDescriptor {
        name: PassName::ConstantFolding,
        granularity: Granularity::Block,
        description:
            "Evaluates nodes whose operands are all constants and replaces them with literals.",
        matches: "op(const, ..., const)",
    },
    PassDescriptor {
        name: PassName::AlgebraicSimplification,
        granularity: Granularity::Block,
        description: "Removes arithmetic identities against splat constants.",
        matches: "Mul(x, 1) | Mul(1, x) | Add(x, 0) | Add(0, x) | Sub(x, 0)",
    },
    PassDescriptor {
        name: PassName::ElementwiseFusion,
        granularity: Granularity::Block,
        description: "Fuses a single-use Add feeding a ReLU in the same block into FusedAddReLU.",
        matches: "ReLU(Add(a, b))",
    },
    PassDescriptor {
        name: PassName::ReorderPermuteDimsAfterConcat,
        granularity: Granularity::Block,
        description: "Moves identical PermuteDims operands of a Concat past the Concat.",
        matches: "Concat(PermuteDims(A, p), PermuteDims(B, p), axis)",
    },
    PassDescriptor {
        name: PassName::RedundantCastElimination,
        granularity: Granularity::Block,
        description: "Drops identity casts and collapses cast chains whose inner cast is lossless.",
        matches: "Cast(x: T, T) | Cast(Cast(x, B), C) with x->B lossless",
    },
    PassDescriptor {
        name: PassName::DeadCodeElimination,
        granularity: Granularity::Subgraph,
        description: "Removes nodes and constants that cannot reach a graph output.",
        matches: "values unreachable from outputs",
    },
    PassDescriptor {
        name: PassName::CommonSubexpressionElimination,
        granularity: Granularity::Subgraph,
        description: "Merges nodes with identical operator, operands and attributes.",
        matches: "op(a, ...) twice with equal attrs",
    },
];

/// Why a pass did not return a graph.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "message")]
pub enum PassError {
    /// A compiler bug symptom. The message is deterministic and used as a dedup key.
    #[error("crash: {0}")]
    Crash(String),
    /// An "unsupported" bail-out; never reported as a bug.
    #[error("skip: {0}")]
    Skip(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassOutcome {
    pub graph: Graph,
    /// Number of rewrites; the pass fired iff this is nonzero.
    pub rewrites: usize,
}

impl PassOutcome {
    pub fn fired(&self) -> bool {
        self.rewrites > 0
    }
}

/// One `<graph, pass>` observation captured before the pass transforms anything.
#[derive(Debug, Clone, PartialEq)]
pub struct PassTracePair {
    pub graph: Graph,
    pub pass: PassName,
}

type Hook = Box<dyn FnMut(&PassTracePair)>;

thread_local! {
    static HOOKS: RefCell<Vec<Hook>> = const { RefCell::new(Vec::new()) };
}

/// Runs `thunk` with `hook` observing every pass invocation on this thread.
/// Scopes nest; each active hook sees the pairs emitted while it is installed.
pub fn with_instrumentation<R>(
    hook: impl FnMut(&PassTracePair) + 'static,
    thunk: impl FnOnce() -> R,
) -> R {
    HOOKS.with(|h| h.borrow_mut().push(Box::new(hook)));
    struct Pop;
    impl Drop for Pop {
        fn drop(&mut self) {
            HOOKS.with(|h| {
                h.borrow_mut().pop();
            });
        }
    }
    let _pop = Pop;
    thunk()
}

/// Collects the trace pairs emitted while `thunk` runs.
pub fn collect_traces<R>(thunk: impl FnOnce() -> R) -> (R, Vec<PassTracePair>) {
    let sink = std::rc::Rc::new(RefCell::new(Vec::new()));
    let writer = sink.clone();
    let out = with_instrumentation(move |pair| writer.borrow_mut().push(pair.clone()), thunk);
    let traces = std::mem::take(&mut *sink.borrow_mut());
    (out, traces)
}

fn emit(pair_graph: &Graph, pass: PassName) {
    HOOKS.with(|h| {
        let mut hooks = std::mem::take(&mut *h.borrow_mut());
        if !hooks.is_empty() {
            let pair = PassTracePair {
                graph: pair_graph.clone(),
                pass,
            };
            for hook in hooks.iter_mut() {
                hook(&pair);
            }
        }
        let mut slot = h.borrow_mut();
        hooks.append(&mut slot);
        *slot = hooks;
    });
}

/// Result of a whole pipeline that ran to completion.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub graph: Graph,
    /// Rewrite count of every pass, in pipeline order.
    pub rewrites: Vec<(PassName, usize)>,
}

impl PipelineRun {
    pub fn fired(&self) -> impl Iterator<Item = PassName> + '_ {
        self.rewrites
            .iter()
            .filter(|(_, n)| *n > 0)
            .map(|(p, _)| *p)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("pass #{index} ({pass}) failed: {error}")]
pub struct PipelineFailure {
    pub index: usize,
    pub pass: PassName,
    pub error: PassError,
}

/// Compiler configuration for one campaign: at most one active mutant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Compiler {
    mutant: Option<Mutant>,
}

impl Compiler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_mutant(mutant: Option<Mutant>) -> Self {
        Self { mutant }
    }

    /// Activates a mutant by catalog name.
    pub fn activate(name: &str) -> Result<Self, UnknownMutant> {
        Ok(Self::with_mutant(Some(name.parse()?)))
    }

    pub fn mutant(&self) -> Option<Mutant> {
        self.mutant
    }

    pub(crate) fn is(&self, m: Mutant) -> bool {
        self.mutant == Some(m)
    }

    /// Runs one pass on a private copy of `graph`. The result always passes
    /// validation; a pass that corrupts the IR is reported as a crash.
    pub fn run_pass(&self, pass: PassName, graph: &Graph) -> Result<PassOutcome, PassError> {
        emit(graph, pass);
        let mut work = graph.clone();
        let rewrites = match pass {
            PassName::ConstantFolding => fold::run(self, &mut work),
            PassName::AlgebraicSimplification => algebraic::run(self, &mut work),
            PassName::ElementwiseFusion => fusion::run(self, &mut work),
            PassName::ReorderPermuteDimsAfterConcat => reorder::run(self, &mut work),
            PassName::RedundantCastElimination => cast::run(self, &mut work),
            PassName::DeadCodeElimination => dce::run(self, &mut work),
            PassName::CommonSubexpressionElimination => cse::run(self, &mut work),
        }
        .map_err(|e| match e {
            PassError::Crash(m) => PassError::Crash(format!("[{pass}] {m}")),
            PassError::Skip(m) => PassError::Skip(format!("[{pass}] {m}")),
        })?;
        let report = validate(&work);
        if let Some(v) = report.first() {
            return Err(PassError::Crash(format!(
                "[{pass}] post-pass validation: {v}"
            )));
        }
        Ok(PassOutcome {
            graph: work,
            rewrites,
        })
    }

    pub fn run_pipeline(
        &self,
        passes: &[PassName],
        graph: &Graph,
    ) -> Result<PipelineRun, PipelineFailure> {
        let mut current = graph.clone();
        let mut rewrites = Vec::with_capacity(passes.len());
        for (index, &pass) in passes.iter().enumerate() {
            let out = self
                .run_pass(pass, &current)
                .map_err(|error| PipelineFailure { index, pass, error })?;
            rewrites.push((pass, out.rewrites));
            current = out.graph;
        }
        Ok(PipelineRun {
            graph: current,
            rewrites,
        })
    }
}

#[cfg(test)]
mod tests;
