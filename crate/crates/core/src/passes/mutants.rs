//! Catalog of seeded defects. Each variant is compiled in and gated by the
//! campaign's [`super::Compiler`] configuration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::PassName;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutant {
    DceDropsBlockOutput,
    DceDropsConstantOutput,
    CseIgnoresAttrs,
    ReorderWrongAxis,
    FoldThroughI32,
    FusionNullDeref,
    FusionF32Only,
    CastElimLossyInner,
    AlgSimpMissesGraphOutput,
    AlgSimpForwardWrongOperand,
}

/// Root-cause category of the defect.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BugCategory {
    IncorrectCodeLogic,
    TensorShapeProblem,
    TypeProblem,
    IncorrectExceptionHandling,
}

/// How the defect usually shows up under the differential oracle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Symptom {
    Crash,
    Inconsistency,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutantId {
    pub name: String,
    pub pass: PassName,
    pub index: usize,
    pub description: String,
    pub category: BugCategory,
    pub symptom: Symptom,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown mutant `{0}`")]
pub struct UnknownMutant(pub String);

impl Mutant {
    pub const ALL: [Mutant; 10] = [
        Mutant::DceDropsBlockOutput,
        Mutant::DceDropsConstantOutput,
        Mutant::CseIgnoresAttrs,
        Mutant::ReorderWrongAxis,
        Mutant::FoldThroughI32,
        Mutant::FusionNullDeref,
        Mutant::FusionF32Only,
        Mutant::CastElimLossyInner,
        Mutant::AlgSimpMissesGraphOutput,
        Mutant::AlgSimpForwardWrongOperand,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mutant::DceDropsBlockOutput => "dce-drops-block-output",
            Mutant::DceDropsConstantOutput => "dce-drops-constant-output",
            Mutant::CseIgnoresAttrs => "cse-ignores-attrs",
            Mutant::ReorderWrongAxis => "reorder-wrong-axis",
            Mutant::FoldThroughI32 => "fold-through-i32",
            Mutant::FusionNullDeref => "fusion-null-deref",
            Mutant::FusionF32Only => "fusion-f32-only",
            Mutant::CastElimLossyInner => "cast-elim-lossy-inner",
            Mutant::AlgSimpMissesGraphOutput => "algsimp-misses-graph-output",
            Mutant::AlgSimpForwardWrongOperand => "algsimp-forward-wrong-operand",
        }
    }

    pub fn pass(self) -> PassName {
        match self {
            Mutant::DceDropsBlockOutput | Mutant::DceDropsConstantOutput => {
                PassName::DeadCodeElimination
            }
            Mutant::CseIgnoresAttrs => PassName::CommonSubexpressionElimination,
            Mutant::ReorderWrongAxis => PassName::ReorderPermuteDimsAfterConcat,
            Mutant::FoldThroughI32 => PassName::ConstantFolding,
            Mutant::FusionNullDeref | Mutant::FusionF32Only => PassName::ElementwiseFusion,
            Mutant::CastElimLossyInner => PassName::RedundantCastElimination,
            Mutant::AlgSimpMissesGraphOutput | Mutant::AlgSimpForwardWrongOperand => {
                PassName::AlgebraicSimplification
            }
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Mutant::DceDropsBlockOutput => {
                "liveness ignores graph outputs produced inside a dataflow block, so such nodes are deleted"
            }
            Mutant::DceDropsConstantOutput => {
                "constants referenced only as graph outputs are treated as dead"
            }
            Mutant::CseIgnoresAttrs => "the CSE key covers only string attributes, so nodes differing in integer attributes merge",
            Mutant::ReorderWrongAxis => "the Concat axis is not remapped through the permutation; the rewrite is only abandoned when the unmapped axis fails shape inference",
            Mutant::FoldThroughI32 => "folding of data-movement ops (Reshape, PermuteDims, Pad, Crop, Concat) copies float payloads through an i32 buffer",
            Mutant::FusionNullDeref => {
                "fusing Add(v, v) looks up a second producer that does not exist and aborts"
            }
            Mutant::FusionF32Only => "the fused node always declares an f32 result",
            Mutant::CastElimLossyInner => {
                "cast chains collapse when the outer cast is lossless instead of the inner one"
            }
            Mutant::AlgSimpMissesGraphOutput => {
                "identity removal rewires operand uses but leaves graph outputs pointing at the removed value"
            }
            Mutant::AlgSimpForwardWrongOperand => "on integer tensors, Mul by one is replaced by the constant operand instead of the other one",
        }
    }

    pub fn category(self) -> BugCategory {
        match self {
            Mutant::DceDropsBlockOutput
            | Mutant::DceDropsConstantOutput
            | Mutant::CseIgnoresAttrs
            | Mutant::AlgSimpForwardWrongOperand => BugCategory::IncorrectCodeLogic,
            Mutant::ReorderWrongAxis => BugCategory::TensorShapeProblem,
            Mutant::FoldThroughI32 | Mutant::FusionF32Only | Mutant::CastElimLossyInner => {
                BugCategory::TypeProblem
            }
            Mutant::FusionNullDeref | Mutant::AlgSimpMissesGraphOutput => {
                BugCategory::IncorrectExceptionHandling
            }
        }
    }

    pub fn symptom(self) -> Symptom {
        match self {
            Mutant::DceDropsConstantOutput
            | Mutant::FusionNullDeref
            | Mutant::FusionF32Only
            | Mutant::AlgSimpMissesGraphOutput => Symptom::Crash,
            _ => Symptom::Inconsistency,
        }
    }

    pub fn id(self) -> MutantId {
        MutantId {
            name: self.name().to_string(),
            pass: self.pass(),
            index: Mutant::ALL.iter().position(|m| *m == self).expect("listed"),
            description: self.description().to_string(),
            category: self.category(),
            symptom: self.symptom(),
        }
    }
}

impl fmt::Display for Mutant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mutant {
    type Err = UnknownMutant;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mutant::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| UnknownMutant(s.to_string()))
    }
}

pub fn list_mutants() -> Vec<MutantId> {
    Mutant::ALL.into_iter().map(Mutant::id).collect()
}
