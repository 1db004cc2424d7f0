//! Optimization-aware fuzzing of a small graph compiler.
//!
//! The crate contains a computational-graph IR with an operator registry and a
//! reference interpreter, a toy optimizing compiler with seeded defects, and the
//! test generator: pattern extraction from optimization-triggering examples,
//! context-aware synthesis into seed graphs, and a differential harness.

pub mod bridge;
pub mod corpus;
pub mod extract;
pub mod graph;
pub mod harness;
pub mod interp;
pub mod ops;
pub mod passes;
pub mod pool;
pub mod seedgen;
pub mod serial;
pub mod synth;
