//! Automatic improvement of assertion oracles.
//!
//! Given repositories of correct and incorrect program states and an initial
//! boolean assertion, a two-population co-evolutionary genetic programming
//! search returns an assertion with zero false positives and as few false
//! negatives as it can find. A sampling-based deficiency finder over built-in
//! subject programs closes the refinement loop.
//!
//! Module map:
//!
//! - [`expr`]: the assertion language (AST, parser, printer, evaluator).
//! - [`state`]: program states and the labeled state repository.
//! - [`fitness`]: false-positive / false-negative counting and the two
//!   lexicographic orders.
//! - [`evolution`]: the co-evolutionary engine.
//! - [`subjects`]: built-in programs with mutants and state capture.
//! - [`deficiency`]: counterexample search against a subject.
//! - [`improve`]: the outer improvement loop and validation.

pub mod deficiency;
pub mod evolution;
pub mod expr;
pub mod fitness;
pub mod improve;
pub mod rng;
pub mod state;
pub mod subjects;

pub use evolution::{Budget, EvolutionConfig, EvolutionOutcome};
pub use expr::{Expr, ParseError, VarSignature, VarType};
pub use fitness::{FitnessVector, Objective};
pub use improve::{improve, ImprovementReport, RunConfig};
pub use state::{ProgramState, StateRepo, Value};
