//! Bottom-up Datalog with aggregates in recursion and constraint pushing.

pub mod analysis;
pub mod bench;
pub mod eval;
pub mod fixtures;
pub mod model;
pub mod par;
pub mod parser;
pub mod rewrite;
pub mod verify;
pub(crate) mod schedule;

pub use eval::{evaluate, EvalError, EvalMode, EvalOptions, EvalOutcome, EvalStats, Execution};
pub use model::*;
pub use parser::{parse_program, parse_str, ParseError, SourceProgram};
