//! Bottom-up evaluation: naive and seminaive fixpoints over stratified
//! programs, with per-predicate extrema applied after every round.

mod aggregate;
mod compile;
mod engine;
mod store;

use std::fmt;
use std::time::Duration;

use thiserror::Error;

use crate::analysis::StratificationError;
use crate::model::{Constraint, Interpretation, ModelError, Program, Relation, Tuple, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalMode {
    Naive,
    #[default]
    Seminaive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

/// What to do with a zero or negative summand in a sum that must grow monotonically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NonPositivePolicy {
    #[default]
    Error,
    Ignore,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub mode: EvalMode,
    /// Rounds allowed per stratum.
    pub max_iterations: usize,
    /// Live tuples allowed in the store, and candidates allowed per round.
    pub max_tuples: usize,
    pub execution: Execution,
    pub on_nonpositive: NonPositivePolicy,
    /// Extra constraints applied after every round, on top of the program's own.
    pub gamma: Vec<Constraint>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            mode: EvalMode::Seminaive,
            max_iterations: 1_000_000,
            max_tuples: 10_000_000,
            execution: Execution::Parallel,
            on_nonpositive: NonPositivePolicy::Error,
            gamma: Vec::new(),
        }
    }
}

impl EvalOptions {
    pub fn naive() -> Self {
        EvalOptions {
            mode: EvalMode::Naive,
            ..Self::default()
        }
    }

    pub fn seminaive() -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StratumStats {
    pub predicates: Vec<String>,
    pub iterations: usize,
    pub derived: u64,
    pub inserted: u64,
    pub deleted: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EvalStats {
    /// Rounds summed over strata.
    pub iterations: usize,
    /// Head tuples produced by rules, duplicates included.
    pub derived: u64,
    /// Live tuples of rule-defined predicates at the end.
    pub retained: u64,
    /// Tuples displaced by an extremum.
    pub deleted: u64,
    pub wall: Duration,
    pub strata: Vec<StratumStats>,
}

impl fmt::Display for EvalStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "iterations: {}", self.iterations)?;
        writeln!(f, "derived: {}", self.derived)?;
        writeln!(f, "retained: {}", self.retained)?;
        writeln!(f, "deleted: {}", self.deleted)?;
        writeln!(f, "wall_ms: {:.3}", self.wall.as_secs_f64() * 1000.0)?;
        for s in &self.strata {
            writeln!(
                f,
                "stratum {}: iterations {}, derived {}, inserted {}, deleted {}",
                s.predicates.join(","),
                s.iterations,
                s.derived,
                s.inserted,
                s.deleted
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub model: Interpretation,
    pub stats: EvalStats,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("budget exceeded: {reason}")]
    BudgetExceeded { reason: String, stats: Box<EvalStats> },
    #[error("rule {rule}: {source}")]
    Runtime {
        rule: String,
        #[source]
        source: ModelError,
    },
    #[error(transparent)]
    Unstratifiable(#[from] StratificationError),
    #[error("rule {rule}: summand {value} is not positive")]
    NonPositiveSummand { rule: String, value: i64 },
    #[error("rule {rule}: {message}")]
    Compile { rule: String, message: String },
}

/// Stratified evaluation in the mode given by `opts`.
pub fn evaluate(program: &Program, edb: &Interpretation, opts: &EvalOptions) -> Result<EvalOutcome, EvalError> {
    engine::Engine::new(program, edb, opts)?.run(edb)
}

/// Every rule re-evaluated on the whole interpretation each round.
pub fn naive_fixpoint(program: &Program, edb: &Interpretation, opts: &EvalOptions) -> Result<EvalOutcome, EvalError> {
    let opts = EvalOptions {
        mode: EvalMode::Naive,
        ..opts.clone()
    };
    evaluate(program, edb, &opts)
}

/// Each round only joins against tuples new in the previous round.
pub fn seminaive_fixpoint(
    program: &Program,
    edb: &Interpretation,
    opts: &EvalOptions,
) -> Result<EvalOutcome, EvalError> {
    let opts = EvalOptions {
        mode: EvalMode::Seminaive,
        ..opts.clone()
    };
    evaluate(program, edb, &opts)
}

/// `I` together with the program's facts and every head derivable from `I`
/// in one step. Extremum goals over recursive heads are not applied.
pub fn apply_ico(program: &Program, i: &Interpretation) -> Result<Interpretation, EvalError> {
    engine::immediate_consequence(program, i)
}

/// Applies a constraint to a relation. Among tuples tied on the best value of
/// a group, the smallest tuple is kept.
pub fn apply_constraint(constraint: &Constraint, relation: &Relation) -> Relation {
    let mut tuples: Vec<Tuple> = relation.iter().cloned().collect();
    for part in constraint.conjuncts() {
        match part {
            Constraint::Bound(b) => tuples.retain(|t| b.admits(t)),
            Constraint::Extremum(e) => {
                let mut best: std::collections::BTreeMap<Vec<Value>, Tuple> = Default::default();
                for t in tuples {
                    let k = e.group_key(&t);
                    match best.get(&k) {
                        Some(cur) if !e.kind.improves(&t[e.cost], &cur[e.cost]) => {}
                        _ => {
                            best.insert(k, t);
                        }
                    }
                }
                tuples = best.into_values().collect();
            }
            Constraint::Conjunction(_) => {}
        }
    }
    tuples.into_iter().collect()
}

/// Applies `constraint` to its predicate inside `i`, leaving other predicates alone.
pub fn apply_constraint_to(constraint: &Constraint, i: &Interpretation) -> Interpretation {
    let mut out = i.clone();
    let p = constraint.predicate();
    out.set(p, apply_constraint(constraint, &i.get(p)));
    out
}
