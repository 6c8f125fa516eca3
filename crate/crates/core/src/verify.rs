//! Empirical checks: random search for interpretations that break
//! γ(T(I)) = γ(T(γ(I))), runtime monitoring of programs that could not be
//! approved, and a slow reference evaluator used as ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{build_dependency_graph, predicate_constraints};
use crate::eval::{
    apply_constraint, apply_constraint_to, apply_ico, evaluate, EvalError, EvalMode, EvalOptions, EvalOutcome,
    Execution, NonPositivePolicy,
};
use crate::model::{AggregateKind, Constraint, Goal, Interpretation, Program, Relation, Term, Tuple, Value, Var};
use crate::rewrite::{desugar_extremum, expand_msum};

/// Default number of samples for [`check_prem_empirical`].
pub const DEFAULT_SAMPLES: usize = 1000;

const MAX_ATOMS: usize = 12;

/// An interpretation on which the two sides of the equation differ.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    pub interpretation: Interpretation,
    /// γ(T(I))
    pub left: Interpretation,
    /// γ(T(γ(I)))
    pub right: Interpretation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PremCheckReport {
    /// Samples evaluated, including the failing one.
    pub samples: usize,
    pub seed: u64,
    pub counterexample: Option<Counterexample>,
}

impl PremCheckReport {
    pub fn holds(&self) -> bool {
        self.counterexample.is_none()
    }
}

impl fmt::Display for PremCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.counterexample {
            None => writeln!(f, "no counterexample in {} samples (seed {})", self.samples, self.seed),
            Some(c) => {
                writeln!(f, "counterexample at sample {} (seed {})", self.samples, self.seed)?;
                writeln!(f, "% I")?;
                write!(f, "{}", c.interpretation)?;
                let differing: Vec<&str> = c
                    .left
                    .predicates()
                    .chain(c.right.predicates())
                    .filter(|p| c.left.get(p) != c.right.get(p))
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                writeln!(f, "% gamma(T(I))")?;
                write!(f, "{}", c.left.restrict(differing.iter().copied()))?;
                writeln!(f, "% gamma(T(gamma(I)))")?;
                write!(f, "{}", c.right.restrict(differing.iter().copied()))
            }
        }
    }
}

/// The rules evaluated together with the constrained predicate, plus all facts.
fn recursive_part(program: &Program, predicate: &str) -> Program {
    let graph = build_dependency_graph(program);
    let members: BTreeSet<&str> = graph.component_members(predicate).iter().map(String::as_str).collect();
    Program {
        rules: program
            .rules
            .iter()
            .filter(|r| members.contains(r.head.predicate.as_str()))
            .cloned()
            .collect(),
        facts: program.facts.clone(),
        constraints: Vec::new(),
        approved: program.approved.clone(),
    }
}

/// Argument positions that hold integers: those meeting arithmetic,
/// ordering comparisons, aggregate results or integer constants.
fn numeric_positions(program: &Program) -> BTreeSet<(String, usize)> {
    let mut out = BTreeSet::new();
    for f in &program.facts {
        for (i, t) in f.args.iter().enumerate() {
            if matches!(t, Term::Const(Value::Int(_))) {
                out.insert((f.predicate.clone(), i));
            }
        }
    }
    for r in &program.rules {
        let mut numeric: BTreeSet<&Var> = BTreeSet::new();
        for g in &r.body {
            match g {
                Goal::Comparison(c) => {
                    let arith = |t: &Term| matches!(t, Term::Arith(..) | Term::Const(Value::Int(_)));
                    if c.op.is_ordering() || arith(&c.left) || arith(&c.right) {
                        numeric.extend(c.vars());
                    }
                }
                Goal::Aggregate(a) => {
                    numeric.extend(a.result.iter());
                    if let Some(s) = a.summand() {
                        numeric.insert(s);
                    }
                    if a.kind.is_extremum() {
                        numeric.extend(a.measured.iter());
                    }
                }
                _ => {}
            }
        }
        let atoms = std::iter::once(&r.head).chain(r.body.iter().filter_map(|g| match g {
            Goal::Regular(a) | Goal::Negated(a) => Some(a),
            _ => None,
        }));
        for a in atoms {
            for (i, t) in a.args.iter().enumerate() {
                let yes = match t {
                    Term::Var(v) => numeric.contains(v),
                    Term::Const(Value::Int(_)) | Term::Arith(..) => true,
                    Term::Const(Value::Sym(_)) => false,
                };
                if yes {
                    out.insert((a.predicate.clone(), i));
                }
            }
        }
    }
    out
}

struct Universe {
    /// Predicates that may appear in a sample, with their arities.
    predicates: Vec<(String, usize)>,
    numeric_positions: BTreeSet<(String, usize)>,
    ints: Vec<Value>,
    others: Vec<Value>,
}

impl Universe {
    fn new(program: &Program) -> Self {
        let arities = program.arities();
        let mut read: BTreeSet<&str> = BTreeSet::new();
        for r in &program.rules {
            read.insert(&r.head.predicate);
            for g in &r.body {
                if let Goal::Regular(a) | Goal::Negated(a) = g {
                    read.insert(&a.predicate);
                }
            }
        }
        let constants = program.constants();
        let mut ints: BTreeSet<Value> = (-2..=12).map(Value::Int).collect();
        ints.extend(constants.iter().filter(|v| v.as_int().is_some()).cloned());
        let mut others: BTreeSet<Value> = constants.iter().filter(|v| v.as_int().is_none()).cloned().collect();
        others.extend((0..3).map(Value::Int));
        Universe {
            predicates: read.into_iter().map(|p| (p.to_string(), arities[p])).collect(),
            numeric_positions: numeric_positions(program),
            ints: ints.into_iter().collect(),
            others: others.into_iter().collect(),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Interpretation {
        let mut out = Interpretation::new();
        if self.predicates.is_empty() {
            return out;
        }
        let n = rng.random_range(0..=MAX_ATOMS);
        for _ in 0..n {
            let (p, arity) = self.predicates.choose(rng).unwrap();
            let t: Tuple = (0..*arity)
                .map(|i| {
                    let pool = if self.numeric_positions.contains(&(p.clone(), i)) {
                        &self.ints
                    } else {
                        &self.others
                    };
                    pool.choose(rng).unwrap().clone()
                })
                .collect();
            out.insert(p, t);
        }
        out
    }
}

fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Both sides of the equation on `i`. Samples that make a rule fail at run
/// time (overflow, type errors) yield `None` and count as passing.
fn sides(program: &Program, constraint: &Constraint, i: &Interpretation) -> Option<(Interpretation, Interpretation)> {
    let left = apply_constraint_to(constraint, &apply_ico(program, i).ok()?);
    let right = apply_constraint_to(constraint, &apply_ico(program, &apply_constraint_to(constraint, i)).ok()?);
    Some((left, right))
}

/// Searches random small interpretations for one where applying `constraint`
/// before the rules changes the constrained result. Deterministic in `seed`.
pub fn check_prem_empirical(program: &Program, constraint: &Constraint, samples: usize, seed: u64) -> PremCheckReport {
    check_prem_empirical_with(program, constraint, samples, seed, Execution::default())
}

pub fn check_prem_empirical_with(
    program: &Program,
    constraint: &Constraint,
    samples: usize,
    seed: u64,
    execution: Execution,
) -> PremCheckReport {
    let part = recursive_part(program, constraint.predicate());
    let universe = Universe::new(&part);
    let indices: Vec<usize> = (0..samples).collect();
    let fails = |&k: &usize| {
        let i = universe.sample(&mut sample_rng(seed, k));
        sides(&part, constraint, &i).is_some_and(|(l, r)| l != r)
    };
    let hit = crate::par::find_first(&indices, execution == Execution::Parallel, fails);
    match hit {
        None => PremCheckReport {
            samples,
            seed,
            counterexample: None,
        },
        Some(k) => {
            let i = universe.sample(&mut sample_rng(seed, k));
            let (left, right) = sides(&part, constraint, &i).expect("failing sample re-evaluates");
            PremCheckReport {
                samples: k + 1,
                seed,
                counterexample: Some(Counterexample {
                    interpretation: i,
                    left,
                    right,
                }),
            }
        }
    }
}

/// Re-evaluates a counterexample; true when the two sides still differ.
pub fn recheck(program: &Program, constraint: &Constraint, c: &Counterexample) -> bool {
    let part = recursive_part(program, constraint.predicate());
    sides(&part, constraint, &c.interpretation).is_some_and(|(l, r)| l != r && l == c.left && r == c.right)
}

/// Reference semantics: extrema in final rules become negation, sums become
/// counts over materialized `int_up2` ranges, and everything runs naively.
/// Auxiliary predicates are dropped from the result.
pub fn brute_force_oracle(program: &Program, edb: &Interpretation, budget: usize) -> Result<Interpretation, EvalError> {
    let expanded = expand_msum(program).program;
    let desugared = desugar_extremum(&expanded);
    let opts = EvalOptions {
        mode: EvalMode::Naive,
        max_tuples: budget,
        execution: Execution::Sequential,
        on_nonpositive: NonPositivePolicy::Ignore,
        ..EvalOptions::default()
    };
    let out = evaluate(&desugared, edb, &opts)?;
    let keep: BTreeSet<&str> = program.arities().into_keys().chain(edb.predicates()).collect();
    Ok(out.model.restrict(keep))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyPolicy {
    pub enabled: bool,
    /// Tuple budget for the reference run; 0 skips it.
    pub oracle_budget: usize,
    /// Report non-positive summands instead of stopping on them.
    pub monitor_positivity: bool,
}

impl Default for VerifyPolicy {
    fn default() -> Self {
        VerifyPolicy {
            enabled: true,
            oracle_budget: 1_000_000,
            monitor_positivity: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NonPositiveSummand { rule: String, value: i64 },
    OracleMismatch { predicate: String, engine: Relation, oracle: Relation },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |r: &Relation| {
            r.iter()
                .map(|t| format!("({})", t.iter().map(Value::to_string).collect::<Vec<_>>().join(", ")))
                .collect::<Vec<_>>()
                .join(" ")
        };
        match self {
            Violation::NonPositiveSummand { rule, value } => {
                write!(f, "rule {rule}: summand {value} is not positive")
            }
            Violation::OracleMismatch {
                predicate,
                engine,
                oracle,
            } => write!(f, "{predicate}: engine {{{}}} but reference {{{}}}", show(engine), show(oracle)),
        }
    }
}

#[derive(Debug)]
pub struct TrustReport {
    pub outcome: EvalOutcome,
    /// `None` when the reference run was skipped or ran out of budget.
    pub oracle: Option<Interpretation>,
    pub oracle_note: Option<String>,
    pub violations: Vec<Violation>,
}

/// Predicates no rule reads: the answers of a program.
pub fn answer_predicates(program: &Program) -> BTreeSet<String> {
    let read: BTreeSet<&str> = program
        .rules
        .iter()
        .flat_map(|r| r.body.iter())
        .filter_map(|g| match g {
            Goal::Regular(a) | Goal::Negated(a) => Some(a.predicate.as_str()),
            _ => None,
        })
        .collect();
    program
        .idb_predicates()
        .into_iter()
        .filter(|p| !read.contains(p))
        .map(str::to_string)
        .collect()
}

/// Runs `executable` (a pushed or unapproved form of `original`) while
/// watching summands, then compares its answers with the reference
/// evaluation of `original`.
pub fn trust_but_verify_run(
    original: &Program,
    executable: &Program,
    edb: &Interpretation,
    policy: VerifyPolicy,
    opts: &EvalOptions,
) -> Result<TrustReport, EvalError> {
    let mut violations = Vec::new();
    let strict = EvalOptions {
        on_nonpositive: NonPositivePolicy::Error,
        ..opts.clone()
    };
    let outcome = match evaluate(executable, edb, &strict) {
        Err(EvalError::NonPositiveSummand { rule, value }) if policy.monitor_positivity => {
            violations.push(Violation::NonPositiveSummand { rule, value });
            evaluate(
                executable,
                edb,
                &EvalOptions {
                    on_nonpositive: NonPositivePolicy::Ignore,
                    ..opts.clone()
                },
            )?
        }
        other => other?,
    };
    let (mut oracle, mut oracle_note) = (None, None);
    if policy.enabled && policy.oracle_budget > 0 {
        match brute_force_oracle(original, edb, policy.oracle_budget) {
            Ok(m) => {
                for p in answer_predicates(original) {
                    let (e, o) = (outcome.model.get(&p), m.get(&p));
                    if e != o {
                        violations.push(Violation::OracleMismatch {
                            predicate: p,
                            engine: e,
                            oracle: o,
                        });
                    }
                }
                oracle = Some(m);
            }
            Err(EvalError::BudgetExceeded { reason, .. }) => {
                oracle_note = Some(format!("reference run skipped: {reason}"));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(TrustReport {
        outcome,
        oracle,
        oracle_note,
        violations,
    })
}

/// One step of the constrained operator: the rules, then every per-predicate
/// extremum of the program.
pub fn constrained_ico(program: &Program, i: &Interpretation) -> Result<Interpretation, EvalError> {
    let mut out = apply_ico(program, i)?;
    let gammas = predicate_constraints(program).unwrap_or_default();
    for g in gammas.values() {
        if g.monotone {
            continue;
        }
        let c = Constraint::Extremum(g.extremum.clone());
        let p = g.extremum.predicate.as_str();
        out.set(p, apply_constraint(&c, &out.get(p)));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeReport {
    /// Derived tuples examined.
    pub tuples: usize,
    /// Whether the computed model is a fixpoint of the constrained operator.
    pub fixpoint: bool,
    /// Derived tuples whose removal still leaves a fixpoint.
    pub redundant: Vec<(String, Tuple)>,
}

impl ProbeReport {
    pub fn minimal(&self) -> bool {
        self.fixpoint && self.redundant.is_empty()
    }
}

/// Computes the constrained model and checks that it is a fixpoint of the
/// constrained operator from which no derived tuple can be dropped.
pub fn minimality_probe(program: &Program, edb: &Interpretation, opts: &EvalOptions) -> Result<ProbeReport, EvalError> {
    let model = evaluate(program, edb, opts)?.model;
    let base = {
        let mut b = edb.clone();
        b.extend(&program.facts_interpretation());
        b
    };
    let fixpoint = constrained_ico(program, &model)? == model;
    let derived: Vec<(String, Tuple)> = model
        .iter()
        .flat_map(|(p, r)| r.iter().map(move |t| (p.to_string(), t.clone())))
        .filter(|(p, t)| !base.contains(p, t))
        .collect();
    let results = crate::par::map(&derived, opts.execution == Execution::Parallel, |(p, t)| {
        let mut smaller = model.clone();
        smaller.remove(p, t);
        constrained_ico(program, &smaller).map(|next| next == smaller)
    });
    let mut redundant = Vec::new();
    for (d, still) in derived.iter().zip(results) {
        if still? {
            redundant.push(d.clone());
        }
    }
    Ok(ProbeReport {
        tuples: derived.len(),
        fixpoint,
        redundant,
    })
}

/// Recursive predicates whose rules use count or sum on recursive goals.
pub fn counting_predicates(program: &Program) -> BTreeMap<String, AggregateKind> {
    let graph = build_dependency_graph(program);
    let mut out = BTreeMap::new();
    for r in &program.rules {
        if !graph.is_recursive(&r.head.predicate) {
            continue;
        }
        for a in r.aggregates() {
            if matches!(a.kind, AggregateKind::Count | AggregateKind::Sum) {
                out.insert(r.head.predicate.clone(), a.kind);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::classify_premability;
    use crate::fixtures;
    use crate::parser::{parse_facts, parse_str, SourceProgram};
    use crate::rewrite::push_unchecked;

    #[test]
    fn shortest_path_min_has_no_counterexample() {
        let p = parse_str(fixtures::SHORTEST_PATH).unwrap();
        let c = p.constraint_of("r4").unwrap();
        let r = check_prem_empirical(&p, c, 1000, 7);
        assert!(r.holds(), "{r}");
        assert_eq!(r.samples, 1000);
    }

    #[test]
    fn nonpushable_max_has_counterexample() {
        let p = parse_str(fixtures::NONPUSHABLE_MAX).unwrap();
        let c = p.constraints[0].constraint.clone();
        let r = check_prem_empirical(&p, &c, 1000, 1);
        let ce = r.counterexample.as_ref().expect("counterexample");
        assert!(recheck(&p, &c, ce));
        assert_eq!(r, check_prem_empirical_with(&p, &c, 1000, 1, Execution::Sequential));
    }

    #[test]
    fn documented_counterexample_reproduces() {
        let p = parse_str(fixtures::NONPUSHABLE_MAX).unwrap();
        let c = p.constraints[0].constraint.clone();
        let i = parse_facts(&SourceProgram::inline("p(4). p(5).")).unwrap();
        let part = recursive_part(&p, "p");
        let (l, r) = sides(&part, &c, &i).unwrap();
        let ints = |i: &Interpretation| i.get("p").iter().map(|t| t[0].as_int().unwrap()).collect::<Vec<_>>();
        assert_eq!((ints(&l), ints(&r)), (vec![6], vec![5]));
    }

    #[test]
    fn empty_program_has_no_counterexample() {
        let p = Program::default();
        let c = Constraint::Extremum(crate::model::Extremum {
            kind: crate::model::ExtremumKind::Min,
            predicate: "q".into(),
            group_by: vec![],
            cost: 0,
        });
        assert!(check_prem_empirical(&p, &c, 50, 0).holds());
    }

    #[test]
    fn oracle_matches_engine_on_shortest_path() {
        let p = parse_str(fixtures::SHORTEST_PATH).unwrap();
        let edb = parse_facts(&SourceProgram::inline(fixtures::THREE_NODE_FACTS)).unwrap();
        let o = brute_force_oracle(&p, &edb, 10_000).unwrap();
        let e = evaluate(&p, &edb, &EvalOptions::default()).unwrap().model;
        assert_eq!(o, e);
    }

    #[test]
    fn forced_push_is_caught() {
        let p = parse_str(fixtures::NONPUSHABLE_MAX).unwrap();
        let id = p.constraints[0].rule_id.clone();
        let (forced, _) = push_unchecked(&p, &id).unwrap();
        let rep =
            trust_but_verify_run(&p, &forced, &Interpretation::new(), VerifyPolicy::default(), &EvalOptions::default())
                .unwrap();
        assert!(matches!(&rep.violations[..], [Violation::OracleMismatch { predicate, .. }] if predicate == "topp"));
    }

    #[test]
    fn zero_cost_part_is_reported() {
        let p = parse_str(fixtures::PART_EXPLOSION_UNGUARDED).unwrap();
        let edb =
            parse_facts(&SourceProgram::inline("basic(bolt, 0). basic(nut, 2). assb(frame, bolt, 2). assb(frame, nut, 1)."))
                .unwrap();
        let rep = trust_but_verify_run(&p, &p, &edb, VerifyPolicy::default(), &EvalOptions::default()).unwrap();
        assert!(rep
            .violations
            .iter()
            .any(|v| matches!(v, Violation::NonPositiveSummand { value: 0, .. })));
    }

    #[test]
    fn pushed_shortest_path_is_minimal() {
        let p = parse_str(fixtures::SHORTEST_PATH).unwrap();
        let v = classify_premability(&p, p.constraint_of("r4").unwrap());
        let (pushed, _) = crate::rewrite::push_constraint(&p, &v).unwrap();
        let edb = parse_facts(&SourceProgram::inline(fixtures::THREE_NODE_FACTS)).unwrap();
        let r = minimality_probe(&pushed, &edb, &EvalOptions::default()).unwrap();
        assert!(r.minimal(), "{r:?}");
        assert_eq!(r.tuples, 4);
    }
}
