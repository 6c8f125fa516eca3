//! Program transformations: moving approved constraints into the recursive
//! rules, extremum goals to negation, sums to counts over `int_up2`, and the
//! count/sum-in-recursion check.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::analysis::expr::{expand, guard_intervals, interval};
use crate::analysis::{
    build_dependency_graph, classify_with, definitions, goal_constraint, Justification, PlanStep, PremVerdict,
};
use crate::model::{
    AggregateGoal, AggregateKind, Atom, CmpOp, Comparison, Constraint, Goal, Program, Rule, Term, Var,
};
use crate::parser::{finish_program, ParseError};

#[derive(Debug, Error)]
pub enum RewriteError {
    #[error("plan does not match the program: {0}")]
    PlanMismatch(String),
    #[error("nothing to push: {0}")]
    NotApproved(String),
    #[error("rewritten program is invalid: {0}")]
    Invalid(#[from] ParseError),
}

/// What a rewrite did, rule by rule.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RewriteTrace {
    /// Source rule id to the ids it became.
    pub renamed: Vec<(String, Vec<String>)>,
    /// Applied transformations, in order.
    pub steps: Vec<String>,
}

impl RewriteTrace {
    fn rename(&mut self, from: &str, to: &str) {
        match self.renamed.iter_mut().find(|(f, _)| f == from) {
            Some((_, ids)) => ids.push(to.to_string()),
            None => self.renamed.push((from.to_string(), vec![to.to_string()])),
        }
    }
}

impl fmt::Display for RewriteTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.steps {
            writeln!(f, "% {s}")?;
        }
        for (from, to) in &self.renamed {
            writeln!(f, "% {from} -> {}", to.join(", "))?;
        }
        Ok(())
    }
}

/// Moves the approved conjuncts of `verdict` into the rules defining the
/// cost predicates. Conjuncts after a rejection stay in the final rule.
pub fn push_constraint(program: &Program, verdict: &PremVerdict) -> Result<(Program, RewriteTrace), RewriteError> {
    if verdict.plan.is_empty() {
        return Err(RewriteError::NotApproved(match &verdict.rejection {
            Some(r) => format!("{} fails {} at rule {}", r.conjunct, r.condition, r.rule),
            None => "empty plan".into(),
        }));
    }
    let final_id = verdict
        .final_rule
        .as_deref()
        .ok_or_else(|| RewriteError::PlanMismatch("no final rule".into()))?;
    let fin = program
        .rule(final_id)
        .ok_or_else(|| RewriteError::PlanMismatch(format!("no rule {final_id}")))?;
    let atom = fin
        .regular_goals()
        .find(|a| a.predicate == verdict.predicate)
        .ok_or_else(|| RewriteError::PlanMismatch(format!("rule {final_id} does not read {}", verdict.predicate)))?
        .clone();
    if verdict.costs.get(&verdict.predicate).is_none() {
        return Err(RewriteError::PlanMismatch(format!("no cost argument for {}", verdict.predicate)));
    }
    let mut out = program.clone();
    let mut trace = RewriteTrace::default();
    let procedure: Vec<usize> = (0..out.rules.len())
        .filter(|&i| verdict.costs.get(&out.rules[i].head.predicate).is_some() && out.rules[i].id != final_id)
        .collect();
    let original_ids: Vec<String> = procedure.iter().map(|&i| out.rules[i].id.clone()).collect();
    let pushed: Vec<&Constraint> = verdict.plan.iter().map(|s| &s.conjunct).collect();
    for step in &verdict.plan {
        for &i in &procedure {
            let r = &mut out.rules[i];
            let cost = verdict.costs.get(&r.head.predicate).unwrap();
            match &step.conjunct {
                Constraint::Bound(b) => {
                    r.body.push(Goal::Comparison(Comparison::new(
                        b.op,
                        r.head.args[cost].clone(),
                        Term::Const(b.limit.clone()),
                    )));
                }
                Constraint::Extremum(e) => {
                    let var = |pos: usize| match &r.head.args[pos] {
                        Term::Var(v) => Ok(v.clone()),
                        t => Err(RewriteError::PlanMismatch(format!(
                            "rule {}: head argument {t} is not a variable",
                            r.id
                        ))),
                    };
                    let measured = var(cost)?;
                    let group_by = (0..r.head.arity())
                        .filter(|&p| p != cost)
                        .map(var)
                        .collect::<Result<Vec<_>, _>>()?;
                    let kind = match e.kind {
                        crate::model::ExtremumKind::Min => AggregateKind::IsMin,
                        crate::model::ExtremumKind::Max => AggregateKind::IsMax,
                    };
                    r.body.push(Goal::Aggregate(AggregateGoal {
                        kind,
                        group_by,
                        measured: vec![measured],
                        result: None,
                    }));
                }
                Constraint::Conjunction(_) => unreachable!("plans hold single conjuncts"),
            }
            r.id.push('\'');
        }
        trace.steps.push(format!(
            "{} pushed into {} ({})",
            step.conjunct,
            original_ids.join(", "),
            step.justification.name()
        ));
        if matches!(step.conjunct, Constraint::Extremum(_)) {
            for p in verdict.costs.iter().map(|(p, _)| p.to_string()) {
                out.approve(&p);
            }
        }
    }
    for (&i, from) in procedure.iter().zip(&original_ids) {
        trace.rename(from, &out.rules[i].id);
    }
    let fi = out.rules.iter().position(|r| r.id == final_id).unwrap();
    let fr = &mut out.rules[fi];
    fr.body.retain(|g| match g {
        Goal::Regular(_) => true,
        _ => goal_constraint(&atom, g).is_none_or(|c| !pushed.contains(&&c)),
    });
    fr.id.push('\'');
    trace.rename(final_id, &fr.id.clone());
    trace.steps.push(format!("pushed conjuncts dropped from {final_id}"));
    let approved = out.approved.clone();
    let mut out = finish_program(out)?;
    out.approved = approved;
    Ok((out, trace))
}

/// Pushes every conjunct of the constraint in `final_rule` without checking
/// anything. Only useful to demonstrate what an unsound push computes.
pub fn push_unchecked(program: &Program, final_rule: &str) -> Result<(Program, RewriteTrace), RewriteError> {
    let constraint = program
        .constraint_of(final_rule)
        .ok_or_else(|| RewriteError::PlanMismatch(format!("rule {final_rule} carries no constraint")))?
        .clone();
    let costs = crate::analysis::find_cost_arguments(program, &constraint)
        .map_err(|e| RewriteError::PlanMismatch(e.to_string()))?;
    let plan = constraint
        .conjuncts()
        .into_iter()
        .map(|c| PlanStep {
            conjunct: c.clone(),
            justification: match c {
                Constraint::Bound(b) if b.kind == crate::model::BoundKind::Upper => Justification::UpperAscending,
                Constraint::Bound(_) => Justification::LowerDescending,
                Constraint::Extremum(e) if e.kind == crate::model::ExtremumKind::Min => Justification::MinDeflation,
                _ => Justification::MaxInflation,
            },
            rules: Vec::new(),
        })
        .collect();
    let verdict = PremVerdict {
        predicate: constraint.predicate().to_string(),
        final_rule: Some(final_rule.to_string()),
        costs,
        plan,
        rejection: None,
    };
    let (p, mut trace) = push_constraint(program, &verdict)?;
    trace.steps.insert(0, "forced push: no soundness check was made".into());
    Ok((p, trace))
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

fn fresh_var(base: &Var, taken: &mut BTreeSet<Var>) -> Var {
    let mut n = 1;
    loop {
        let v = Var::new(format!("{}{n}", base.name()));
        if taken.insert(v.clone()) {
            return v;
        }
        n += 1;
    }
}

/// Replaces every is_min/is_max goal of non-recursive rules with a negated
/// `lesser_<rule>`/`greater_<rule>` goal and the rule defining it.
pub fn desugar_extremum(program: &Program) -> Program {
    let graph = build_dependency_graph(program);
    let mut out = program.clone();
    out.rules.clear();
    let mut used: BTreeSet<String> = program.arities().keys().map(|s| s.to_string()).collect();
    for r in &program.rules {
        if graph.is_recursive(&r.head.predicate) {
            out.rules.push(r.clone());
            continue;
        }
        let mut rule = r.clone();
        while let Some(k) = rule
            .body
            .iter()
            .position(|g| matches!(g, Goal::Aggregate(a) if matches!(a.kind, AggregateKind::IsMin | AggregateKind::IsMax)))
        {
            let Goal::Aggregate(agg) = rule.body.remove(k) else { unreachable!() };
            let (prefix, op) = match agg.kind {
                AggregateKind::IsMin => ("lesser", CmpOp::Lt),
                _ => ("greater", CmpOp::Gt),
            };
            let mut name = format!("{prefix}_{}", sanitize(&rule.id));
            while used.contains(&name) {
                name.push('_');
            }
            used.insert(name.clone());
            // The competitor copy renames everything but the group.
            let before: Vec<Goal> = rule.body[..k].to_vec();
            let mut taken: BTreeSet<Var> = rule.vars().into_iter().collect();
            let keep: BTreeSet<&Var> = agg.group_by.iter().collect();
            let mut map = BTreeMap::new();
            for g in &before {
                for v in g.vars() {
                    if !keep.contains(v) && !map.contains_key(v) {
                        map.insert(v.clone(), Term::Var(fresh_var(v, &mut taken)));
                    }
                }
            }
            let cost = &agg.measured[0];
            let rival = match map.get(cost) {
                Some(t) => t.clone(),
                None => Term::Var(cost.clone()),
            };
            let args: Vec<Term> = agg.group_by.iter().chain([cost]).map(|v| Term::Var(v.clone())).collect();
            let mut body = before.clone();
            body.extend(before.iter().map(|g| g.rename(&map)));
            body.push(Goal::Comparison(Comparison::new(op, rival, Term::Var(cost.clone()))));
            out.rules.push(Rule::new(name.clone(), Atom::new(name.clone(), args.clone()), body));
            rule.body.insert(k, Goal::Negated(Atom::new(name, args)));
        }
        out.rules.push(rule);
    }
    out.constraints = crate::analysis::extract_final_constraints(&out);
    out
}

/// A summing goal whose summand no guard proves positive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummandWarning {
    pub rule: String,
    pub summand: Var,
}

impl fmt::Display for SummandWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "rule {}: summand {} is not shown to be positive; non-positive values are reported at run time",
            self.rule, self.summand
        )
    }
}

/// Whether the rule's guards prove `summand > 0`.
pub(crate) fn summand_is_positive(rule: &Rule, summand: &Var) -> bool {
    let guards: Vec<Comparison> = rule.comparisons().cloned().collect();
    let env = guard_intervals(&guards);
    let defs = definitions(rule);
    env.get(summand).is_some_and(|i| i.positive())
        || interval(&expand(&Term::Var(summand.clone()), &defs), &env).positive()
}

/// Predicates added by [`expand_msum`].
pub const INT_UP2: &str = "int_up2";
pub const INT_UP2_DOMAIN: &str = "int_up2_dom";

#[derive(Debug, Clone)]
pub struct MsumExpansion {
    pub program: Program,
    pub warnings: Vec<SummandWarning>,
}

/// Rewrites every `sum`/`msum` goal into `int_up2(C, I)` and a `count`/`mcount`
/// over the widened witness. Recursive sums and msum count each witness key
/// once per integer, so a key contributes its largest summand.
pub fn expand_msum(program: &Program) -> MsumExpansion {
    let graph = build_dependency_graph(program);
    let mut out = program.clone();
    let mut warnings = Vec::new();
    let mut extra = Vec::new();
    let mut counter = 0;
    for r in out.rules.iter_mut() {
        let recursive = graph.is_recursive(&r.head.predicate);
        while let Some(k) = r
            .body
            .iter()
            .position(|g| matches!(g, Goal::Aggregate(a) if a.kind.is_summing()))
        {
            let Goal::Aggregate(agg) = r.body[k].clone() else { unreachable!() };
            let c = agg.measured.last().unwrap().clone();
            if !summand_is_positive(r, &c) {
                warnings.push(SummandWarning {
                    rule: r.id.clone(),
                    summand: c.clone(),
                });
            }
            let mut taken: BTreeSet<Var> = r.vars().into_iter().collect();
            let int = fresh_var(&Var::new("Int"), &mut taken);
            counter += 1;
            let domain_rule = Rule::new(
                format!("{INT_UP2_DOMAIN}_{counter}"),
                Atom::new(INT_UP2_DOMAIN, vec![Term::Var(c.clone())]),
                r.body[..k].iter().filter(|g| !matches!(g, Goal::Aggregate(_))).cloned().collect(),
            );
            extra.push(domain_rule);
            let latest = recursive || agg.kind == AggregateKind::MSum;
            let mut measured: Vec<Var> = agg.measured.clone();
            if latest {
                measured.pop();
            }
            measured.push(int.clone());
            let kind = match agg.kind {
                AggregateKind::MSum => AggregateKind::MCount,
                _ => AggregateKind::Count,
            };
            r.body[k] = Goal::Aggregate(AggregateGoal {
                kind,
                group_by: agg.group_by.clone(),
                measured,
                result: agg.result.clone(),
            });
            r.body
                .insert(k, Goal::Regular(Atom::new(INT_UP2, vec![Term::Var(c), Term::Var(int)])));
        }
    }
    if !extra.is_empty() {
        let (c, i, i1) = (Var::new("C"), Var::new("I"), Var::new("I1"));
        out.rules.extend(extra);
        out.rules.push(Rule::new(
            format!("{INT_UP2}_1"),
            Atom::new(INT_UP2, vec![Term::Var(c.clone()), Term::Var(c.clone())]),
            vec![
                Goal::Regular(Atom::new(INT_UP2_DOMAIN, vec![Term::Var(c.clone())])),
                Goal::Comparison(Comparison::new(CmpOp::Gt, Term::Var(c.clone()), Term::int(0))),
            ],
        ));
        out.rules.push(Rule::new(
            format!("{INT_UP2}_2"),
            Atom::new(INT_UP2, vec![Term::Var(c.clone()), Term::Var(i1.clone())]),
            vec![
                Goal::Regular(Atom::new(INT_UP2, vec![Term::Var(c), Term::Var(i.clone())])),
                Goal::Comparison(Comparison::new(CmpOp::Gt, Term::Var(i.clone()), Term::int(1))),
                Goal::Comparison(Comparison::new(
                    CmpOp::Eq,
                    Term::Var(i1),
                    Term::arith(crate::model::ArithOp::Sub, Term::Var(i), Term::int(1)),
                )),
            ],
        ));
    }
    out.constraints = crate::analysis::extract_final_constraints(&out);
    MsumExpansion { program: out, warnings }
}

/// Result of checking counts and sums that sit inside recursion.
#[derive(Debug, Clone)]
pub struct CountCompilation {
    /// The input program, with approved predicates marked.
    pub program: Program,
    /// The mcount/msum reading with one final maximum per predicate.
    pub shadow: Program,
    /// One verdict per recursive predicate carrying a count or sum result.
    pub verdicts: Vec<PremVerdict>,
    pub warnings: Vec<String>,
}

impl CountCompilation {
    pub fn approved(&self) -> bool {
        self.verdicts.iter().all(PremVerdict::approved)
    }
}

/// Reads each recursive count (sum) as the maximum of an mcount (msum) and
/// checks that the maximum can be pushed into the recursion. Approval marks
/// the original predicate executable with plain running counts.
pub fn compile_count_in_recursion(program: &Program) -> CountCompilation {
    let graph = build_dependency_graph(program);
    let mut shadow = program.clone();
    let mut targets: BTreeMap<String, usize> = BTreeMap::new();
    let mut warnings = Vec::new();
    for r in shadow.rules.iter_mut() {
        if !graph.is_recursive(&r.head.predicate) {
            continue;
        }
        for i in 0..r.body.len() {
            let Goal::Aggregate(a) = &r.body[i] else { continue };
            let kind = match a.kind {
                AggregateKind::Count => AggregateKind::MCount,
                AggregateKind::Sum => AggregateKind::MSum,
                _ => continue,
            };
            let Some(pos) = a
                .result
                .as_ref()
                .and_then(|v| r.head.args.iter().position(|t| t.as_var() == Some(v)))
            else {
                continue;
            };
            if let Some(s) = a.summand() {
                if !summand_is_positive(r, s) {
                    warnings.push(
                        SummandWarning {
                            rule: r.id.clone(),
                            summand: s.clone(),
                        }
                        .to_string(),
                    );
                }
            }
            if let Goal::Aggregate(a) = &mut r.body[i] {
                a.kind = kind;
            }
            targets.insert(r.head.predicate.clone(), pos);
        }
    }
    let arities: BTreeMap<String, usize> = shadow.arities().into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    let mut finals = Vec::new();
    for (pred, &pos) in &targets {
        let n = arities[pred];
        let vars: Vec<Var> = (0..n).map(|i| Var::new(format!("A{i}"))).collect();
        let id = format!("max_{}", sanitize(pred));
        let head = format!("__{id}");
        shadow.rules.push(Rule::new(
            id.clone(),
            Atom::new(head, vars.iter().cloned().map(Term::Var).collect()),
            vec![
                Goal::Regular(Atom::new(pred.clone(), vars.iter().cloned().map(Term::Var).collect())),
                Goal::Aggregate(AggregateGoal {
                    kind: AggregateKind::IsMax,
                    group_by: (0..n).filter(|&i| i != pos).map(|i| vars[i].clone()).collect(),
                    measured: vec![vars[pos].clone()],
                    result: None,
                }),
            ],
        ));
        finals.push(id);
    }
    shadow.constraints = crate::analysis::extract_final_constraints(&shadow);
    let shadow_graph = build_dependency_graph(&shadow);
    let mut out = program.clone();
    let mut verdicts = Vec::new();
    for (id, pred) in finals.iter().zip(targets.keys()) {
        let Some(c) = shadow.constraint_of(id).cloned() else { continue };
        let v = classify_with(&shadow, &shadow_graph, &c);
        if v.approved() {
            out.approve(pred);
        } else if let Some(r) = &v.rejection {
            warnings.push(format!(
                "count/sum in {pred} is not shown safe: {} fails {} at rule {}",
                r.conjunct, r.condition, r.rule
            ));
        }
        verdicts.push(v);
    }
    CountCompilation {
        program: out,
        shadow,
        verdicts,
        warnings,
    }
}

/// Result of checking is_min/is_max goals already written inside recursion.
#[derive(Debug, Clone)]
pub struct ExtremumCertification {
    /// The input program, with approved predicates marked.
    pub program: Program,
    /// The same rules without the extremum goals, plus one final rule per predicate.
    pub shadow: Program,
    pub verdicts: Vec<PremVerdict>,
}

impl ExtremumCertification {
    pub fn approved(&self) -> bool {
        self.verdicts.iter().all(PremVerdict::approved)
    }
}

/// Lifts each is_min/is_max goal of a recursive rule out into a final rule
/// and checks that it could have been pushed back in.
pub fn certify_recursive_extrema(program: &Program) -> ExtremumCertification {
    let graph = build_dependency_graph(program);
    let mut shadow = program.clone();
    let mut targets: BTreeMap<String, AggregateGoal> = BTreeMap::new();
    for r in shadow.rules.iter_mut() {
        if !graph.is_recursive(&r.head.predicate) || program.approved.contains(&r.head.predicate) {
            continue;
        }
        let head = r.head.clone();
        r.body.retain(|g| {
            let Goal::Aggregate(a) = g else { return true };
            if !matches!(a.kind, AggregateKind::IsMin | AggregateKind::IsMax) {
                return true;
            }
            let pos = |v: &Var| head.args.iter().position(|t| t.as_var() == Some(v));
            let Some(cost) = a.measured.first().and_then(pos) else { return true };
            let Some(group) = a.group_by.iter().map(pos).collect::<Option<Vec<_>>>() else { return true };
            let n = head.arity();
            let vars: Vec<Var> = (0..n).map(|i| Var::new(format!("A{i}"))).collect();
            targets.entry(head.predicate.clone()).or_insert(AggregateGoal {
                kind: a.kind,
                group_by: group.into_iter().map(|i| vars[i].clone()).collect(),
                measured: vec![vars[cost].clone()],
                result: None,
            });
            false
        });
    }
    let mut finals = Vec::new();
    for (pred, goal) in &targets {
        let n = shadow.arities()[pred.as_str()];
        let args: Vec<Term> = (0..n).map(|i| Term::Var(Var::new(format!("A{i}")))).collect();
        let prefix = if goal.kind == AggregateKind::IsMin { "min" } else { "max" };
        let id = format!("{prefix}_{}", sanitize(pred));
        shadow.rules.push(Rule::new(
            id.clone(),
            Atom::new(format!("__{id}"), args.clone()),
            vec![Goal::Regular(Atom::new(pred.clone(), args)), Goal::Aggregate(goal.clone())],
        ));
        finals.push(id);
    }
    shadow.constraints = crate::analysis::extract_final_constraints(&shadow);
    let shadow_graph = build_dependency_graph(&shadow);
    let mut out = program.clone();
    let mut verdicts = Vec::new();
    for (id, pred) in finals.iter().zip(targets.keys()) {
        let Some(c) = shadow.constraint_of(id).cloned() else { continue };
        let v = classify_with(&shadow, &shadow_graph, &c);
        if v.approved() {
            out.approve(pred);
        }
        verdicts.push(v);
    }
    ExtremumCertification {
        program: out,
        shadow,
        verdicts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::classify_premability;
    use crate::eval::{evaluate, EvalOptions};
    use crate::fixtures;
    use crate::model::{Interpretation, Value};
    use crate::parser::{parse_facts, parse_str, SourceProgram};

    fn pushed(src: &str, rule: &str) -> (Program, RewriteTrace) {
        let p = parse_str(src).unwrap();
        let c = p.constraint_of(rule).unwrap().clone();
        let v = classify_premability(&p, &c);
        push_constraint(&p, &v).unwrap()
    }

    #[test]
    fn bound_moves_into_every_path_rule() {
        let (p, trace) = pushed(fixtures::LIMITED_PATH, "r3");
        let expected = parse_str(fixtures::LIMITED_PATH_PUSHED).unwrap();
        assert_eq!(p.rules, expected.rules);
        assert!(p.constraints.is_empty());
        assert_eq!(trace.renamed[0], ("r1".to_string(), vec!["r1'".to_string()]));
    }

    #[test]
    fn min_moves_into_path_rules() {
        let (p, _) = pushed(fixtures::SHORTEST_PATH, "r4");
        let expected = parse_str(fixtures::SHORTEST_PATH_PUSHED).unwrap();
        let bodies = |p: &Program| p.rules.iter().map(|r| (r.head.clone(), r.body.clone())).collect::<Vec<_>>();
        assert_eq!(bodies(&p), bodies(&expected));
        assert!(p.approved.contains("path"));
        let edb = parse_facts(&SourceProgram::inline(fixtures::THREE_NODE_FACTS)).unwrap();
        let out = evaluate(&p, &edb, &EvalOptions::default()).unwrap();
        assert_eq!(out.model.get("spath").len(), 2);
    }

    #[test]
    fn rejected_conjunct_stays_behind() {
        let (p, _) = pushed(fixtures::BOUNDED_LONGEST_PATH, "r5");
        let r5 = p.rule("r5'").unwrap();
        assert!(r5.aggregates().any(|a| a.kind == AggregateKind::IsMax));
        assert!(r5.comparisons().next().is_none());
        assert!(p.rule("r2'").unwrap().comparisons().any(|c| c.op == CmpOp::Lt));
        assert!(!p.approved.contains("path"));
    }

    #[test]
    fn rejected_plan_is_an_error() {
        let p = parse_str(fixtures::NONPUSHABLE_MAX).unwrap();
        let v = classify_premability(&p, &p.constraints[0].constraint);
        assert!(matches!(push_constraint(&p, &v), Err(RewriteError::NotApproved(_))));
        let other = parse_str(fixtures::SHORTEST_PATH).unwrap();
        let v = classify_premability(&other, other.constraint_of("r4").unwrap());
        assert!(matches!(push_constraint(&p, &v), Err(RewriteError::PlanMismatch(_))));
    }

    #[test]
    fn forced_push_reproduces_the_wrong_maximum() {
        let p = parse_str(fixtures::NONPUSHABLE_MAX).unwrap();
        let id = p.constraints[0].rule_id.clone();
        let (forced, _) = push_unchecked(&p, &id).unwrap();
        let out = evaluate(&forced, &Interpretation::new(), &EvalOptions::default()).unwrap();
        let topp: Vec<_> = out.model.get("topp").iter().cloned().collect();
        assert_eq!(topp, vec![vec![Value::Int(5)]]);
    }

    #[test]
    fn desugared_min_uses_negation() {
        let p = parse_str(fixtures::SHORTEST_PATH).unwrap();
        let d = desugar_extremum(&p);
        let lesser = d.rule("lesser_r4").unwrap();
        assert_eq!(lesser.to_string(), "lesser_r4: lesser_r4(Y, Dy) :- path(Y, Dy), path(Y, Dy1), Dy1 < Dy.");
        assert_eq!(d.rule("r4").unwrap().to_string(), "r4: spath(Y, Dy) :- path(Y, Dy), !lesser_r4(Y, Dy).");
        let edb = parse_facts(&SourceProgram::inline(fixtures::THREE_NODE_FACTS)).unwrap();
        let a = evaluate(&p, &edb, &EvalOptions::default()).unwrap();
        let b = evaluate(&d, &edb, &EvalOptions::default()).unwrap();
        assert_eq!(a.model.get("spath"), b.model.get("spath"));
    }

    #[test]
    fn two_extrema_get_two_auxiliaries() {
        let p = parse_str(
            "r1: q(X, C) :- e(X, C), is_min((X), (C)).\nr2: s(X, C) :- e(X, C), is_max((X), (C)).\ne(a, 1). e(a, 2).",
        )
        .unwrap();
        let d = desugar_extremum(&p);
        assert!(d.rule("lesser_r1").is_some() && d.rule("greater_r2").is_some());
        let out = evaluate(&d, &Interpretation::new(), &EvalOptions::default()).unwrap();
        assert_eq!(out.model.get("q").iter().next().unwrap()[1], Value::Int(1));
        assert_eq!(out.model.get("s").iter().next().unwrap()[1], Value::Int(2));
    }

    #[test]
    fn sum_expands_through_int_up2() {
        let p = parse_str(fixtures::PARTS_TOTAL).unwrap();
        let x = expand_msum(&p);
        let r = &x.program.rules[0];
        assert_eq!(
            r.to_string(),
            "r1: total(T) :- part(Pno, C), int_up2(C, Int1), count((), (Pno, C, Int1), T)."
        );
        assert_eq!(x.warnings.len(), 1);
        let edb = parse_facts(&SourceProgram::inline("part(bolt, 4).\npart(nut, 3).\npart(screw, 4).")).unwrap();
        let out = evaluate(&x.program, &edb, &EvalOptions::default()).unwrap();
        assert_eq!(out.model.get("total").iter().next().unwrap()[0], Value::Int(11));
        let bolt: Vec<_> = out
            .model
            .get(INT_UP2)
            .iter()
            .filter(|t| t[0] == Value::Int(4))
            .map(|t| t[1].as_int().unwrap())
            .collect();
        assert_eq!(bolt, vec![1, 2, 3, 4]);
    }

    #[test]
    fn count_in_recursion_is_approved() {
        let p = parse_str(fixtures::PARTY_COUNT).unwrap();
        let c = compile_count_in_recursion(&p);
        assert!(c.approved(), "{:?}", c.warnings);
        assert!(c.program.approved.contains("cntfriends"));
        assert_eq!(c.program.rules, p.rules);
    }

    #[test]
    fn unguarded_sum_warns() {
        let p = parse_str(fixtures::PART_EXPLOSION_UNGUARDED).unwrap();
        let c = compile_count_in_recursion(&p);
        assert!(c.warnings.iter().any(|w| w.contains("not shown to be positive")));
        let p = parse_str(fixtures::PART_EXPLOSION).unwrap();
        let c = compile_count_in_recursion(&p);
        assert!(!c.warnings.iter().any(|w| w.contains("not shown to be positive")));
    }

    #[test]
    fn recursive_min_is_certified() {
        for src in [fixtures::SPATH_PREM, fixtures::SHORTEST_PATH_PUSHED] {
            let p = parse_str(src).unwrap();
            let c = certify_recursive_extrema(&p);
            assert_eq!(c.verdicts.len(), 1);
            assert!(c.approved(), "{}", c.verdicts[0]);
            assert!(c.program.approved.contains("path"));
        }
    }

    #[test]
    fn recursive_max_over_growing_cost_is_rejected() {
        let p = parse_str(
            "p(J) :- s(J). p(J1) :- p(J), J < 10, J1 = J + 2, is_max((), (J1)). top(J) :- p(J).",
        )
        .unwrap();
        let c = certify_recursive_extrema(&p);
        assert!(!c.approved());
        assert!(c.program.approved.is_empty());
    }
}
