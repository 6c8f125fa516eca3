//! Sufficient syntactic conditions for pushing a constraint into recursion.
//!
//! Each rule of the cost procedure is examined on its own. Goals over a cost
//! predicate contribute a "body cost" variable `B`; the head cost `H` is
//! expanded through the rule's assignments and compared against each `B`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::cost::{cost_procedure, dependencies, find_cost_arguments_in, CostArgumentMap};
use super::expr::{as_nonneg, expand, guard_intervals, interval, linear, mono, Env, Lin, Mono};
use super::graph::{build_dependency_graph, DependencyGraph};
use crate::model::{
    BoundKind, CmpOp, Comparison, Constraint, ExtremumKind, Goal, Program, Rule, Term, Var,
};
use crate::schedule::schedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ascending {
    Ascending,
    Descending,
    Both,
    Neither,
}

impl Ascending {
    pub fn ascending(self) -> bool {
        matches!(self, Ascending::Ascending | Ascending::Both)
    }

    pub fn descending(self) -> bool {
        matches!(self, Ascending::Descending | Ascending::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preservation {
    Inflation,
    Deflation,
    Both,
    Neither,
}

impl Preservation {
    pub fn inflation(self) -> bool {
        matches!(self, Preservation::Inflation | Preservation::Both)
    }

    pub fn deflation(self) -> bool {
        matches!(self, Preservation::Deflation | Preservation::Both)
    }

    fn from_flags(inflation: bool, deflation: bool) -> Self {
        match (inflation, deflation) {
            (true, true) => Preservation::Both,
            (true, false) => Preservation::Inflation,
            (false, true) => Preservation::Deflation,
            (false, false) => Preservation::Neither,
        }
    }
}

/// Everything the checks need to know about one rule.
struct RuleFacts {
    head_cost: Option<Term>,
    /// Body cost variables, or `None` if some cost goal has a non-variable cost.
    body_costs: Option<Vec<Var>>,
    defs: BTreeMap<Var, Term>,
    guards: Vec<Comparison>,
    env: Env,
}

fn rule_facts(rule: &Rule, costs: &CostArgumentMap) -> Result<RuleFacts, String> {
    let sched = schedule(rule, true)?;
    let defs: BTreeMap<Var, Term> = sched.assignments().map(|(v, t)| (v.clone(), t.clone())).collect();
    let guards: Vec<Comparison> = sched.filters().cloned().collect();
    let expanded: Vec<Comparison> = guards
        .iter()
        .map(|g| Comparison::new(g.op, expand(&g.left, &defs), expand(&g.right, &defs)))
        .collect();
    let mut all = guards.clone();
    all.extend(expanded.iter().cloned());
    let env = guard_intervals(&all);
    let head_cost = costs
        .get(&rule.head.predicate)
        .map(|p| expand(&rule.head.args[p], &defs));
    let mut body_costs = Some(Vec::new());
    for a in rule.regular_goals() {
        if let Some(p) = costs.get(&a.predicate) {
            match (&a.args[p], body_costs.as_mut()) {
                (Term::Var(v), Some(list)) => {
                    if !list.contains(v) {
                        list.push(v.clone())
                    }
                }
                _ => body_costs = None,
            }
        }
    }
    Ok(RuleFacts {
        head_cost,
        body_costs,
        defs,
        guards: expanded,
        env,
    })
}

fn is_exit(rule: &Rule, costs: &CostArgumentMap) -> bool {
    rule.regular_goals().all(|a| costs.get(&a.predicate).is_none())
}

/// Whether the head cost never drops below (ascending) or never exceeds
/// (descending) any body cost in a valid instance of `rule`.
pub fn check_ascending(rule: &Rule, costs: &CostArgumentMap) -> Ascending {
    if is_exit(rule, costs) {
        return Ascending::Both;
    }
    let Ok(facts) = rule_facts(rule, costs) else {
        return Ascending::Neither;
    };
    let (Some(h), Some(bs)) = (&facts.head_cost, &facts.body_costs) else {
        return Ascending::Neither;
    };
    let (mut asc, mut desc) = (true, true);
    for b in bs {
        let diff = Term::arith(crate::model::ArithOp::Sub, h.clone(), Term::Var(b.clone()));
        asc &= proves_nonneg(&diff, &facts);
        let neg = Term::arith(crate::model::ArithOp::Sub, Term::Var(b.clone()), h.clone());
        desc &= proves_nonneg(&neg, &facts);
    }
    match (asc, desc) {
        (true, true) => Ascending::Both,
        (true, false) => Ascending::Ascending,
        (false, true) => Ascending::Descending,
        (false, false) => Ascending::Neither,
    }
}

/// `t >= 0` under the rule's guards, by interval bounds or by matching a guard.
fn proves_nonneg(t: &Term, facts: &RuleFacts) -> bool {
    match linear(t) {
        Some(l) => {
            if l.lower_bound(&facts.env).is_some_and(|lb| lb >= 0) {
                return true;
            }
            facts
                .guards
                .iter()
                .filter_map(as_nonneg)
                .flatten()
                .any(|g: Lin| l.clone().add(&g, -1).and_then(|d| d.as_constant()).is_some_and(|k| k >= 0))
        }
        None => interval(t, &facts.env).nonneg(),
    }
}

/// Whether raising (inflation) or lowering (deflation) body cost values keeps
/// valid instances valid with the head cost moving the same way or not at all.
pub fn check_inflation_preserving(rule: &Rule, costs: &CostArgumentMap) -> Preservation {
    if is_exit(rule, costs) {
        return Preservation::Both;
    }
    preservation_detail(rule, costs).0
}

fn preservation_detail(rule: &Rule, costs: &CostArgumentMap) -> (Preservation, String) {
    let facts = match rule_facts(rule, costs) {
        Ok(f) => f,
        Err(e) => return (Preservation::Neither, e),
    };
    let (Some(h), Some(bs)) = (&facts.head_cost, &facts.body_costs) else {
        return (Preservation::Neither, "a cost argument is not a variable".into());
    };
    let (mut infl, mut defl) = (true, true);
    let mut why = Vec::new();
    for b in bs {
        let depends = |v: &Var| dependencies(v, &facts.defs).contains(b);
        // Aggregate results whose inputs move with B.
        let mut opaque = BTreeSet::new();
        for g in rule.aggregates() {
            if let Some(r) = &g.result {
                if g.group_by.iter().chain(&g.measured).any(depends) {
                    opaque.insert(r.clone());
                }
            }
        }
        match mono(h, b, &facts.env, &opaque) {
            Mono::Const | Mono::NonDecr => {}
            m => {
                infl = false;
                defl = false;
                why.push(format!("head cost is {} in {b}", describe(m)));
            }
        }
        let cost_pos = costs.get(&rule.head.predicate);
        for (i, t) in rule.head.args.iter().enumerate() {
            if Some(i) != cost_pos && mono(&expand(t, &facts.defs), b, &facts.env, &opaque) != Mono::Const {
                infl = false;
                defl = false;
                why.push(format!("head argument {} depends on {b}", i + 1));
            }
        }
        for g in &facts.guards {
            let e = Term::arith(crate::model::ArithOp::Sub, g.left.clone(), g.right.clone());
            let m = mono(&e, b, &facts.env, &opaque);
            if m == Mono::Const {
                continue;
            }
            let m = match g.op {
                CmpOp::Eq | CmpOp::Ne => Mono::Unknown,
                CmpOp::Ge | CmpOp::Gt => m,
                CmpOp::Le | CmpOp::Lt => m.flip(),
            };
            match m {
                Mono::NonDecr => defl = false,
                Mono::NonIncr => infl = false,
                _ => {
                    infl = false;
                    defl = false;
                }
            }
            why.push(format!("guard {g} constrains {b}"));
        }
        for goal in &rule.body {
            let (atom, negated) = match goal {
                Goal::Regular(a) => (a, false),
                Goal::Negated(a) => (a, true),
                _ => continue,
            };
            let cp = if negated { None } else { costs.get(&atom.predicate) };
            for (i, t) in atom.args.iter().enumerate() {
                if Some(i) == cp {
                    continue;
                }
                if t.vars().into_iter().any(|v| depends(v) || opaque.contains(v)) {
                    infl = false;
                    defl = false;
                    why.push(format!("goal {atom} reads {b} outside its cost argument"));
                }
            }
        }
    }
    why.dedup();
    (Preservation::from_flags(infl, defl), why.join("; "))
}

fn describe(m: Mono) -> &'static str {
    match m {
        Mono::Const => "constant",
        Mono::NonDecr => "non-decreasing",
        Mono::NonIncr => "non-increasing",
        Mono::Unknown => "not monotonic",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Justification {
    MinDeflation,
    MaxInflation,
    UpperAscending,
    LowerDescending,
}

impl Justification {
    pub fn name(self) -> &'static str {
        match self {
            Justification::MinDeflation => "min-deflation",
            Justification::MaxInflation => "max-inflation",
            Justification::UpperAscending => "upper-ascending",
            Justification::LowerDescending => "lower-descending",
        }
    }

    fn property(self) -> &'static str {
        match self {
            Justification::MinDeflation => "deflation-preserving",
            Justification::MaxInflation => "inflation-preserving",
            Justification::UpperAscending => "ascending",
            Justification::LowerDescending => "descending",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanStep {
    pub conjunct: Constraint,
    pub justification: Justification,
    /// Rule ids of the procedure the conjunct was checked against.
    pub rules: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub conjunct: Constraint,
    pub condition: String,
    pub rule: String,
    pub detail: String,
}

/// Outcome of the syntactic check for one constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PremVerdict {
    pub predicate: String,
    pub final_rule: Option<String>,
    pub costs: CostArgumentMap,
    /// Conjuncts approved so far, in push order.
    pub plan: Vec<PlanStep>,
    pub rejection: Option<Rejection>,
}

impl PremVerdict {
    pub fn approved(&self) -> bool {
        self.rejection.is_none() && !self.plan.is_empty()
    }
}

impl fmt::Display for PremVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.rejection {
            None => {
                let steps: Vec<String> = self
                    .plan
                    .iter()
                    .map(|s| format!("{} ({}: {})", s.justification.name(), s.justification.property(), s.rules.join(", ")))
                    .collect();
                writeln!(f, "APPROVED: {}", steps.join("; "))?;
            }
            Some(r) => {
                writeln!(f, "REJECTED: {} fails {} at rule {}", r.conjunct, r.condition, r.rule)?;
            }
        }
        writeln!(f, "predicate: {}", self.predicate)?;
        if let Some(r) = &self.final_rule {
            writeln!(f, "final rule: {r}")?;
        }
        let costs: Vec<String> = self.costs.iter().map(|(p, i)| format!("{p}[{}]", i + 1)).collect();
        writeln!(f, "cost arguments: {}", if costs.is_empty() { "none".into() } else { costs.join(", ") })?;
        for s in &self.plan {
            writeln!(f, "pushed: {}", s.conjunct)?;
        }
        if let Some(r) = &self.rejection {
            writeln!(f, "not pushed: {}", r.conjunct)?;
            if !r.detail.is_empty() {
                writeln!(f, "reason: {}", r.detail)?;
            }
        }
        Ok(())
    }
}

/// Checks every conjunct of `constraint` in push order, bounds first.
pub fn classify_premability(program: &Program, constraint: &Constraint) -> PremVerdict {
    let graph = build_dependency_graph(program);
    classify_with(program, &graph, constraint)
}

pub(crate) fn classify_with(program: &Program, graph: &DependencyGraph, constraint: &Constraint) -> PremVerdict {
    let final_rule = program
        .constraints
        .iter()
        .find(|c| &c.constraint == constraint)
        .map(|c| c.rule_id.clone());
    let mut verdict = PremVerdict {
        predicate: constraint.predicate().to_string(),
        final_rule,
        costs: CostArgumentMap::default(),
        plan: Vec::new(),
        rejection: None,
    };
    let conjuncts: Vec<Constraint> = match constraint {
        Constraint::Conjunction(_) => match Constraint::conjunction(vec![constraint.clone()]) {
            Constraint::Conjunction(cs) => cs,
            other => vec![other],
        },
        other => vec![other.clone()],
    };
    let reject = |v: &mut PremVerdict, c: &Constraint, condition: &str, rule: &str, detail: String| {
        v.rejection = Some(Rejection {
            conjunct: c.clone(),
            condition: condition.to_string(),
            rule: rule.to_string(),
            detail,
        });
    };
    let first = conjuncts[0].clone();
    let fallback_rule = verdict.final_rule.clone().unwrap_or_default();
    let costs = match find_cost_arguments_in(program, graph, constraint) {
        Ok(c) => c,
        Err(e) => {
            reject(&mut verdict, &first, "cost-argument analysis", &fallback_rule, e.to_string());
            return verdict;
        }
    };
    verdict.costs = costs.clone();
    let mut procedure = match cost_procedure(program, graph, &costs) {
        Ok(p) => p,
        Err(e) => {
            reject(&mut verdict, &first, "composition", &fallback_rule, e.to_string());
            return verdict;
        }
    };
    procedure.sort_by(|a, b| a.id.cmp(&b.id));
    let arity = procedure.first().map(|r| r.head.arity()).unwrap_or(0);
    for c in &conjuncts {
        let ids: Vec<String> = procedure.iter().map(|r| r.id.clone()).collect();
        match c {
            Constraint::Bound(b) => {
                let (just, cond) = match b.kind {
                    BoundKind::Upper => (Justification::UpperAscending, "an ascending mapping"),
                    BoundKind::Lower => (Justification::LowerDescending, "a descending mapping"),
                };
                if b.limit.as_int().is_none() {
                    reject(&mut verdict, c, cond, &fallback_rule, "bound limit is not an integer".into());
                    return verdict;
                }
                for r in &procedure {
                    let a = check_ascending(r, &costs);
                    let ok = match b.kind {
                        BoundKind::Upper => a.ascending(),
                        BoundKind::Lower => a.descending(),
                    };
                    if !ok {
                        reject(
                            &mut verdict,
                            c,
                            cond,
                            &r.id,
                            format!("cannot show the head cost {} the body costs", match b.kind {
                                BoundKind::Upper => "is at least",
                                BoundKind::Lower => "is at most",
                            }),
                        );
                        return verdict;
                    }
                }
                for r in procedure.iter_mut() {
                    *r = with_bound_guard(r, &costs, b.op, &b.limit);
                }
                verdict.plan.push(PlanStep {
                    conjunct: c.clone(),
                    justification: just,
                    rules: ids,
                });
            }
            Constraint::Extremum(e) => {
                let (just, cond) = match e.kind {
                    ExtremumKind::Min => (Justification::MinDeflation, "deflation preservation"),
                    ExtremumKind::Max => (Justification::MaxInflation, "inflation preservation"),
                };
                let mut non_cost: Vec<usize> = (0..arity).filter(|&i| i != e.cost).collect();
                non_cost.sort();
                let mut group = e.group_by.clone();
                group.sort();
                if group != non_cost {
                    reject(
                        &mut verdict,
                        c,
                        cond,
                        &fallback_rule,
                        "the group must consist of every argument except the cost".into(),
                    );
                    return verdict;
                }
                for r in &procedure {
                    if is_exit(r, &costs) {
                        continue;
                    }
                    let (p, detail) = preservation_detail(r, &costs);
                    let ok = match e.kind {
                        ExtremumKind::Min => p.deflation(),
                        ExtremumKind::Max => p.inflation(),
                    };
                    if !ok {
                        reject(&mut verdict, c, cond, &r.id, detail);
                        return verdict;
                    }
                }
                verdict.plan.push(PlanStep {
                    conjunct: c.clone(),
                    justification: just,
                    rules: ids,
                });
            }
            Constraint::Conjunction(_) => unreachable!("conjunctions are flattened"),
        }
    }
    verdict
}

/// Adds `head_cost op limit` and primes the rule id.
pub(crate) fn with_bound_guard(rule: &Rule, costs: &CostArgumentMap, op: CmpOp, limit: &crate::model::Value) -> Rule {
    let mut out = rule.clone();
    if let Some(p) = costs.get(&rule.head.predicate) {
        out.body.push(Goal::Comparison(Comparison::new(
            op,
            rule.head.args[p].clone(),
            Term::Const(limit.clone()),
        )));
    }
    out.id.push('\'');
    out
}

/// Convenience for callers that only need the cost map of a constraint.
pub fn cost_arguments(program: &Program, constraint: &Constraint) -> Option<CostArgumentMap> {
    let graph = build_dependency_graph(program);
    find_cost_arguments_in(program, &graph, constraint).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::parser::parse_str;

    fn verdict(src: &str, rule: &str) -> PremVerdict {
        let p = parse_str(src).unwrap();
        let c = p.constraint_of(rule).unwrap().clone();
        classify_premability(&p, &c)
    }

    #[test]
    fn shortest_path_min_is_approved() {
        let v = verdict(fixtures::SHORTEST_PATH, "r4");
        assert!(v.approved(), "{v}");
        assert!(v.to_string().starts_with("APPROVED: min-deflation (deflation-preserving: r1, r2)"));
    }

    #[test]
    fn bound_pushes_but_max_does_not() {
        let v = verdict(fixtures::BOUNDED_LONGEST_PATH, "r5");
        assert_eq!(v.plan.len(), 1);
        assert_eq!(v.plan[0].justification, Justification::UpperAscending);
        let r = v.rejection.unwrap();
        assert_eq!(r.rule, "r2'");
        assert_eq!(r.condition, "inflation preservation");
    }

    #[test]
    fn nonpushable_max_rejected() {
        let p = parse_str(fixtures::NONPUSHABLE_MAX).unwrap();
        let c = p.constraints[0].constraint.clone();
        let v = classify_premability(&p, &c);
        assert!(!v.approved());
    }

    #[test]
    fn party_max_approved_through_composition() {
        let p = parse_str(fixtures::PARTY_MCOUNT).unwrap();
        let c = p.constraints[0].constraint.clone();
        let v = classify_premability(&p, &c);
        assert!(v.approved(), "{v}");
        assert_eq!(v.plan[0].justification, Justification::MaxInflation);
    }

    #[test]
    fn party_threshold_not_pushable() {
        let p = parse_str(fixtures::PARTY_VARIANT).unwrap();
        let c = p.constraints[0].constraint.clone();
        let v = classify_premability(&p, &c);
        assert!(!v.approved(), "{v}");
    }

    #[test]
    fn rule_level_checks() {
        let p = parse_str(fixtures::SHORTEST_PATH).unwrap();
        let c = p.constraint_of("r4").unwrap().clone();
        let costs = cost_arguments(&p, &c).unwrap();
        let r2 = p.rule("r2").unwrap();
        assert_eq!(check_ascending(r2, &costs), Ascending::Ascending);
        assert_eq!(check_inflation_preserving(r2, &costs), Preservation::Both);
        assert_eq!(check_ascending(p.rule("r1").unwrap(), &costs), Ascending::Both);
    }
}
