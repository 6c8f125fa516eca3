//! Cost arguments: which position of each recursive predicate carries the
//! value a constraint talks about, and the rule set that defines it.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::graph::{build_dependency_graph, DependencyGraph};
use crate::model::{Atom, CmpOp, Comparison, Constraint, Goal, Program, Rule, Term, Var};
use crate::schedule::schedule;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("predicate {predicate} has two candidate cost arguments ({first} and {second})")]
    AmbiguousCost {
        predicate: String,
        first: usize,
        second: usize,
    },
    #[error("no cost argument for {predicate}: {reason}")]
    NoCost { predicate: String, reason: String },
    #[error("cannot compose {predicate} into the cost procedure: {reason}")]
    Composition { predicate: String, reason: String },
}

/// Predicate name to 0-based cost position.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CostArgumentMap {
    positions: BTreeMap<String, usize>,
}

impl CostArgumentMap {
    pub fn get(&self, predicate: &str) -> Option<usize> {
        self.positions.get(predicate).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.positions.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    fn propose(&mut self, predicate: &str, pos: usize) -> Result<bool, AnalysisError> {
        match self.positions.get(predicate) {
            Some(&p) if p == pos => Ok(false),
            Some(&p) => Err(AnalysisError::AmbiguousCost {
                predicate: predicate.to_string(),
                first: p.min(pos) + 1,
                second: p.max(pos) + 1,
            }),
            None => {
                self.positions.insert(predicate.to_string(), pos);
                Ok(true)
            }
        }
    }
}

/// Variables a term depends on once assignments are unfolded.
pub(crate) fn dependencies(var: &Var, defs: &BTreeMap<Var, Term>) -> BTreeSet<Var> {
    let mut out = BTreeSet::new();
    let mut stack = vec![var.clone()];
    while let Some(v) = stack.pop() {
        if !out.insert(v.clone()) {
            continue;
        }
        if let Some(t) = defs.get(&v) {
            stack.extend(t.vars().into_iter().cloned());
        }
    }
    out
}

pub(crate) fn definitions(rule: &Rule) -> BTreeMap<Var, Term> {
    match schedule(rule, true) {
        Ok(s) => s.assignments().map(|(v, t)| (v.clone(), t.clone())).collect(),
        Err(_) => BTreeMap::new(),
    }
}

/// Finds the cost position of every predicate in the constrained predicate's
/// component that the constrained value flows through.
pub fn find_cost_arguments(program: &Program, constraint: &Constraint) -> Result<CostArgumentMap, AnalysisError> {
    let graph = build_dependency_graph(program);
    find_cost_arguments_in(program, &graph, constraint)
}

pub(crate) fn find_cost_arguments_in(
    program: &Program,
    graph: &DependencyGraph,
    constraint: &Constraint,
) -> Result<CostArgumentMap, AnalysisError> {
    let predicate = constraint.predicate().to_string();
    let positions: Vec<usize> = constraint.cost_positions().into_iter().collect();
    let no_cost = |reason: &str| AnalysisError::NoCost {
        predicate: predicate.clone(),
        reason: reason.to_string(),
    };
    match positions.as_slice() {
        [] => return Err(no_cost("the constraint names no argument")),
        [_] => {}
        [a, b, ..] => {
            return Err(AnalysisError::AmbiguousCost {
                predicate: predicate.clone(),
                first: a + 1,
                second: b + 1,
            })
        }
    }
    let pos = positions[0];
    let arity = match program.rules_for(&predicate).next() {
        Some(r) => r.head.arity(),
        None => return Err(no_cost("it is not defined by any rule")),
    };
    if pos >= arity {
        return Err(no_cost(&format!("argument {} is out of range", pos + 1)));
    }
    let mut map = CostArgumentMap::default();
    map.propose(&predicate, pos)?;
    if !graph.is_recursive(&predicate) {
        return Ok(map);
    }
    let mut work = vec![predicate.clone()];
    while let Some(p) = work.pop() {
        let cp = map.get(&p).unwrap();
        for r in program.rules_for(&p) {
            let Term::Var(h) = &r.head.args[cp] else { continue };
            let deps = dependencies(h, &definitions(r));
            for a in r.regular_goals() {
                if !graph.same_component(&a.predicate, &p) {
                    continue;
                }
                let hits: Vec<usize> = a
                    .args
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| t.vars().iter().any(|v| deps.contains(*v)))
                    .map(|(i, _)| i)
                    .collect();
                match hits.as_slice() {
                    [] => {}
                    [j] => {
                        if map.propose(&a.predicate, *j)? {
                            work.push(a.predicate.clone());
                        }
                    }
                    [x, y, ..] => {
                        return Err(AnalysisError::AmbiguousCost {
                            predicate: a.predicate.clone(),
                            first: x + 1,
                            second: y + 1,
                        })
                    }
                }
            }
        }
    }
    Ok(map)
}

/// Rules of the cost predicates, with every same-component goal lacking a
/// cost argument unfolded through its single recursive rule.
pub(crate) fn cost_procedure(
    program: &Program,
    graph: &DependencyGraph,
    costs: &CostArgumentMap,
) -> Result<Vec<Rule>, AnalysisError> {
    let mut out = Vec::new();
    for r in &program.rules {
        if costs.get(&r.head.predicate).is_none() {
            continue;
        }
        let mut rule = r.clone();
        let mut rounds = 0;
        loop {
            let target = rule.body.iter().position(|g| match g {
                Goal::Regular(a) => {
                    graph.same_component(&a.predicate, &r.head.predicate) && costs.get(&a.predicate).is_none()
                }
                _ => false,
            });
            let Some(at) = target else { break };
            rounds += 1;
            let Goal::Regular(goal) = rule.body[at].clone() else { unreachable!() };
            if rounds > graph.component_members(&r.head.predicate).len() + 1 {
                return Err(AnalysisError::Composition {
                    predicate: goal.predicate,
                    reason: "unfolding does not terminate".into(),
                });
            }
            let recursive: Vec<&Rule> = program
                .rules_for(&goal.predicate)
                .filter(|d| {
                    d.regular_goals()
                        .any(|a| graph.same_component(&a.predicate, &goal.predicate))
                })
                .collect();
            let def = match recursive.as_slice() {
                [d] => *d,
                _ => {
                    return Err(AnalysisError::Composition {
                        predicate: goal.predicate.clone(),
                        reason: format!("it has {} recursive rules, composition needs exactly one", recursive.len()),
                    })
                }
            };
            rule = unfold(&rule, at, &goal, def);
        }
        out.push(rule);
    }
    Ok(out)
}

/// Replaces body goal `at` (an instance of `def`'s head) with `def`'s body.
fn unfold(rule: &Rule, at: usize, goal: &Atom, def: &Rule) -> Rule {
    let taken: BTreeSet<Var> = rule.vars().into_iter().collect();
    let mut rename = BTreeMap::new();
    for v in def.vars() {
        let mut name = format!("{}'", v.name());
        while taken.contains(&Var::new(name.clone())) {
            name.push('\'');
        }
        rename.insert(v, Term::Var(Var::new(name)));
    }
    let fresh = def.rename(&rename);
    let mut subst: BTreeMap<Var, Term> = BTreeMap::new();
    let mut equalities = Vec::new();
    for (s, t) in fresh.head.args.iter().zip(&goal.args) {
        match s {
            Term::Var(v) if !subst.contains_key(v) => {
                subst.insert(v.clone(), t.clone());
            }
            other => equalities.push(Goal::Comparison(Comparison::new(CmpOp::Eq, t.clone(), other.rename(&subst)))),
        }
    }
    let mut body = rule.body[..at].to_vec();
    body.extend(fresh.body.iter().map(|g| g.rename(&subst)));
    body.extend(equalities);
    body.extend(rule.body[at + 1..].iter().cloned());
    Rule::new(format!("{}/{}", rule.id, def.id), rule.head.clone(), body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::{Bound, Extremum, ExtremumKind, Value};
    use crate::parser::parse_str;

    #[test]
    fn path_cost_is_second_argument() {
        let p = parse_str(fixtures::SHORTEST_PATH).unwrap();
        let c = p.constraint_of("r4").unwrap().clone();
        let m = find_cost_arguments(&p, &c).unwrap();
        assert_eq!(m.get("path"), Some(1));
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn party_cost_skips_attend_and_composes() {
        let p = parse_str(fixtures::PARTY_VARIANT).unwrap();
        let c = Constraint::Bound(Bound::new("cntfriends", 1, CmpOp::Ge, Value::Int(3)).unwrap());
        let g = build_dependency_graph(&p);
        let m = find_cost_arguments_in(&p, &g, &c).unwrap();
        assert_eq!(m.get("cntfriends"), Some(1));
        assert_eq!(m.get("attend"), None);
        let proc = cost_procedure(&p, &g, &m).unwrap();
        assert_eq!(proc.len(), 1);
        assert!(proc[0].id.contains('/'));
        assert!(proc[0].regular_goals().any(|a| a.predicate == "cntfriends"));
    }

    #[test]
    fn ambiguous_and_missing_costs() {
        let p = parse_str("p(X, Y) :- e(X, Y).\np(Y, X) :- p(X, Y).\n").unwrap();
        let c = Constraint::Extremum(Extremum {
            kind: ExtremumKind::Min,
            predicate: "p".into(),
            group_by: vec![0],
            cost: 1,
        });
        assert!(matches!(find_cost_arguments(&p, &c), Err(AnalysisError::AmbiguousCost { .. })));
        let c = Constraint::Extremum(Extremum {
            kind: ExtremumKind::Min,
            predicate: "e".into(),
            group_by: vec![0],
            cost: 1,
        });
        assert!(matches!(find_cost_arguments(&p, &c), Err(AnalysisError::NoCost { .. })));
    }
}
