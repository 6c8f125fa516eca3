//! Static analysis: dependency graph and strata, cost arguments, and the
//! syntactic checks that decide whether a constraint may move into recursion.

mod cost;
pub(crate) mod expr;
mod graph;
mod prem;

use std::collections::BTreeMap;

pub use cost::{find_cost_arguments, AnalysisError, CostArgumentMap};
pub(crate) use cost::definitions;
pub use graph::{build_dependency_graph, stratify, DependencyGraph, EdgeKind, StratificationError, Stratum};
pub(crate) use graph::{check_negation, strata};
pub(crate) use prem::classify_with;
pub use prem::{
    check_ascending, check_inflation_preserving, classify_premability, cost_arguments, Ascending, Justification,
    PlanStep, PremVerdict, Preservation, Rejection,
};

use crate::model::{
    AggregateGoal, AggregateKind, Atom, Constraint, Extremum, ExtremumKind, FinalConstraint, Goal, Program, Rule,
    Term, Value, Var,
};

/// A constraint applied to a recursive predicate after every step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredicateGamma {
    pub extremum: Extremum,
    /// `mmin`/`mmax`: earlier values are kept, only non-improving ones are dropped.
    pub monotone: bool,
    /// Added for a plain count or sum whose result sits in a recursive head.
    pub implicit: bool,
}

/// Whether an extremum goal acts on the head relation instead of filtering bindings.
pub(crate) fn is_pushed_goal(graph: &DependencyGraph, rule: &Rule, goal: &AggregateGoal) -> bool {
    goal.kind.is_extremum() && (goal.kind.is_monotone_extremum() || graph.is_recursive(&rule.head.predicate))
}

fn head_position(rule: &Rule, v: &Var) -> Option<usize> {
    rule.head.args.iter().position(|t| t.as_var() == Some(v))
}

/// Collects the per-predicate constraints implied by extremum goals in
/// recursive rules and by count/sum results in recursive heads.
pub fn predicate_constraints(program: &Program) -> Result<BTreeMap<String, PredicateGamma>, (String, String)> {
    let graph = build_dependency_graph(program);
    predicate_constraints_in(program, &graph)
}

pub(crate) fn predicate_constraints_in(
    program: &Program,
    graph: &DependencyGraph,
) -> Result<BTreeMap<String, PredicateGamma>, (String, String)> {
    let mut out: BTreeMap<String, PredicateGamma> = BTreeMap::new();
    for r in &program.rules {
        for g in r.aggregates() {
            if !is_pushed_goal(graph, r, g) {
                continue;
            }
            let err = |m: &str| (r.id.clone(), m.to_string());
            let measured = g.measured.first().ok_or_else(|| err("extremum without a measured variable"))?;
            let cost = head_position(r, measured)
                .ok_or_else(|| err(&format!("{} measures {measured}, which is not a head argument", g.kind.keyword())))?;
            let mut group_by = Vec::new();
            for v in &g.group_by {
                group_by.push(
                    head_position(r, v)
                        .ok_or_else(|| err(&format!("{} groups by {v}, which is not a head argument", g.kind.keyword())))?,
                );
            }
            group_by.sort();
            let gamma = PredicateGamma {
                extremum: Extremum {
                    kind: g.kind.extremum_kind().unwrap(),
                    predicate: r.head.predicate.clone(),
                    group_by,
                    cost,
                },
                monotone: g.kind.is_monotone_extremum(),
                implicit: false,
            };
            match out.get(&r.head.predicate) {
                Some(existing) if *existing != gamma => {
                    return Err(err(&format!("conflicting extremum goals for {}", r.head.predicate)));
                }
                _ => {
                    out.insert(r.head.predicate.clone(), gamma);
                }
            }
        }
    }
    for r in &program.rules {
        if !graph.is_recursive(&r.head.predicate) {
            continue;
        }
        for g in r.aggregates() {
            if !matches!(g.kind, AggregateKind::Count | AggregateKind::Sum) {
                continue;
            }
            let Some(cost) = g.result.as_ref().and_then(|v| head_position(r, v)) else { continue };
            let gamma = PredicateGamma {
                extremum: Extremum {
                    kind: ExtremumKind::Max,
                    predicate: r.head.predicate.clone(),
                    group_by: (0..r.head.arity()).filter(|&i| i != cost).collect(),
                    cost,
                },
                monotone: false,
                implicit: true,
            };
            match out.get(&r.head.predicate) {
                Some(existing) if existing.implicit && existing.extremum != gamma.extremum => {
                    return Err((
                        r.id.clone(),
                        format!("count/sum results land in different arguments of {}", r.head.predicate),
                    ));
                }
                Some(_) => {}
                None => {
                    out.insert(r.head.predicate.clone(), gamma);
                }
            }
        }
    }
    Ok(out)
}

/// Reads a comparison or is_min/is_max goal as a constraint on `atom`'s
/// predicate. The atom's arguments must be distinct variables.
pub(crate) fn goal_constraint(atom: &Atom, goal: &Goal) -> Option<Constraint> {
    let pos = |v: &Var| atom.args.iter().position(|t| t.as_var() == Some(v));
    match goal {
        Goal::Comparison(c) => {
            let (v, op, limit) = match (&c.left, &c.right) {
                (Term::Var(v), Term::Const(k @ Value::Int(_))) => (v, c.op, k),
                (Term::Const(k @ Value::Int(_)), Term::Var(v)) => (v, c.op.mirrored(), k),
                _ => return None,
            };
            crate::model::Bound::new(atom.predicate.clone(), pos(v)?, op, limit.clone()).map(Constraint::Bound)
        }
        Goal::Aggregate(a) if matches!(a.kind, AggregateKind::IsMin | AggregateKind::IsMax) => {
            let cost = pos(a.measured.first()?)?;
            let mut group_by = a.group_by.iter().map(pos).collect::<Option<Vec<_>>>()?;
            group_by.sort();
            Some(Constraint::Extremum(Extremum {
                kind: a.kind.extremum_kind().unwrap(),
                predicate: atom.predicate.clone(),
                group_by,
                cost,
            }))
        }
        _ => None,
    }
}

/// Finds final rules of the form `q(..) :- p(X1..Xn), guards, extremum.` where
/// `p` is defined by rules and every other goal constrains `p`'s arguments.
pub fn extract_final_constraints(program: &Program) -> Vec<FinalConstraint> {
    let graph = build_dependency_graph(program);
    let idb = program.idb_predicates();
    let mut out = Vec::new();
    'rules: for r in &program.rules {
        if graph.is_recursive(&r.head.predicate) {
            continue;
        }
        let atoms: Vec<_> = r.regular_goals().collect();
        let [atom] = atoms.as_slice() else { continue };
        if !idb.contains(atom.predicate.as_str()) || atom.predicate == r.head.predicate {
            continue;
        }
        if !atom.args.iter().all(|t| matches!(t, Term::Var(_))) {
            continue;
        }
        let distinct: std::collections::BTreeSet<&Var> = atom.vars().into_iter().collect();
        if distinct.len() != atom.arity() {
            continue;
        }
        let mut parts = Vec::new();
        for g in &r.body {
            match g {
                Goal::Regular(_) => {}
                _ => match goal_constraint(atom, g) {
                    Some(c) => parts.push(c),
                    None => continue 'rules,
                },
            }
        }
        if parts.is_empty() || parts.iter().filter(|c| matches!(c, Constraint::Extremum(_))).count() > 1 {
            continue;
        }
        let costs: std::collections::BTreeSet<usize> = parts
            .iter()
            .map(|c| match c {
                Constraint::Bound(b) => b.cost,
                Constraint::Extremum(e) => e.cost,
                Constraint::Conjunction(_) => unreachable!(),
            })
            .collect();
        if costs.len() != 1 {
            continue;
        }
        out.push(FinalConstraint {
            rule_id: r.id.clone(),
            constraint: Constraint::conjunction(parts),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::BoundKind;
    use crate::parser::parse_str;

    #[test]
    fn final_constraints_from_fixtures() {
        let p = parse_str(fixtures::LIMITED_PATH).unwrap();
        assert_eq!(p.constraints.len(), 1);
        match &p.constraints[0].constraint {
            Constraint::Bound(b) => {
                assert_eq!((b.kind, b.cost, b.limit.as_int()), (BoundKind::Upper, 1, Some(143)));
            }
            other => panic!("{other}"),
        }
        let p = parse_str(fixtures::BOUNDED_LONGEST_PATH).unwrap();
        assert!(matches!(&p.constraints[0].constraint, Constraint::Conjunction(cs) if cs.len() == 2));
    }

    #[test]
    fn implicit_max_for_count() {
        let p = parse_str(fixtures::PARTY_COUNT).unwrap();
        let g = predicate_constraints(&p).unwrap();
        let c = &g["cntfriends"];
        assert!(c.implicit);
        assert_eq!((c.extremum.cost, c.extremum.group_by.clone()), (1, vec![0]));
    }

    #[test]
    fn head_annotation_becomes_gamma() {
        let p = parse_str(fixtures::SPATH_MMIN).unwrap();
        let g = predicate_constraints(&p).unwrap();
        assert!(g["path"].monotone);
        assert_eq!(p.constraints.len(), 1);
    }
}
