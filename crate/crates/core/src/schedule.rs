//! Binding order for rule bodies.
//!
//! Goals are taken in source order, but comparisons and negations wait until
//! their variables are bound. An equality whose one side is a lone unbound
//! variable becomes an assignment. Aggregate goals split the body into
//! segments: the goals before an aggregate feed it, the goals after it see
//! only the group-by variables and the result.

use std::collections::BTreeSet;

use crate::model::{AggregateGoal, Atom, CmpOp, Comparison, Goal, Rule, Term, Var};

#[derive(Debug, Clone)]
pub(crate) enum Step<'r> {
    Scan(&'r Atom),
    Negate(&'r Atom),
    Filter(&'r Comparison),
    Assign(&'r Var, &'r Term),
}

#[derive(Debug, Clone)]
pub(crate) struct Segment<'r> {
    pub steps: Vec<Step<'r>>,
    pub barrier: Option<&'r AggregateGoal>,
}

#[derive(Debug, Clone)]
pub(crate) struct Schedule<'r> {
    pub segments: Vec<Segment<'r>>,
}

impl<'r> Schedule<'r> {
    pub fn steps(&self) -> impl Iterator<Item = &Step<'r>> {
        self.segments.iter().flat_map(|s| s.steps.iter())
    }

    /// Assignments in binding order, as (variable, defining term).
    pub fn assignments(&self) -> impl Iterator<Item = (&'r Var, &'r Term)> + '_ {
        self.steps().filter_map(|s| match s {
            Step::Assign(v, t) => Some((*v, *t)),
            _ => None,
        })
    }

    pub fn filters(&self) -> impl Iterator<Item = &'r Comparison> + '_ {
        self.steps().filter_map(|s| match s {
            Step::Filter(c) => Some(*c),
            _ => None,
        })
    }
}

fn all_bound(vars: &[&Var], bound: &BTreeSet<Var>) -> bool {
    vars.iter().all(|v| bound.contains(*v))
}

/// Orders the body of `rule`. With `skip_extrema`, extremum goals are left out
/// entirely (they act on the head relation rather than on bindings).
pub(crate) fn schedule(rule: &Rule, skip_extrema: bool) -> Result<Schedule<'_>, String> {
    let mut segments = Vec::new();
    let mut bound: BTreeSet<Var> = BTreeSet::new();
    let mut steps: Vec<Step<'_>> = Vec::new();
    let mut pending: Vec<&Goal> = Vec::new();
    let occurrences = occurrence_counts(rule);

    for goal in &rule.body {
        match goal {
            Goal::Regular(a) => {
                steps.push(Step::Scan(a));
                for v in a.vars() {
                    bound.insert(v.clone());
                }
                flush(&mut pending, &mut steps, &mut bound, &occurrences);
            }
            Goal::Comparison(_) | Goal::Negated(_) => {
                pending.push(goal);
                flush(&mut pending, &mut steps, &mut bound, &occurrences);
            }
            Goal::Aggregate(g) if g.kind.is_extremum() && skip_extrema => {}
            Goal::Aggregate(g) => {
                if let Some(goal) = pending.first() {
                    return Err(unbound_message(goal, &bound));
                }
                for v in g.group_by.iter().chain(g.measured.iter()) {
                    if !bound.contains(v) {
                        return Err(format!("variable {v} of {} is not bound before it", g.kind.keyword()));
                    }
                }
                segments.push(Segment {
                    steps: std::mem::take(&mut steps),
                    barrier: Some(g),
                });
                if g.kind.is_counting() {
                    bound = g.group_by.iter().cloned().collect();
                    if let Some(r) = &g.result {
                        if !bound.insert(r.clone()) {
                            return Err(format!("result variable {r} already bound"));
                        }
                    }
                }
            }
        }
    }
    if let Some(goal) = pending.first() {
        return Err(unbound_message(goal, &bound));
    }
    for v in rule.head.vars() {
        if !bound.contains(v) {
            return Err(format!("head variable {v} is not bound by the body"));
        }
    }
    segments.push(Segment { steps, barrier: None });
    Ok(Schedule { segments })
}

// Wildcards in negated goals are anonymous variables that occur only once.
fn flush<'r>(
    pending: &mut Vec<&'r Goal>,
    steps: &mut Vec<Step<'r>>,
    bound: &mut BTreeSet<Var>,
    occurrences: &std::collections::BTreeMap<Var, usize>,
) {
    let is_wildcard = |v: &Var| v.is_anonymous() && occurrences.get(v).copied().unwrap_or(0) == 1;
    loop {
        let mut progressed = false;
        let mut i = 0;
        while i < pending.len() {
            let ready = match pending[i] {
                Goal::Comparison(c) => {
                    if all_bound(&c.vars(), bound) {
                        steps.push(Step::Filter(c));
                        true
                    } else if let Some((v, t)) = as_assignment(c, bound) {
                        bound.insert(v.clone());
                        steps.push(Step::Assign(v, t));
                        true
                    } else {
                        false
                    }
                }
                Goal::Negated(a) => {
                    let vars: Vec<&Var> = a.vars().into_iter().filter(|v| !is_wildcard(v)).collect();
                    if all_bound(&vars, bound) {
                        steps.push(Step::Negate(a));
                        true
                    } else {
                        false
                    }
                }
                _ => unreachable!("only comparisons and negations are deferred"),
            };
            if ready {
                pending.remove(i);
                progressed = true;
            } else {
                i += 1;
            }
        }
        if !progressed {
            break;
        }
    }
}

fn as_assignment<'a>(c: &'a Comparison, bound: &BTreeSet<Var>) -> Option<(&'a Var, &'a Term)> {
    if c.op != CmpOp::Eq {
        return None;
    }
    let lone_unbound = |t: &'a Term| match t {
        Term::Var(v) if !bound.contains(v) => Some(v),
        _ => None,
    };
    match (lone_unbound(&c.left), lone_unbound(&c.right)) {
        (Some(v), None) if all_bound(&c.right.vars(), bound) => Some((v, &c.right)),
        (None, Some(v)) if all_bound(&c.left.vars(), bound) => Some((v, &c.left)),
        _ => None,
    }
}

fn unbound_message(goal: &Goal, bound: &BTreeSet<Var>) -> String {
    let missing: Vec<String> = goal
        .vars()
        .into_iter()
        .filter(|v| !bound.contains(*v))
        .map(|v| v.to_string())
        .collect();
    format!("goal `{goal}` uses unbound variable(s) {}", missing.join(", "))
}

fn occurrence_counts(rule: &Rule) -> std::collections::BTreeMap<Var, usize> {
    let mut out = std::collections::BTreeMap::new();
    for v in rule.head.vars().into_iter().chain(rule.body.iter().flat_map(|g| g.vars())) {
        *out.entry(v.clone()).or_insert(0) += 1;
    }
    out
}
