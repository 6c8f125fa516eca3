//! Predicate dependency graph, strongly connected components and strata.

use std::collections::{BTreeMap, BTreeSet};

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use thiserror::Error;

use crate::model::{AggregateKind, Goal, Program};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    Positive,
    Negated,
    /// The body goal feeds an aggregate.
    Aggregated,
}

/// Edges point from a body predicate to the head predicate that reads it.
#[derive(Debug, Clone)]
pub struct DependencyGraph {
    graph: DiGraph<String, EdgeKind>,
    nodes: BTreeMap<String, NodeIndex>,
    sccs: Vec<Vec<String>>,
    component: BTreeMap<String, usize>,
    recursive: BTreeSet<String>,
}

impl DependencyGraph {
    pub fn predicates(&self) -> impl Iterator<Item = &str> {
        self.nodes.keys().map(String::as_str)
    }

    pub fn edges(&self) -> Vec<(String, String, EdgeKind)> {
        let mut out: Vec<_> = self
            .graph
            .edge_indices()
            .map(|e| {
                let (a, b) = self.graph.edge_endpoints(e).unwrap();
                (self.graph[a].clone(), self.graph[b].clone(), self.graph[e])
            })
            .collect();
        out.sort();
        out
    }

    /// Components in dependency order: every component comes after the ones it reads.
    pub fn sccs(&self) -> &[Vec<String>] {
        &self.sccs
    }

    pub fn component_of(&self, predicate: &str) -> Option<usize> {
        self.component.get(predicate).copied()
    }

    pub fn same_component(&self, a: &str, b: &str) -> bool {
        matches!((self.component_of(a), self.component_of(b)), (Some(x), Some(y)) if x == y)
    }

    /// Whether `predicate` depends on itself, directly or through others.
    pub fn is_recursive(&self, predicate: &str) -> bool {
        self.recursive.contains(predicate)
    }

    pub fn component_members(&self, predicate: &str) -> &[String] {
        match self.component_of(predicate) {
            Some(i) => &self.sccs[i],
            None => &[],
        }
    }
}

pub fn build_dependency_graph(program: &Program) -> DependencyGraph {
    let mut names: BTreeSet<String> = BTreeSet::new();
    for f in &program.facts {
        names.insert(f.predicate.clone());
    }
    let mut edges: BTreeSet<(String, String, EdgeKind)> = BTreeSet::new();
    for r in &program.rules {
        names.insert(r.head.predicate.clone());
        for (i, g) in r.body.iter().enumerate() {
            let feeds_aggregate = r.body[i + 1..].iter().any(|g| matches!(g, Goal::Aggregate(_)));
            match g {
                Goal::Regular(a) => {
                    names.insert(a.predicate.clone());
                    let kind = if feeds_aggregate {
                        EdgeKind::Aggregated
                    } else {
                        EdgeKind::Positive
                    };
                    edges.insert((a.predicate.clone(), r.head.predicate.clone(), kind));
                }
                Goal::Negated(a) => {
                    names.insert(a.predicate.clone());
                    edges.insert((a.predicate.clone(), r.head.predicate.clone(), EdgeKind::Negated));
                }
                _ => {}
            }
        }
    }
    let mut graph = DiGraph::new();
    let mut nodes = BTreeMap::new();
    for n in &names {
        nodes.insert(n.clone(), graph.add_node(n.clone()));
    }
    let mut self_loops = BTreeSet::new();
    for (a, b, k) in &edges {
        if a == b {
            self_loops.insert(a.clone());
        }
        graph.add_edge(nodes[a], nodes[b], *k);
    }
    // tarjan_scc yields components in reverse topological order of the edge
    // direction; edges run body -> head, so reversing puts dependencies first.
    let mut raw = tarjan_scc(&graph);
    raw.reverse();
    let mut sccs = Vec::with_capacity(raw.len());
    let mut component = BTreeMap::new();
    let mut recursive = BTreeSet::new();
    for (i, comp) in raw.into_iter().enumerate() {
        let mut members: Vec<String> = comp.into_iter().map(|n| graph[n].clone()).collect();
        members.sort();
        for m in &members {
            component.insert(m.clone(), i);
            if members.len() > 1 || self_loops.contains(m) {
                recursive.insert(m.clone());
            }
        }
        sccs.push(members);
    }
    DependencyGraph {
        graph,
        nodes,
        sccs,
        component,
        recursive,
    }
}

/// One evaluation layer: a component and the rules that define it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stratum {
    pub predicates: Vec<String>,
    /// Indices into `Program::rules`.
    pub rules: Vec<usize>,
    pub recursive: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("rule {rule}: {reason} (predicate {predicate})")]
pub struct StratificationError {
    pub rule: String,
    pub predicate: String,
    pub reason: String,
}

/// Strata with every approval check applied.
pub fn stratify(program: &Program, graph: &DependencyGraph) -> Result<Vec<Stratum>, StratificationError> {
    check_negation(program, graph)?;
    for r in &program.rules {
        let head = r.head.predicate.as_str();
        if !graph.is_recursive(head) {
            continue;
        }
        let approved = program.approved.contains(head);
        for (i, g) in r.body.iter().enumerate() {
            let Goal::Aggregate(a) = g else { continue };
            let err = |reason: String| StratificationError {
                rule: r.id.clone(),
                predicate: head.to_string(),
                reason,
            };
            match a.kind {
                AggregateKind::IsMin | AggregateKind::IsMax if !approved => {
                    return Err(err(format!(
                        "{} inside recursion needs a successful constraint-pushing check",
                        a.kind.keyword()
                    )));
                }
                AggregateKind::Count | AggregateKind::Sum if !approved => {
                    let reads_recursion = r.body[..i]
                        .iter()
                        .filter_map(Goal::as_regular)
                        .any(|b| graph.same_component(&b.predicate, head));
                    if reads_recursion {
                        return Err(err(format!(
                            "{} over a recursive goal needs a successful constraint-pushing check",
                            a.kind.keyword()
                        )));
                    }
                }
                _ => {}
            }
        }
    }
    Ok(strata(program, graph))
}

/// Negation must not occur inside a component.
pub(crate) fn check_negation(program: &Program, graph: &DependencyGraph) -> Result<(), StratificationError> {
    for r in &program.rules {
        for g in &r.body {
            if let Goal::Negated(a) = g {
                if graph.same_component(&a.predicate, &r.head.predicate) {
                    return Err(StratificationError {
                        rule: r.id.clone(),
                        predicate: r.head.predicate.clone(),
                        reason: format!("negated goal {} is inside the recursion", a.predicate),
                    });
                }
            }
        }
    }
    Ok(())
}

/// Strata without approval checks. Components with no rules are skipped.
pub(crate) fn strata(program: &Program, graph: &DependencyGraph) -> Vec<Stratum> {
    let mut out = Vec::new();
    for comp in graph.sccs() {
        let rules: Vec<usize> = program
            .rules
            .iter()
            .enumerate()
            .filter(|(_, r)| comp.contains(&r.head.predicate))
            .map(|(i, _)| i)
            .collect();
        if rules.is_empty() {
            continue;
        }
        out.push(Stratum {
            predicates: comp.clone(),
            rules,
            recursive: comp.iter().any(|p| graph.is_recursive(p)),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::parser::parse_str;

    #[test]
    fn path_program_layers() {
        let p = parse_str(fixtures::SHORTEST_PATH).unwrap();
        let g = build_dependency_graph(&p);
        assert!(g.is_recursive("path"));
        assert!(!g.is_recursive("spath"));
        assert!(!g.is_recursive("arc"));
        let order: Vec<&str> = g.sccs().iter().map(|c| c[0].as_str()).collect();
        let pos = |p: &str| order.iter().position(|x| *x == p).unwrap();
        assert!(pos("arc") < pos("path") && pos("path") < pos("spath"));
    }

    #[test]
    fn party_component_is_shared() {
        let p = parse_str(fixtures::PARTY_MCOUNT).unwrap();
        let g = build_dependency_graph(&p);
        assert!(g.same_component("attend", "cntfriends"));
    }

    #[test]
    fn negation_in_recursion_is_rejected() {
        let p = parse_str("p(X) :- q(X), !p(X).\nq(1).").unwrap();
        let g = build_dependency_graph(&p);
        assert!(stratify(&p, &g).is_err());
    }

    #[test]
    fn unapproved_count_in_recursion_is_rejected() {
        let mut p = parse_str(fixtures::PARTY_COUNT).unwrap();
        let g = build_dependency_graph(&p);
        let e = stratify(&p, &g).unwrap_err();
        assert_eq!(e.predicate, "cntfriends");
        p.approve("cntfriends");
        assert!(stratify(&p, &g).is_ok());
    }

    #[test]
    fn monotonic_aggregates_need_no_approval() {
        let p = parse_str(fixtures::PARTY_MCOUNT).unwrap();
        let g = build_dependency_graph(&p);
        assert!(stratify(&p, &g).is_ok());
    }
}
