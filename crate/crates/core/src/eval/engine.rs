//! Stratum-by-stratum fixpoint computation.
//!
//! Each round evaluates the rules against a frozen store, buffers every head
//! tuple, then merges the buffer in sorted order. Merging is where duplicate
//! elimination, bounds and extremum displacement happen, so parallel rule
//! evaluation cannot change the outcome.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;
use std::time::Instant;

use super::aggregate::{apply_barrier, Accumulator};
use super::compile::{compile_rule, CRule, CSegment, Catalog, Op, Pat, PredId, RuleMode, ScanOp};
use super::store::{clip, RowId, Store};
use super::{EvalError, EvalMode, EvalOptions, EvalOutcome, EvalStats, Execution, StratumStats};
use crate::analysis::{build_dependency_graph, check_negation, predicate_constraints_in, strata, DependencyGraph};
use crate::model::{compare, Bound, Constraint, Extremum, Interpretation, Program, Tuple, Value};
use crate::par;

/// Rows per parallel task when the first goal of a rule is a full scan.
const CHUNK: u32 = 2048;

#[derive(Debug, Clone, Default)]
struct Gamma {
    extremum: Option<(Extremum, bool)>,
    bounds: Vec<Bound>,
}

/// Which slice of a stratum predicate each recursive scan reads.
#[derive(Clone, Copy)]
enum Variant {
    Full,
    /// Seminaive: scans before this ordinal read old rows, this one the delta.
    Delta(usize),
}

struct Task {
    rule: usize,
    variant: Variant,
    chunk: Option<Range<RowId>>,
}

struct Runner<'a> {
    store: &'a Store,
    /// Per predicate: rows before the last round, rows before this round.
    bounds: &'a [(RowId, RowId)],
    rule: &'a CRule,
    variant: Variant,
    chunk: Option<Range<RowId>>,
}

type Sink<'s> = dyn FnMut(&[Value]) -> Result<(), EvalError> + 's;

impl Runner<'_> {
    fn range(&self, scan: &ScanOp) -> Range<RowId> {
        let len = self.store.tables[scan.pred].len();
        match (scan.rec, self.variant) {
            (None, _) => 0..len,
            (Some(_), Variant::Full) => 0..self.bounds[scan.pred].1,
            (Some(j), Variant::Delta(i)) => {
                let (s, e) = self.bounds[scan.pred];
                if j < i {
                    0..s
                } else if j == i {
                    s..e
                } else {
                    0..e
                }
            }
        }
    }

    fn err(&self, e: crate::model::ModelError) -> EvalError {
        EvalError::Runtime {
            rule: self.rule.id.clone(),
            source: e,
        }
    }

    fn run(&self, ops: &[Op], first: bool, slots: &mut [Value], sink: &mut Sink<'_>) -> Result<(), EvalError> {
        let Some((op, rest_ops)) = ops.split_first() else {
            return sink(slots);
        };
        match op {
            Op::Scan(scan) => {
                let mut range = self.range(scan);
                if first {
                    if let Some(c) = &self.chunk {
                        range = range.start.max(c.start)..range.end.min(c.end);
                    }
                }
                let table = &self.store.tables[scan.pred];
                let mut visit = |id: RowId, slots: &mut [Value]| -> Result<(), EvalError> {
                    if !table.is_alive(id) {
                        return Ok(());
                    }
                    let t = table.row(id);
                    for &(c, p) in &scan.rest {
                        match p {
                            Pat::Bind(s) => slots[s] = t[c].clone(),
                            Pat::Check(s) => {
                                if slots[s] != t[c] {
                                    return Ok(());
                                }
                            }
                        }
                    }
                    self.run(rest_ops, false, slots, sink)
                };
                if scan.key_cols.is_empty() {
                    for id in range {
                        visit(id, slots)?;
                    }
                } else {
                    let mut key = Vec::with_capacity(scan.key.len());
                    for k in &scan.key {
                        key.push(k.eval(slots).map_err(|e| self.err(e))?);
                    }
                    let index = table.index_of(&scan.key_cols).expect("index built before evaluation");
                    for &id in clip(table.lookup(index, &key), &range) {
                        visit(id, slots)?;
                    }
                }
                Ok(())
            }
            Op::Negate { pred, cols, key } => {
                let table = &self.store.tables[*pred];
                let mut k = Vec::with_capacity(key.len());
                for t in key {
                    k.push(t.eval(slots).map_err(|e| self.err(e))?);
                }
                let present = if cols.is_empty() {
                    table.live() > 0
                } else {
                    match table.index_of(cols) {
                        Some(ix) => table.lookup(ix, &k).iter().any(|&id| table.is_alive(id)),
                        None => table.contains_alive(&k),
                    }
                };
                if present {
                    Ok(())
                } else {
                    self.run(rest_ops, false, slots, sink)
                }
            }
            Op::Filter { op, left, right } => {
                let l = left.eval(slots).map_err(|e| self.err(e))?;
                let r = right.eval(slots).map_err(|e| self.err(e))?;
                if compare(*op, &l, &r).map_err(|e| self.err(e))? {
                    self.run(rest_ops, false, slots, sink)
                } else {
                    Ok(())
                }
            }
            Op::Assign { slot, term } => {
                slots[*slot] = term.eval(slots).map_err(|e| self.err(e))?;
                self.run(rest_ops, false, slots, sink)
            }
        }
    }

    /// Runs one segment from a starting binding and collects what reaches its end.
    fn segment(&self, seg: &CSegment, first: bool, start: &mut [Value], out: &mut Vec<Vec<Value>>) -> Result<(), EvalError> {
        self.run(&seg.ops, first, start, &mut |s: &[Value]| {
            out.push(s.to_vec());
            Ok(())
        })
    }
}

fn head_tuple(rule: &CRule, slots: &[Value]) -> Result<Tuple, EvalError> {
    rule.head
        .iter()
        .map(|t| t.eval(slots))
        .collect::<Result<_, _>>()
        .map_err(|source| EvalError::Runtime {
            rule: rule.id.clone(),
            source,
        })
}

pub(crate) struct Engine<'p> {
    program: &'p Program,
    opts: &'p EvalOptions,
    graph: DependencyGraph,
    catalog: Catalog,
    store: Store,
    gammas: Vec<Gamma>,
    stats: EvalStats,
}

impl<'p> Engine<'p> {
    pub fn new(program: &'p Program, edb: &Interpretation, opts: &'p EvalOptions) -> Result<Self, EvalError> {
        let graph = build_dependency_graph(program);
        check_negation(program, &graph)?;
        let mut catalog = Catalog::default();
        for p in graph.predicates() {
            catalog.intern(p);
        }
        for p in edb.predicates() {
            catalog.intern(p);
        }
        let mut gammas = vec![Gamma::default(); catalog.len()];
        let implied =
            predicate_constraints_in(program, &graph).map_err(|(rule, message)| EvalError::Compile { rule, message })?;
        for (p, g) in implied {
            let id = catalog.intern(&p);
            gammas[id].extremum = Some((g.extremum, g.monotone));
        }
        for c in &opts.gamma {
            for part in c.conjuncts() {
                let Some(id) = catalog.get(part.predicate()) else { continue };
                match part {
                    Constraint::Bound(b) => gammas[id].bounds.push(b.clone()),
                    Constraint::Extremum(e) => gammas[id].extremum = Some((e.clone(), false)),
                    Constraint::Conjunction(_) => {}
                }
            }
        }
        let store = Store::with_predicates(catalog.len());
        Ok(Engine {
            program,
            opts,
            graph,
            catalog,
            store,
            gammas,
            stats: EvalStats::default(),
        })
    }

    fn parallel(&self) -> bool {
        self.opts.execution == Execution::Parallel
    }

    fn budget(&self, reason: String) -> EvalError {
        let mut stats = self.stats.clone();
        stats.retained = self.retained();
        EvalError::BudgetExceeded {
            reason,
            stats: Box::new(stats),
        }
    }

    fn retained(&self) -> u64 {
        let idb = self.program.idb_predicates();
        idb.iter()
            .filter_map(|p| self.catalog.get(p))
            .map(|id| self.store.tables[id].live() as u64)
            .sum()
    }

    fn prepare_indexes(&mut self, rules: &[CRule]) {
        for r in rules {
            for seg in &r.segments {
                for op in &seg.ops {
                    match op {
                        Op::Scan(s) if !s.key_cols.is_empty() => {
                            self.store.tables[s.pred].ensure_index(&s.key_cols);
                        }
                        Op::Negate { pred, cols, .. } if !cols.is_empty() => {
                            self.store.tables[*pred].ensure_index(cols);
                        }
                        _ => {}
                    }
                }
            }
        }
    }

    pub fn run(mut self, edb: &Interpretation) -> Result<EvalOutcome, EvalError> {
        let start = Instant::now();
        let program = self.program;
        let strata = strata(program, &self.graph);
        let mut compiled: Vec<Vec<CRule>> = Vec::new();
        for st in &strata {
            let ids: BTreeSet<PredId> = st.predicates.iter().map(|p| self.catalog.intern(p)).collect();
            let mut rules = Vec::new();
            for &ri in &st.rules {
                let rule = &program.rules[ri];
                let pushed = self.graph.is_recursive(&rule.head.predicate);
                let stratum_ids = if st.recursive { ids.clone() } else { BTreeSet::new() };
                rules.push(
                    compile_rule(rule, &mut self.catalog, &stratum_ids, pushed)
                        .map_err(|message| EvalError::Compile { rule: rule.id.clone(), message })?,
                );
            }
            compiled.push(rules);
        }
        // Compilation may intern predicates that occur nowhere else.
        while self.store.tables.len() < self.catalog.len() {
            self.store.tables.push(Default::default());
            self.gammas.push(Gamma::default());
        }
        for rules in &compiled {
            self.prepare_indexes(rules);
        }
        // Ground facts: predicates without rules are loaded directly, the rest
        // enter their stratum through the first merge.
        let idb = program.idb_predicates();
        let mut pending: BTreeMap<PredId, Vec<Tuple>> = BTreeMap::new();
        let facts = program.facts_interpretation();
        for source in [&facts, edb] {
            for (p, rel) in source.iter() {
                let id = self.catalog.intern(p);
                if self.store.tables.len() <= id {
                    self.store.tables.push(Default::default());
                    self.gammas.push(Gamma::default());
                }
                if idb.contains(p) {
                    pending.entry(id).or_default().extend(rel.iter().cloned());
                } else {
                    for t in rel.iter() {
                        self.store.tables[id].insert(t.clone(), 0);
                    }
                }
            }
        }
        for (st, rules) in strata.iter().zip(&compiled) {
            let mut initial = Vec::new();
            for p in &st.predicates {
                let id = self.catalog.intern(p);
                if let Some(ts) = pending.remove(&id) {
                    initial.extend(ts.into_iter().map(|t| (id, t)));
                }
            }
            let ss = self.run_stratum(st.recursive, &st.predicates, rules, initial)?;
            self.stats.iterations += ss.iterations;
            self.stats.strata.push(ss);
        }
        let mut model = Interpretation::new();
        for (id, name) in self.catalog.names.iter().enumerate() {
            let rel = self.store.tables[id].alive_rows().cloned().collect();
            model.set(name, rel);
        }
        self.stats.retained = self.retained();
        self.stats.wall = start.elapsed();
        Ok(EvalOutcome {
            model,
            stats: self.stats,
        })
    }

    fn run_stratum(
        &mut self,
        recursive: bool,
        predicates: &[String],
        rules: &[CRule],
        initial: Vec<(PredId, Tuple)>,
    ) -> Result<StratumStats, EvalError> {
        let mut ss = StratumStats {
            predicates: predicates.to_vec(),
            ..Default::default()
        };
        let ids: Vec<PredId> = predicates.iter().map(|p| self.catalog.get(p).unwrap()).collect();
        let mut bounds: Vec<(RowId, RowId)> = self.store.tables.iter().map(|t| (t.len(), t.len())).collect();
        let mut accumulators: Vec<Accumulator> = rules.iter().map(|_| Accumulator::default()).collect();
        let mut initial = Some(initial);
        let naive = self.opts.mode == EvalMode::Naive;
        let mut round: u32 = 0;
        loop {
            round += 1;
            if round as usize > self.opts.max_iterations {
                self.stats.derived += ss.derived;
                return Err(self.budget(format!(
                    "more than {} iterations in stratum {}",
                    self.opts.max_iterations,
                    predicates.join(", ")
                )));
            }
            for &p in &ids {
                let len = self.store.tables[p].len();
                bounds[p] = if round == 1 { (0, len) } else { (bounds[p].1, len) };
            }
            let has_delta = |rule: &CRule, bounds: &[(RowId, RowId)]| {
                rule.segments.iter().flat_map(|s| &s.ops).any(|op| match op {
                    Op::Scan(s) if s.rec.is_some() => bounds[s.pred].0 < bounds[s.pred].1,
                    _ => false,
                })
            };
            // Plan the round.
            let mut tasks = Vec::new();
            for (ri, rule) in rules.iter().enumerate() {
                let variants: Vec<Variant> = if round == 1 || naive {
                    vec![Variant::Full]
                } else if rule.rec_scans == 0 {
                    vec![]
                } else {
                    match rule.mode {
                        RuleMode::Recompute if has_delta(rule, &bounds) => vec![Variant::Full],
                        RuleMode::Recompute => vec![],
                        RuleMode::Plain | RuleMode::Accumulate => (0..rule.rec_scans)
                            .filter(|&i| self.delta_nonempty(rule, i, &bounds))
                            .map(Variant::Delta)
                            .collect(),
                    }
                };
                for v in variants {
                    self.split(ri, rule, v, &bounds, &mut tasks);
                }
            }
            // Evaluate.
            let store = &self.store;
            let bref = &bounds;
            let results = par::map(&tasks, self.parallel(), |task| {
                let rule = &rules[task.rule];
                let runner = Runner {
                    store,
                    bounds: bref,
                    rule,
                    variant: task.variant,
                    chunk: task.chunk.clone(),
                };
                let mut slots = vec![Value::Int(0); rule.nslots];
                let mut out = Vec::new();
                runner.segment(&rule.segments[0], true, &mut slots, &mut out)?;
                Ok::<_, EvalError>(out)
            });
            let mut per_rule: Vec<Vec<Vec<Value>>> = vec![Vec::new(); rules.len()];
            for (task, res) in tasks.iter().zip(results) {
                per_rule[task.rule].extend(res?);
            }
            let mut candidates: Vec<(PredId, Tuple)> = initial.take().unwrap_or_default();
            for (ri, rule) in rules.iter().enumerate() {
                let seg0 = std::mem::take(&mut per_rule[ri]);
                if seg0.is_empty() {
                    continue;
                }
                let finals = if rule.segments.len() == 1 {
                    seg0
                } else {
                    self.finish_segments(rule, &bounds, seg0, &mut accumulators[ri], rule.mode == RuleMode::Accumulate && !naive)?
                };
                for s in finals {
                    candidates.push((rule.head_pred, head_tuple(rule, &s)?));
                }
                if candidates.len() > self.opts.max_tuples {
                    self.stats.derived += ss.derived + candidates.len() as u64;
                    return Err(self.budget(format!("more than {} candidate tuples in one round", self.opts.max_tuples)));
                }
            }
            ss.derived += candidates.len() as u64;
            let (inserted, deleted) = self.merge(candidates, round);
            ss.inserted += inserted;
            ss.deleted += deleted;
            self.stats.deleted += deleted;
            ss.iterations = round as usize;
            if self.store.live() > self.opts.max_tuples {
                self.stats.derived += ss.derived;
                return Err(self.budget(format!("more than {} tuples retained", self.opts.max_tuples)));
            }
            if !recursive || inserted == 0 {
                break;
            }
        }
        self.stats.derived += ss.derived;
        Ok(ss)
    }

    fn delta_nonempty(&self, rule: &CRule, ordinal: usize, bounds: &[(RowId, RowId)]) -> bool {
        rule.segments.iter().flat_map(|s| &s.ops).any(|op| match op {
            Op::Scan(s) if s.rec == Some(ordinal) => bounds[s.pred].0 < bounds[s.pred].1,
            _ => false,
        })
    }

    /// Splits a rule evaluation into tasks over chunks of its first scan.
    fn split(&self, ri: usize, rule: &CRule, variant: Variant, bounds: &[(RowId, RowId)], tasks: &mut Vec<Task>) {
        let first = rule.segments[0].ops.first();
        if let Some(Op::Scan(scan)) = first {
            if scan.key_cols.is_empty() {
                let runner = Runner {
                    store: &self.store,
                    bounds,
                    rule,
                    variant,
                    chunk: None,
                };
                let r = runner.range(scan);
                if r.end - r.start > CHUNK {
                    let mut s = r.start;
                    while s < r.end {
                        let e = (s + CHUNK).min(r.end);
                        tasks.push(Task {
                            rule: ri,
                            variant,
                            chunk: Some(s..e),
                        });
                        s = e;
                    }
                    return;
                }
            }
        }
        tasks.push(Task {
            rule: ri,
            variant,
            chunk: None,
        });
    }

    /// Pushes segment-0 bindings through the barriers and remaining segments.
    fn finish_segments(
        &self,
        rule: &CRule,
        bounds: &[(RowId, RowId)],
        seg0: Vec<Vec<Value>>,
        acc: &mut Accumulator,
        incremental: bool,
    ) -> Result<Vec<Vec<Value>>, EvalError> {
        let runner = Runner {
            store: &self.store,
            bounds,
            rule,
            variant: Variant::Full,
            chunk: None,
        };
        let policy = self.opts.on_nonpositive;
        let mut current = seg0;
        for (i, seg) in rule.segments.iter().enumerate() {
            if i > 0 {
                let mut next = Vec::new();
                for mut s in current {
                    runner.segment(seg, false, &mut s, &mut next)?;
                }
                current = next;
            }
            if let Some(b) = &seg.barrier {
                current = if incremental {
                    acc.absorb(b, &current, rule.positive_summands, policy, &rule.id)?
                } else {
                    apply_barrier(b, current, rule.positive_summands, policy, &rule.id)?
                };
            }
        }
        Ok(current)
    }

    /// Sorted merge of one round's candidates. Returns (inserted, displaced).
    fn merge(&mut self, mut candidates: Vec<(PredId, Tuple)>, round: u32) -> (u64, u64) {
        candidates.sort_unstable();
        candidates.dedup();
        let (mut inserted, mut deleted) = (0u64, 0u64);
        let mut i = 0;
        while i < candidates.len() {
            let p = candidates[i].0;
            let j = i + candidates[i..].partition_point(|c| c.0 == p);
            let gamma = &self.gammas[p];
            let table = &mut self.store.tables[p];
            let fresh: Vec<&Tuple> = candidates[i..j]
                .iter()
                .map(|(_, t)| t)
                .filter(|t| table.position(t).is_none())
                .filter(|t| gamma.bounds.iter().all(|b| b.admits(t)))
                .collect();
            match &gamma.extremum {
                None => {
                    for t in fresh {
                        if table.insert(t.clone(), round).is_some() {
                            inserted += 1;
                        }
                    }
                }
                Some((e, monotone)) => {
                    // Best newcomer per group; sorted input makes ties go to the smallest tuple.
                    let mut best: BTreeMap<Vec<Value>, &Tuple> = BTreeMap::new();
                    for t in fresh {
                        let k = e.group_key(t);
                        match best.get(&k) {
                            Some(cur) if !e.kind.improves(&t[e.cost], &cur[e.cost]) => {}
                            _ => {
                                best.insert(k, t);
                            }
                        }
                    }
                    for (k, t) in best {
                        let incumbent = table.best.get(&k).copied();
                        let wins = match incumbent {
                            None => true,
                            Some(row) => e.kind.improves(&t[e.cost], &table.row(row)[e.cost]),
                        };
                        if !wins {
                            continue;
                        }
                        let Some(row) = table.insert(t.clone(), round) else { continue };
                        inserted += 1;
                        if let Some(old) = incumbent {
                            if !monotone {
                                table.kill(old);
                                deleted += 1;
                            }
                        }
                        table.best.insert(k, row);
                    }
                }
            }
            i = j;
        }
        (inserted, deleted)
    }
}

/// One application of the immediate-consequence operator: `I`, the program's
/// facts, and every head derivable from `I`. Extremum goals that would be
/// applied to a recursive head are ignored.
pub(crate) fn immediate_consequence(program: &Program, i: &Interpretation) -> Result<Interpretation, EvalError> {
    let graph = build_dependency_graph(program);
    let mut catalog = Catalog::default();
    for p in graph.predicates() {
        catalog.intern(p);
    }
    for p in i.predicates() {
        catalog.intern(p);
    }
    let none = BTreeSet::new();
    let mut rules = Vec::new();
    for rule in &program.rules {
        let pushed = graph.is_recursive(&rule.head.predicate);
        rules.push(
            compile_rule(rule, &mut catalog, &none, pushed)
                .map_err(|message| EvalError::Compile { rule: rule.id.clone(), message })?,
        );
    }
    let mut store = Store::with_predicates(catalog.len());
    for (p, rel) in i.iter() {
        let id = catalog.intern(p);
        for t in rel.iter() {
            store.tables[id].insert(t.clone(), 0);
        }
    }
    for r in &rules {
        for seg in &r.segments {
            for op in &seg.ops {
                match op {
                    Op::Scan(s) if !s.key_cols.is_empty() => {
                        store.tables[s.pred].ensure_index(&s.key_cols);
                    }
                    Op::Negate { pred, cols, .. } if !cols.is_empty() => {
                        store.tables[*pred].ensure_index(cols);
                    }
                    _ => {}
                }
            }
        }
    }
    let bounds: Vec<(RowId, RowId)> = store.tables.iter().map(|t| (0, t.len())).collect();
    let mut out = i.clone();
    out.extend(&program.facts_interpretation());
    for rule in &rules {
        let runner = Runner {
            store: &store,
            bounds: &bounds,
            rule,
            variant: Variant::Full,
            chunk: None,
        };
        let mut current = Vec::new();
        let mut slots = vec![Value::Int(0); rule.nslots];
        for (si, seg) in rule.segments.iter().enumerate() {
            if si == 0 {
                runner.segment(seg, false, &mut slots, &mut current)?;
            } else {
                let mut next = Vec::new();
                for mut s in current {
                    runner.segment(seg, false, &mut s, &mut next)?;
                }
                current = next;
            }
            if let Some(b) = &seg.barrier {
                current = apply_barrier(b, current, false, super::NonPositivePolicy::Ignore, &rule.id)?;
            }
        }
        for s in current {
            out.insert(&catalog.names[rule.head_pred], head_tuple(rule, &s)?);
        }
    }
    Ok(out)
}
