//! Rule bodies lowered to slot-indexed operations.

use std::collections::{BTreeMap, BTreeSet};

use rustc_hash::FxHashMap;

use crate::model::{arith, AggregateKind, ArithOp, CmpOp, ExtremumKind, ModelError, Rule, Term, Value, Var};
use crate::schedule::{schedule, Step};

pub(crate) type PredId = usize;

/// Predicate names to dense ids.
#[derive(Debug, Default)]
pub(crate) struct Catalog {
    pub names: Vec<String>,
    ids: FxHashMap<String, PredId>,
}

impl Catalog {
    pub fn intern(&mut self, name: &str) -> PredId {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_string());
        self.ids.insert(name.to_string(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<PredId> {
        self.ids.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }
}

#[derive(Debug, Clone)]
pub(crate) enum CTerm {
    Slot(usize),
    Const(Value),
    Arith(ArithOp, Box<CTerm>, Box<CTerm>),
}

impl CTerm {
    pub fn eval(&self, slots: &[Value]) -> Result<Value, ModelError> {
        match self {
            CTerm::Slot(i) => Ok(slots[*i].clone()),
            CTerm::Const(v) => Ok(v.clone()),
            CTerm::Arith(op, l, r) => arith(*op, &l.eval(slots)?, &r.eval(slots)?),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Pat {
    Bind(usize),
    Check(usize),
}

#[derive(Debug, Clone)]
pub(crate) struct ScanOp {
    pub pred: PredId,
    /// Columns whose value is known before the scan, looked up through an index.
    pub key_cols: Vec<usize>,
    pub key: Vec<CTerm>,
    pub rest: Vec<(usize, Pat)>,
    /// Ordinal among scans of predicates in the current stratum.
    pub rec: Option<usize>,
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Scan(ScanOp),
    /// Succeeds when no tuple matches `key` on `cols`.
    Negate {
        pred: PredId,
        cols: Vec<usize>,
        key: Vec<CTerm>,
    },
    Filter {
        op: CmpOp,
        left: CTerm,
        right: CTerm,
    },
    Assign {
        slot: usize,
        term: CTerm,
    },
}

#[derive(Debug, Clone)]
pub(crate) enum Barrier {
    /// A final-rule extremum: keeps the bindings with the best measured value per group.
    Select {
        kind: ExtremumKind,
        group: Vec<usize>,
        measured: usize,
    },
    Aggregate {
        kind: AggregateKind,
        group: Vec<usize>,
        /// Distinct witnesses; for sums, the measured variables other than the summand.
        witness: Vec<usize>,
        summand: Option<usize>,
        result: usize,
        /// Sums keep the largest summand per witness key (recursive rules and msum).
        latest_per_key: bool,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct CSegment {
    pub ops: Vec<Op>,
    pub barrier: Option<Barrier>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RuleMode {
    /// No aggregates: seminaive delta variants.
    Plain,
    /// One aggregate fed by the recursive goals: incremental accumulator.
    Accumulate,
    /// Everything else: full re-evaluation every round.
    Recompute,
}

#[derive(Debug, Clone)]
pub(crate) struct CRule {
    pub id: String,
    pub head_pred: PredId,
    pub head: Vec<CTerm>,
    pub segments: Vec<CSegment>,
    pub nslots: usize,
    pub rec_scans: usize,
    pub mode: RuleMode,
    /// Summing aggregate inside recursion: summands must be positive.
    pub positive_summands: bool,
}

struct Slots {
    map: BTreeMap<Var, usize>,
}

impl Slots {
    fn get(&mut self, v: &Var) -> usize {
        let n = self.map.len();
        *self.map.entry(v.clone()).or_insert(n)
    }

    fn term(&mut self, t: &Term) -> CTerm {
        match t {
            Term::Var(v) => CTerm::Slot(self.get(v)),
            Term::Const(c) => CTerm::Const(c.clone()),
            Term::Arith(op, l, r) => CTerm::Arith(*op, Box::new(self.term(l)), Box::new(self.term(r))),
        }
    }
}

/// Lowers `rule`. `stratum` holds the predicates evaluated together with it;
/// `pushed` means extremum goals act on the head relation and are skipped here.
pub(crate) fn compile_rule(
    rule: &Rule,
    catalog: &mut Catalog,
    stratum: &BTreeSet<PredId>,
    pushed: bool,
) -> Result<CRule, String> {
    let sched = schedule(rule, pushed)?;
    let mut slots = Slots { map: BTreeMap::new() };
    let mut bound: BTreeSet<Var> = BTreeSet::new();
    let mut segments = Vec::new();
    let mut rec_scans = 0;
    let mut positive_summands = false;
    let head_recursive = stratum.contains(&catalog.intern(&rule.head.predicate)) && pushed;
    for seg in &sched.segments {
        let mut ops = Vec::new();
        for step in &seg.steps {
            match step {
                Step::Scan(a) => {
                    let pred = catalog.intern(&a.predicate);
                    let mut key_cols = Vec::new();
                    let mut key = Vec::new();
                    let mut rest = Vec::new();
                    let mut local: BTreeSet<Var> = BTreeSet::new();
                    for (c, t) in a.args.iter().enumerate() {
                        match t {
                            Term::Var(v) if bound.contains(v) => {
                                key_cols.push(c);
                                key.push(CTerm::Slot(slots.get(v)));
                            }
                            Term::Var(v) if local.contains(v) => rest.push((c, Pat::Check(slots.get(v)))),
                            Term::Var(v) => {
                                local.insert(v.clone());
                                rest.push((c, Pat::Bind(slots.get(v))));
                            }
                            Term::Const(_) => {
                                key_cols.push(c);
                                key.push(slots.term(t));
                            }
                            Term::Arith(..) => {
                                if t.vars().iter().any(|v| !bound.contains(*v)) {
                                    return Err(format!("arithmetic argument {t} of {a} uses unbound variables"));
                                }
                                key_cols.push(c);
                                key.push(slots.term(t));
                            }
                        }
                    }
                    bound.extend(local);
                    let rec = stratum.contains(&pred).then(|| {
                        rec_scans += 1;
                        rec_scans - 1
                    });
                    ops.push(Op::Scan(ScanOp {
                        pred,
                        key_cols,
                        key,
                        rest,
                        rec,
                    }));
                }
                Step::Negate(a) => {
                    let pred = catalog.intern(&a.predicate);
                    let mut cols = Vec::new();
                    let mut key = Vec::new();
                    for (c, t) in a.args.iter().enumerate() {
                        if t.vars().iter().all(|v| bound.contains(*v)) {
                            cols.push(c);
                            key.push(slots.term(t));
                        }
                    }
                    ops.push(Op::Negate { pred, cols, key });
                }
                Step::Filter(c) => ops.push(Op::Filter {
                    op: c.op,
                    left: slots.term(&c.left),
                    right: slots.term(&c.right),
                }),
                Step::Assign(v, t) => {
                    let term = slots.term(t);
                    bound.insert((*v).clone());
                    ops.push(Op::Assign {
                        slot: slots.get(v),
                        term,
                    });
                }
            }
        }
        let barrier = match seg.barrier {
            None => None,
            Some(g) if g.kind.is_monotone_extremum() => None,
            Some(g) if g.kind.is_extremum() => Some(Barrier::Select {
                kind: g.kind.extremum_kind().unwrap(),
                group: g.group_by.iter().map(|v| slots.get(v)).collect(),
                measured: slots.get(&g.measured[0]),
            }),
            Some(g) => {
                let summing = g.kind.is_summing();
                let measured: Vec<usize> = g.measured.iter().map(|v| slots.get(v)).collect();
                let (witness, summand) = if summing {
                    (measured[..measured.len() - 1].to_vec(), measured.last().copied())
                } else {
                    (measured, None)
                };
                let latest_per_key = summing && (head_recursive || g.kind == AggregateKind::MSum);
                positive_summands |= latest_per_key;
                let result = g.result.as_ref().ok_or("counting aggregate without a result")?;
                let group: Vec<usize> = g.group_by.iter().map(|v| slots.get(v)).collect();
                bound = g.group_by.iter().cloned().collect();
                bound.insert(result.clone());
                Some(Barrier::Aggregate {
                    kind: g.kind,
                    group,
                    witness,
                    summand,
                    result: slots.get(result),
                    latest_per_key,
                })
            }
        };
        segments.push(CSegment { ops, barrier });
    }
    // Barriers that became no-ops (monotone extrema) are folded away.
    let mut merged: Vec<CSegment> = Vec::new();
    let mut carry: Vec<Op> = Vec::new();
    for seg in segments {
        carry.extend(seg.ops);
        if seg.barrier.is_some() {
            merged.push(CSegment {
                ops: std::mem::take(&mut carry),
                barrier: seg.barrier,
            });
        }
    }
    merged.push(CSegment {
        ops: carry,
        barrier: None,
    });
    let head = rule.head.args.iter().map(|t| slots.term(t)).collect();
    let barriers = merged.iter().filter(|s| s.barrier.is_some()).count();
    let rec_after_first = merged.iter().skip(1).any(|s| s.ops.iter().any(|o| matches!(o, Op::Scan(s) if s.rec.is_some())));
    let mode = if barriers == 0 {
        RuleMode::Plain
    } else if rec_scans == 0 {
        RuleMode::Plain
    } else if barriers == 1
        && matches!(merged[0].barrier, Some(Barrier::Aggregate { .. }))
        && !rec_after_first
    {
        RuleMode::Accumulate
    } else {
        RuleMode::Recompute
    };
    Ok(CRule {
        id: rule.id.clone(),
        head_pred: catalog.intern(&rule.head.predicate),
        head,
        segments: merged,
        nslots: slots.map.len(),
        rec_scans,
        mode,
        positive_summands,
    })
}
