//! Aggregate barriers: batch evaluation over a full binding set, and the
//! incremental accumulator used for counts and sums inside recursion.

use std::collections::{BTreeMap, BTreeSet};

use rustc_hash::FxHashMap;

use super::compile::Barrier;
use super::{EvalError, NonPositivePolicy};
use crate::model::{AggregateKind, Value};

fn key(slots: &[Value], cols: &[usize]) -> Vec<Value> {
    cols.iter().map(|&c| slots[c].clone()).collect()
}

/// Reads the summand, enforcing positivity when `positive` is set.
/// `Ok(None)` means the witness is skipped.
fn summand(
    slots: &[Value],
    slot: usize,
    positive: bool,
    policy: NonPositivePolicy,
    rule: &str,
) -> Result<Option<i64>, EvalError> {
    let v = &slots[slot];
    let Some(n) = v.as_int() else {
        return Err(EvalError::Runtime {
            rule: rule.to_string(),
            source: crate::model::ModelError::TypeMismatch {
                op: "sum",
                left: v.clone(),
                right: Value::Int(0),
            },
        });
    };
    if positive && n <= 0 {
        return match policy {
            NonPositivePolicy::Error => Err(EvalError::NonPositiveSummand {
                rule: rule.to_string(),
                value: n,
            }),
            NonPositivePolicy::Ignore => Ok(None),
        };
    }
    Ok(Some(n))
}

fn add(total: i64, n: i64, rule: &str) -> Result<i64, EvalError> {
    total.checked_add(n).ok_or_else(|| EvalError::Runtime {
        rule: rule.to_string(),
        source: crate::model::ModelError::Overflow {
            op: crate::model::ArithOp::Add,
            left: total,
            right: n,
        },
    })
}

fn emit(kind: AggregateKind, template: &[Value], result: usize, from: i64, to: i64, out: &mut Vec<Vec<Value>>) {
    let mut push = |n: i64| {
        let mut s = template.to_vec();
        s[result] = Value::Int(n);
        out.push(s);
    };
    match kind {
        AggregateKind::MCount | AggregateKind::MSum => (from + 1..=to).for_each(&mut push),
        _ => push(to),
    }
}

/// Evaluates `barrier` over every binding of the preceding segment.
pub(crate) fn apply_barrier(
    barrier: &Barrier,
    bindings: Vec<Vec<Value>>,
    positive: bool,
    policy: NonPositivePolicy,
    rule: &str,
) -> Result<Vec<Vec<Value>>, EvalError> {
    match barrier {
        Barrier::Select { kind, group, measured } => {
            let mut best: BTreeMap<Vec<Value>, Value> = BTreeMap::new();
            for b in &bindings {
                let k = key(b, group);
                let m = &b[*measured];
                match best.get(&k) {
                    Some(cur) if !kind.improves(m, cur) => {}
                    _ => {
                        best.insert(k, m.clone());
                    }
                }
            }
            Ok(bindings
                .into_iter()
                .filter(|b| best.get(&key(b, group)) == Some(&b[*measured]))
                .collect())
        }
        Barrier::Aggregate {
            kind,
            group,
            witness,
            summand: summand_slot,
            result,
            latest_per_key,
        } => {
            struct Acc {
                template: Vec<Value>,
                distinct: BTreeSet<Vec<Value>>,
                latest: BTreeMap<Vec<Value>, i64>,
            }
            let mut groups: BTreeMap<Vec<Value>, Acc> = BTreeMap::new();
            for b in bindings {
                let k = key(&b, group);
                let mut w = key(&b, witness);
                let acc = groups.entry(k).or_insert_with(|| Acc {
                    template: b.clone(),
                    distinct: BTreeSet::new(),
                    latest: BTreeMap::new(),
                });
                match summand_slot {
                    None => {
                        acc.distinct.insert(w);
                    }
                    Some(s) => {
                        let Some(n) = summand(&b, *s, positive, policy, rule)? else { continue };
                        if *latest_per_key {
                            let e = acc.latest.entry(w).or_insert(n);
                            *e = (*e).max(n);
                        } else {
                            w.push(Value::Int(n));
                            acc.distinct.insert(w);
                        }
                    }
                }
            }
            let mut out = Vec::new();
            for acc in groups.values() {
                let total = match summand_slot {
                    None => acc.distinct.len() as i64,
                    Some(_) if *latest_per_key => {
                        let mut t = 0i64;
                        for &n in acc.latest.values() {
                            t = add(t, n, rule)?;
                        }
                        t
                    }
                    Some(_) => {
                        let mut t = 0i64;
                        for w in &acc.distinct {
                            t = add(t, w.last().and_then(Value::as_int).unwrap_or(0), rule)?;
                        }
                        t
                    }
                };
                if acc.distinct.is_empty() && acc.latest.is_empty() {
                    continue;
                }
                emit(*kind, &acc.template, *result, 0, total, &mut out);
            }
            Ok(out)
        }
    }
}

#[derive(Debug, Default)]
struct GroupState {
    template: Vec<Value>,
    witnesses: rustc_hash::FxHashSet<Vec<Value>>,
    latest: FxHashMap<Vec<Value>, i64>,
    value: i64,
    emitted: i64,
}

/// Running count or sum per group. Witnesses only accumulate; a sum keeps
/// the largest summand seen for each witness key.
#[derive(Debug, Default)]
pub(crate) struct Accumulator {
    groups: FxHashMap<Vec<Value>, GroupState>,
}

impl Accumulator {
    /// Absorbs new bindings and returns one binding per newly reached value.
    pub fn absorb(
        &mut self,
        barrier: &Barrier,
        bindings: &[Vec<Value>],
        positive: bool,
        policy: NonPositivePolicy,
        rule: &str,
    ) -> Result<Vec<Vec<Value>>, EvalError> {
        let Barrier::Aggregate {
            kind,
            group,
            witness,
            summand: summand_slot,
            result,
            ..
        } = barrier
        else {
            unreachable!("accumulators only serve aggregates")
        };
        let mut changed: BTreeSet<Vec<Value>> = BTreeSet::new();
        for b in bindings {
            let k = key(b, group);
            let w = key(b, witness);
            let st = self.groups.entry(k.clone()).or_insert_with(|| GroupState {
                template: b.clone(),
                ..GroupState::default()
            });
            match summand_slot {
                None => {
                    if st.witnesses.insert(w) {
                        st.value += 1;
                        changed.insert(k);
                    }
                }
                Some(s) => {
                    let Some(n) = summand(b, *s, positive, policy, rule)? else { continue };
                    let prev = st.latest.get(&w).copied();
                    if prev.is_none_or(|p| n > p) {
                        st.latest.insert(w, n);
                        st.value = add(st.value, n - prev.unwrap_or(0), rule)?;
                        changed.insert(k);
                    }
                }
            }
        }
        let mut out = Vec::new();
        for k in changed {
            let st = self.groups.get_mut(&k).unwrap();
            if st.value > st.emitted {
                emit(*kind, &st.template, *result, st.emitted, st.value, &mut out);
                st.emitted = st.value;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agg(kind: AggregateKind, summing: bool, latest: bool) -> Barrier {
        Barrier::Aggregate {
            kind,
            group: vec![0],
            witness: vec![1],
            summand: summing.then_some(2),
            result: 3,
            latest_per_key: latest,
        }
    }

    fn b(g: i64, w: i64, s: i64) -> Vec<Value> {
        vec![Value::Int(g), Value::Int(w), Value::Int(s), Value::Int(0)]
    }

    fn results(v: &[Vec<Value>]) -> Vec<i64> {
        v.iter().map(|s| s[3].as_int().unwrap()).collect()
    }

    #[test]
    fn count_and_mcount() {
        let rows = vec![b(1, 1, 0), b(1, 2, 0), b(1, 2, 0)];
        let out = apply_barrier(&agg(AggregateKind::Count, false, false), rows.clone(), false, NonPositivePolicy::Error, "r").unwrap();
        assert_eq!(results(&out), vec![2]);
        let out = apply_barrier(&agg(AggregateKind::MCount, false, false), rows, false, NonPositivePolicy::Error, "r").unwrap();
        assert_eq!(results(&out), vec![1, 2]);
    }

    #[test]
    fn latest_summand_per_key() {
        let rows = vec![b(1, 7, 3), b(1, 7, 5), b(1, 8, 2)];
        let out = apply_barrier(&agg(AggregateKind::Sum, true, true), rows.clone(), true, NonPositivePolicy::Error, "r").unwrap();
        assert_eq!(results(&out), vec![7]);
        let out = apply_barrier(&agg(AggregateKind::Sum, true, false), rows, false, NonPositivePolicy::Error, "r").unwrap();
        assert_eq!(results(&out), vec![10]);
    }

    #[test]
    fn nonpositive_summand_policy() {
        let rows = vec![b(1, 7, 0)];
        let e = apply_barrier(&agg(AggregateKind::MSum, true, true), rows.clone(), true, NonPositivePolicy::Error, "r");
        assert!(matches!(e, Err(EvalError::NonPositiveSummand { .. })));
        let out = apply_barrier(&agg(AggregateKind::MSum, true, true), rows, true, NonPositivePolicy::Ignore, "r").unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn accumulator_emits_increments() {
        let bar = agg(AggregateKind::MCount, false, false);
        let mut acc = Accumulator::default();
        let out = acc.absorb(&bar, &[b(1, 1, 0)], false, NonPositivePolicy::Error, "r").unwrap();
        assert_eq!(results(&out), vec![1]);
        let out = acc.absorb(&bar, &[b(1, 1, 0), b(1, 2, 0), b(1, 3, 0)], false, NonPositivePolicy::Error, "r").unwrap();
        assert_eq!(results(&out), vec![2, 3]);
        let bar = agg(AggregateKind::Count, false, false);
        let mut acc = Accumulator::default();
        acc.absorb(&bar, &[b(1, 1, 0)], false, NonPositivePolicy::Error, "r").unwrap();
        let out = acc.absorb(&bar, &[b(1, 2, 0), b(1, 3, 0)], false, NonPositivePolicy::Error, "r").unwrap();
        assert_eq!(results(&out), vec![3]);
    }
}
