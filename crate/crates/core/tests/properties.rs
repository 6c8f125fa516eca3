//! Property tests over random graphs, relations and programs.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use premdl::analysis::classify_premability;
use premdl::bench::{dijkstra_reference, distances, Variant};
use premdl::eval::apply_constraint;
use premdl::fixtures;
use premdl::rewrite::{desugar_extremum, expand_msum, push_constraint};
use premdl::verify::{check_prem_empirical, recheck};
use premdl::{evaluate, parse_str, EvalMode, EvalOptions, Execution, Interpretation, Program, Relation, Value};

fn ints(xs: &[i64]) -> Vec<Value> {
    xs.iter().map(|&x| Value::Int(x)).collect()
}

/// Arcs between nodes 0..8 going from lower to higher numbers.
fn dag_arcs() -> impl Strategy<Value = Relation> {
    prop::collection::vec((0i64..8, 0i64..8, 1i64..20), 0..20).prop_map(|v| {
        v.into_iter()
            .filter(|(a, b, _)| a < b)
            .map(|(a, b, w)| ints(&[a, b, w]))
            .collect()
    })
}

/// Arcs with cycles allowed.
fn any_arcs() -> impl Strategy<Value = Relation> {
    prop::collection::vec((0i64..6, 0i64..6, 1i64..20), 0..15)
        .prop_map(|v| v.into_iter().map(|(a, b, w)| ints(&[a, b, w])).collect())
}

fn edb(pred: &str, rel: Relation) -> Interpretation {
    let mut i = Interpretation::new();
    i.set(pred, rel);
    i
}

fn from_zero(src: &str) -> Program {
    parse_str(&src.replace("arc(a,", "arc(0,")).unwrap()
}

fn push(p: &Program, rule: &str) -> Program {
    let v = classify_premability(p, p.constraint_of(rule).unwrap());
    push_constraint(p, &v).unwrap().0
}

fn seq() -> EvalOptions {
    EvalOptions {
        execution: Execution::Sequential,
        ..EvalOptions::default()
    }
}

/// Positive programs over p0..p2 with up to five rules.
fn positive_program() -> impl Strategy<Value = Program> {
    let fact = (0usize..3, 0i64..4, 0i64..4).prop_map(|(p, a, b)| format!("p{p}({a}, {b})."));
    let var = prop::sample::select(vec!["X", "Y", "Z"]);
    let atom = (0usize..3, var.clone(), var).prop_map(|(p, a, b)| (p, a, b));
    let rule = (0usize..3, prop::collection::vec(atom, 1..3), any::<prop::sample::Index>(), any::<prop::sample::Index>())
        .prop_map(|(h, body, i, j)| {
            let vars: Vec<&str> = body
                .iter()
                .flat_map(|(_, a, b)| [*a, *b])
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let goals: Vec<String> = body.iter().map(|(p, a, b)| format!("p{p}({a}, {b})")).collect();
            format!("p{h}({}, {}) :- {}.", i.get(&vars), j.get(&vars), goals.join(", "))
        });
    (prop::collection::vec(fact, 1..=10), prop::collection::vec(rule, 1..=5))
        .prop_map(|(facts, rules)| parse_str(&format!("{}\n{}", facts.join("\n"), rules.join("\n"))).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pushed_min_equals_min_of_fixpoint(arcs in dag_arcs()) {
        let p = from_zero(fixtures::SHORTEST_PATH);
        let i = edb("arc", arcs);
        let full = evaluate(&p, &i, &seq()).unwrap().model;
        let pushed = evaluate(&push(&p, "r4"), &i, &seq()).unwrap().model;
        let c = p.constraint_of("r4").unwrap();
        prop_assert_eq!(apply_constraint(c, &full.get("path")), pushed.get("path"));
        prop_assert_eq!(full.get("spath"), pushed.get("spath"));
    }

    #[test]
    fn pushed_bound_equals_bounded_fixpoint(arcs in any_arcs()) {
        let p = from_zero(fixtures::LIMITED_PATH);
        let i = edb("arc", arcs);
        let pushed = evaluate(&push(&p, "r3"), &i, &seq()).unwrap().model;
        let hand = evaluate(&from_zero(fixtures::LIMITED_PATH_PUSHED), &i, &seq()).unwrap().model;
        prop_assert_eq!(pushed.get("llpath"), hand.get("llpath"));
        prop_assert!(pushed.get("path").iter().all(|t| t[1].as_int().unwrap() < 143));
    }

    #[test]
    fn recursive_min_matches_dijkstra(arcs in any_arcs()) {
        let i = edb("arc", arcs.clone());
        let expect = dijkstra_reference(&arcs, &Value::Int(0)).unwrap();
        for v in [Variant::SpathPrem, Variant::SpathMmin] {
            let out = evaluate(&v.program(&Value::Int(0)), &i, &seq()).unwrap().model;
            prop_assert_eq!(distances(&out, v), expect.clone());
        }
    }

    #[test]
    fn prem_never_derives_more(arcs in dag_arcs()) {
        let i = edb("arc", arcs);
        let src = Value::Int(0);
        let a = evaluate(&Variant::Spath.program(&src), &i, &seq()).unwrap();
        let b = evaluate(&Variant::SpathPrem.program(&src), &i, &seq()).unwrap();
        prop_assert_eq!(distances(&a.model, Variant::Spath), distances(&b.model, Variant::SpathPrem));
        prop_assert!(b.stats.derived <= a.stats.derived);
    }

    #[test]
    fn extremum_desugars_to_negation(
        rows in prop::collection::btree_set((0i64..5, 0i64..30), 0..=50),
        max in any::<bool>(),
    ) {
        let goal = if max { "is_max" } else { "is_min" };
        let p = parse_str(&format!("m(Y, D) :- e(Y, D), {goal}((Y), (D)).")).unwrap();
        let rel: Relation = rows.iter().map(|&(y, d)| ints(&[y, d])).collect();
        let i = edb("e", rel);
        let native = evaluate(&p, &i, &seq()).unwrap().model.get("m");
        let negated = evaluate(&desugar_extremum(&p), &i, &seq()).unwrap().model.get("m");
        let mut best: BTreeMap<i64, i64> = BTreeMap::new();
        for &(y, d) in &rows {
            let e = best.entry(y).or_insert(d);
            *e = if max { (*e).max(d) } else { (*e).min(d) };
        }
        let expect: Relation = best.iter().map(|(&y, &d)| ints(&[y, d])).collect();
        prop_assert_eq!(&native, &expect);
        prop_assert_eq!(negated, expect);
    }

    #[test]
    fn msum_maximum_is_the_sum(values in prop::collection::vec(1i64..=20, 1..=10)) {
        let p = expand_msum(&parse_str("m(T) :- v(I, C), msum((), (I, C), T).").unwrap()).program;
        let rel: Relation = values.iter().enumerate().map(|(i, &c)| ints(&[i as i64, c])).collect();
        let m = evaluate(&p, &edb("v", rel), &seq()).unwrap().model.get("m");
        let max = m.iter().filter_map(|t| t[0].as_int()).max();
        prop_assert_eq!(max, Some(values.iter().sum::<i64>()));
    }

    #[test]
    fn mcount_enumerates_one_to_k(xs in prop::collection::btree_set(0i64..100, 1..=20)) {
        let p = parse_str("c(N) :- e(X), mcount((), (X), N).").unwrap();
        let rel: Relation = xs.iter().map(|&x| ints(&[x])).collect();
        let c = evaluate(&p, &edb("e", rel), &seq()).unwrap().model.get("c");
        let expect: Relation = (1..=xs.len() as i64).map(|k| ints(&[k])).collect();
        prop_assert_eq!(c, expect);
    }

    #[test]
    fn naive_equals_seminaive(p in positive_program()) {
        let none = Interpretation::new();
        let naive = EvalOptions { mode: EvalMode::Naive, ..seq() };
        let a = evaluate(&p, &none, &naive).unwrap().model;
        let b = evaluate(&p, &none, &seq()).unwrap().model;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn parallel_equals_sequential(arcs in any_arcs()) {
        let i = edb("arc", arcs);
        for v in Variant::ALL {
            let p = v.program(&Value::Int(0));
            let opts = EvalOptions { max_tuples: 20_000, ..EvalOptions::default() };
            let a = evaluate(&p, &i, &opts).map(|o| o.model).ok();
            let b = evaluate(&p, &i, &EvalOptions { execution: Execution::Sequential, ..opts }).map(|o| o.model).ok();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn gamma_is_idempotent_and_shrinking(rows in prop::collection::btree_set((0i64..4, 0i64..20), 0..30)) {
        let p = parse_str(fixtures::SHORTEST_PATH).unwrap();
        let c = p.constraint_of("r4").unwrap();
        let rel: Relation = rows.iter().map(|&(y, d)| ints(&[y, d])).collect();
        let once = apply_constraint(c, &rel);
        prop_assert_eq!(apply_constraint(c, &once), once.clone());
        prop_assert!(once.iter().all(|t| rel.iter().any(|u| u == t)));
    }

    #[test]
    fn counterexamples_replay(seed in any::<u64>()) {
        let p = parse_str(fixtures::NONPUSHABLE_MAX).unwrap();
        let c = &p.constraints[0].constraint;
        let r = check_prem_empirical(&p, c, 300, seed);
        let cx = r.counterexample.as_ref();
        prop_assert!(cx.is_some());
        prop_assert!(recheck(&p, c, cx.unwrap()));
        prop_assert_eq!(check_prem_empirical(&p, c, 300, seed).to_string(), r.to_string());
    }
}
