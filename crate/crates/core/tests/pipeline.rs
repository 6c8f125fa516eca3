use premdl::analysis::classify_premability;
use premdl::fixtures;
use premdl::parser::parse_facts;
use premdl::rewrite::{compile_count_in_recursion, push_constraint, push_unchecked};
use premdl::verify::{minimality_probe, trust_but_verify_run, Violation, VerifyPolicy};
use premdl::{evaluate, parse_str, EvalOptions, Interpretation, SourceProgram};

fn facts(text: &str) -> Interpretation {
    parse_facts(&SourceProgram::inline(text)).unwrap()
}

fn show(i: &Interpretation, pred: &str) -> String {
    i.restrict([pred]).to_string()
}

const BOM: &str = "basic(b, 2). basic(n, 1). assb(f, b, 4). assb(f, n, 2). assb(w, f, 2). assb(w, b, 1).";

const PARTY: &str = "organizer(a). organizer(g). organizer(h).
friend(b, a). friend(b, g). friend(b, h).
friend(c, a). friend(c, g). friend(c, b).
friend(d, a). friend(d, c).";

#[test]
fn three_node_shortest_paths() {
    let edb = facts(fixtures::THREE_NODE_FACTS);
    for src in [fixtures::SHORTEST_PATH, fixtures::SHORTEST_PATH_PUSHED, fixtures::SPATH_STRATIFIED] {
        let out = evaluate(&parse_str(src).unwrap(), &edb, &EvalOptions::default()).unwrap();
        assert_eq!(show(&out.model, "spath"), "spath(b, 1).\nspath(c, 2).\n");
    }
}

#[test]
fn part_costs_roll_up() {
    // f = 4*2 + 2*1 = 10, w = 2*10 + 1*2 = 22
    let out = evaluate(&parse_str(fixtures::PART_EXPLOSION).unwrap(), &facts(BOM), &EvalOptions::default()).unwrap();
    assert_eq!(
        show(&out.model, "finalcost"),
        "finalcost(b, 2).\nfinalcost(f, 10).\nfinalcost(n, 1).\nfinalcost(w, 22).\n"
    );
}

#[test]
fn running_and_final_counts_agree_on_attendance() {
    let edb = facts(PARTY);
    let a = evaluate(&parse_str(fixtures::PARTY_MCOUNT).unwrap(), &edb, &EvalOptions::default()).unwrap();
    let p = compile_count_in_recursion(&parse_str(fixtures::PARTY_COUNT).unwrap());
    assert!(p.approved());
    let b = evaluate(&p.program, &edb, &EvalOptions::default()).unwrap();
    // b sees three organizers, c then sees b, d never gets past two.
    assert_eq!(show(&a.model, "attend"), "attend(a).\nattend(b).\nattend(c).\nattend(g).\nattend(h).\n");
    assert_eq!(a.model.get("attend"), b.model.get("attend"));
    assert_eq!(a.model.get("fcount"), b.model.get("fcount"));
}

#[test]
fn pushed_bound_then_residual_max() {
    let p = parse_str(fixtures::BOUNDED_LONGEST_PATH).unwrap();
    let v = classify_premability(&p, p.constraint_of("r5").unwrap());
    assert!(!v.approved());
    assert_eq!(v.plan.len(), 1);
    let (pushed, _) = push_constraint(&p, &v).unwrap();
    let edb = facts(fixtures::THREE_NODE_FACTS);
    let a = evaluate(&p, &edb, &EvalOptions::default()).unwrap().model;
    let b = evaluate(&pushed, &edb, &EvalOptions::default()).unwrap().model;
    assert_eq!(show(&a, "lpath"), "lpath(b, 1).\nlpath(c, 5).\n");
    assert_eq!(a.get("lpath"), b.get("lpath"));
}

#[test]
fn trust_but_verify_flags_a_forced_push() {
    let p = parse_str(fixtures::NONPUSHABLE_MAX).unwrap();
    let (forced, _) = push_unchecked(&p, &p.constraints[0].rule_id).unwrap();
    let none = Interpretation::new();
    let r = trust_but_verify_run(&p, &forced, &none, VerifyPolicy::default(), &EvalOptions::default()).unwrap();
    assert!(matches!(&r.violations[..], [Violation::OracleMismatch { predicate, .. }] if predicate == "topp"));
    let r = trust_but_verify_run(&p, &p, &none, VerifyPolicy::default(), &EvalOptions::default()).unwrap();
    assert!(r.violations.is_empty());
}

#[test]
fn pushed_min_model_is_minimal() {
    let p = parse_str(fixtures::SHORTEST_PATH_PUSHED).unwrap();
    let mut p = p;
    p.approve("path");
    let r = minimality_probe(&p, &facts(fixtures::THREE_NODE_FACTS), &EvalOptions::default()).unwrap();
    assert!(r.minimal(), "{r:?}");
    assert_eq!(r.tuples, 4);
}

#[test]
fn loads_facts_and_edge_lists_from_disk() {
    use premdl::parser::{load_edge_list, load_facts, EdgeFormat};
    let dir = tempfile::tempdir().unwrap();
    let tsv = dir.path().join("arcs.tsv");
    std::fs::write(&tsv, "# src\tdst\tlen\n0\t1\t1\n1\t2\t1\n0\t2\t5\n").unwrap();
    let dl = dir.path().join("arcs.facts");
    std::fs::write(&dl, "arc(0, 1, 1). arc(1, 2, 1). arc(0, 2, 5).").unwrap();
    let arcs = load_edge_list(&tsv, EdgeFormat::from_path(&tsv)).unwrap();
    assert_eq!(arcs, load_facts(&dl).unwrap().get("arc"));
    let csv = dir.path().join("arcs.csv");
    std::fs::write(&csv, "3,4\n").unwrap();
    let one = load_edge_list(&csv, EdgeFormat::from_path(&csv)).unwrap();
    assert_eq!(one.iter().next().unwrap()[2], premdl::Value::Int(1));
    assert!(load_facts(&dir.path().join("missing.facts")).is_err());
}
