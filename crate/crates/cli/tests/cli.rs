use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn premdl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_premdl")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_shortest_path_on_three_nodes() {
    let prog = fixture("shortest_path.dl");
    let facts = fixture("three_node.facts");
    let o = premdl(&["run", path_str(&prog), "--facts", path_str(&facts), "--query", "spath"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "spath(b,1)\nspath(c,2)\n");
}

#[test]
fn default_query_is_the_last_rule_head() {
    let prog = fixture("shortest_path.dl");
    let facts = fixture("three_node.facts");
    let o = premdl(&["run", path_str(&prog), "--facts", path_str(&facts), "--mode", "naive"]);
    assert_eq!(stdout(&o), "spath(b,1)\nspath(c,2)\n");
}

#[test]
fn forced_push_warns_and_gives_five() {
    let prog = fixture("nonpushable_max.dl");
    let o = premdl(&["run", path_str(&prog), "--force-push"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "topp(5)\n");
    assert!(stderr(&o).contains("WARNING"));
    let o = premdl(&["run", path_str(&prog)]);
    assert_eq!(stdout(&o), "topp(12)\n");
    assert!(stderr(&o).is_empty());
}

#[test]
fn missing_fact_file_names_the_path() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("absent.facts");
    let prog = fixture("shortest_path.dl");
    let o = premdl(&["run", path_str(&prog), "--facts", path_str(&missing)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("absent.facts"));
}

#[test]
fn syntax_error_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let prog = dir.path().join("bad.dl");
    fs::write(&prog, "p(X) :- q(X\n").unwrap();
    let o = premdl(&["run", path_str(&prog)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn budget_exit_code() {
    let dir = TempDir::new().unwrap();
    let prog = dir.path().join("count.dl");
    fs::write(&prog, "n(0).\nn(J) :- n(I), J = I + 1.\nout(J) :- n(J).\n").unwrap();
    let o = premdl(&["run", path_str(&prog), "--max-tuples", "1000"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn unapproved_sum_needs_trust_but_verify() {
    let prog = fixture("part_explosion_unguarded.dl");
    let dir = TempDir::new().unwrap();
    let facts = dir.path().join("bom.facts");
    fs::write(&facts, "basic(b, 2). basic(n, 1). assb(f, b, 4). assb(f, n, 2). assb(w, f, 2). assb(w, b, 1).\n").unwrap();
    let o = premdl(&["run", path_str(&prog), "--facts", path_str(&facts)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("--trust-but-verify"));
    let o = premdl(&["run", path_str(&prog), "--facts", path_str(&facts), "--trust-but-verify"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "finalcost(b,2)\nfinalcost(f,10)\nfinalcost(n,1)\nfinalcost(w,22)\n");
}

#[test]
fn output_formats() {
    let prog = fixture("shortest_path.dl");
    let facts = fixture("three_node.facts");
    let o = premdl(&["run", path_str(&prog), "--facts", path_str(&facts), "--format", "csv"]);
    assert_eq!(stdout(&o), "b,1\nc,2\n");
    let o = premdl(&["run", path_str(&prog), "--facts", path_str(&facts), "--format", "jsonl"]);
    let lines: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines[0], serde_json::json!({"predicate": "spath", "args": ["b", 1]}));
    assert_eq!(lines.len(), 2);
}

#[test]
fn stats_go_to_stderr() {
    let prog = fixture("spath_prem.dl");
    let facts = fixture("three_node.facts");
    let o = premdl(&["run", path_str(&prog), "--facts", path_str(&facts), "--stats"]);
    assert_eq!(stdout(&o), "spath_prem(b,1)\nspath_prem(c,2)\n");
    let err = stderr(&o);
    for key in ["iterations:", "derived:", "retained:", "deleted:", "wall_ms:"] {
        assert!(err.contains(key), "{err}");
    }
}

#[test]
fn check_approves_min() {
    let o = premdl(&["check", path_str(&fixture("shortest_path.dl"))]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("APPROVED: min-deflation (deflation-preserving: r1, r2)"), "{}", stdout(&o));
}

#[test]
fn check_rejects_bounded_max_at_primed_rule() {
    let o = premdl(&["check", path_str(&fixture("bounded_longest_path.dl"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("at rule r2'"), "{}", stdout(&o));
}

#[test]
fn optimize_prints_pushed_rules() {
    let o = premdl(&["optimize", path_str(&fixture("limited_path.dl"))]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("r2': path(Y, Dy) :- path(X, Dx), arc(X, Y, Dxy), Dxy >= 0, Dy = Dx + Dxy, Dy < 143."));
    assert!(out.contains("r3': llpath(Y, Dy) :- path(Y, Dy)."));
    assert!(out.contains("% r1 -> r1'"));
}

#[test]
fn verify_prints_replayable_counterexample() {
    let o = premdl(&["verify", path_str(&fixture("nonpushable_max.dl")), "--seed", "3"]);
    assert_eq!(o.status.code(), Some(3));
    let out = stdout(&o);
    let facts: String = out
        .lines()
        .skip_while(|l| *l != "% I")
        .skip(1)
        .take_while(|l| !l.starts_with('%'))
        .map(|l| format!("{l}\n"))
        .collect();
    assert!(!facts.is_empty());
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("cx.facts");
    fs::write(&path, facts).unwrap();
    let prog = dir.path().join("p.dl");
    fs::write(&prog, "q(X) :- p(X).\n").unwrap();
    let o = premdl(&["run", path_str(&prog), "--facts", path_str(&path)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn verify_is_deterministic() {
    let prog = fixture("nonpushable_max.dl");
    let args = ["verify", path_str(&prog), "--seed", "9"];
    assert_eq!(premdl(&args).stdout, premdl(&args).stdout);
    let o = premdl(&["verify", path_str(&fixture("shortest_path.dl")), "--samples", "200"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("no counterexample in 200 samples"));
}

#[test]
fn bench_writes_csv() {
    let o = premdl(&[
        "bench", "--nodes", "30", "--sources", "2", "--runs", "1", "--format", "csv", "--timing-strict",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("variant,source,run,iterations,derived,retained,wall_ms,status"));
    assert_eq!(lines.count(), 6);
}
