//! Shortest-path benchmark: random graphs, three program variants evaluated
//! from several sources, and a Dijkstra reference for the answers.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::io;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::eval::{evaluate, EvalError, EvalOptions, Execution};
use crate::fixtures;
use crate::model::{Interpretation, Program, Relation, Term, Value};
use crate::parser::parse_str;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphKind {
    /// Arcs only from lower to higher node numbers.
    Dag,
    /// Any ordered pair of distinct nodes.
    Cyclic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphSpec {
    pub kind: GraphKind,
    pub n: usize,
    pub p: f64,
    pub lengths: (i64, i64),
    pub seed: u64,
}

impl GraphSpec {
    pub fn dag(n: usize, p: f64, seed: u64) -> Self {
        GraphSpec {
            kind: GraphKind::Dag,
            n,
            p,
            lengths: (1, 100),
            seed,
        }
    }

    pub fn cyclic(n: usize, p: f64, seed: u64) -> Self {
        GraphSpec {
            kind: GraphKind::Cyclic,
            ..Self::dag(n, p, seed)
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BenchError {
    #[error("edge probability {0} is outside (0, 1]")]
    Probability(String),
    #[error("length range [{0}, {1}] is invalid")]
    Lengths(i64, i64),
    #[error("arc {from} -> {to} has negative length {length}")]
    NegativeLength { from: String, to: String, length: i64 },
    #[error("arc tuple {0} is not (node, node, integer)")]
    MalformedArc(String),
}

/// `arc(i, j, len)` tuples with integer node names 0..n.
pub fn gen_graph(spec: &GraphSpec) -> Result<Relation, BenchError> {
    if !(spec.p > 0.0 && spec.p <= 1.0) {
        return Err(BenchError::Probability(spec.p.to_string()));
    }
    let (lo, hi) = spec.lengths;
    if lo < 1 || lo > hi {
        return Err(BenchError::Lengths(lo, hi));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut arcs = Relation::new();
    for i in 0..spec.n {
        for j in 0..spec.n {
            let allowed = match spec.kind {
                GraphKind::Dag => i < j,
                GraphKind::Cyclic => i != j,
            };
            if allowed && rng.random_bool(spec.p) {
                let len = rng.random_range(lo..=hi);
                arcs.insert(vec![Value::Int(i as i64), Value::Int(j as i64), Value::Int(len)]);
            }
        }
    }
    Ok(arcs)
}

/// Single-source shortest distances. The source itself only appears when a
/// cycle leads back to it.
pub fn dijkstra_reference(arcs: &Relation, source: &Value) -> Result<BTreeMap<Value, i64>, BenchError> {
    let mut adj: BTreeMap<&Value, Vec<(&Value, i64)>> = BTreeMap::new();
    for t in arcs.iter() {
        let [from, to, Value::Int(len)] = t.as_slice() else {
            return Err(BenchError::MalformedArc(format!("{t:?}")));
        };
        if *len < 0 {
            return Err(BenchError::NegativeLength {
                from: from.to_string(),
                to: to.to_string(),
                length: *len,
            });
        }
        adj.entry(from).or_default().push((to, *len));
    }
    let mut dist: BTreeMap<Value, i64> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    for &(to, len) in adj.get(source).map(Vec::as_slice).unwrap_or(&[]) {
        heap.push(Reverse((len, to.clone())));
    }
    while let Some(Reverse((d, v))) = heap.pop() {
        if dist.contains_key(&v) {
            continue;
        }
        for &(to, len) in adj.get(&v).map(Vec::as_slice).unwrap_or(&[]) {
            if !dist.contains_key(to) {
                heap.push(Reverse((d + len, to.clone())));
            }
        }
        dist.insert(v, d);
    }
    Ok(dist)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    /// Minimum after the recursion.
    Spath,
    /// Minimum inside the recursion.
    SpathPrem,
    /// Monotonic minimum inside the recursion, minimum at the end.
    SpathMmin,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Spath, Variant::SpathPrem, Variant::SpathMmin];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Spath => "spath",
            Variant::SpathPrem => "spath_prem",
            Variant::SpathMmin => "spath_mmin",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Variant::ALL.into_iter().find(|v| v.name() == s)
    }

    /// The predicate holding the answers.
    pub fn answer(self) -> &'static str {
        self.name()
    }

    fn source_text(self) -> &'static str {
        match self {
            Variant::Spath => fixtures::SPATH_STRATIFIED,
            Variant::SpathPrem => fixtures::SPATH_PREM,
            Variant::SpathMmin => fixtures::SPATH_MMIN,
        }
    }

    /// The variant's program with the source constant `a` replaced by `source`.
    pub fn program(self, source: &Value) -> Program {
        let mut p = parse_str(self.source_text()).expect("benchmark fixtures parse");
        let from = Value::sym("a");
        for r in &mut p.rules {
            for g in &mut r.body {
                if let crate::model::Goal::Regular(a) = g {
                    for t in &mut a.args {
                        if *t == Term::Const(from.clone()) {
                            *t = Term::Const(source.clone());
                        }
                    }
                }
            }
        }
        p.approve("path");
        p
    }
}

/// Answers of a variant as node to distance.
pub fn distances(model: &Interpretation, variant: Variant) -> BTreeMap<Value, i64> {
    model
        .get(variant.answer())
        .iter()
        .filter_map(|t| Some((t[0].clone(), t[1].as_int()?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    Ok,
    /// Answers differ from the reference.
    Wrong,
    /// Tuple or round budget ran out.
    NonTerminating,
    Error,
}

impl CellStatus {
    pub fn name(self) -> &'static str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::Wrong => "wrong",
            CellStatus::NonTerminating => "nonterminating",
            CellStatus::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub variant: Variant,
    pub source: i64,
    pub run: usize,
    pub iterations: usize,
    pub derived: u64,
    pub retained: u64,
    pub wall_ms: f64,
    pub status: CellStatus,
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub graph: GraphSpec,
    pub variants: Vec<Variant>,
    pub sources: usize,
    pub runs: usize,
    pub max_tuples: usize,
    pub max_iterations: usize,
    /// Engine execution inside each cell.
    pub execution: Execution,
    /// Run cells one at a time so wall times do not compete.
    pub timing_strict: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            graph: GraphSpec::dag(200, 0.1, 1),
            variants: Variant::ALL.to_vec(),
            sources: 5,
            runs: 5,
            max_tuples: 1_000_000,
            max_iterations: 100_000,
            execution: Execution::Sequential,
            timing_strict: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub variant: Variant,
    pub min_ms: f64,
    pub avg_ms: f64,
    pub max_ms: f64,
    /// Mean derived tuples per evaluation.
    pub derived: f64,
    pub statuses: BTreeMap<&'static str, usize>,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub arcs: usize,
    pub sources: Vec<i64>,
    pub cells: Vec<Cell>,
    pub summaries: Vec<Summary>,
}

/// Picks `k` distinct nodes, deterministically in `seed`.
pub fn pick_sources(n: usize, k: usize, seed: u64) -> Vec<i64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5EED));
    let mut out: Vec<i64> = sample(&mut rng, n, k.min(n)).into_iter().map(|i| i as i64).collect();
    out.sort();
    out
}

fn run_cell(arcs: &Interpretation, variant: Variant, source: i64, run: usize, config: &BenchConfig, expected: &BTreeMap<Value, i64>) -> Cell {
    let program = variant.program(&Value::Int(source));
    let opts = EvalOptions {
        max_tuples: config.max_tuples,
        max_iterations: config.max_iterations,
        execution: config.execution,
        ..EvalOptions::default()
    };
    let start = Instant::now();
    let result = evaluate(&program, arcs, &opts);
    let wall_ms = start.elapsed().as_secs_f64() * 1000.0;
    let mut cell = Cell {
        variant,
        source,
        run,
        iterations: 0,
        derived: 0,
        retained: 0,
        wall_ms,
        status: CellStatus::Ok,
    };
    match result {
        Ok(out) => {
            cell.iterations = out.stats.iterations;
            cell.derived = out.stats.derived;
            cell.retained = out.stats.retained;
            if distances(&out.model, variant) != *expected {
                cell.status = CellStatus::Wrong;
            }
        }
        Err(EvalError::BudgetExceeded { stats, .. }) => {
            cell.iterations = stats.iterations;
            cell.derived = stats.derived;
            cell.retained = stats.retained;
            cell.status = CellStatus::NonTerminating;
        }
        Err(_) => cell.status = CellStatus::Error,
    }
    cell
}

/// Evaluates every variant from every source `runs` times.
pub fn run_benchmark(config: &BenchConfig) -> Result<BenchReport, BenchError> {
    let arcs = gen_graph(&config.graph)?;
    let sources = pick_sources(config.graph.n, config.sources, config.graph.seed);
    let mut edb = Interpretation::new();
    edb.set("arc", arcs.clone());
    let mut expected = BTreeMap::new();
    for &s in &sources {
        expected.insert(s, dijkstra_reference(&arcs, &Value::Int(s))?);
    }
    let mut jobs = Vec::new();
    for &v in &config.variants {
        for &s in &sources {
            for run in 0..config.runs.max(1) {
                jobs.push((v, s, run));
            }
        }
    }
    let cells = crate::par::map(&jobs, !config.timing_strict, |&(v, s, run)| {
        run_cell(&edb, v, s, run, config, &expected[&s])
    });
    let summaries = config
        .variants
        .iter()
        .map(|&v| summarize(v, cells.iter().filter(|c| c.variant == v)))
        .collect();
    Ok(BenchReport {
        arcs: arcs.len(),
        sources,
        cells,
        summaries,
    })
}

/// Min/avg/max over sources of the per-source mean wall time.
fn summarize<'a>(variant: Variant, cells: impl Iterator<Item = &'a Cell>) -> Summary {
    let mut per_source: BTreeMap<i64, Vec<&Cell>> = BTreeMap::new();
    let mut statuses = BTreeMap::new();
    for c in cells {
        per_source.entry(c.source).or_default().push(c);
        *statuses.entry(c.status.name()).or_insert(0) += 1;
    }
    let means: Vec<f64> = per_source
        .values()
        .map(|cs| cs.iter().map(|c| c.wall_ms).sum::<f64>() / cs.len() as f64)
        .collect();
    let all: Vec<&Cell> = per_source.values().flatten().copied().collect();
    let n = means.len().max(1) as f64;
    Summary {
        variant,
        min_ms: means.iter().copied().fold(f64::INFINITY, f64::min),
        avg_ms: means.iter().sum::<f64>() / n,
        max_ms: means.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        derived: all.iter().map(|c| c.derived as f64).sum::<f64>() / all.len().max(1) as f64,
        statuses,
    }
}

impl BenchReport {
    /// One row per cell.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["variant", "source", "run", "iterations", "derived", "retained", "wall_ms", "status"])?;
        for c in &self.cells {
            w.write_record([
                c.variant.name().to_string(),
                c.source.to_string(),
                c.run.to_string(),
                c.iterations.to_string(),
                c.derived.to_string(),
                c.retained.to_string(),
                format!("{:.3}", c.wall_ms),
                c.status.name().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let src: Vec<String> = self.sources.iter().map(i64::to_string).collect();
        writeln!(f, "arcs: {}  sources: {}", self.arcs, src.join(" "))?;
        writeln!(
            f,
            "{:<12} {:>10} {:>10} {:>10} {:>14}  status",
            "variant", "min_ms", "avg_ms", "max_ms", "derived"
        )?;
        for s in &self.summaries {
            let st: Vec<String> = s.statuses.iter().map(|(k, v)| format!("{k}={v}")).collect();
            writeln!(
                f,
                "{:<12} {:>10.3} {:>10.3} {:>10.3} {:>14.1}  {}",
                s.variant.name(),
                s.min_ms,
                s.avg_ms,
                s.max_ms,
                s.derived,
                st.join(",")
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arc(a: &str, b: &str, n: i64) -> Vec<Value> {
        vec![Value::sym(a), Value::sym(b), Value::Int(n)]
    }

    #[test]
    fn complete_dag() {
        let arcs = gen_graph(&GraphSpec::dag(5, 1.0, 3)).unwrap();
        assert_eq!(arcs.len(), 10);
        assert!(arcs.iter().all(|t| t[0] < t[1]));
        assert!(arcs.iter().all(|t| (1..=100).contains(&t[2].as_int().unwrap())));
    }

    #[test]
    fn arc_count_is_binomial() {
        let arcs = gen_graph(&GraphSpec::dag(100, 0.1, 42)).unwrap();
        let (mean, sd) = (495.0, (4950.0f64 * 0.1 * 0.9).sqrt());
        assert!((arcs.len() as f64 - mean).abs() <= 3.0 * sd, "{}", arcs.len());
    }

    #[test]
    fn bad_specs_are_rejected() {
        assert!(gen_graph(&GraphSpec::dag(5, 0.0, 1)).is_err());
        let mut s = GraphSpec::dag(5, 0.5, 1);
        s.lengths = (3, 2);
        assert_eq!(gen_graph(&s), Err(BenchError::Lengths(3, 2)));
    }

    #[test]
    fn dijkstra_by_hand() {
        let arcs: Relation = [arc("a", "b", 1), arc("b", "c", 1), arc("a", "c", 5)].into_iter().collect();
        let d = dijkstra_reference(&arcs, &Value::sym("a")).unwrap();
        assert_eq!(d, BTreeMap::from([(Value::sym("b"), 1), (Value::sym("c"), 2)]));
        assert!(dijkstra_reference(&Relation::new(), &Value::sym("a")).unwrap().is_empty());
        let neg: Relation = [arc("a", "b", -1)].into_iter().collect();
        assert!(matches!(dijkstra_reference(&neg, &Value::sym("a")), Err(BenchError::NegativeLength { .. })));
    }

    #[test]
    fn variants_agree_on_small_dag() {
        let arcs = gen_graph(&GraphSpec::dag(4, 0.8, 9)).unwrap();
        let mut edb = Interpretation::new();
        edb.set("arc", arcs.clone());
        let expect = dijkstra_reference(&arcs, &Value::Int(0)).unwrap();
        for v in Variant::ALL {
            let out = evaluate(&v.program(&Value::Int(0)), &edb, &EvalOptions::default()).unwrap();
            assert_eq!(distances(&out.model, v), expect, "{}", v.name());
        }
    }

    #[test]
    fn report_is_seed_deterministic() {
        let config = BenchConfig {
            graph: GraphSpec::dag(30, 0.2, 5),
            sources: 3,
            runs: 1,
            ..BenchConfig::default()
        };
        let a = run_benchmark(&config).unwrap();
        let b = run_benchmark(&config).unwrap();
        let key = |r: &BenchReport| r.cells.iter().map(|c| (c.variant, c.source, c.derived, c.status)).collect::<Vec<_>>();
        assert_eq!(key(&a), key(&b));
        assert!(a.cells.iter().all(|c| c.status == CellStatus::Ok));
        let mut csv = Vec::new();
        a.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + 9);
    }
}
