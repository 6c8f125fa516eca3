//! `premdl`: run, optimize, check and verify Datalog programs, and run the
//! shortest-path benchmark.
//!
//! Exit codes: 0 success, 1 input error, 2 budget exceeded, 3 rejection.

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use premdl::analysis::{build_dependency_graph, classify_premability, stratify, PremVerdict};
use premdl::bench::{run_benchmark, BenchConfig, GraphSpec, Variant};
use premdl::parser::load_facts;
use premdl::rewrite::{
    certify_recursive_extrema, compile_count_in_recursion, push_constraint, push_unchecked, RewriteTrace,
};
use premdl::verify::{check_prem_empirical, trust_but_verify_run, VerifyPolicy, DEFAULT_SAMPLES};
use premdl::{
    evaluate, parse_program, Constraint, EvalError, EvalMode, EvalOptions, Execution, Interpretation, Program,
    Relation, SourceProgram, Value,
};

#[derive(Parser)]
#[command(name = "premdl", version, about = "Datalog with aggregates in recursion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a program and print the query predicate.
    Run(RunArgs),
    /// Print the program with every approved constraint pushed into recursion.
    Optimize(ProgramArgs),
    /// Check whether each final constraint can be pushed.
    Check(ProgramArgs),
    /// Search for inputs on which pushing a constraint changes the result.
    Verify(VerifyArgs),
    /// Time the shortest-path variants on a generated graph.
    Bench(BenchArgs),
}

#[derive(Args)]
struct ProgramArgs {
    program: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Naive,
    Seminaive,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
    Jsonl,
}

#[derive(Args)]
struct RunArgs {
    program: PathBuf,
    #[arg(long = "facts", value_name = "PATH")]
    facts: Vec<PathBuf>,
    #[arg(long, value_name = "NAME")]
    query: Option<String>,
    #[arg(long, value_enum, default_value = "seminaive")]
    mode: Mode,
    #[arg(long, value_name = "N", default_value_t = 10_000_000)]
    max_tuples: usize,
    #[arg(long, value_name = "N", default_value_t = 1_000_000)]
    max_iterations: usize,
    /// Print evaluation statistics on standard error.
    #[arg(long)]
    stats: bool,
    /// Push every final constraint even when the check rejects it.
    #[arg(long)]
    force_push: bool,
    /// Run unapproved programs and compare answers with a reference evaluation.
    #[arg(long)]
    trust_but_verify: bool,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct VerifyArgs {
    program: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Dag,
    Cyclic,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "dag")]
    kind: Kind,
    #[arg(long, default_value_t = 200)]
    nodes: usize,
    /// Arc probability.
    #[arg(long, default_value_t = 0.1)]
    p: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    sources: usize,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    /// Comma-separated subset of spath, spath_prem, spath_mmin.
    #[arg(long, value_delimiter = ',')]
    variants: Vec<String>,
    #[arg(long, value_name = "N", default_value_t = 1_000_000)]
    max_tuples: usize,
    #[arg(long, value_name = "N", default_value_t = 100_000)]
    max_iterations: usize,
    /// Run cells one at a time.
    #[arg(long)]
    timing_strict: bool,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

/// A failure carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl ToString) -> Self {
        Failure {
            code: 1,
            message: message.to_string(),
        }
    }

    fn rejected(message: impl ToString) -> Self {
        Failure {
            code: 3,
            message: message.to_string(),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        let code = match e {
            EvalError::BudgetExceeded { .. } => 2,
            EvalError::NonPositiveSummand { .. } => 3,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::input(e)
    }
}

type Outcome = Result<(), Failure>;

fn load_program(path: &PathBuf) -> Result<Program, Failure> {
    let source = SourceProgram::from_file(path).map_err(Failure::input)?;
    parse_program(&source).map_err(Failure::input)
}

fn load_edb(paths: &[PathBuf]) -> Result<Interpretation, Failure> {
    let mut edb = Interpretation::new();
    for p in paths {
        edb.extend(&load_facts(p).map_err(Failure::input)?);
    }
    Ok(edb)
}

/// The program after every applicable rewrite, with what happened along the way.
struct Prepared {
    program: Program,
    trace: RewriteTrace,
    verdicts: Vec<PremVerdict>,
    warnings: Vec<String>,
}

fn prepare(original: &Program, force: bool) -> Result<Prepared, Failure> {
    let cert = certify_recursive_extrema(original);
    let counts = compile_count_in_recursion(&cert.program);
    let mut program = counts.program;
    let mut verdicts = cert.verdicts;
    verdicts.extend(counts.verdicts);
    let mut warnings = counts.warnings;
    if force {
        warnings.push("WARNING: --force-push skips the safety check; answers may silently differ from the program's meaning".into());
    }
    let mut trace = RewriteTrace::default();
    let finals: Vec<String> = program.constraints.iter().map(|c| c.rule_id.clone()).collect();
    for id in finals {
        let Some(c) = program.constraint_of(&id).cloned() else { continue };
        let v = classify_premability(&program, &c);
        let step = if force && !v.approved() {
            warnings.push(format!(
                "WARNING: forcing {c} into recursion although the check rejected it"
            ));
            Some(push_unchecked(&program, &id))
        } else if !v.plan.is_empty() {
            Some(push_constraint(&program, &v))
        } else {
            None
        };
        if let Some(step) = step {
            let (p, t) = step.map_err(Failure::input)?;
            program = p;
            trace.steps.extend(t.steps);
            trace.renamed.extend(t.renamed);
        }
        verdicts.push(v);
    }
    Ok(Prepared {
        program,
        trace,
        verdicts,
        warnings,
    })
}

fn eval_options(args: &RunArgs) -> EvalOptions {
    EvalOptions {
        mode: match args.mode {
            Mode::Naive => EvalMode::Naive,
            Mode::Seminaive => EvalMode::Seminaive,
        },
        max_tuples: args.max_tuples,
        max_iterations: args.max_iterations,
        execution: if args.sequential { Execution::Sequential } else { Execution::Parallel },
        ..EvalOptions::default()
    }
}

fn write_relation(out: &mut impl Write, pred: &str, rel: &Relation, format: Format) -> Outcome {
    match format {
        Format::Text => {
            for t in rel.iter() {
                let args: Vec<String> = t.iter().map(Value::to_string).collect();
                writeln!(out, "{pred}({})", args.join(","))?;
            }
        }
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
            for t in rel.iter() {
                w.write_record(t.iter().map(|v| match v {
                    Value::Int(i) => i.to_string(),
                    Value::Sym(s) => s.as_str().to_string(),
                }))
                .map_err(Failure::input)?;
            }
            w.flush()?;
        }
        Format::Jsonl => {
            for t in rel.iter() {
                let args: Vec<serde_json::Value> = t
                    .iter()
                    .map(|v| match v {
                        Value::Int(i) => serde_json::Value::from(*i),
                        Value::Sym(s) => serde_json::Value::from(s.as_str()),
                    })
                    .collect();
                writeln!(out, "{}", serde_json::json!({ "predicate": pred, "args": args }))?;
            }
        }
    }
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Outcome {
    let original = load_program(&args.program)?;
    let edb = load_edb(&args.facts)?;
    let query = match &args.query {
        Some(q) => q.clone(),
        None => original
            .rules
            .last()
            .map(|r| r.head.predicate.clone())
            .ok_or_else(|| Failure::input("program has no rules; pass --query"))?,
    };
    let prepared = prepare(&original, args.force_push)?;
    for w in &prepared.warnings {
        eprintln!("{w}");
    }
    let program = prepared.program;
    let opts = eval_options(args);
    let unapproved = stratify(&program, &build_dependency_graph(&program)).err();
    let (outcome, violations) = match unapproved {
        Some(e) if !args.trust_but_verify && !args.force_push => {
            let reasons: Vec<String> = prepared
                .verdicts
                .iter()
                .filter_map(|v| v.rejection.as_ref())
                .map(|r| format!("{} fails {} at rule {}", r.conjunct, r.condition, r.rule))
                .collect();
            let mut message = e.to_string();
            for r in reasons {
                message += &format!("\n  {r}");
            }
            message += "\n  rerun with --trust-but-verify to evaluate it anyway";
            return Err(Failure::rejected(message));
        }
        _ if args.trust_but_verify => {
            let report = trust_but_verify_run(&original, &program, &edb, VerifyPolicy::default(), &opts)?;
            if let Some(n) = &report.oracle_note {
                eprintln!("{n}");
            }
            (report.outcome, report.violations)
        }
        _ => (evaluate(&program, &edb, &opts)?, Vec::new()),
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    write_relation(&mut out, &query, &outcome.model.get(&query), args.format)?;
    out.flush()?;
    if args.stats {
        eprint!("{}", outcome.stats);
    }
    if !violations.is_empty() {
        let lines: Vec<String> = violations.iter().map(|v| format!("violation: {v}")).collect();
        return Err(Failure::rejected(lines.join("\n")));
    }
    Ok(())
}

fn cmd_optimize(args: &ProgramArgs) -> Outcome {
    let prepared = prepare(&load_program(&args.program)?, false)?;
    for w in &prepared.warnings {
        eprintln!("{w}");
    }
    let mut out = io::stdout().lock();
    write!(out, "{}", prepared.program)?;
    if prepared.trace.steps.is_empty() {
        writeln!(out, "% nothing pushed")?;
    } else {
        write!(out, "{}", prepared.trace)?;
    }
    Ok(())
}

fn cmd_check(args: &ProgramArgs) -> Outcome {
    let prepared = prepare(&load_program(&args.program)?, false)?;
    if prepared.verdicts.is_empty() {
        return Err(Failure::input("no final constraint, recursive extremum or recursive count to check"));
    }
    let mut out = io::stdout().lock();
    for (i, v) in prepared.verdicts.iter().enumerate() {
        if i > 0 {
            writeln!(out)?;
        }
        write!(out, "{v}")?;
    }
    out.flush()?;
    if prepared.verdicts.iter().all(PremVerdict::approved) {
        Ok(())
    } else {
        Err(Failure::rejected("constraint rejected"))
    }
}

fn cmd_verify(args: &VerifyArgs) -> Outcome {
    let program = load_program(&args.program)?;
    let cert = certify_recursive_extrema(&program);
    let counts = compile_count_in_recursion(&program);
    let mut cases: Vec<(&Program, Constraint)> = program.constraints.iter().map(|c| (&program, c.constraint.clone())).collect();
    for (shadow, verdicts) in [(&cert.shadow, &cert.verdicts), (&counts.shadow, &counts.verdicts)] {
        for v in verdicts {
            if let Some(c) = v.final_rule.as_deref().and_then(|id| shadow.constraint_of(id)) {
                cases.push((shadow, c.clone()));
            }
        }
    }
    if cases.is_empty() {
        return Err(Failure::input("no constraint to verify"));
    }
    let mut out = io::stdout().lock();
    let mut failed = 0;
    for (i, (p, c)) in cases.iter().enumerate() {
        let report = check_prem_empirical(p, c, args.samples, args.seed);
        if i > 0 {
            writeln!(out)?;
        }
        writeln!(out, "constraint: {c}")?;
        write!(out, "{report}")?;
        if !report.holds() {
            failed += 1;
        }
    }
    out.flush()?;
    if failed > 0 {
        Err(Failure::rejected(format!("{failed} constraint(s) have counterexamples")))
    } else {
        Ok(())
    }
}

fn cmd_bench(args: &BenchArgs) -> Outcome {
    let graph = match args.kind {
        Kind::Dag => GraphSpec::dag(args.nodes, args.p, args.seed),
        Kind::Cyclic => GraphSpec::cyclic(args.nodes, args.p, args.seed),
    };
    let variants = if args.variants.is_empty() {
        Variant::ALL.to_vec()
    } else {
        args.variants
            .iter()
            .map(|n| Variant::from_name(n).ok_or_else(|| Failure::input(format!("unknown variant {n}"))))
            .collect::<Result<_, _>>()?
    };
    let config = BenchConfig {
        graph,
        variants,
        sources: args.sources,
        runs: args.runs,
        max_tuples: args.max_tuples,
        max_iterations: args.max_iterations,
        timing_strict: args.timing_strict,
        ..BenchConfig::default()
    };
    let report = run_benchmark(&config).map_err(Failure::input)?;
    let mut out = io::stdout().lock();
    match args.format {
        Format::Csv => report.write_csv(&mut out).map_err(Failure::input)?,
        Format::Text => write!(out, "{report}")?,
        Format::Jsonl => return Err(Failure::input("bench writes text or csv")),
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Check(a) => cmd_check(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("premdl: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
