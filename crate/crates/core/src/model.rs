//! Abstract syntax of the Datalog dialect and the ground data it ranges over.
//!
//! Everything here is immutable once built and cheap to share across threads.
//! Symbols are interned so that repeated constants share one allocation, but
//! they still compare and order by their text, which keeps sorted output stable.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

/// An interned symbolic constant.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Symbol(Arc<str>);

fn interner() -> &'static Mutex<HashSet<Arc<str>>> {
    static INTERNER: OnceLock<Mutex<HashSet<Arc<str>>>> = OnceLock::new();
    INTERNER.get_or_init(|| Mutex::new(HashSet::new()))
}

impl Symbol {
    pub fn new(text: &str) -> Self {
        let mut table = interner().lock().unwrap_or_else(|e| e.into_inner());
        if let Some(existing) = table.get(text) {
            return Symbol(existing.clone());
        }
        let shared: Arc<str> = Arc::from(text);
        table.insert(shared.clone());
        Symbol(shared)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.as_str())
    }
}

/// A ground value: a 64-bit integer or a symbol.
///
/// Integers order before symbols; symbols order lexicographically.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Int(i64),
    Sym(Symbol),
}

impl Value {
    pub fn sym(text: &str) -> Self {
        Value::Sym(Symbol::new(text))
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            Value::Sym(_) => None,
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::sym(v)
    }
}

/// Words the parser treats specially and therefore cannot appear as bare symbols.
pub(crate) const RESERVED_WORDS: &[&str] = &[
    "not", "is_min", "is_max", "mmin", "mmax", "mcount", "msum", "count", "sum", "min", "max",
];

pub(crate) fn is_bare_symbol(text: &str) -> bool {
    let mut chars = text.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_') && !RESERVED_WORDS.contains(&text)
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Sym(s) if is_bare_symbol(s.as_str()) => f.write_str(s.as_str()),
            Value::Sym(s) => {
                f.write_str("\"")?;
                for c in s.as_str().chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        '\t' => f.write_str("\\t")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
        }
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// A rule variable. Scope is the enclosing rule.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub String);

impl Var {
    pub fn new(name: impl Into<String>) -> Self {
        Var(name.into())
    }

    pub fn name(&self) -> &str {
        &self.0
    }

    /// Parser-generated stand-in for `_`.
    pub fn is_anonymous(&self) -> bool {
        self.0.starts_with('_')
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
        }
    }

    pub fn apply(self, left: i64, right: i64) -> Option<i64> {
        match self {
            ArithOp::Add => left.checked_add(right),
            ArithOp::Sub => left.checked_sub(right),
            ArithOp::Mul => left.checked_mul(right),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
        }
    }

    /// The operator obtained by swapping the operands: `a < b` iff `b > a`.
    pub fn mirrored(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
            other => other,
        }
    }

    pub fn is_ordering(self) -> bool {
        !matches!(self, CmpOp::Eq | CmpOp::Ne)
    }

    pub fn holds(self, ordering: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Lt => ordering == Less,
            CmpOp::Le => ordering != Greater,
            CmpOp::Gt => ordering == Greater,
            CmpOp::Ge => ordering != Less,
            CmpOp::Eq => ordering == Equal,
            CmpOp::Ne => ordering != Equal,
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Term {
    Var(Var),
    Const(Value),
    Arith(ArithOp, Box<Term>, Box<Term>),
}

impl Term {
    pub fn var(name: &str) -> Self {
        Term::Var(Var::new(name))
    }

    pub fn int(v: i64) -> Self {
        Term::Const(Value::Int(v))
    }

    pub fn sym(v: &str) -> Self {
        Term::Const(Value::sym(v))
    }

    pub fn arith(op: ArithOp, left: Term, right: Term) -> Self {
        Term::Arith(op, Box::new(left), Box::new(right))
    }

    pub fn as_var(&self) -> Option<&Var> {
        match self {
            Term::Var(v) => Some(v),
            _ => None,
        }
    }

    pub fn collect_vars<'a>(&'a self, out: &mut Vec<&'a Var>) {
        match self {
            Term::Var(v) => out.push(v),
            Term::Const(_) => {}
            Term::Arith(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }

    pub fn vars(&self) -> Vec<&Var> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    pub fn mentions(&self, var: &Var) -> bool {
        match self {
            Term::Var(v) => v == var,
            Term::Const(_) => false,
            Term::Arith(_, l, r) => l.mentions(var) || r.mentions(var),
        }
    }

    /// Evaluates the term under `binding` with checked arithmetic.
    pub fn eval(&self, binding: &Binding) -> Result<Value, ModelError> {
        match self {
            Term::Var(v) => binding
                .get(v)
                .cloned()
                .ok_or_else(|| ModelError::UnboundVariable(v.clone())),
            Term::Const(c) => Ok(c.clone()),
            Term::Arith(op, l, r) => {
                let lv = l.eval(binding)?;
                let rv = r.eval(binding)?;
                arith(*op, &lv, &rv)
            }
        }
    }

    /// Replaces variables using `map`; unmapped variables are kept.
    pub fn rename(&self, map: &BTreeMap<Var, Term>) -> Term {
        match self {
            Term::Var(v) => map.get(v).cloned().unwrap_or_else(|| self.clone()),
            Term::Const(_) => self.clone(),
            Term::Arith(op, l, r) => Term::arith(*op, l.rename(map), r.rename(map)),
        }
    }
}

pub(crate) fn arith(op: ArithOp, left: &Value, right: &Value) -> Result<Value, ModelError> {
    match (left, right) {
        (Value::Int(a), Value::Int(b)) => op.apply(*a, *b).map(Value::Int).ok_or(ModelError::Overflow {
            op,
            left: *a,
            right: *b,
        }),
        _ => Err(ModelError::TypeMismatch {
            op: op.symbol(),
            left: left.clone(),
            right: right.clone(),
        }),
    }
}

pub(crate) fn compare(op: CmpOp, left: &Value, right: &Value) -> Result<bool, ModelError> {
    if op.is_ordering() {
        match (left, right) {
            (Value::Int(a), Value::Int(b)) => Ok(op.holds(a.cmp(b))),
            _ => Err(ModelError::TypeMismatch {
                op: op.symbol(),
                left: left.clone(),
                right: right.clone(),
            }),
        }
    } else {
        Ok(op.holds(left.cmp(right)))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::Const(c) => write!(f, "{c}"),
            Term::Arith(op, l, r) => {
                let side = |t: &Term, f: &mut fmt::Formatter<'_>| match t {
                    Term::Arith(..) => write!(f, "({t})"),
                    _ => write!(f, "{t}"),
                };
                side(l, f)?;
                write!(f, " {} ", op.symbol())?;
                side(r, f)
            }
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(predicate: impl Into<String>, args: Vec<Term>) -> Self {
        Atom {
            predicate: predicate.into(),
            args,
        }
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    pub fn vars(&self) -> Vec<&Var> {
        let mut out = Vec::new();
        for a in &self.args {
            a.collect_vars(&mut out);
        }
        out
    }

    pub fn is_ground(&self) -> bool {
        self.vars().is_empty()
    }

    /// The argument values of a ground atom.
    pub fn ground_tuple(&self) -> Option<Tuple> {
        self.args
            .iter()
            .map(|t| t.eval(&Binding::new()).ok())
            .collect()
    }

    pub fn rename(&self, map: &BTreeMap<Var, Term>) -> Atom {
        Atom::new(self.predicate.clone(), self.args.iter().map(|t| t.rename(map)).collect())
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.predicate)?;
        if self.args.is_empty() {
            return Ok(());
        }
        f.write_str("(")?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Comparison {
    pub op: CmpOp,
    pub left: Term,
    pub right: Term,
}

impl Comparison {
    pub fn new(op: CmpOp, left: Term, right: Term) -> Self {
        Comparison { op, left, right }
    }

    pub fn vars(&self) -> Vec<&Var> {
        let mut out = self.left.vars();
        self.right.collect_vars(&mut out);
        out
    }

    pub fn rename(&self, map: &BTreeMap<Var, Term>) -> Comparison {
        Comparison::new(self.op, self.left.rename(map), self.right.rename(map))
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.left, self.op.symbol(), self.right)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AggregateKind {
    IsMin,
    IsMax,
    /// Monotonic min: keeps every strictly improving value.
    MMin,
    /// Monotonic max: keeps every strictly improving value.
    MMax,
    MCount,
    MSum,
    Count,
    Sum,
}

impl AggregateKind {
    pub fn keyword(self) -> &'static str {
        match self {
            AggregateKind::IsMin => "is_min",
            AggregateKind::IsMax => "is_max",
            AggregateKind::MMin => "mmin",
            AggregateKind::MMax => "mmax",
            AggregateKind::MCount => "mcount",
            AggregateKind::MSum => "msum",
            AggregateKind::Count => "count",
            AggregateKind::Sum => "sum",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Self> {
        Some(match word {
            "is_min" => AggregateKind::IsMin,
            "is_max" => AggregateKind::IsMax,
            "mmin" => AggregateKind::MMin,
            "mmax" => AggregateKind::MMax,
            "mcount" => AggregateKind::MCount,
            "msum" => AggregateKind::MSum,
            "count" => AggregateKind::Count,
            "sum" => AggregateKind::Sum,
            _ => return None,
        })
    }

    /// Extremum selectors take no result variable.
    pub fn is_extremum(self) -> bool {
        matches!(
            self,
            AggregateKind::IsMin | AggregateKind::IsMax | AggregateKind::MMin | AggregateKind::MMax
        )
    }

    pub fn is_counting(self) -> bool {
        !self.is_extremum()
    }

    pub fn is_summing(self) -> bool {
        matches!(self, AggregateKind::MSum | AggregateKind::Sum)
    }

    /// mcount and msum may sit inside recursion without a PreM argument.
    pub fn is_monotonic(self) -> bool {
        matches!(self, AggregateKind::MCount | AggregateKind::MSum)
    }

    /// mmin and mmax keep every improving value instead of only the best one.
    pub fn is_monotone_extremum(self) -> bool {
        matches!(self, AggregateKind::MMin | AggregateKind::MMax)
    }

    pub fn extremum_kind(self) -> Option<ExtremumKind> {
        match self {
            AggregateKind::IsMin | AggregateKind::MMin => Some(ExtremumKind::Min),
            AggregateKind::IsMax | AggregateKind::MMax => Some(ExtremumKind::Max),
            _ => None,
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct AggregateGoal {
    pub kind: AggregateKind,
    pub group_by: Vec<Var>,
    /// For sums the last variable is the summed quantity.
    pub measured: Vec<Var>,
    pub result: Option<Var>,
}

impl AggregateGoal {
    pub fn vars(&self) -> Vec<&Var> {
        self.group_by
            .iter()
            .chain(self.measured.iter())
            .chain(self.result.iter())
            .collect()
    }

    pub fn summand(&self) -> Option<&Var> {
        if self.kind.is_summing() {
            self.measured.last()
        } else {
            None
        }
    }

    pub fn rename(&self, map: &BTreeMap<Var, Term>) -> AggregateGoal {
        let rv = |v: &Var| match map.get(v) {
            Some(Term::Var(w)) => w.clone(),
            _ => v.clone(),
        };
        AggregateGoal {
            kind: self.kind,
            group_by: self.group_by.iter().map(rv).collect(),
            measured: self.measured.iter().map(rv).collect(),
            result: self.result.as_ref().map(rv),
        }
    }
}

impl fmt::Display for AggregateGoal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |vs: &[Var]| vs.iter().map(|v| v.0.as_str()).collect::<Vec<_>>().join(", ");
        write!(
            f,
            "{}(({}), ({})",
            self.kind.keyword(),
            list(&self.group_by),
            list(&self.measured)
        )?;
        if let Some(r) = &self.result {
            write!(f, ", {r}")?;
        }
        f.write_str(")")
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Goal {
    Regular(Atom),
    Comparison(Comparison),
    Negated(Atom),
    Aggregate(AggregateGoal),
}

impl Goal {
    pub fn vars(&self) -> Vec<&Var> {
        match self {
            Goal::Regular(a) | Goal::Negated(a) => a.vars(),
            Goal::Comparison(c) => c.vars(),
            Goal::Aggregate(g) => g.vars(),
        }
    }

    pub fn as_regular(&self) -> Option<&Atom> {
        match self {
            Goal::Regular(a) => Some(a),
            _ => None,
        }
    }

    pub fn rename(&self, map: &BTreeMap<Var, Term>) -> Goal {
        match self {
            Goal::Regular(a) => Goal::Regular(a.rename(map)),
            Goal::Negated(a) => Goal::Negated(a.rename(map)),
            Goal::Comparison(c) => Goal::Comparison(c.rename(map)),
            Goal::Aggregate(g) => Goal::Aggregate(g.rename(map)),
        }
    }
}

impl fmt::Display for Goal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Goal::Regular(a) => write!(f, "{a}"),
            Goal::Comparison(c) => write!(f, "{c}"),
            Goal::Negated(a) => write!(f, "!{a}"),
            Goal::Aggregate(g) => write!(f, "{g}"),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Rule {
    pub id: String,
    pub head: Atom,
    pub body: Vec<Goal>,
}

impl Rule {
    pub fn new(id: impl Into<String>, head: Atom, body: Vec<Goal>) -> Self {
        Rule {
            id: id.into(),
            head,
            body,
        }
    }

    pub fn regular_goals(&self) -> impl Iterator<Item = &Atom> {
        self.body.iter().filter_map(Goal::as_regular)
    }

    pub fn aggregates(&self) -> impl Iterator<Item = &AggregateGoal> {
        self.body.iter().filter_map(|g| match g {
            Goal::Aggregate(a) => Some(a),
            _ => None,
        })
    }

    pub fn comparisons(&self) -> impl Iterator<Item = &Comparison> {
        self.body.iter().filter_map(|g| match g {
            Goal::Comparison(c) => Some(c),
            _ => None,
        })
    }

    /// Every variable of the rule, in first-occurrence order (head first).
    pub fn vars(&self) -> Vec<Var> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for v in self.head.vars().into_iter().chain(self.body.iter().flat_map(|g| g.vars())) {
            if seen.insert(v.clone()) {
                out.push(v.clone());
            }
        }
        out
    }

    pub fn rename(&self, map: &BTreeMap<Var, Term>) -> Rule {
        Rule::new(
            self.id.clone(),
            self.head.rename(map),
            self.body.iter().map(|g| g.rename(map)).collect(),
        )
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.id, self.head)?;
        if !self.body.is_empty() {
            f.write_str(" :- ")?;
            for (i, g) in self.body.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{g}")?;
            }
        }
        f.write_str(".")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExtremumKind {
    Min,
    Max,
}

impl ExtremumKind {
    /// Whether `candidate` strictly beats `incumbent`.
    pub fn improves(self, candidate: &Value, incumbent: &Value) -> bool {
        match self {
            ExtremumKind::Min => candidate < incumbent,
            ExtremumKind::Max => candidate > incumbent,
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            ExtremumKind::Min => "is_min",
            ExtremumKind::Max => "is_max",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundKind {
    Upper,
    Lower,
}

/// Per-group extremum over one argument of a predicate. Positions are 0-based.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Extremum {
    pub kind: ExtremumKind,
    pub predicate: String,
    pub group_by: Vec<usize>,
    pub cost: usize,
}

impl Extremum {
    pub fn group_key(&self, tuple: &[Value]) -> Vec<Value> {
        self.group_by.iter().map(|&i| tuple[i].clone()).collect()
    }
}

/// `tuple[cost] op limit` with `op` one of `<`, `<=`, `>`, `>=`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bound {
    pub kind: BoundKind,
    pub predicate: String,
    pub cost: usize,
    pub op: CmpOp,
    pub limit: Value,
}

impl Bound {
    pub fn new(predicate: impl Into<String>, cost: usize, op: CmpOp, limit: Value) -> Option<Self> {
        let kind = match op {
            CmpOp::Lt | CmpOp::Le => BoundKind::Upper,
            CmpOp::Gt | CmpOp::Ge => BoundKind::Lower,
            _ => return None,
        };
        Some(Bound {
            kind,
            predicate: predicate.into(),
            cost,
            op,
            limit,
        })
    }

    pub fn admits(&self, tuple: &[Value]) -> bool {
        compare(self.op, &tuple[self.cost], &self.limit).unwrap_or(false)
    }
}

/// A pruning condition taken from a final rule.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Constraint {
    Extremum(Extremum),
    Bound(Bound),
    /// Bounds first, then at most one extremum; all on the same predicate.
    Conjunction(Vec<Constraint>),
}

impl Constraint {
    /// Builds a constraint from conjuncts, placing bounds ahead of extrema.
    pub fn conjunction(mut parts: Vec<Constraint>) -> Constraint {
        let mut flat = Vec::new();
        for p in parts.drain(..) {
            match p {
                Constraint::Conjunction(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        flat.sort_by_key(|c| matches!(c, Constraint::Extremum(_)));
        if flat.len() == 1 {
            flat.pop().unwrap()
        } else {
            Constraint::Conjunction(flat)
        }
    }

    pub fn predicate(&self) -> &str {
        match self {
            Constraint::Extremum(e) => &e.predicate,
            Constraint::Bound(b) => &b.predicate,
            Constraint::Conjunction(cs) => cs.first().map(|c| c.predicate()).unwrap_or(""),
        }
    }

    pub fn conjuncts(&self) -> Vec<&Constraint> {
        match self {
            Constraint::Conjunction(cs) => cs.iter().flat_map(|c| c.conjuncts()).collect(),
            other => vec![other],
        }
    }

    pub fn cost_positions(&self) -> BTreeSet<usize> {
        self.conjuncts()
            .into_iter()
            .filter_map(|c| match c {
                Constraint::Extremum(e) => Some(e.cost),
                Constraint::Bound(b) => Some(b.cost),
                Constraint::Conjunction(_) => None,
            })
            .collect()
    }

    pub fn extremum(&self) -> Option<&Extremum> {
        self.conjuncts().into_iter().find_map(|c| match c {
            Constraint::Extremum(e) => Some(e),
            _ => None,
        })
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::Extremum(e) => {
                let group: Vec<String> = e.group_by.iter().map(|i| (i + 1).to_string()).collect();
                write!(
                    f,
                    "{} on {} (group [{}], cost {})",
                    e.kind.keyword(),
                    e.predicate,
                    group.join(","),
                    e.cost + 1
                )
            }
            Constraint::Bound(b) => write!(
                f,
                "{}[{}] {} {}",
                b.predicate,
                b.cost + 1,
                b.op.symbol(),
                b.limit
            ),
            Constraint::Conjunction(cs) => {
                for (i, c) in cs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" and ")?;
                    }
                    write!(f, "{c}")?;
                }
                Ok(())
            }
        }
    }
}

/// A constraint found in a final rule, together with the rule that carries it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FinalConstraint {
    pub rule_id: String,
    pub constraint: Constraint,
}

pub type Tuple = Vec<Value>;

/// A duplicate-free set of tuples of one predicate.
#[derive(Clone, Default, PartialEq, Eq, Hash, Debug)]
pub struct Relation {
    tuples: BTreeSet<Tuple>,
}

impl Relation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, tuple: Tuple) -> bool {
        self.tuples.insert(tuple)
    }

    pub fn remove(&mut self, tuple: &[Value]) -> bool {
        self.tuples.remove(tuple)
    }

    pub fn contains(&self, tuple: &[Value]) -> bool {
        self.tuples.contains(tuple)
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tuple> {
        self.tuples.iter()
    }
}

impl FromIterator<Tuple> for Relation {
    fn from_iter<I: IntoIterator<Item = Tuple>>(iter: I) -> Self {
        Relation {
            tuples: iter.into_iter().collect(),
        }
    }
}

impl IntoIterator for Relation {
    type Item = Tuple;
    type IntoIter = std::collections::btree_set::IntoIter<Tuple>;
    fn into_iter(self) -> Self::IntoIter {
        self.tuples.into_iter()
    }
}

/// Map from predicate to relation. Empty relations are not stored, so two
/// interpretations holding the same tuples always compare equal.
#[derive(Clone, Default, PartialEq, Eq, Hash, Debug)]
pub struct Interpretation {
    relations: BTreeMap<String, Relation>,
}

impl Interpretation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, predicate: &str, tuple: Tuple) -> bool {
        match self.relations.get_mut(predicate) {
            Some(r) => r.insert(tuple),
            None => {
                self.relations.insert(predicate.to_string(), std::iter::once(tuple).collect());
                true
            }
        }
    }

    pub fn remove(&mut self, predicate: &str, tuple: &[Value]) -> bool {
        let Some(rel) = self.relations.get_mut(predicate) else {
            return false;
        };
        let removed = rel.remove(tuple);
        if rel.is_empty() {
            self.relations.remove(predicate);
        }
        removed
    }

    pub fn contains(&self, predicate: &str, tuple: &[Value]) -> bool {
        self.relations.get(predicate).is_some_and(|r| r.contains(tuple))
    }

    pub fn relation(&self, predicate: &str) -> Option<&Relation> {
        self.relations.get(predicate)
    }

    /// The relation for `predicate`, empty if absent.
    pub fn get(&self, predicate: &str) -> Relation {
        self.relations.get(predicate).cloned().unwrap_or_default()
    }

    pub fn set(&mut self, predicate: &str, relation: Relation) {
        if relation.is_empty() {
            self.relations.remove(predicate);
        } else {
            self.relations.insert(predicate.to_string(), relation);
        }
    }

    pub fn predicates(&self) -> impl Iterator<Item = &str> {
        self.relations.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Relation)> {
        self.relations.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.relations.values().map(Relation::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn extend(&mut self, other: &Interpretation) {
        for (p, rel) in other.iter() {
            for t in rel.iter() {
                self.insert(p, t.clone());
            }
        }
    }

    /// Keeps only the listed predicates.
    pub fn restrict<'a>(&self, predicates: impl IntoIterator<Item = &'a str>) -> Interpretation {
        let keep: BTreeSet<&str> = predicates.into_iter().collect();
        Interpretation {
            relations: self
                .relations
                .iter()
                .filter(|(k, _)| keep.contains(k.as_str()))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Every ground atom, sorted by predicate then tuple.
    pub fn atoms(&self) -> Vec<Atom> {
        self.iter()
            .flat_map(|(p, rel)| {
                rel.iter()
                    .map(move |t| Atom::new(p, t.iter().cloned().map(Term::Const).collect()))
            })
            .collect()
    }
}

impl fmt::Display for Interpretation {
    /// One fact per line in fact-file syntax.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for atom in self.atoms() {
            writeln!(f, "{atom}.")?;
        }
        Ok(())
    }
}

/// A parsed program: rules, ground facts and derived metadata.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Program {
    pub rules: Vec<Rule>,
    pub facts: Vec<Atom>,
    /// Constraints carried by final rules, split out at parse time.
    pub constraints: Vec<FinalConstraint>,
    /// Predicates whose in-recursion extrema or count/sum goals passed a PreM check.
    pub approved: BTreeSet<String>,
}

impl Program {
    pub fn rule(&self, id: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }

    pub fn rules_for<'a>(&'a self, predicate: &'a str) -> impl Iterator<Item = &'a Rule> + 'a {
        self.rules.iter().filter(move |r| r.head.predicate == predicate)
    }

    /// Predicates defined by at least one rule.
    pub fn idb_predicates(&self) -> BTreeSet<&str> {
        self.rules.iter().map(|r| r.head.predicate.as_str()).collect()
    }

    /// Every predicate with its arity, from heads, bodies and facts.
    pub fn arities(&self) -> BTreeMap<&str, usize> {
        let mut out = BTreeMap::new();
        for f in &self.facts {
            out.entry(f.predicate.as_str()).or_insert(f.arity());
        }
        for r in &self.rules {
            out.entry(r.head.predicate.as_str()).or_insert(r.head.arity());
            for g in &r.body {
                if let Goal::Regular(a) | Goal::Negated(a) = g {
                    out.entry(a.predicate.as_str()).or_insert(a.arity());
                }
            }
        }
        out
    }

    pub fn facts_interpretation(&self) -> Interpretation {
        let mut out = Interpretation::new();
        for f in &self.facts {
            if let Some(t) = f.ground_tuple() {
                out.insert(&f.predicate, t);
            }
        }
        out
    }

    /// All constants mentioned in rules and facts.
    pub fn constants(&self) -> BTreeSet<Value> {
        fn walk(t: &Term, out: &mut BTreeSet<Value>) {
            match t {
                Term::Const(c) => {
                    out.insert(c.clone());
                }
                Term::Var(_) => {}
                Term::Arith(_, l, r) => {
                    walk(l, out);
                    walk(r, out);
                }
            }
        }
        let mut out = BTreeSet::new();
        for f in &self.facts {
            f.args.iter().for_each(|t| walk(t, &mut out));
        }
        for r in &self.rules {
            r.head.args.iter().for_each(|t| walk(t, &mut out));
            for g in &r.body {
                match g {
                    Goal::Regular(a) | Goal::Negated(a) => a.args.iter().for_each(|t| walk(t, &mut out)),
                    Goal::Comparison(c) => {
                        walk(&c.left, &mut out);
                        walk(&c.right, &mut out);
                    }
                    Goal::Aggregate(_) => {}
                }
            }
        }
        out
    }

    /// The final-rule constraint attached to `rule_id`, if any.
    pub fn constraint_of(&self, rule_id: &str) -> Option<&Constraint> {
        self.constraints
            .iter()
            .find(|c| c.rule_id == rule_id)
            .map(|c| &c.constraint)
    }

    /// Marks the in-recursion constructs of `predicate` as cleared for execution.
    pub fn approve(&mut self, predicate: &str) {
        self.approved.insert(predicate.to_string());
    }
}

impl fmt::Display for Program {
    /// Renders the program in the `.dl` surface syntax: facts, then rules.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for fact in &self.facts {
            writeln!(f, "{fact}.")?;
        }
        for rule in &self.rules {
            writeln!(f, "{rule}")?;
        }
        Ok(())
    }
}

/// Variable assignment used by [`substitute`] and [`eval_interpreted`].
pub type Binding = BTreeMap<Var, Value>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("unbound variable {0}")]
    UnboundVariable(Var),
    #[error("integer overflow evaluating {left} {} {right}", op.symbol())]
    Overflow { op: ArithOp, left: i64, right: i64 },
    #[error("type mismatch: cannot apply `{op}` to {left} and {right}")]
    TypeMismatch {
        op: &'static str,
        left: Value,
        right: Value,
    },
}

/// Grounds `atom` under `binding`.
pub fn substitute(atom: &Atom, binding: &Binding) -> Result<Atom, ModelError> {
    let args = atom
        .args
        .iter()
        .map(|t| t.eval(binding).map(Term::Const))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Atom::new(atom.predicate.clone(), args))
}

/// Outcome of an interpreted goal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Interpreted {
    Holds(bool),
    /// An equality used as an assignment: the binding extended by one variable.
    Assigned(Binding),
}

/// Evaluates a comparison goal. An equality whose one side is a lone unbound
/// variable and whose other side is ground acts as an assignment.
pub fn eval_interpreted(goal: &Comparison, binding: &Binding) -> Result<Interpreted, ModelError> {
    if goal.op == CmpOp::Eq {
        let unbound = |t: &Term| matches!(t, Term::Var(v) if !binding.contains_key(v));
        let assign = match (unbound(&goal.left), unbound(&goal.right)) {
            (true, false) => Some((&goal.left, &goal.right)),
            (false, true) => Some((&goal.right, &goal.left)),
            _ => None,
        };
        if let Some((Term::Var(target), expr)) = assign {
            let value = expr.eval(binding)?;
            let mut extended = binding.clone();
            extended.insert(target.clone(), value);
            return Ok(Interpreted::Assigned(extended));
        }
    }
    let l = goal.left.eval(binding)?;
    let r = goal.right.eval(binding)?;
    compare(goal.op, &l, &r).map(Interpreted::Holds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binding(pairs: &[(&str, Value)]) -> Binding {
        pairs.iter().map(|(k, v)| (Var::new(*k), v.clone())).collect()
    }

    #[test]
    fn substitute_replaces_variables() {
        let atom = Atom::new("path", vec![Term::var("Y"), Term::var("Dy")]);
        let b = binding(&[("Y", Value::sym("b")), ("Dy", Value::Int(3))]);
        assert_eq!(substitute(&atom, &b).unwrap().to_string(), "path(b, 3)");
    }

    #[test]
    fn substitute_keeps_constants() {
        let atom = Atom::new("arc", vec![Term::sym("a"), Term::var("Y"), Term::var("Dy")]);
        let b = binding(&[("Y", Value::sym("c")), ("Dy", Value::Int(7))]);
        assert_eq!(substitute(&atom, &b).unwrap().to_string(), "arc(a, c, 7)");
    }

    #[test]
    fn substitute_reports_missing_binding() {
        let atom = Atom::new("path", vec![Term::var("Y"), Term::var("Dy")]);
        let b = binding(&[("Y", Value::sym("b"))]);
        assert_eq!(
            substitute(&atom, &b),
            Err(ModelError::UnboundVariable(Var::new("Dy")))
        );
    }

    fn sum_goal() -> Comparison {
        Comparison::new(
            CmpOp::Eq,
            Term::var("Dy"),
            Term::arith(ArithOp::Add, Term::var("Dx"), Term::var("Dxy")),
        )
    }

    #[test]
    fn equality_assigns_unbound_side() {
        let b = binding(&[("Dx", Value::Int(2)), ("Dxy", Value::Int(5))]);
        match eval_interpreted(&sum_goal(), &b).unwrap() {
            Interpreted::Assigned(ext) => assert_eq!(ext[&Var::new("Dy")], Value::Int(7)),
            other => panic!("expected assignment, got {other:?}"),
        }
    }

    #[test]
    fn comparison_on_negative_value() {
        let goal = Comparison::new(CmpOp::Ge, Term::var("Dxy"), Term::int(0));
        let b = binding(&[("Dxy", Value::Int(-1))]);
        assert_eq!(eval_interpreted(&goal, &b).unwrap(), Interpreted::Holds(false));
    }

    #[test]
    fn checked_overflow() {
        let b = binding(&[("Dx", Value::Int(i64::MAX)), ("Dxy", Value::Int(1))]);
        assert!(matches!(
            eval_interpreted(&sum_goal(), &b),
            Err(ModelError::Overflow { .. })
        ));
    }

    #[test]
    fn ordering_on_symbol_is_type_error() {
        let goal = Comparison::new(CmpOp::Lt, Term::var("X"), Term::int(3));
        let b = binding(&[("X", Value::sym("a"))]);
        assert!(matches!(
            eval_interpreted(&goal, &b),
            Err(ModelError::TypeMismatch { .. })
        ));
    }

    #[test]
    fn relation_has_set_semantics() {
        let mut r = Relation::new();
        assert!(r.insert(vec![Value::Int(1)]));
        assert!(!r.insert(vec![Value::Int(1)]));
        assert_eq!(r.len(), 1);
    }

    #[test]
    fn symbols_are_interned() {
        let a = Symbol::new("shared");
        let b = Symbol::new("shared");
        assert!(Arc::ptr_eq(&a.0, &b.0));
    }

    #[test]
    fn conjunction_orders_bounds_first() {
        let ext = Constraint::Extremum(Extremum {
            kind: ExtremumKind::Max,
            predicate: "path".into(),
            group_by: vec![0],
            cost: 1,
        });
        let bound = Constraint::Bound(Bound::new("path", 1, CmpOp::Lt, Value::Int(143)).unwrap());
        let c = Constraint::conjunction(vec![ext.clone(), bound.clone()]);
        assert_eq!(c, Constraint::Conjunction(vec![bound, ext]));
    }

    #[test]
    fn quoted_symbols_render_escaped() {
        assert_eq!(Value::sym("Hello world").to_string(), "\"Hello world\"");
        assert_eq!(Value::sym("count").to_string(), "\"count\"");
        assert_eq!(Value::sym("bolt").to_string(), "bolt");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn value() -> impl Strategy<Value = Value> {
            prop_oneof![
                (-50i64..50).prop_map(Value::Int),
                "[a-c]".prop_map(|s| Value::sym(&s)),
            ]
        }

        proptest! {
            #[test]
            fn substitution_is_idempotent(vals in proptest::collection::vec(value(), 3)) {
                let atom = Atom::new("p", vec![Term::var("A"), Term::sym("k"), Term::var("B"), Term::var("C")]);
                let b = binding(&[("A", vals[0].clone()), ("B", vals[1].clone()), ("C", vals[2].clone())]);
                let once = substitute(&atom, &b).unwrap();
                prop_assert_eq!(substitute(&once, &b).unwrap(), once);
            }

            #[test]
            fn interpreted_goals_are_deterministic(x in -100i64..100, y in -100i64..100) {
                let goal = Comparison::new(CmpOp::Le, Term::arith(ArithOp::Mul, Term::var("X"), Term::int(3)), Term::var("Y"));
                let b = binding(&[("X", Value::Int(x)), ("Y", Value::Int(y))]);
                prop_assert_eq!(eval_interpreted(&goal, &b), eval_interpreted(&goal, &b));
            }
        }
    }
}
