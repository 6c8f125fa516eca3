//! Surface syntax: `.dl` programs, fact files and edge lists.
//!
//! ```text
//! % shortest path from a
//! path(Y, Dy) :- arc(a, Y, Dy), Dy >= 0, is_min((Y), (Dy)).
//! r2: path(Y, Dy) :- path(X, Dx), arc(X, Y, Dxy), Dy = Dx + Dxy, is_min((Y), (Dy)).
//! spath(Y, min<Dy>) :- path(Y, Dy).
//! ```
//!
//! Head annotations such as `min<Dy>` are sugar for an extremum goal grouped by
//! the remaining head variables. Arithmetic inside atom arguments is moved into
//! an equality goal on a fresh variable.

mod facts;
mod lexer;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

pub use facts::{load_edge_list, load_facts, parse_edge_list, parse_facts, EdgeFormat, LoadError};
use lexer::{Tok, Token};

use crate::analysis;
use crate::model::{
    AggregateGoal, AggregateKind, ArithOp, Atom, Bound, CmpOp, Comparison, Constraint, Extremum, Goal, Program,
    Rule, Term, Value, Var,
};

/// Program text together with where it came from (used in diagnostics).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceProgram {
    pub text: String,
    pub origin: String,
}

impl SourceProgram {
    pub fn inline(text: impl Into<String>) -> Self {
        SourceProgram {
            text: text.into(),
            origin: "<inline>".into(),
        }
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, LoadError> {
        let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(SourceProgram {
            text,
            origin: path.display().to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{origin}:{line}:{col}: {message}")]
    Syntax {
        origin: String,
        line: usize,
        col: usize,
        message: String,
    },
    #[error("{origin}:{line}:{col}: malformed aggregate: {message}")]
    MalformedAggregate {
        origin: String,
        line: usize,
        col: usize,
        message: String,
    },
    #[error("{origin}:{line}:{col}: {kind} requires a result variable")]
    MissingResult {
        origin: String,
        line: usize,
        col: usize,
        kind: &'static str,
    },
    #[error("predicate {predicate} is used with arity {first} and with arity {second}")]
    ArityConflict {
        predicate: String,
        first: usize,
        second: usize,
    },
    #[error("rule {rule} is unsafe: {message}")]
    Safety { rule: String, message: String },
    #[error("rule {rule}: {message}")]
    Constraint { rule: String, message: String },
}

/// Parses a whole program.
pub fn parse_program(source: &SourceProgram) -> Result<Program, ParseError> {
    let tokens = lexer::tokenize(&source.text, &source.origin)?;
    let mut p = Parser::new(tokens, &source.origin);
    let mut program = Program::default();
    let mut labels = BTreeSet::new();
    while p.peek() != &Tok::Eof {
        match p.clause(program.rules.len() + 1)? {
            Clause::Fact(atom) => program.facts.push(atom),
            Clause::Rule(rule) => {
                if !labels.insert(rule.id.clone()) {
                    return Err(ParseError::Constraint {
                        rule: rule.id.clone(),
                        message: "duplicate rule label".into(),
                    });
                }
                program.rules.push(rule);
            }
        }
    }
    finish_program(program)
}

/// Shorthand for parsing inline text.
pub fn parse_str(text: &str) -> Result<Program, ParseError> {
    parse_program(&SourceProgram::inline(text))
}

/// Validates a program assembled in memory and recomputes its final-rule
/// constraints. Parsing ends here too.
pub fn finish_program(mut program: Program) -> Result<Program, ParseError> {
    check_arities(&program)?;
    for rule in &program.rules {
        crate::schedule::schedule(rule, false).map_err(|message| ParseError::Safety {
            rule: rule.id.clone(),
            message,
        })?;
    }
    analysis::predicate_constraints(&program).map_err(|(rule, message)| ParseError::Constraint { rule, message })?;
    program.constraints = analysis::extract_final_constraints(&program);
    Ok(program)
}

fn check_arities(program: &Program) -> Result<(), ParseError> {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut check = |atom: &Atom| -> Result<(), ParseError> {
        match seen.get(atom.predicate.as_str()) {
            Some(&a) if a != atom.arity() => Err(ParseError::ArityConflict {
                predicate: atom.predicate.clone(),
                first: a,
                second: atom.arity(),
            }),
            Some(_) => Ok(()),
            None => {
                seen.insert(atom.predicate.clone(), atom.arity());
                Ok(())
            }
        }
    };
    for f in &program.facts {
        check(f)?;
    }
    for r in &program.rules {
        check(&r.head)?;
        for g in &r.body {
            if let Goal::Regular(a) | Goal::Negated(a) = g {
                check(a)?;
            }
        }
    }
    Ok(())
}

/// Result of [`parse_constraint_goal`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConstraintGoal {
    Aggregate(AggregateGoal),
    Constraint(Constraint),
}

/// Parses a single aggregate or comparison goal in the context of `rule`.
///
/// An extremum or a variable-versus-constant bound over the rule's only regular
/// goal becomes a [`Constraint`] on that goal's predicate; counting aggregates
/// stay aggregate goals.
pub fn parse_constraint_goal(text: &str, rule: &Rule) -> Result<ConstraintGoal, ParseError> {
    let origin = "<goal>";
    let tokens = lexer::tokenize(text, origin)?;
    let mut p = Parser::new(tokens, origin);
    let start = p.here();
    let goal = p.body_goal()?;
    if p.peek() != &Tok::Eof {
        return Err(p.unexpected("end of goal"));
    }
    let atoms: Vec<&Atom> = rule.regular_goals().collect();
    let position = |v: &Var| -> Option<(String, usize)> {
        let atom = match atoms.as_slice() {
            [only] => *only,
            _ => return None,
        };
        atom.args
            .iter()
            .position(|a| a.as_var() == Some(v))
            .map(|i| (atom.predicate.clone(), i))
    };
    match goal {
        RawGoal::Aggregate(g) if g.kind.is_extremum() => {
            let kind = g.kind.extremum_kind().expect("extremum kind");
            let (predicate, cost) = position(&g.measured[0]).ok_or_else(|| start.malformed(
                origin,
                format!("cost variable {} is not an argument of the rule's single regular goal", g.measured[0]),
            ))?;
            let group_by = g
                .group_by
                .iter()
                .map(|v| position(v).map(|(_, i)| i))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| start.malformed(origin, "group-by variable is not an argument of the regular goal".into()))?;
            Ok(ConstraintGoal::Constraint(Constraint::Extremum(Extremum {
                kind,
                predicate,
                group_by,
                cost,
            })))
        }
        RawGoal::Aggregate(g) => Ok(ConstraintGoal::Aggregate(g)),
        RawGoal::Comparison(c) => {
            let bound = match (&c.left, &c.right) {
                (Term::Var(v), Term::Const(k)) => position(v).and_then(|(p, i)| Bound::new(p, i, c.op, k.clone())),
                (Term::Const(k), Term::Var(v)) => {
                    position(v).and_then(|(p, i)| Bound::new(p, i, c.op.mirrored(), k.clone()))
                }
                _ => None,
            };
            bound.map(|b| ConstraintGoal::Constraint(Constraint::Bound(b))).ok_or_else(|| ParseError::Syntax {
                origin: origin.into(),
                line: start.line,
                col: start.col,
                message: "expected a bound on an argument of the rule's single regular goal".into(),
            })
        }
        _ => Err(ParseError::Syntax {
            origin: origin.into(),
            line: start.line,
            col: start.col,
            message: "expected an aggregate or comparison goal".into(),
        }),
    }
}

enum Clause {
    Fact(Atom),
    Rule(Rule),
}

enum HeadArg {
    Term(Term),
    Annotated(AggregateKind, Var),
}

enum RawGoal {
    Regular(Atom),
    Negated(Atom),
    Comparison(Comparison),
    Aggregate(AggregateGoal),
}

#[derive(Clone, Copy)]
struct Pos {
    line: usize,
    col: usize,
}

impl Pos {
    fn malformed(self, origin: &str, message: String) -> ParseError {
        ParseError::MalformedAggregate {
            origin: origin.into(),
            line: self.line,
            col: self.col,
            message,
        }
    }
}

struct Parser<'o> {
    tokens: Vec<Token>,
    pos: usize,
    origin: &'o str,
    fresh: usize,
}

impl<'o> Parser<'o> {
    fn new(tokens: Vec<Token>, origin: &'o str) -> Self {
        Parser {
            tokens,
            pos: 0,
            origin,
            fresh: 0,
        }
    }

    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn here(&self) -> Pos {
        let t = &self.tokens[self.pos];
        Pos { line: t.line, col: t.col }
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.pos].tok.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        let t = &self.tokens[self.pos];
        ParseError::Syntax {
            origin: self.origin.into(),
            line: t.line,
            col: t.col,
            message: format!("expected {expected}, found {}", t.tok.describe()),
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(what))
        }
    }

    fn fresh_var(&mut self, prefix: &str, taken: &BTreeSet<String>) -> Var {
        loop {
            self.fresh += 1;
            let name = format!("{prefix}{}", self.fresh);
            if !taken.contains(&name) {
                return Var(name);
            }
        }
    }

    fn clause(&mut self, next_rule: usize) -> Result<Clause, ParseError> {
        self.fresh = 0;
        let label = match (self.peek().clone(), self.peek_at(1)) {
            (Tok::Ident(name), Tok::Colon) => {
                self.bump();
                self.bump();
                Some(name)
            }
            _ => None,
        };
        let head_pos = self.here();
        let (predicate, head_args) = self.head()?;
        let mut body = Vec::new();
        match self.peek() {
            Tok::Dot => {
                self.bump();
            }
            Tok::If => {
                self.bump();
                loop {
                    body.push(self.body_goal()?);
                    match self.peek() {
                        Tok::Comma => {
                            self.bump();
                        }
                        Tok::Dot => {
                            self.bump();
                            break;
                        }
                        _ => return Err(self.unexpected("`,` or `.`")),
                    }
                }
            }
            _ => return Err(self.unexpected("`:-` or `.`")),
        }
        let id = label.unwrap_or_else(|| format!("r{next_rule}"));
        let has_annotation = head_args.iter().any(|a| matches!(a, HeadArg::Annotated(..)));
        if body.is_empty() && !has_annotation {
            let terms: Vec<Term> = head_args
                .into_iter()
                .map(|a| match a {
                    HeadArg::Term(t) => t,
                    HeadArg::Annotated(..) => unreachable!(),
                })
                .collect();
            let atom = Atom::new(predicate, terms);
            if let Some(tuple) = atom.ground_tuple() {
                return Ok(Clause::Fact(Atom::new(
                    atom.predicate,
                    tuple.into_iter().map(Term::Const).collect(),
                )));
            }
            if atom.is_ground() {
                return Err(ParseError::Syntax {
                    origin: self.origin.into(),
                    line: head_pos.line,
                    col: head_pos.col,
                    message: "fact argument does not evaluate to a constant".into(),
                });
            }
            return Err(ParseError::Safety {
                rule: id,
                message: format!("fact {atom} contains variables"),
            });
        }
        self.build_rule(id, predicate, head_args, body, head_pos)
    }

    fn build_rule(
        &mut self,
        id: String,
        predicate: String,
        head_args: Vec<HeadArg>,
        raw_body: Vec<RawGoal>,
        head_pos: Pos,
    ) -> Result<Clause, ParseError> {
        let mut taken: BTreeSet<String> = BTreeSet::new();
        let note = |t: &Term, taken: &mut BTreeSet<String>| {
            for v in t.vars() {
                taken.insert(v.0.clone());
            }
        };
        for a in &head_args {
            match a {
                HeadArg::Term(t) => note(t, &mut taken),
                HeadArg::Annotated(_, v) => {
                    taken.insert(v.0.clone());
                }
            }
        }
        for g in &raw_body {
            match g {
                RawGoal::Regular(a) | RawGoal::Negated(a) => a.args.iter().for_each(|t| note(t, &mut taken)),
                RawGoal::Comparison(c) => {
                    note(&c.left, &mut taken);
                    note(&c.right, &mut taken);
                }
                RawGoal::Aggregate(g) => {
                    for v in g.vars() {
                        taken.insert(v.0.clone());
                    }
                }
            }
        }

        let mut body = Vec::new();
        for g in raw_body {
            match g {
                RawGoal::Regular(a) => {
                    let (atom, eqs) = self.flatten_atom(a, &mut taken);
                    body.push(Goal::Regular(atom));
                    body.extend(eqs);
                }
                RawGoal::Negated(a) => {
                    let (atom, eqs) = self.flatten_atom(a, &mut taken);
                    body.extend(eqs);
                    body.push(Goal::Negated(atom));
                }
                RawGoal::Comparison(c) => body.push(Goal::Comparison(c)),
                RawGoal::Aggregate(g) => body.push(Goal::Aggregate(g)),
            }
        }

        let mut head_terms = Vec::new();
        let mut trailing = Vec::new();
        let mut annotation = None;
        for a in head_args {
            match a {
                HeadArg::Term(Term::Arith(op, l, r)) => {
                    let v = self.fresh_var("_H", &taken);
                    taken.insert(v.0.clone());
                    trailing.push(Goal::Comparison(Comparison::new(
                        CmpOp::Eq,
                        Term::Var(v.clone()),
                        Term::Arith(op, l, r),
                    )));
                    head_terms.push(Term::Var(v));
                }
                HeadArg::Term(t) => head_terms.push(t),
                HeadArg::Annotated(kind, v) => {
                    if annotation.is_some() {
                        return Err(head_pos.malformed(self.origin, "at most one head annotation per rule".into()));
                    }
                    annotation = Some((kind, v.clone(), head_terms.len()));
                    head_terms.push(Term::Var(v));
                }
            }
        }
        body.extend(trailing);
        if let Some((kind, v, at)) = annotation {
            let mut group_by = Vec::new();
            for (i, t) in head_terms.iter().enumerate() {
                if i == at {
                    continue;
                }
                match t {
                    Term::Var(g) => group_by.push(g.clone()),
                    _ => {
                        return Err(head_pos.malformed(
                            self.origin,
                            "head annotations need plain variables in the other head arguments".into(),
                        ))
                    }
                }
            }
            body.push(Goal::Aggregate(AggregateGoal {
                kind,
                group_by,
                measured: vec![v],
                result: None,
            }));
        }
        Ok(Clause::Rule(Rule::new(id, Atom::new(predicate, head_terms), body)))
    }

    fn flatten_atom(&mut self, atom: Atom, taken: &mut BTreeSet<String>) -> (Atom, Vec<Goal>) {
        let mut eqs = Vec::new();
        let mut args = Vec::new();
        for t in atom.args {
            match t {
                Term::Arith(..) => {
                    let v = self.fresh_var("_A", taken);
                    taken.insert(v.0.clone());
                    eqs.push(Goal::Comparison(Comparison::new(CmpOp::Eq, Term::Var(v.clone()), t)));
                    args.push(Term::Var(v));
                }
                Term::Var(v) if v.0 == "_" => {
                    let fresh = self.fresh_var("_", taken);
                    taken.insert(fresh.0.clone());
                    args.push(Term::Var(fresh));
                }
                other => args.push(other),
            }
        }
        (Atom::new(atom.predicate, args), eqs)
    }

    fn head(&mut self) -> Result<(String, Vec<HeadArg>), ParseError> {
        let predicate = match self.bump() {
            Tok::Ident(name) => name,
            _ => {
                self.pos = self.pos.saturating_sub(1);
                return Err(self.unexpected("a predicate name"));
            }
        };
        let mut args = Vec::new();
        if *self.peek() == Tok::LParen {
            self.bump();
            if *self.peek() != Tok::RParen {
                loop {
                    let annotated = match (self.peek(), self.peek_at(1)) {
                        (Tok::Ident(w), Tok::Lt) => match w.as_str() {
                            "min" => Some(AggregateKind::IsMin),
                            "max" => Some(AggregateKind::IsMax),
                            "mmin" => Some(AggregateKind::MMin),
                            "mmax" => Some(AggregateKind::MMax),
                            _ => None,
                        },
                        _ => None,
                    };
                    if let Some(kind) = annotated {
                        self.bump();
                        self.bump();
                        let v = match self.bump() {
                            Tok::Var(v) if v != "_" => Var(v),
                            _ => {
                                self.pos -= 1;
                                return Err(self.unexpected("a variable inside the annotation"));
                            }
                        };
                        self.expect(Tok::Gt, "`>` closing the annotation")?;
                        args.push(HeadArg::Annotated(kind, v));
                    } else {
                        let t = self.expr()?;
                        if matches!(&t, Term::Var(v) if v.0 == "_") {
                            return Err(self.unexpected("a named variable in the head"));
                        }
                        args.push(HeadArg::Term(t));
                    }
                    match self.peek() {
                        Tok::Comma => {
                            self.bump();
                        }
                        Tok::RParen => break,
                        _ => return Err(self.unexpected("`,` or `)`")),
                    }
                }
            }
            self.expect(Tok::RParen, "`)`")?;
        }
        Ok((predicate, args))
    }

    fn atom_after_name(&mut self, predicate: String) -> Result<Atom, ParseError> {
        let mut args = Vec::new();
        if *self.peek() == Tok::LParen {
            self.bump();
            if *self.peek() != Tok::RParen {
                loop {
                    args.push(self.expr()?);
                    match self.peek() {
                        Tok::Comma => {
                            self.bump();
                        }
                        Tok::RParen => break,
                        _ => return Err(self.unexpected("`,` or `)`")),
                    }
                }
            }
            self.expect(Tok::RParen, "`)`")?;
        }
        Ok(Atom::new(predicate, args))
    }

    fn body_goal(&mut self) -> Result<RawGoal, ParseError> {
        let start = self.here();
        match self.peek().clone() {
            Tok::Bang => {
                self.bump();
                let name = self.predicate_name()?;
                Ok(RawGoal::Negated(self.atom_after_name(name)?))
            }
            Tok::Ident(w) if w == "not" && matches!(self.peek_at(1), Tok::Ident(_)) => {
                self.bump();
                let name = self.predicate_name()?;
                Ok(RawGoal::Negated(self.atom_after_name(name)?))
            }
            Tok::Ident(w) if *self.peek_at(1) == Tok::LParen => {
                self.bump();
                if let Some(kind) = AggregateKind::from_keyword(&w) {
                    return self.aggregate(kind, start).map(RawGoal::Aggregate);
                }
                let atom = self.atom_after_name(w)?;
                if cmp_op(self.peek()).is_some() {
                    return Err(self.unexpected("`,` or `.` after an atom"));
                }
                Ok(RawGoal::Regular(atom))
            }
            Tok::Ident(w)
                if cmp_op(self.peek_at(1)).is_none()
                    && !matches!(self.peek_at(1), Tok::Plus | Tok::Minus | Tok::Star) =>
            {
                self.bump();
                Ok(RawGoal::Regular(Atom::new(w, vec![])))
            }
            _ => {
                let left = self.expr()?;
                let op = cmp_op(self.peek()).ok_or_else(|| self.unexpected("a comparison operator"))?;
                self.bump();
                let right = self.expr()?;
                Ok(RawGoal::Comparison(Comparison::new(op, left, right)))
            }
        }
    }

    fn predicate_name(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.bump();
                Ok(name)
            }
            _ => Err(self.unexpected("a predicate name")),
        }
    }

    fn var_list(&mut self, kind: AggregateKind, start: Pos) -> Result<Vec<Var>, ParseError> {
        if *self.peek() != Tok::LParen {
            return Err(start.malformed(
                self.origin,
                format!("{} expects parenthesized variable lists", kind.keyword()),
            ));
        }
        self.bump();
        let mut out = Vec::new();
        if *self.peek() == Tok::RParen {
            self.bump();
            return Ok(out);
        }
        loop {
            match self.bump() {
                Tok::Var(v) if v != "_" => out.push(Var(v)),
                other => {
                    return Err(start.malformed(
                        self.origin,
                        format!("expected a variable in the list, found {}", other.describe()),
                    ))
                }
            }
            match self.bump() {
                Tok::Comma => {}
                Tok::RParen => return Ok(out),
                other => {
                    return Err(start.malformed(
                        self.origin,
                        format!("expected `,` or `)` in variable list, found {}", other.describe()),
                    ))
                }
            }
        }
    }

    fn aggregate(&mut self, kind: AggregateKind, start: Pos) -> Result<AggregateGoal, ParseError> {
        self.expect(Tok::LParen, "`(`")?;
        let group_by = self.var_list(kind, start)?;
        if *self.peek() == Tok::Comma {
            self.bump();
        }
        let measured = self.var_list(kind, start)?;
        let mut result = None;
        if *self.peek() == Tok::Comma {
            self.bump();
            match self.bump() {
                Tok::Var(v) if v != "_" => result = Some(Var(v)),
                other => {
                    return Err(start.malformed(
                        self.origin,
                        format!("expected a result variable, found {}", other.describe()),
                    ))
                }
            }
        }
        if *self.peek() != Tok::RParen {
            return Err(start.malformed(self.origin, format!("expected `)`, found {}", self.peek().describe())));
        }
        self.bump();
        if kind.is_extremum() {
            if result.is_some() {
                return Err(start.malformed(self.origin, format!("{} takes no result variable", kind.keyword())));
            }
            if measured.len() != 1 {
                return Err(start.malformed(
                    self.origin,
                    format!("{} takes exactly one cost variable", kind.keyword()),
                ));
            }
        } else {
            if result.is_none() {
                return Err(ParseError::MissingResult {
                    origin: self.origin.into(),
                    line: start.line,
                    col: start.col,
                    kind: kind.keyword(),
                });
            }
            if measured.is_empty() {
                return Err(start.malformed(self.origin, format!("{} needs at least one measured variable", kind.keyword())));
            }
        }
        if group_by.iter().any(|g| measured.contains(g)) {
            return Err(start.malformed(self.origin, "group-by and measured variables must be disjoint".into()));
        }
        if let Some(r) = &result {
            if group_by.contains(r) || measured.contains(r) {
                return Err(start.malformed(self.origin, "result variable must be fresh".into()));
            }
        }
        Ok(AggregateGoal {
            kind,
            group_by,
            measured,
            result,
        })
    }

    fn expr(&mut self) -> Result<Term, ParseError> {
        let mut left = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => ArithOp::Add,
                Tok::Minus => ArithOp::Sub,
                _ => return Ok(left),
            };
            self.bump();
            let right = self.term()?;
            left = Term::arith(op, left, right);
        }
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        let mut left = self.unary()?;
        while *self.peek() == Tok::Star {
            self.bump();
            let right = self.unary()?;
            left = Term::arith(ArithOp::Mul, left, right);
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Term, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            if let Tok::Int(n) = *self.peek() {
                self.bump();
                return Ok(Term::int((-n) as i64));
            }
            let inner = self.unary()?;
            return Ok(Term::arith(ArithOp::Sub, Term::int(0), inner));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Term, ParseError> {
        match self.peek().clone() {
            Tok::Int(n) => {
                if n > i64::MAX as i128 {
                    return Err(self.unexpected("an integer within 64-bit range"));
                }
                self.bump();
                Ok(Term::int(n as i64))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Term::Const(Value::sym(&s)))
            }
            Tok::Var(v) => {
                self.bump();
                Ok(Term::Var(Var(v)))
            }
            Tok::Ident(w) if *self.peek_at(1) != Tok::LParen => {
                self.bump();
                Ok(Term::Const(Value::sym(&w)))
            }
            Tok::LParen => {
                self.bump();
                let t = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(t)
            }
            _ => Err(self.unexpected("a term")),
        }
    }
}

fn cmp_op(tok: &Tok) -> Option<CmpOp> {
    Some(match tok {
        Tok::Lt => CmpOp::Lt,
        Tok::Le => CmpOp::Le,
        Tok::Gt => CmpOp::Gt,
        Tok::Ge => CmpOp::Ge,
        Tok::Eq => CmpOp::Eq,
        Tok::Ne => CmpOp::Ne,
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BoundKind, ExtremumKind};

    #[test]
    fn single_rule() {
        let p = parse_str("path(Y,Dy) :- arc(a,Y,Dy), Dy >= 0.").unwrap();
        assert_eq!(p.rules.len(), 1);
        let r = &p.rules[0];
        assert_eq!(r.id, "r1");
        assert_eq!(r.head.predicate, "path");
        assert_eq!(r.head.arity(), 2);
        assert!(matches!(r.body[0], Goal::Regular(_)));
        assert!(matches!(&r.body[1], Goal::Comparison(c) if c.op == CmpOp::Ge));
    }

    #[test]
    fn limited_path_carries_upper_bound() {
        let p = parse_str(crate::fixtures::LIMITED_PATH).unwrap();
        let ids: Vec<&str> = p.rules.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["r1", "r2", "r3"]);
        assert_eq!(p.constraints.len(), 1);
        assert_eq!(p.constraints[0].rule_id, "r3");
        match &p.constraints[0].constraint {
            Constraint::Bound(b) => {
                assert_eq!(b.kind, BoundKind::Upper);
                assert_eq!(b.predicate, "path");
                assert_eq!(b.cost, 1);
                assert_eq!(b.op, CmpOp::Lt);
                assert_eq!(b.limit, Value::Int(143));
            }
            other => panic!("unexpected constraint {other:?}"),
        }
    }

    #[test]
    fn malformed_head_reports_position() {
        match parse_str("p(X :- q(X).") {
            Err(ParseError::Syntax { line, col, .. }) => assert_eq!((line, col), (1, 5)),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn arity_conflict() {
        assert!(matches!(
            parse_str("p(1). p(1,2)."),
            Err(ParseError::ArityConflict { .. })
        ));
    }

    #[test]
    fn unsafe_rule() {
        assert!(matches!(parse_str("p(X) :- q(Y)."), Err(ParseError::Safety { .. })));
        assert!(matches!(parse_str("p(X) :- q(Y), X > Y."), Err(ParseError::Safety { .. })));
    }

    #[test]
    fn extremum_goal_in_final_rule() {
        let rule = parse_str("spath(Y, Dy) :- path(Y, Dy).").unwrap().rules.remove(0);
        let g = parse_constraint_goal("is_min((Y),(Dy))", &rule).unwrap();
        assert_eq!(
            g,
            ConstraintGoal::Constraint(Constraint::Extremum(Extremum {
                kind: ExtremumKind::Min,
                predicate: "path".into(),
                group_by: vec![0],
                cost: 1,
            }))
        );
    }

    #[test]
    fn counting_goals() {
        let rule = parse_str("c(Y, N) :- f(Y, X), mcount((Y),(X),N).").unwrap().rules.remove(0);
        assert_eq!(
            parse_constraint_goal("mcount((Y),(X),N)", &rule).unwrap(),
            ConstraintGoal::Aggregate(AggregateGoal {
                kind: AggregateKind::MCount,
                group_by: vec![Var::new("Y")],
                measured: vec![Var::new("X")],
                result: Some(Var::new("N")),
            })
        );
        assert_eq!(
            parse_constraint_goal("sum((),(Pno,C),T)", &rule).unwrap(),
            ConstraintGoal::Aggregate(AggregateGoal {
                kind: AggregateKind::Sum,
                group_by: vec![],
                measured: vec![Var::new("Pno"), Var::new("C")],
                result: Some(Var::new("T")),
            })
        );
    }

    #[test]
    fn aggregate_errors() {
        let rule = parse_str("c(Y) :- f(Y).").unwrap().rules.remove(0);
        assert!(matches!(
            parse_constraint_goal("mcount(Y,(X),N)", &rule),
            Err(ParseError::MalformedAggregate { .. })
        ));
        assert!(matches!(
            parse_constraint_goal("count((Y),(X))", &rule),
            Err(ParseError::MissingResult { .. })
        ));
    }

    #[test]
    fn head_annotation_becomes_goal() {
        let p = parse_str("path(Y, min<Dy>) :- arc(a, Y, Dy).").unwrap();
        let r = &p.rules[0];
        assert_eq!(r.to_string(), "r1: path(Y, Dy) :- arc(a, Y, Dy), is_min((Y), (Dy)).");
    }

    #[test]
    fn arithmetic_in_atoms_is_flattened() {
        let p = parse_str("p(X + 1) :- q(X), r(X * 2).").unwrap();
        assert_eq!(
            p.rules[0].to_string(),
            "r1: p(_H2) :- q(X), r(_A1), _A1 = X * 2, _H2 = X + 1."
        );
    }

    #[test]
    fn max_with_empty_group_and_no_separator() {
        let p = parse_str("p(2). topp(J1) :- p(J1), is_max(()(J1)).").unwrap();
        assert_eq!(p.facts.len(), 1);
        assert!(p.constraints.is_empty(), "p is not recursive, but a final-rule filter is still fine");
    }

    #[test]
    fn labels_and_primes() {
        let p = parse_str("r2': p(X) :- q(X).").unwrap();
        assert_eq!(p.rules[0].id, "r2'");
    }

    #[test]
    fn every_fixture_parses() {
        for (name, text) in crate::fixtures::ALL {
            parse_str(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn printing_round_trips_fixtures() {
        for (name, text) in crate::fixtures::ALL {
            let p = parse_str(text).unwrap();
            let q = parse_str(&p.to_string()).unwrap_or_else(|e| panic!("{name}: {e}\n{p}"));
            assert_eq!(p.rules, q.rules, "{name}");
            assert_eq!(p.facts, q.facts, "{name}");
        }
    }
}
