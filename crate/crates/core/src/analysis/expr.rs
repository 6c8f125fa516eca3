//! Linear forms, integer intervals and monotonicity over `+`, `-`, `*` terms.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{ArithOp, CmpOp, Comparison, Term, Value, Var};

/// `sum(coeff * var) + constant` over exact 128-bit integers.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub(crate) struct Lin {
    pub coeffs: BTreeMap<Var, i128>,
    pub constant: i128,
}

impl Lin {
    pub fn constant(c: i128) -> Self {
        Lin {
            coeffs: BTreeMap::new(),
            constant: c,
        }
    }

    pub fn var(v: &Var) -> Self {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(v.clone(), 1);
        Lin { coeffs, constant: 0 }
    }

    pub fn add(mut self, other: &Lin, sign: i128) -> Option<Lin> {
        for (v, c) in &other.coeffs {
            let e = self.coeffs.entry(v.clone()).or_insert(0);
            *e = e.checked_add(c.checked_mul(sign)?)?;
            if *e == 0 {
                self.coeffs.remove(v);
            }
        }
        self.constant = self.constant.checked_add(other.constant.checked_mul(sign)?)?;
        Some(self)
    }

    pub fn scale(mut self, k: i128) -> Option<Lin> {
        if k == 0 {
            return Some(Lin::constant(0));
        }
        for c in self.coeffs.values_mut() {
            *c = c.checked_mul(k)?;
        }
        self.constant = self.constant.checked_mul(k)?;
        Some(self)
    }

    pub fn coeff(&self, v: &Var) -> i128 {
        self.coeffs.get(v).copied().unwrap_or(0)
    }

    pub fn as_constant(&self) -> Option<i128> {
        self.coeffs.is_empty().then_some(self.constant)
    }

    /// Lower bound over the box `env`, if every variable is bounded on the needed side.
    pub fn lower_bound(&self, env: &Env) -> Option<i128> {
        let mut acc = self.constant;
        for (v, &c) in &self.coeffs {
            let iv = env.get(v).copied().unwrap_or_default();
            let side = if c > 0 { iv.lo? } else { iv.hi? };
            acc = acc.checked_add(c.checked_mul(side)?)?;
        }
        Some(acc)
    }
}

/// Linear form of `t`, or `None` when it is nonlinear or mentions a symbol.
pub(crate) fn linear(t: &Term) -> Option<Lin> {
    match t {
        Term::Var(v) => Some(Lin::var(v)),
        Term::Const(Value::Int(i)) => Some(Lin::constant(*i as i128)),
        Term::Const(Value::Sym(_)) => None,
        Term::Arith(op, l, r) => {
            let (a, b) = (linear(l)?, linear(r)?);
            match op {
                ArithOp::Add => a.add(&b, 1),
                ArithOp::Sub => a.add(&b, -1),
                ArithOp::Mul => match (a.as_constant(), b.as_constant()) {
                    (Some(k), _) => b.scale(k),
                    (_, Some(k)) => a.scale(k),
                    _ => None,
                },
            }
        }
    }
}

/// Replaces defined variables by their definitions until none remain.
pub(crate) fn expand(t: &Term, defs: &BTreeMap<Var, Term>) -> Term {
    fn go(t: &Term, defs: &BTreeMap<Var, Term>, depth: usize) -> Term {
        match t {
            Term::Var(v) if depth < 64 => match defs.get(v) {
                Some(d) => go(d, defs, depth + 1),
                None => t.clone(),
            },
            Term::Arith(op, l, r) => Term::arith(*op, go(l, defs, depth), go(r, defs, depth)),
            _ => t.clone(),
        }
    }
    go(t, defs, 0)
}

/// Closed integer interval; `None` means unbounded on that side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub(crate) struct Interval {
    pub lo: Option<i128>,
    pub hi: Option<i128>,
}

impl Interval {
    pub fn point(c: i128) -> Self {
        Interval {
            lo: Some(c),
            hi: Some(c),
        }
    }

    fn meet(self, other: Interval) -> Interval {
        Interval {
            lo: match (self.lo, other.lo) {
                (Some(a), Some(b)) => Some(a.max(b)),
                (a, b) => a.or(b),
            },
            hi: match (self.hi, other.hi) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            },
        }
    }

    pub fn nonneg(&self) -> bool {
        self.lo.is_some_and(|l| l >= 0)
    }

    pub fn nonpos(&self) -> bool {
        self.hi.is_some_and(|h| h <= 0)
    }

    pub fn positive(&self) -> bool {
        self.lo.is_some_and(|l| l > 0)
    }
}

pub(crate) type Env = BTreeMap<Var, Interval>;

pub(crate) fn interval(t: &Term, env: &Env) -> Interval {
    match t {
        Term::Var(v) => env.get(v).copied().unwrap_or_default(),
        Term::Const(Value::Int(i)) => Interval::point(*i as i128),
        Term::Const(Value::Sym(_)) => Interval::default(),
        Term::Arith(op, l, r) => {
            let (a, b) = (interval(l, env), interval(r, env));
            let add = |x: Option<i128>, y: Option<i128>| x.zip(y).and_then(|(x, y)| x.checked_add(y));
            let sub = |x: Option<i128>, y: Option<i128>| x.zip(y).and_then(|(x, y)| x.checked_sub(y));
            match op {
                ArithOp::Add => Interval {
                    lo: add(a.lo, b.lo),
                    hi: add(a.hi, b.hi),
                },
                ArithOp::Sub => Interval {
                    lo: sub(a.lo, b.hi),
                    hi: sub(a.hi, b.lo),
                },
                ArithOp::Mul => match (a.lo, a.hi, b.lo, b.hi) {
                    (Some(al), Some(ah), Some(bl), Some(bh)) => {
                        let products = [al * bl, al * bh, ah * bl, ah * bh];
                        Interval {
                            lo: products.iter().min().copied(),
                            hi: products.iter().max().copied(),
                        }
                    }
                    _ if a.nonneg() && b.nonneg() => Interval {
                        lo: Some(a.lo.unwrap() * b.lo.unwrap()),
                        hi: None,
                    },
                    _ => Interval::default(),
                },
            }
        }
    }
}

/// Rewrites a comparison into one or two linear constraints `E >= 0`.
pub(crate) fn as_nonneg(c: &Comparison) -> Option<Vec<Lin>> {
    let l = linear(&c.left)?;
    let r = linear(&c.right)?;
    let diff = |a: &Lin, b: &Lin, minus: i128| a.clone().add(b, -1).and_then(|d| d.add(&Lin::constant(minus), -1));
    Some(match c.op {
        CmpOp::Ge => vec![diff(&l, &r, 0)?],
        CmpOp::Gt => vec![diff(&l, &r, 1)?],
        CmpOp::Le => vec![diff(&r, &l, 0)?],
        CmpOp::Lt => vec![diff(&r, &l, 1)?],
        CmpOp::Eq => vec![diff(&l, &r, 0)?, diff(&r, &l, 0)?],
        CmpOp::Ne => return None,
    })
}

/// Collects single-variable bounds implied by `guards`.
pub(crate) fn guard_intervals(guards: &[Comparison]) -> Env {
    let mut env = Env::new();
    for g in guards {
        for e in as_nonneg(g).unwrap_or_default() {
            if e.coeffs.len() != 1 {
                continue;
            }
            let (v, &a) = e.coeffs.iter().next().unwrap();
            let c = e.constant;
            // a*v + c >= 0
            let iv = if a > 0 {
                Interval {
                    lo: Some(div_ceil(-c, a)),
                    hi: None,
                }
            } else {
                Interval {
                    lo: None,
                    hi: Some(div_floor(c, -a)),
                }
            };
            let cur = env.get(v).copied().unwrap_or_default();
            env.insert(v.clone(), cur.meet(iv));
        }
    }
    env
}

fn div_floor(a: i128, b: i128) -> i128 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

fn div_ceil(a: i128, b: i128) -> i128 {
    -div_floor(-a, b)
}

/// Direction in which a term moves when one variable grows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Mono {
    Const,
    NonDecr,
    NonIncr,
    Unknown,
}

impl Mono {
    pub fn flip(self) -> Mono {
        match self {
            Mono::NonDecr => Mono::NonIncr,
            Mono::NonIncr => Mono::NonDecr,
            m => m,
        }
    }

    fn plus(self, other: Mono) -> Mono {
        match (self, other) {
            (Mono::Const, m) | (m, Mono::Const) => m,
            (a, b) if a == b => a,
            _ => Mono::Unknown,
        }
    }

    fn from_coeff(c: i128) -> Mono {
        match c.signum() {
            0 => Mono::Const,
            1 => Mono::NonDecr,
            _ => Mono::NonIncr,
        }
    }
}

/// Monotonicity of `t` in `b`. Variables in `opaque` depend on `b` in an unknown way.
pub(crate) fn mono(t: &Term, b: &Var, env: &Env, opaque: &BTreeSet<Var>) -> Mono {
    let mentions_opaque = t.vars().iter().any(|v| opaque.contains(*v));
    if mentions_opaque {
        return Mono::Unknown;
    }
    if let Some(l) = linear(t) {
        return Mono::from_coeff(l.coeff(b));
    }
    structural(t, b, env)
}

fn structural(t: &Term, b: &Var, env: &Env) -> Mono {
    match t {
        Term::Var(v) if v == b => Mono::NonDecr,
        Term::Var(_) | Term::Const(_) => Mono::Const,
        Term::Arith(ArithOp::Add, l, r) => structural(l, b, env).plus(structural(r, b, env)),
        Term::Arith(ArithOp::Sub, l, r) => structural(l, b, env).plus(structural(r, b, env).flip()),
        Term::Arith(ArithOp::Mul, l, r) => {
            let (ml, mr) = (structural(l, b, env), structural(r, b, env));
            let scaled = |m: Mono, factor: &Term| {
                let iv = interval(factor, env);
                if m == Mono::Const {
                    Mono::Const
                } else if iv.nonneg() {
                    m
                } else if iv.nonpos() {
                    m.flip()
                } else {
                    Mono::Unknown
                }
            };
            match (ml, mr) {
                (Mono::Const, Mono::Const) => Mono::Const,
                (m, Mono::Const) => scaled(m, r),
                (Mono::Const, m) => scaled(m, l),
                _ => Mono::Unknown,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(n: &str) -> Term {
        Term::var(n)
    }

    #[test]
    fn cancellation_in_linear_forms() {
        let t = Term::arith(ArithOp::Sub, Term::arith(ArithOp::Add, v("Dx"), v("Dxy")), v("Dx"));
        assert_eq!(linear(&t).unwrap(), Lin::var(&Var::new("Dxy")));
    }

    #[test]
    fn strict_guards_tighten_integer_bounds() {
        let env = guard_intervals(&[Comparison::new(CmpOp::Gt, v("Q"), Term::int(0))]);
        assert_eq!(env[&Var::new("Q")].lo, Some(1));
        let env = guard_intervals(&[Comparison::new(CmpOp::Le, Term::arith(ArithOp::Mul, Term::int(2), v("J")), Term::int(7))]);
        assert_eq!(env[&Var::new("J")].hi, Some(3));
    }

    #[test]
    fn product_with_nonnegative_factor() {
        let env = guard_intervals(&[Comparison::new(CmpOp::Ge, v("Q"), Term::int(1))]);
        let t = Term::arith(ArithOp::Mul, v("C"), v("Q"));
        assert_eq!(mono(&t, &Var::new("C"), &env, &BTreeSet::new()), Mono::NonDecr);
        assert_eq!(mono(&t, &Var::new("C"), &Env::new(), &BTreeSet::new()), Mono::Unknown);
    }

    #[test]
    fn floor_and_ceil() {
        assert_eq!(div_floor(-7, 2), -4);
        assert_eq!(div_ceil(-7, 2), -3);
        assert_eq!(div_ceil(7, 2), 4);
    }
}
