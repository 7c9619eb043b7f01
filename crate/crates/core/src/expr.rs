//! Closed-form expressions in the jet variables `(z3, z2, z1, z0, x, t)`.
//!
//! Supports parsing, symbolic differentiation and vectorized evaluation over
//! grid fields. Constructors fold constants so that repeated differentiation
//! of polynomials terminates in an explicit zero.

use std::fmt;

use crate::error::{ForgeError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    Z3,
    Z2,
    Z1,
    Z0,
    X,
    T,
}

impl Var {
    pub const ALL: [Var; 6] = [Var::Z3, Var::Z2, Var::Z1, Var::Z0, Var::X, Var::T];

    pub fn name(self) -> &'static str {
        match self {
            Var::Z3 => "z3",
            Var::Z2 => "z2",
            Var::Z1 => "z1",
            Var::Z0 => "z0",
            Var::X => "x",
            Var::T => "t",
        }
    }

    /// Jet slot `z_j` for `j ∈ 0..=3`.
    pub fn z(j: usize) -> Var {
        [Var::Z0, Var::Z1, Var::Z2, Var::Z3][j]
    }

    fn slot(self) -> usize {
        match self {
            Var::Z3 => 0,
            Var::Z2 => 1,
            Var::Z1 => 2,
            Var::Z0 => 3,
            Var::X => 4,
            Var::T => 5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Exp,
    Ln,
    Sin,
    Cos,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Exp => v.exp(),
            Func::Ln => v.ln(),
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Sqrt => v.sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Func(Func, Box<Expr>),
}

impl Expr {
    pub fn zero() -> Expr {
        Expr::Const(0.0)
    }

    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn sum(terms: Vec<Expr>) -> Expr {
        let mut out = Vec::with_capacity(terms.len());
        let mut c = 0.0;
        for t in terms {
            match t {
                Expr::Const(v) => c += v,
                Expr::Add(inner) => {
                    for s in inner {
                        match s {
                            Expr::Const(v) => c += v,
                            other => out.push(other),
                        }
                    }
                }
                other => out.push(other),
            }
        }
        if c != 0.0 {
            out.push(Expr::Const(c));
        }
        match out.len() {
            0 => Expr::zero(),
            1 => out.pop().unwrap(),
            _ => Expr::Add(out),
        }
    }

    pub fn product(factors: Vec<Expr>) -> Expr {
        let mut out = Vec::with_capacity(factors.len());
        let mut c = 1.0;
        for f in factors {
            match f {
                Expr::Const(v) => c *= v,
                Expr::Mul(inner) => {
                    for s in inner {
                        match s {
                            Expr::Const(v) => c *= v,
                            other => out.push(other),
                        }
                    }
                }
                other => out.push(other),
            }
        }
        if c == 0.0 {
            return Expr::zero();
        }
        if c != 1.0 || out.is_empty() {
            out.insert(0, Expr::Const(c));
        }
        match out.len() {
            1 => out.pop().unwrap(),
            _ => Expr::Mul(out),
        }
    }

    pub fn neg(e: Expr) -> Expr {
        Expr::product(vec![Expr::Const(-1.0), e])
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::sum(vec![a, Expr::neg(b)])
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::product(vec![a, Expr::pow(b, Expr::Const(-1.0))])
    }

    pub fn pow(base: Expr, exp: Expr) -> Expr {
        match (&base, &exp) {
            (_, Expr::Const(e)) if *e == 0.0 => Expr::Const(1.0),
            (_, Expr::Const(e)) if *e == 1.0 => base,
            (Expr::Const(b), Expr::Const(e)) => Expr::Const(b.powf(*e)),
            (Expr::Pow(inner, e1), Expr::Const(e2)) if e1.as_const().map_or(false, |v| v.fract() == 0.0) && e2.fract() == 0.0 => {
                let e = e1.as_const().unwrap() * e2;
                Expr::pow((**inner).clone(), Expr::Const(e))
            }
            _ => Expr::Pow(Box::new(base), Box::new(exp)),
        }
    }

    pub fn func(f: Func, arg: Expr) -> Expr {
        if let Expr::Const(c) = arg {
            return Expr::Const(f.apply(c));
        }
        Expr::Func(f, Box::new(arg))
    }

    /// True when the expression mentions `v`.
    pub fn depends_on(&self, v: Var) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(w) => *w == v,
            Expr::Add(ts) | Expr::Mul(ts) => ts.iter().any(|t| t.depends_on(v)),
            Expr::Pow(a, b) => a.depends_on(v) || b.depends_on(v),
            Expr::Func(_, a) => a.depends_on(v),
        }
    }

    pub fn diff(&self, v: Var) -> Expr {
        if !self.depends_on(v) {
            return Expr::zero();
        }
        match self {
            Expr::Const(_) => Expr::zero(),
            Expr::Var(w) => Expr::Const(if *w == v { 1.0 } else { 0.0 }),
            Expr::Add(ts) => Expr::sum(ts.iter().map(|t| t.diff(v)).collect()),
            Expr::Mul(fs) => {
                let mut terms = Vec::new();
                for (i, f) in fs.iter().enumerate() {
                    let df = f.diff(v);
                    if df.is_zero() {
                        continue;
                    }
                    let mut factors: Vec<Expr> = Vec::with_capacity(fs.len());
                    for (k, g) in fs.iter().enumerate() {
                        factors.push(if k == i { df.clone() } else { g.clone() });
                    }
                    terms.push(Expr::product(factors));
                }
                Expr::sum(terms)
            }
            Expr::Pow(a, b) => {
                if let Some(c) = b.as_const() {
                    Expr::product(vec![
                        Expr::Const(c),
                        Expr::pow((**a).clone(), Expr::Const(c - 1.0)),
                        a.diff(v),
                    ])
                } else {
                    // d(a^b) = a^b (b' ln a + b a'/a)
                    Expr::product(vec![
                        self.clone(),
                        Expr::sum(vec![
                            Expr::product(vec![b.diff(v), Expr::func(Func::Ln, (**a).clone())]),
                            Expr::product(vec![(**b).clone(), a.diff(v), Expr::pow((**a).clone(), Expr::Const(-1.0))]),
                        ]),
                    ])
                }
            }
            Expr::Func(f, a) => {
                let inner = (**a).clone();
                let outer = match f {
                    Func::Exp => self.clone(),
                    Func::Ln => Expr::pow(inner, Expr::Const(-1.0)),
                    Func::Sin => Expr::func(Func::Cos, inner),
                    Func::Cos => Expr::neg(Expr::func(Func::Sin, inner)),
                    Func::Sqrt => Expr::product(vec![Expr::Const(0.5), Expr::pow(self.clone(), Expr::Const(-1.0))]),
                };
                Expr::product(vec![outer, a.diff(v)])
            }
        }
    }

    /// Replaces `t` by `−t`.
    pub fn reflect_time(&self) -> Expr {
        match self {
            Expr::Var(Var::T) => Expr::neg(Expr::Var(Var::T)),
            Expr::Const(_) | Expr::Var(_) => self.clone(),
            Expr::Add(ts) => Expr::sum(ts.iter().map(Expr::reflect_time).collect()),
            Expr::Mul(fs) => Expr::product(fs.iter().map(Expr::reflect_time).collect()),
            Expr::Pow(a, b) => Expr::pow(a.reflect_time(), b.reflect_time()),
            Expr::Func(f, a) => Expr::func(*f, a.reflect_time()),
        }
    }

    /// Scalar evaluation at `args = [z3, z2, z1, z0, x, t]`.
    pub fn eval(&self, args: &[f64; 6]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => args[v.slot()],
            Expr::Add(ts) => ts.iter().map(|t| t.eval(args)).sum(),
            Expr::Mul(fs) => fs.iter().map(|f| f.eval(args)).product(),
            Expr::Pow(a, b) => pow_eval(a.eval(args), b.eval(args)),
            Expr::Func(f, a) => f.apply(a.eval(args)),
        }
    }

    /// Pointwise evaluation over grid fields.
    pub fn eval_fields(&self, env: &FieldEnv<'_>) -> Vec<f64> {
        match self {
            Expr::Const(c) => vec![*c; env.len],
            Expr::Var(Var::T) => vec![env.t; env.len],
            Expr::Var(v) => env.slot(*v).to_vec(),
            Expr::Add(ts) => {
                let mut acc = ts[0].eval_fields(env);
                for t in &ts[1..] {
                    add_into(&mut acc, t, env);
                }
                acc
            }
            Expr::Mul(fs) => {
                let mut acc = fs[0].eval_fields(env);
                for f in &fs[1..] {
                    match f {
                        Expr::Const(c) => acc.iter_mut().for_each(|a| *a *= c),
                        Expr::Var(Var::T) => acc.iter_mut().for_each(|a| *a *= env.t),
                        Expr::Var(v) => acc.iter_mut().zip(env.slot(*v)).for_each(|(a, b)| *a *= b),
                        _ => {
                            let b = f.eval_fields(env);
                            acc.iter_mut().zip(&b).for_each(|(a, b)| *a *= b);
                        }
                    }
                }
                acc
            }
            Expr::Pow(a, b) => {
                let mut base = a.eval_fields(env);
                if let Some(c) = b.as_const() {
                    base.iter_mut().for_each(|v| *v = pow_eval(*v, c));
                } else {
                    let e = b.eval_fields(env);
                    base.iter_mut().zip(&e).for_each(|(v, e)| *v = pow_eval(*v, *e));
                }
                base
            }
            Expr::Func(f, a) => {
                let mut v = a.eval_fields(env);
                v.iter_mut().for_each(|x| *x = f.apply(*x));
                v
            }
        }
    }
}

fn add_into(acc: &mut [f64], t: &Expr, env: &FieldEnv<'_>) {
    match t {
        Expr::Const(c) => acc.iter_mut().for_each(|a| *a += c),
        Expr::Var(Var::T) => acc.iter_mut().for_each(|a| *a += env.t),
        Expr::Var(v) => acc.iter_mut().zip(env.slot(*v)).for_each(|(a, b)| *a += b),
        _ => {
            let b = t.eval_fields(env);
            acc.iter_mut().zip(&b).for_each(|(a, b)| *a += b);
        }
    }
}

fn pow_eval(b: f64, e: f64) -> f64 {
    if e.fract() == 0.0 && e.abs() <= 64.0 {
        b.powi(e as i32)
    } else {
        b.powf(e)
    }
}

/// Field arguments for [`Expr::eval_fields`]: jet slices `z0..z3`, node
/// coordinates and the current time.
pub struct FieldEnv<'a> {
    pub z: [&'a [f64]; 4],
    pub x: &'a [f64],
    pub t: f64,
    len: usize,
}

impl<'a> FieldEnv<'a> {
    pub fn new(z: [&'a [f64]; 4], x: &'a [f64], t: f64) -> Self {
        let len = x.len();
        debug_assert!(z.iter().all(|s| s.len() == len));
        Self { z, x, t, len }
    }

    fn slot(&self, v: Var) -> &'a [f64] {
        match v {
            Var::Z0 => self.z[0],
            Var::Z1 => self.z[1],
            Var::Z2 => self.z[2],
            Var::Z3 => self.z[3],
            Var::X => self.x,
            Var::T => unreachable!("time is a scalar"),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => {
                if *c < 0.0 {
                    write!(f, "({c:?})")
                } else {
                    write!(f, "{c:?}")
                }
            }
            Expr::Var(v) => f.write_str(v.name()),
            Expr::Add(ts) => {
                f.write_str("(")?;
                for (i, t) in ts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" + ")?;
                    }
                    write!(f, "{t}")?;
                }
                f.write_str(")")
            }
            Expr::Mul(fs) => {
                for (i, t) in fs.iter().enumerate() {
                    if i > 0 {
                        f.write_str("*")?;
                    }
                    write!(f, "{t}")?;
                }
                Ok(())
            }
            Expr::Pow(a, b) => write!(f, "({a})^({b})"),
            Expr::Func(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| ForgeError::Parse {
                pos: start,
                msg: format!("bad number `{text}`"),
            })?;
            out.push((start, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if "+-*/^(),".contains(c) {
            out.push((i, Tok::Op(c)));
            i += 1;
        } else {
            return Err(ForgeError::Parse {
                pos: i,
                msg: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.0)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(ForgeError::Parse {
            pos: self.here(),
            msg: msg.into(),
        })
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek() == Some(&Tok::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut terms = vec![self.term()?];
        loop {
            if self.eat('+') {
                terms.push(self.term()?);
            } else if self.eat('-') {
                terms.push(Expr::neg(self.term()?));
            } else {
                break;
            }
        }
        Ok(Expr::sum(terms))
    }

    fn term(&mut self) -> Result<Expr> {
        let mut factors = vec![self.unary()?];
        loop {
            if self.eat('*') {
                factors.push(self.unary()?);
            } else if self.eat('/') {
                factors.push(Expr::pow(self.unary()?, Expr::Const(-1.0)));
            } else {
                break;
            }
        }
        Ok(Expr::product(factors))
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            return Ok(Expr::neg(self.unary()?));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat('^') {
            let exp = self.unary()?;
            return Ok(Expr::pow(base, exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Some(Tok::Op('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return self.err("expected `)`");
                }
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                let func = match name.as_str() {
                    "exp" => Some(Func::Exp),
                    "ln" | "log" => Some(Func::Ln),
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "sqrt" => Some(Func::Sqrt),
                    _ => None,
                };
                if let Some(func) = func {
                    if !self.eat('(') {
                        return self.err(format!("expected `(` after `{name}`"));
                    }
                    let a = self.expr()?;
                    if !self.eat(')') {
                        return self.err("expected `)`");
                    }
                    return Ok(Expr::func(func, a));
                }
                match name.as_str() {
                    "z3" => Ok(Expr::Var(Var::Z3)),
                    "z2" => Ok(Expr::Var(Var::Z2)),
                    "z1" => Ok(Expr::Var(Var::Z1)),
                    "z0" => Ok(Expr::Var(Var::Z0)),
                    "x" => Ok(Expr::Var(Var::X)),
                    "t" => Ok(Expr::Var(Var::T)),
                    "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                    _ => {
                        self.pos -= 1;
                        self.err(format!("unknown identifier `{name}`"))
                    }
                }
            }
            Some(Tok::Op(c)) => self.err(format!("unexpected `{c}`")),
            None => self.err("unexpected end of expression"),
        }
    }
}

/// Parses `+ - * / ^`, parentheses, `exp ln sin cos sqrt`, the variables
/// `z3 z2 z1 z0 x t` and the constant `pi`.
pub fn parse(src: &str) -> Result<Expr> {
    let toks = tokenize(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: src.len(),
    };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return p.err("trailing input");
    }
    Ok(e)
}
