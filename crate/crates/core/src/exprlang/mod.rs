//! Closed-form scalar expressions over declared variables, with exact
//! value/gradient/hessian evaluation by second-order jets.
//!
//! Expressions are parsed from an infix dialect (`+ - * / ^`, unary minus,
//! `sin cos sinh cosh exp log sqrt atan`, the constant `pi`). Exponents are
//! rational constants. Printing round-trips: parsing a printed expression
//! and printing again yields the same text.

mod jet;
mod parse;

use std::fmt;

use thiserror::Error;

pub use jet::Jet2;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: expected one of [{}], found {found}", expected.join(", "))]
    Syntax {
        offset: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("unknown identifier '{name}' at offset {offset}; declared variables: [{}]", declared.join(", "))]
    UnknownIdentifier {
        name: String,
        offset: usize,
        declared: Vec<String>,
    },
    #[error("bad exponent at offset {offset}: {reason}")]
    BadExponent { offset: usize, reason: String },
    #[error("invalid variable name '{0}'")]
    InvalidVariable(String),
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EvalError {
    #[error("domain error in '{node}': {reason}")]
    Domain { node: String, reason: String },
    #[error("non-finite result in '{node}'")]
    NonFinite { node: String },
    #[error("expected {expected} coordinates, got {got}")]
    Arity { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Sinh,
    Cosh,
    Exp,
    Log,
    Sqrt,
    Atan,
}

impl Func {
    pub const ALL: [Func; 8] = [
        Func::Sin,
        Func::Cos,
        Func::Sinh,
        Func::Cosh,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Atan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Atan => "atan",
        }
    }

    pub fn from_name(s: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == s)
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Sinh => x.sinh(),
            Func::Cosh => x.cosh(),
            Func::Exp => x.exp(),
            Func::Log => x.ln(),
            Func::Sqrt => x.sqrt(),
            Func::Atan => x.atan(),
        }
    }

    fn domain_violation(self, x: f64) -> Option<&'static str> {
        match self {
            Func::Log if x <= 0.0 => Some("log of a non-positive number"),
            Func::Sqrt if x < 0.0 => Some("sqrt of a negative number"),
            _ => None,
        }
    }

    /// Value, first and second derivative at `x`.
    fn derivs(self, x: f64) -> (f64, f64, f64) {
        match self {
            Func::Sin => (x.sin(), x.cos(), -x.sin()),
            Func::Cos => (x.cos(), -x.sin(), -x.cos()),
            Func::Sinh => (x.sinh(), x.cosh(), x.sinh()),
            Func::Cosh => (x.cosh(), x.sinh(), x.cosh()),
            Func::Exp => {
                let e = x.exp();
                (e, e, e)
            }
            Func::Log => (x.ln(), 1.0 / x, -1.0 / (x * x)),
            Func::Sqrt => {
                let s = x.sqrt();
                (s, 0.5 / s, -0.25 / (s * x))
            }
            Func::Atan => {
                let d = 1.0 + x * x;
                (x.atan(), 1.0 / d, -2.0 * x / (d * d))
            }
        }
    }
}

/// A reduced fraction with positive denominator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rational {
    num: i64,
    den: i64,
}

impl Rational {
    pub fn new(num: i64, den: i64) -> Rational {
        assert!(den != 0, "zero denominator");
        let g = gcd(num.unsigned_abs(), den.unsigned_abs()) as i64;
        let s = if den < 0 { -1 } else { 1 };
        Rational {
            num: s * num / g.max(1),
            den: s * den / g.max(1),
        }
    }

    pub fn integer(n: i64) -> Rational {
        Rational { num: n, den: 1 }
    }

    pub fn num(self) -> i64 {
        self.num
    }

    pub fn den(self) -> i64 {
        self.den
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn is_integer(self) -> bool {
        self.den == 1
    }

    pub fn minus_one(self) -> Rational {
        Rational::new(self.num - self.den, self.den)
    }

    /// Best rational with denominator up to 1000 that reproduces `x` to
    /// near machine precision.
    pub fn approximate(x: f64) -> Option<Rational> {
        if !x.is_finite() || x.abs() > 1e9 {
            return None;
        }
        for den in 1..=1000i64 {
            let num = (x * den as f64).round();
            if (num / den as f64 - x).abs() <= 1e-12 * x.abs().max(1.0) {
                return Some(Rational::new(num as i64, den));
            }
        }
        None
    }

    /// Real power `x^(p/q)`; odd denominators extend to negative bases.
    pub fn pow(self, x: f64) -> Result<f64, &'static str> {
        if self.is_integer() {
            if x == 0.0 && self.num < 0 {
                return Err("negative power of zero");
            }
            return Ok(x.powi(self.num as i32));
        }
        if x > 0.0 {
            Ok(x.powf(self.to_f64()))
        } else if x == 0.0 {
            if self.num > 0 {
                Ok(0.0)
            } else {
                Err("negative power of zero")
            }
        } else if self.den % 2 == 0 {
            Err("even root of a negative number")
        } else {
            let m = (-x).powf(self.to_f64());
            Ok(if self.num % 2 == 0 { m } else { -m })
        }
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Rational),
    Call(Func, Box<Expr>),
}

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Const(c) if c.is_sign_negative() => 3,
            Expr::Pow(..) => 4,
            _ => 5,
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => 1 + a.node_count(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                1 + a.node_count() + b.node_count()
            }
        }
    }
}

/// A parsed expression together with its declared variable names.
#[derive(Clone, Debug, PartialEq)]
pub struct Expression {
    root: Expr,
    vars: Vec<String>,
}

fn valid_name(s: &str) -> bool {
    let mut cs = s.chars();
    matches!(cs.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && cs.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && s != "pi"
        && Func::from_name(s).is_none()
}

/// Parses `src` over the declared variables.
pub fn parse<S: AsRef<str>>(src: &str, vars: &[S]) -> Result<Expression, ParseError> {
    let vars: Vec<String> = vars.iter().map(|v| v.as_ref().to_string()).collect();
    for (i, v) in vars.iter().enumerate() {
        if !valid_name(v) || vars[..i].contains(v) {
            return Err(ParseError::InvalidVariable(v.clone()));
        }
    }
    let root = parse::parse_expr(src, &vars)?;
    Ok(Expression { root, vars })
}

impl Expression {
    pub fn from_parts(root: Expr, vars: Vec<String>) -> Expression {
        Expression { root, vars }
    }

    pub fn root(&self) -> &Expr {
        &self.root
    }

    pub fn variables(&self) -> &[String] {
        &self.vars
    }

    pub fn pretty(&self) -> String {
        self.to_string()
    }

    fn node_text(&self, e: &Expr) -> String {
        let mut s = String::new();
        write_expr(&mut s, e, &self.vars, 0).expect("string write");
        s
    }

    fn check_arity(&self, point: &[f64]) -> Result<(), EvalError> {
        if point.len() != self.vars.len() {
            return Err(EvalError::Arity {
                expected: self.vars.len(),
                got: point.len(),
            });
        }
        Ok(())
    }

    /// Value only.
    pub fn eval(&self, point: &[f64]) -> Result<f64, EvalError> {
        self.check_arity(point)?;
        self.eval_node(&self.root, point)
    }

    fn eval_node(&self, e: &Expr, p: &[f64]) -> Result<f64, EvalError> {
        let v = match e {
            Expr::Const(c) => *c,
            Expr::Var(i) => p[*i],
            Expr::Neg(a) => -self.eval_node(a, p)?,
            Expr::Add(a, b) => self.eval_node(a, p)? + self.eval_node(b, p)?,
            Expr::Sub(a, b) => self.eval_node(a, p)? - self.eval_node(b, p)?,
            Expr::Mul(a, b) => self.eval_node(a, p)? * self.eval_node(b, p)?,
            Expr::Div(a, b) => {
                let d = self.eval_node(b, p)?;
                if d == 0.0 {
                    return Err(self.domain(e, "division by zero"));
                }
                self.eval_node(a, p)? / d
            }
            Expr::Pow(a, r) => {
                let x = self.eval_node(a, p)?;
                r.pow(x).map_err(|why| self.domain(e, why))?
            }
            Expr::Call(f, a) => {
                let x = self.eval_node(a, p)?;
                if let Some(why) = f.domain_violation(x) {
                    return Err(self.domain(e, why));
                }
                f.apply(x)
            }
        };
        if !v.is_finite() {
            return Err(EvalError::NonFinite {
                node: self.node_text(e),
            });
        }
        Ok(v)
    }

    fn domain(&self, e: &Expr, why: &str) -> EvalError {
        EvalError::Domain {
            node: self.node_text(e),
            reason: why.to_string(),
        }
    }

    /// Value, gradient and hessian with respect to all declared variables.
    pub fn eval_jet2(&self, point: &[f64]) -> Result<Jet2, EvalError> {
        self.check_arity(point)?;
        self.jet_node(&self.root, point)
    }

    fn jet_node(&self, e: &Expr, p: &[f64]) -> Result<Jet2, EvalError> {
        let n = p.len();
        let j = match e {
            Expr::Const(c) => Jet2::constant(*c, n),
            Expr::Var(i) => Jet2::variable(p[*i], *i, n),
            Expr::Neg(a) => self.jet_node(a, p)?.neg(),
            Expr::Add(a, b) => self.jet_node(a, p)?.add(&self.jet_node(b, p)?),
            Expr::Sub(a, b) => self.jet_node(a, p)?.sub(&self.jet_node(b, p)?),
            Expr::Mul(a, b) => self.jet_node(a, p)?.mul(&self.jet_node(b, p)?),
            Expr::Div(a, b) => {
                let d = self.jet_node(b, p)?;
                if d.value == 0.0 {
                    return Err(self.domain(e, "division by zero"));
                }
                self.jet_node(a, p)?.div(&d)
            }
            Expr::Pow(a, r) => {
                let x = self.jet_node(a, p)?;
                let err = |why| self.domain(e, why);
                let f0 = r.pow(x.value).map_err(err)?;
                let r1 = r.minus_one();
                let f1 = if r.num() == 0 {
                    0.0
                } else {
                    r.to_f64() * r1.pow(x.value).map_err(err)?
                };
                let f2 = if r.num() == 0 || r1.num() == 0 {
                    0.0
                } else {
                    r.to_f64() * r1.to_f64() * r1.minus_one().pow(x.value).map_err(err)?
                };
                x.chain(f0, f1, f2)
            }
            Expr::Call(f, a) => {
                let x = self.jet_node(a, p)?;
                if let Some(why) = f.domain_violation(x.value) {
                    return Err(self.domain(e, why));
                }
                let (f0, f1, f2) = f.derivs(x.value);
                x.chain(f0, f1, f2)
            }
        };
        if !j.is_finite() {
            return Err(EvalError::NonFinite {
                node: self.node_text(e),
            });
        }
        Ok(j)
    }

    /// Symbolic partial derivative with respect to variable `var`.
    ///
    /// Only zero and unit factors are folded; no other simplification.
    pub fn derivative(&self, var: usize) -> Expression {
        Expression {
            root: diff(&self.root, var),
            vars: self.vars.clone(),
        }
    }

    /// Replaces the variables listed in `fixed` by constants and drops them
    /// from the declared list.
    pub fn substitute(&self, fixed: &[(usize, f64)]) -> Expression {
        let mut map = Vec::with_capacity(self.vars.len());
        let mut vars = Vec::new();
        for (i, name) in self.vars.iter().enumerate() {
            match fixed.iter().find(|(j, _)| *j == i) {
                Some((_, v)) => map.push(Err(*v)),
                None => {
                    map.push(Ok(vars.len()));
                    vars.push(name.clone());
                }
            }
        }
        Expression {
            root: subst(&self.root, &map),
            vars,
        }
    }
}

fn subst(e: &Expr, map: &[Result<usize, f64>]) -> Expr {
    let b = |x: &Expr| Box::new(subst(x, map));
    match e {
        Expr::Const(c) => Expr::Const(*c),
        Expr::Var(i) => match map[*i] {
            Ok(j) => Expr::Var(j),
            Err(v) => Expr::Const(v),
        },
        Expr::Neg(a) => Expr::Neg(b(a)),
        Expr::Add(x, y) => Expr::Add(b(x), b(y)),
        Expr::Sub(x, y) => Expr::Sub(b(x), b(y)),
        Expr::Mul(x, y) => Expr::Mul(b(x), b(y)),
        Expr::Div(x, y) => Expr::Div(b(x), b(y)),
        Expr::Pow(a, r) => Expr::Pow(b(a), *r),
        Expr::Call(f, a) => Expr::Call(*f, b(a)),
    }
}

fn is_zero(e: &Expr) -> bool {
    matches!(e, Expr::Const(c) if *c == 0.0)
}

fn is_one(e: &Expr) -> bool {
    matches!(e, Expr::Const(c) if *c == 1.0)
}

fn add(a: Expr, b: Expr) -> Expr {
    match (is_zero(&a), is_zero(&b)) {
        (true, _) => b,
        (_, true) => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (is_zero(&a), is_zero(&b)) {
        (_, true) => a,
        (true, _) => neg(b),
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn neg(a: Expr) -> Expr {
    if is_zero(&a) {
        a
    } else {
        Expr::Neg(Box::new(a))
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) || is_zero(&b) {
        Expr::Const(0.0)
    } else if is_one(&a) {
        b
    } else if is_one(&b) {
        a
    } else {
        Expr::Mul(Box::new(a), Box::new(b))
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) {
        a
    } else {
        Expr::Div(Box::new(a), Box::new(b))
    }
}

fn call(f: Func, a: &Expr) -> Expr {
    Expr::Call(f, Box::new(a.clone()))
}

fn diff(e: &Expr, v: usize) -> Expr {
    match e {
        Expr::Const(_) => Expr::Const(0.0),
        Expr::Var(i) => Expr::Const(if *i == v { 1.0 } else { 0.0 }),
        Expr::Neg(a) => neg(diff(a, v)),
        Expr::Add(a, b) => add(diff(a, v), diff(b, v)),
        Expr::Sub(a, b) => sub(diff(a, v), diff(b, v)),
        Expr::Mul(a, b) => add(
            mul(diff(a, v), (**b).clone()),
            mul((**a).clone(), diff(b, v)),
        ),
        Expr::Div(a, b) => div(
            sub(
                mul(diff(a, v), (**b).clone()),
                mul((**a).clone(), diff(b, v)),
            ),
            Expr::Pow(b.clone(), Rational::integer(2)),
        ),
        Expr::Pow(a, r) => {
            let da = diff(a, v);
            if r.num() == 0 || is_zero(&da) {
                return Expr::Const(0.0);
            }
            let r1 = r.minus_one();
            let p = if r1.num() == 0 {
                Expr::Const(1.0)
            } else if r1 == Rational::integer(1) {
                (**a).clone()
            } else {
                Expr::Pow(a.clone(), r1)
            };
            mul(mul(Expr::Const(r.to_f64()), p), da)
        }
        Expr::Call(f, a) => {
            let da = diff(a, v);
            if is_zero(&da) {
                return Expr::Const(0.0);
            }
            let outer = match f {
                Func::Sin => call(Func::Cos, a),
                Func::Cos => neg(call(Func::Sin, a)),
                Func::Sinh => call(Func::Cosh, a),
                Func::Cosh => call(Func::Sinh, a),
                Func::Exp => call(Func::Exp, a),
                Func::Log => return div(da, (**a).clone()),
                Func::Sqrt => {
                    return div(da, mul(Expr::Const(2.0), call(Func::Sqrt, a)));
                }
                Func::Atan => {
                    return div(
                        da,
                        add(
                            Expr::Const(1.0),
                            Expr::Pow(a.clone(), Rational::integer(2)),
                        ),
                    );
                }
            };
            mul(outer, da)
        }
    }
}

fn write_expr(out: &mut impl fmt::Write, e: &Expr, vars: &[String], min: u8) -> fmt::Result {
    let paren = e.precedence() < min;
    if paren {
        out.write_char('(')?;
    }
    match e {
        Expr::Const(c) => write!(out, "{c}")?,
        Expr::Var(i) => out.write_str(&vars[*i])?,
        Expr::Neg(a) => {
            out.write_char('-')?;
            write_expr(out, a, vars, 3)?;
        }
        Expr::Add(a, b) | Expr::Sub(a, b) => {
            write_expr(out, a, vars, 1)?;
            out.write_str(if matches!(e, Expr::Add(..)) { " + " } else { " - " })?;
            write_expr(out, b, vars, 2)?;
        }
        Expr::Mul(a, b) | Expr::Div(a, b) => {
            write_expr(out, a, vars, 2)?;
            out.write_str(if matches!(e, Expr::Mul(..)) { " * " } else { " / " })?;
            write_expr(out, b, vars, 3)?;
        }
        Expr::Pow(a, r) => {
            write_expr(out, a, vars, 5)?;
            if r.is_integer() && r.num() >= 0 {
                write!(out, "^{}", r.num())?;
            } else if r.is_integer() {
                write!(out, "^({})", r.num())?;
            } else {
                write!(out, "^({}/{})", r.num(), r.den())?;
            }
        }
        Expr::Call(f, a) => {
            write!(out, "{}(", f.name())?;
            write_expr(out, a, vars, 0)?;
            out.write_char(')')?;
        }
    }
    if paren {
        out.write_char(')')?;
    }
    Ok(())
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, &self.root, &self.vars, 0)
    }
}
