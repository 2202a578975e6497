//! A small expression language for nonlinearities `f(θ, x, u, Du, D²u)`.

use crate::error::{Error, Result};
use num_complex::Complex64 as C64;
use std::collections::HashMap;
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    /// Spatial coordinate x_i (0-based axis).
    X(usize),
    /// Frequency-torus angle θ_j (0-based).
    Theta(usize),
    U,
    /// First derivative u_{x_i}.
    Du(usize),
    /// Second derivative u_{x_i x_j} with i <= j.
    D2u(usize, usize),
}

impl Var {
    pub fn is_field(&self) -> bool {
        matches!(self, Var::U | Var::Du(_) | Var::D2u(..))
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X(i) => write!(f, "x{}", i + 1),
            Var::Theta(j) => write!(f, "theta{}", j + 1),
            Var::U => write!(f, "u"),
            Var::Du(i) => write!(f, "u_x{}", i + 1),
            Var::D2u(i, j) => write!(f, "u_x{}x{}", i + 1, j + 1),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Add(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, u32),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
}

fn is_const(e: &Expr, v: f64) -> bool {
    matches!(e, Expr::Const(c) if *c == v)
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        _ if is_const(&a, 0.0) => b,
        _ if is_const(&b, 0.0) => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        _ if is_const(&a, 0.0) || is_const(&b, 0.0) => Expr::Const(0.0),
        _ if is_const(&a, 1.0) => b,
        _ if is_const(&b, 1.0) => a,
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(x) => Expr::Const(-x),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

fn pow(a: Expr, n: u32) -> Expr {
    match (n, &a) {
        (0, _) => Expr::Const(1.0),
        (1, _) => a,
        (_, Expr::Const(x)) => Expr::Const(x.powi(n as i32)),
        _ => Expr::Pow(Box::new(a), n),
    }
}

fn ipow(z: C64, n: u32) -> C64 {
    let mut acc = C64::new(1.0, 0.0);
    for _ in 0..n {
        acc *= z;
    }
    acc
}

impl Expr {
    pub fn diff(&self, v: &Var) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(w) => Expr::Const(if w == v { 1.0 } else { 0.0 }),
            Expr::Add(a, b) => add(a.diff(v), b.diff(v)),
            Expr::Mul(a, b) => add(mul(a.diff(v), (**b).clone()), mul((**a).clone(), b.diff(v))),
            Expr::Neg(a) => neg(a.diff(v)),
            Expr::Pow(a, n) => mul(
                mul(Expr::Const(*n as f64), pow((**a).clone(), n - 1)),
                a.diff(v),
            ),
            Expr::Sin(a) => mul(Expr::Cos(a.clone()), a.diff(v)),
            Expr::Cos(a) => neg(mul(Expr::Sin(a.clone()), a.diff(v))),
            Expr::Exp(a) => mul(Expr::Exp(a.clone()), a.diff(v)),
        }
    }

    fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                if !out.contains(v) {
                    out.push(*v)
                }
            }
            Expr::Add(a, b) | Expr::Mul(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Sin(a) | Expr::Cos(a) | Expr::Exp(a) => {
                a.collect_vars(out)
            }
        }
    }

    /// Polynomial degree in the field variables; `None` when a transcendental
    /// function is applied to something that depends on the field.
    pub fn field_degree(&self) -> Option<u32> {
        match self {
            Expr::Const(_) => Some(0),
            Expr::Var(v) => Some(u32::from(v.is_field())),
            Expr::Add(a, b) => Some(a.field_degree()?.max(b.field_degree()?)),
            Expr::Mul(a, b) => Some(a.field_degree()? + b.field_degree()?),
            Expr::Neg(a) => a.field_degree(),
            Expr::Pow(a, n) => Some(a.field_degree()? * n),
            Expr::Sin(a) | Expr::Cos(a) | Expr::Exp(a) => match a.field_degree()? {
                0 => Some(0),
                _ => None,
            },
        }
    }

    pub fn eval(&self, env: &dyn Fn(&Var) -> C64) -> C64 {
        match self {
            Expr::Const(c) => C64::new(*c, 0.0),
            Expr::Var(v) => env(v),
            Expr::Add(a, b) => a.eval(env) + b.eval(env),
            Expr::Mul(a, b) => a.eval(env) * b.eval(env),
            Expr::Neg(a) => -a.eval(env),
            Expr::Pow(a, n) => ipow(a.eval(env), *n),
            Expr::Sin(a) => a.eval(env).sin(),
            Expr::Cos(a) => a.eval(env).cos(),
            Expr::Exp(a) => a.eval(env).exp(),
        }
    }

    /// Pointwise evaluation over arrays of equal length `n`.
    pub fn eval_vec(&self, n: usize, env: &HashMap<Var, Vec<C64>>) -> Vec<C64> {
        let unary = |a: &Expr, g: fn(C64) -> C64| a.eval_vec(n, env).into_iter().map(g).collect();
        match self {
            Expr::Const(c) => vec![C64::new(*c, 0.0); n],
            Expr::Var(v) => env.get(v).cloned().unwrap_or_else(|| vec![C64::new(0.0, 0.0); n]),
            Expr::Add(a, b) => {
                let mut x = a.eval_vec(n, env);
                x.iter_mut().zip(b.eval_vec(n, env)).for_each(|(p, q)| *p += q);
                x
            }
            Expr::Mul(a, b) => {
                let mut x = a.eval_vec(n, env);
                x.iter_mut().zip(b.eval_vec(n, env)).for_each(|(p, q)| *p *= q);
                x
            }
            Expr::Neg(a) => unary(a, |z| -z),
            Expr::Pow(a, k) => a.eval_vec(n, env).into_iter().map(|z| ipow(z, *k)).collect(),
            Expr::Sin(a) => unary(a, |z| z.sin()),
            Expr::Cos(a) => unary(a, |z| z.cos()),
            Expr::Exp(a) => unary(a, |z| z.exp()),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Mul(a, b) => write!(f, "{a}*{b}"),
            Expr::Neg(a) => write!(f, "-({a})"),
            Expr::Pow(a, n) => write!(f, "({a})^{n}"),
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
        }
    }
}

/// A parsed nonlinearity together with an optional domain ball radius.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarFunctionSpec {
    pub expr: Expr,
    pub domain_radius: Option<f64>,
}

impl ScalarFunctionSpec {
    pub fn parse(src: &str) -> Result<Self> {
        let mut p = Parser { chars: src.chars().collect(), pos: 0 };
        let expr = p.expr()?;
        p.skip_ws();
        if p.pos != p.chars.len() {
            return Err(Error::Parse(format!("unexpected input at position {} in `{src}`", p.pos)));
        }
        Ok(ScalarFunctionSpec { expr, domain_radius: None })
    }

    pub fn from_expr(expr: Expr) -> Self {
        ScalarFunctionSpec { expr, domain_radius: None }
    }

    pub fn with_domain_radius(mut self, radius: f64) -> Self {
        self.domain_radius = Some(radius);
        self
    }

    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.expr.collect_vars(&mut out);
        out.sort();
        out
    }

    pub fn field_vars(&self) -> Vec<Var> {
        self.vars().into_iter().filter(Var::is_field).collect()
    }

    pub fn derivative(&self, v: &Var) -> ScalarFunctionSpec {
        ScalarFunctionSpec { expr: self.expr.diff(v), domain_radius: self.domain_radius }
    }

    pub fn field_degree(&self) -> Option<u32> {
        self.expr.field_degree()
    }

    /// Collocation points per axis as a multiple of `2K+1`.
    pub fn grid_factor(&self) -> usize {
        match self.field_degree() {
            Some(p) => ((p as usize + 2) / 2).max(1),
            None => 4,
        }
    }

    /// Largest spatial axis and θ index referenced, 1-based (0 if none).
    pub fn max_axes(&self) -> (usize, usize) {
        let mut x = 0;
        let mut t = 0;
        for v in self.vars() {
            match v {
                Var::X(i) | Var::Du(i) => x = x.max(i + 1),
                Var::D2u(i, j) => x = x.max(i.max(j) + 1),
                Var::Theta(j) => t = t.max(j + 1),
                Var::U => {}
            }
        }
        (x, t)
    }
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut acc = self.term()?;
        loop {
            if self.eat('+') {
                acc = add(acc, self.term()?);
            } else if self.eat('-') {
                acc = add(acc, neg(self.term()?));
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut acc = self.unary()?;
        loop {
            if self.peek() == Some('*') && self.chars.get(self.pos + 1) != Some(&'*') {
                self.pos += 1;
                acc = mul(acc, self.unary()?);
            } else if self.eat('/') {
                match self.unary()? {
                    Expr::Const(c) if c != 0.0 => acc = mul(acc, Expr::Const(1.0 / c)),
                    _ => return Err(Error::UnsupportedPrimitive("division by a non-constant".into())),
                }
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            return Ok(neg(self.unary()?));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        let is_pow = if self.eat('^') {
            true
        } else if self.peek() == Some('*') && self.chars.get(self.pos + 1) == Some(&'*') {
            self.pos += 2;
            true
        } else {
            false
        };
        if !is_pow {
            return Ok(base);
        }
        match self.unary()? {
            Expr::Const(c) if c >= 0.0 && c.fract() == 0.0 && c <= 64.0 => Ok(pow(base, c as u32)),
            other => Err(Error::UnsupportedPrimitive(format!("power with exponent {other}"))),
        }
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(Error::Parse("missing `)`".into()));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_alphabetic() || c == '_' => {
                let name = self.ident();
                if self.peek() == Some('(') {
                    self.pos += 1;
                    let arg = self.expr()?;
                    if !self.eat(')') {
                        return Err(Error::Parse("missing `)`".into()));
                    }
                    let arg = Box::new(arg);
                    return match name.as_str() {
                        "sin" => Ok(Expr::Sin(arg)),
                        "cos" => Ok(Expr::Cos(arg)),
                        "exp" => Ok(Expr::Exp(arg)),
                        _ => Err(Error::UnsupportedPrimitive(name)),
                    };
                }
                variable(&name)
            }
            Some(c) => Err(Error::Parse(format!("unexpected `{c}`"))),
            None => Err(Error::Parse("unexpected end of expression".into())),
        }
    }

    fn ident(&mut self) -> String {
        let start = self.pos;
        while self.pos < self.chars.len()
            && (self.chars[self.pos].is_alphanumeric() || self.chars[self.pos] == '_')
        {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.chars.len() && (self.chars[self.pos].is_ascii_digit() || self.chars[self.pos] == '.') {
            self.pos += 1;
        }
        if self.pos < self.chars.len() && matches!(self.chars[self.pos], 'e' | 'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.chars.len() && matches!(self.chars[self.pos], '+' | '-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < self.chars.len() && self.chars[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                self.pos = save;
            }
        }
        let s: String = self.chars[start..self.pos].iter().collect();
        s.parse::<f64>().map(Expr::Const).map_err(|_| Error::Parse(format!("bad number `{s}`")))
    }
}

fn axis_index(s: &str) -> Option<usize> {
    if s.is_empty() {
        return Some(0);
    }
    s.parse::<usize>().ok().filter(|&i| i >= 1).map(|i| i - 1)
}

fn variable(name: &str) -> Result<Expr> {
    let bad = || Error::Parse(format!("unknown variable `{name}`"));
    if name == "pi" {
        return Ok(Expr::Const(std::f64::consts::PI));
    }
    if name == "u" || name == "U" {
        return Ok(Expr::Var(Var::U));
    }
    if let Some(rest) = name.strip_prefix("theta").or_else(|| name.strip_prefix('θ')) {
        return axis_index(rest).map(|j| Expr::Var(Var::Theta(j))).ok_or_else(bad);
    }
    if let Some(rest) = name.strip_prefix('x') {
        return axis_index(rest).map(|i| Expr::Var(Var::X(i))).ok_or_else(bad);
    }
    let rest = name
        .strip_prefix("u_")
        .or_else(|| name.strip_prefix("U_"))
        .or_else(|| name.strip_prefix('u'))
        .ok_or_else(bad)?;
    // rest is one of: x, xx, x1, x1x2, ...
    let parts: Vec<&str> = rest.split('x').collect();
    if parts.first() != Some(&"") {
        return Err(bad());
    }
    let axes: Vec<usize> = parts[1..].iter().map(|p| axis_index(p)).collect::<Option<_>>().ok_or_else(bad)?;
    match axes.as_slice() {
        [i] => Ok(Expr::Var(Var::Du(*i))),
        [i, j] => Ok(Expr::Var(Var::D2u(*i.min(j), *i.max(j)))),
        _ => Err(bad()),
    }
}
