//! Potentials `V(x)` and nonlinearity coefficients `K(x)`.
//!
//! Two sources are supported: a small infix expression language over the
//! coordinates `x1..xN` and the radius `r = |x|`, and a handful of built-in
//! families used throughout the test fixtures.
//!
//! Grammar (whitespace-insensitive, `^` right-associative, unary minus binds
//! looser than `^` so `-r^2` is `-(r^2)`):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PotentialError {
    #[error("syntax error at byte {position}: expected one of {expected:?}")]
    Syntax {
        position: usize,
        expected: Vec<String>,
    },
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("coordinate x{index} referenced but point has dimension {dim}")]
    Dimension { index: usize, dim: usize },
    #[error("finite-difference step must be positive, got {0}")]
    BadStep(f64),
}

pub type Result<T> = std::result::Result<T, PotentialError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Cosh,
    Min,
    Max,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "cosh" => Func::Cosh,
            "min" => Func::Min,
            "max" => Func::Max,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Cosh => "cosh",
            Func::Min => "min",
            Func::Max => "max",
            Func::Abs => "abs",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

/// Expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    /// Zero-based coordinate index (`x1` is `Coord(0)`).
    Coord(usize),
    Radius,
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

impl Node {
    fn eval(&self, x: &[f64], r: f64) -> Result<f64> {
        if let Node::Bin(BinOp::Pow, base, e) = self {
            if let (Node::Radius, Node::Num(k)) = (base.as_ref(), e.as_ref()) {
                if *k > 0.0 && k.fract() == 0.0 && (k / 2.0).fract() == 0.0 && *k <= 64.0 {
                    let r2: f64 = x.iter().map(|c| c * c).sum();
                    return Ok(r2.powi((k / 2.0) as i32));
                }
            }
        }
        let v = match self {
            Node::Num(c) => *c,
            Node::Coord(i) => *x.get(*i).ok_or(PotentialError::Dimension {
                index: i + 1,
                dim: x.len(),
            })?,
            Node::Radius => r,
            Node::Neg(a) => -a.eval(x, r)?,
            Node::Bin(op, a, b) => {
                let a = a.eval(x, r)?;
                let b = b.eval(x, r)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(PotentialError::Domain(format!("division by zero ({a}/0)")));
                        }
                        a / b
                    }
                    BinOp::Pow => pow(a, b)?,
                }
            }
            Node::Call(f, args) => {
                let a = args[0].eval(x, r)?;
                match f {
                    Func::Exp => a.exp(),
                    Func::Log => {
                        if a <= 0.0 {
                            return Err(PotentialError::Domain(format!("log of non-positive value {a}")));
                        }
                        a.ln()
                    }
                    Func::Cosh => a.cosh(),
                    Func::Abs => a.abs(),
                    Func::Min => a.min(args[1].eval(x, r)?),
                    Func::Max => a.max(args[1].eval(x, r)?),
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(PotentialError::Domain(format!("non-finite value in `{self}`")))
        }
    }

    fn max_coord(&self) -> usize {
        match self {
            Node::Coord(i) => i + 1,
            Node::Num(_) | Node::Radius => 0,
            Node::Neg(a) => a.max_coord(),
            Node::Bin(_, a, b) => a.max_coord().max(b.max_coord()),
            Node::Call(_, args) => args.iter().map(Node::max_coord).max().unwrap_or(0),
        }
    }
}

fn pow(a: f64, b: f64) -> Result<f64> {
    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
        if a == 0.0 && b < 0.0 {
            return Err(PotentialError::Domain("zero raised to a negative power".into()));
        }
        return Ok(a.powi(b as i32));
    }
    if a < 0.0 {
        return Err(PotentialError::Domain(format!(
            "negative base {a} with non-integer exponent {b}"
        )));
    }
    if a == 0.0 && b < 0.0 {
        return Err(PotentialError::Domain("zero raised to a negative power".into()));
    }
    Ok(a.powf(b))
}

/// Canonical printing: every compound node is parenthesized, so the printed
/// form re-parses to a tree that evaluates identically.
impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Num(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => {
                write!(f, "(-{:?})", -c)
            }
            Node::Num(c) => write!(f, "{c:?}"),
            Node::Coord(i) => write!(f, "x{}", i + 1),
            Node::Radius => f.write_str("r"),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Node::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// A parsed potential expression.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialExpr {
    ast: Node,
}

impl PotentialExpr {
    pub fn from_ast(ast: Node) -> Self {
        Self { ast }
    }

    pub fn ast(&self) -> &Node {
        &self.ast
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        self.ast.eval(x, r)
    }

    /// Largest coordinate index referenced (1-based); 0 if none.
    pub fn dimension_required(&self) -> usize {
        self.ast.max_coord()
    }
}

impl fmt::Display for PotentialExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.ast.fmt(f)
    }
}

pub fn parse_potential(src: &str) -> Result<PotentialExpr> {
    let mut p = Parser { src: src.as_bytes(), pos: 0 };
    p.skip_ws();
    if p.pos == p.src.len() {
        return Err(p.error(&["expression"]));
    }
    let ast = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.error(&["operator", "end of input"]));
    }
    Ok(PotentialExpr { ast })
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, expected: &[&str]) -> PotentialError {
        PotentialError::Syntax {
            position: self.pos,
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat(b'-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let exp = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error(&[")"]));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            _ => Err(self.error(&["number", "identifier", "("])),
        }
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        let s = self.src;
        let digits = |p: &mut usize| {
            while *p < s.len() && s[*p].is_ascii_digit() {
                *p += 1;
            }
        };
        let mut p = self.pos;
        digits(&mut p);
        if p < s.len() && s[p] == b'.' {
            p += 1;
            digits(&mut p);
        }
        if p < s.len() && (s[p] == b'e' || s[p] == b'E') {
            let mut q = p + 1;
            if q < s.len() && (s[q] == b'+' || s[q] == b'-') {
                q += 1;
            }
            if q < s.len() && s[q].is_ascii_digit() {
                digits(&mut q);
                p = q;
            }
        }
        let text = std::str::from_utf8(&s[start..p]).expect("ascii");
        match text.parse::<f64>() {
            Ok(v) => {
                self.pos = p;
                Ok(Node::Num(v))
            }
            Err(_) => Err(self.error(&["number"])),
        }
    }

    fn ident(&mut self) -> Result<Node> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        if let Some(func) = Func::from_name(name) {
            if !self.eat(b'(') {
                return Err(self.error(&["("]));
            }
            let mut args = vec![self.expr()?];
            while self.eat(b',') {
                args.push(self.expr()?);
            }
            if !self.eat(b')') {
                return Err(self.error(&[",", ")"]));
            }
            if args.len() != func.arity() {
                return Err(PotentialError::Syntax {
                    position: start,
                    expected: vec![format!("{} argument(s) for {}", func.arity(), name)],
                });
            }
            return Ok(Node::Call(func, args));
        }
        match name {
            "r" => Ok(Node::Radius),
            "pi" => Ok(Node::Num(std::f64::consts::PI)),
            _ => {
                if let Some(idx) = name.strip_prefix('x') {
                    if let Ok(k) = idx.parse::<usize>() {
                        if k >= 1 && !idx.starts_with('0') {
                            return Ok(Node::Coord(k - 1));
                        }
                    }
                }
                Err(PotentialError::UnknownIdentifier(name.to_string()))
            }
        }
    }
}

/// Built-in potential families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum BuiltinPotential {
    /// `V ≡ a`.
    Constant { a: f64 },
    /// `V = -|x|²`.
    HarmonicRepulsive,
    /// `V = a + |x|² − (5/4)|x|⁴/(1+|x|²) + γ x1|x|²/(1+|x|²)`: strict local
    /// minimum `a` at the origin, `V ~ −|x|²/4` at infinity.
    LocalMinUnbounded {
        a: f64,
        #[serde(default)]
        gamma: f64,
    },
    /// `V = a − x1² + s (x2² + … + xN²)`: interior maximum (N = 1) or saddle
    /// (N ≥ 2, s > 0) at the origin, unbounded below along x1.
    SaddleUnbounded {
        a: f64,
        #[serde(default)]
        s: f64,
    },
    /// `V ≡ a`, `K = b (1+|x|²)^{−κ/2}`.
    Competing { a: f64, b: f64, kappa: f64 },
}

impl BuiltinPotential {
    /// Returns `(V(x), K(x))`; `K ≡ 1` for every family except `Competing`.
    pub fn eval_pair(&self, x: &[f64]) -> (f64, f64) {
        let r2: f64 = x.iter().map(|c| c * c).sum();
        match *self {
            BuiltinPotential::Constant { a } => (a, 1.0),
            BuiltinPotential::HarmonicRepulsive => (-r2, 1.0),
            BuiltinPotential::LocalMinUnbounded { a, gamma } => {
                let x1 = x.first().copied().unwrap_or(0.0);
                let v = a + r2 - 1.25 * r2 * r2 / (1.0 + r2) + gamma * x1 * r2 / (1.0 + r2);
                (v, 1.0)
            }
            BuiltinPotential::SaddleUnbounded { a, s } => {
                let x1 = x.first().copied().unwrap_or(0.0);
                (a - x1 * x1 + s * (r2 - x1 * x1), 1.0)
            }
            BuiltinPotential::Competing { a, b, kappa } => {
                let k = if kappa == 0.0 { b } else { b * (1.0 + r2).powf(-0.5 * kappa) };
                (a, k)
            }
        }
    }
}

/// A potential from either source.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    Expr(PotentialExpr),
    Builtin(BuiltinPotential),
}

impl Potential {
    pub fn constant(a: f64) -> Self {
        Potential::Builtin(BuiltinPotential::Constant { a })
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.eval_pair(x).map(|(v, _)| v)
    }

    /// `(V, K)` at `x`. Expressions carry `K ≡ 1`.
    pub fn eval_pair(&self, x: &[f64]) -> Result<(f64, f64)> {
        match self {
            Potential::Expr(e) => Ok((e.eval(x)?, 1.0)),
            Potential::Builtin(b) => Ok(b.eval_pair(x)),
        }
    }

    pub fn dimension_required(&self) -> usize {
        match self {
            Potential::Expr(e) => e.dimension_required(),
            Potential::Builtin(_) => 0,
        }
    }
}

impl From<PotentialExpr> for Potential {
    fn from(e: PotentialExpr) -> Self {
        Potential::Expr(e)
    }
}

impl From<BuiltinPotential> for Potential {
    fn from(b: BuiltinPotential) -> Self {
        Potential::Builtin(b)
    }
}

pub fn eval_potential(p: &Potential, point: &[f64]) -> Result<f64> {
    p.eval(point)
}

/// Central-difference gradient with step `h`.
pub fn grad_potential(p: &Potential, point: &[f64], h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(PotentialError::BadStep(h));
    }
    let mut x = point.to_vec();
    let mut grad = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        x[i] = point[i] + h;
        let fp = p.eval(&x)?;
        x[i] = point[i] - h;
        let fm = p.eval(&x)?;
        x[i] = point[i];
        grad.push((fp - fm) / (2.0 * h));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, x: &[f64]) -> f64 {
        parse_potential(src).unwrap().eval(x).unwrap()
    }

    #[test]
    fn parses_documented_examples() {
        assert_eq!(ev("-r^2", &[1.0, 1.0]), -2.0);
        assert_eq!(ev("log(r^2)", &[1.0]), 0.0);
        assert!((ev("min(x1^2, 4) - 0.25*r^2", &[3.0]) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("2^3^2", &[0.0]), 512.0);
        assert_eq!(ev("-2^2", &[0.0]), -4.0);
        assert_eq!(ev("2^-1", &[0.0]), 0.5);
        assert_eq!(ev("1 - 2 - 3", &[0.0]), -4.0);
        assert_eq!(ev("8 / 4 / 2", &[0.0]), 1.0);
        assert_eq!(ev("1 + 2 * 3", &[0.0]), 7.0);
        assert_eq!(ev(" ( 1 +2 )*3 ", &[0.0]), 9.0);
        assert_eq!(ev("1.5e1 + x2", &[0.0, 1.0]), 16.0);
    }

    #[test]
    fn syntax_errors_carry_position() {
        match parse_potential("1 + * 2") {
            Err(PotentialError::Syntax { position, .. }) => assert_eq!(position, 4),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_potential(""), Err(PotentialError::Syntax { .. })));
        assert!(matches!(parse_potential("(1 + 2"), Err(PotentialError::Syntax { .. })));
        assert!(matches!(parse_potential("1 2"), Err(PotentialError::Syntax { .. })));
        assert!(matches!(parse_potential("min(1)"), Err(PotentialError::Syntax { .. })));
        assert_eq!(
            parse_potential("y + 1"),
            Err(PotentialError::UnknownIdentifier("y".into()))
        );
        assert_eq!(
            parse_potential("x0"),
            Err(PotentialError::UnknownIdentifier("x0".into()))
        );
    }

    #[test]
    fn domain_errors_are_reported() {
        let e = parse_potential("log(x1)").unwrap();
        assert!(matches!(e.eval(&[0.0]), Err(PotentialError::Domain(_))));
        assert!(matches!(e.eval(&[-1.0]), Err(PotentialError::Domain(_))));
        let d = parse_potential("1/x1").unwrap();
        assert!(matches!(d.eval(&[0.0]), Err(PotentialError::Domain(_))));
        let p = parse_potential("x1^0.5").unwrap();
        assert!(matches!(p.eval(&[-1.0]), Err(PotentialError::Domain(_))));
        let o = parse_potential("exp(x1)").unwrap();
        assert!(matches!(o.eval(&[1000.0]), Err(PotentialError::Domain(_))));
        let x2 = parse_potential("x2").unwrap();
        assert_eq!(x2.eval(&[1.0]), Err(PotentialError::Dimension { index: 2, dim: 1 }));
        assert_eq!(x2.dimension_required(), 2);
    }

    #[test]
    fn builtins() {
        let h = Potential::Builtin(BuiltinPotential::HarmonicRepulsive);
        assert_eq!(eval_potential(&h, &[0.0, 0.0]).unwrap(), 0.0);
        let c = Potential::constant(2.0);
        assert_eq!(eval_potential(&c, &[3.0, -7.0]).unwrap(), 2.0);
        let comp = BuiltinPotential::Competing { a: 1.0, b: 2.0, kappa: 0.0 };
        assert_eq!(comp.eval_pair(&[5.0]), (1.0, 2.0));
        assert_eq!(comp.eval_pair(&[-0.3, 9.0]), (1.0, 2.0));
    }

    #[test]
    fn local_min_family_shape() {
        let v = BuiltinPotential::LocalMinUnbounded { a: 0.5, gamma: 0.5 };
        let v0 = v.eval_pair(&[0.0]).0;
        assert_eq!(v0, 0.5);
        // strict local minimum at the origin
        for &x in &[-0.3, -0.1, -0.01, 0.01, 0.1, 0.3] {
            assert!(v.eval_pair(&[x]).0 > v0);
        }
        // (V1) on the unit ball: boundary values exceed the interior minimum
        assert!(v.eval_pair(&[1.0]).0 > v0 && v.eval_pair(&[-1.0]).0 > v0);
        // V/|x|² → −1/4 at infinity
        let x = 1e4;
        let ratio = v.eval_pair(&[x]).0 / (x * x);
        assert!((ratio + 0.25).abs() < 1e-3, "{ratio}");
    }

    #[test]
    fn gradients() {
        let p = Potential::Expr(parse_potential("-r^2").unwrap());
        let g = grad_potential(&p, &[1.0, 0.0], 1e-4).unwrap();
        assert!((g[0] + 2.0).abs() < 1e-8 && g[1].abs() < 1e-8);
        let c = Potential::constant(3.0);
        assert_eq!(grad_potential(&c, &[1.0, 2.0], 1e-3).unwrap(), vec![0.0, 0.0]);
        let q = Potential::Expr(parse_potential("x1^2").unwrap());
        assert!((grad_potential(&q, &[3.0], 1e-4).unwrap()[0] - 6.0).abs() < 1e-8);
        assert!(matches!(grad_potential(&q, &[3.0], 0.0), Err(PotentialError::BadStep(_))));
        let l = Potential::Expr(parse_potential("log(x1)").unwrap());
        assert!(grad_potential(&l, &[1e-5], 1e-4).is_err());
    }

    #[test]
    fn canonical_print_round_trips() {
        for src in ["-r^2", "min(x1^2, 4) - 0.25*r^2", "2^3^2", "-(-3)", "exp(-x1)/cosh(x2)"] {
            let a = parse_potential(src).unwrap();
            let printed = a.to_string();
            let b = parse_potential(&printed).unwrap();
            assert_eq!(b.to_string(), printed);
            let x = [0.7, -1.3];
            assert_eq!(a.eval(&x).unwrap().to_bits(), b.eval(&x).unwrap().to_bits());
        }
    }
}
