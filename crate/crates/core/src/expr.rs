//! A small arithmetic language for user-defined initial conditions and
//! nonlinearities.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | atom
//! atom   := number | 'x'<k> | 'u' | call | '(' expr ')'
//! call   := ('exp' | 'sin' | 'cos' | 'abs') '(' expr ')'
//!         | ('min' | 'max') '(' expr (',' expr)* ')'
//!         | ('sum' | 'sqnorm') '(' ')'
//! ```
//!
//! Coordinates are 1-based (`x1` is the first). `sum()` and `sqnorm()` range
//! over all coordinates of the input.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Coord(usize),
    U,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Unary(UnaryFn, Box<Expr>),
    MinMax(bool, Vec<Expr>),
    SumCoords,
    SqNorm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryFn {
    Exp,
    Sin,
    Cos,
    Abs,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self> {
        let mut p = Parser { src, pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != src.len() {
            return p.fail("unexpected trailing input");
        }
        Ok(e)
    }

    pub fn eval(&self, x: &[f64], u: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Coord(k) => x[*k],
            Expr::U => u,
            Expr::Neg(e) => -e.eval(x, u),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(x, u), b.eval(x, u));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                }
            }
            Expr::Unary(f, e) => {
                let v = e.eval(x, u);
                match f {
                    UnaryFn::Exp => v.exp(),
                    UnaryFn::Sin => v.sin(),
                    UnaryFn::Cos => v.cos(),
                    UnaryFn::Abs => v.abs(),
                }
            }
            Expr::MinMax(is_max, args) => {
                let vals = args.iter().map(|a| a.eval(x, u));
                if *is_max {
                    vals.fold(f64::NEG_INFINITY, f64::max)
                } else {
                    vals.fold(f64::INFINITY, f64::min)
                }
            }
            Expr::SumCoords => x.iter().sum(),
            Expr::SqNorm => x.iter().map(|v| v * v).sum(),
        }
    }

    /// Largest 0-based coordinate referenced, if any.
    pub fn max_coord(&self) -> Option<usize> {
        let mut best = None;
        self.visit(&mut |e| {
            if let Expr::Coord(k) = e {
                best = Some(best.map_or(*k, |b: usize| b.max(*k)));
            }
        });
        best
    }

    pub fn uses_u(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| found |= matches!(e, Expr::U));
        found
    }

    pub fn uses_coords(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| found |= matches!(e, Expr::Coord(_) | Expr::SumCoords | Expr::SqNorm));
        found
    }

    fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Neg(e) | Expr::Unary(_, e) => e.visit(f),
            Expr::Bin(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Expr::MinMax(_, args) => args.iter().for_each(|a| a.visit(f)),
            _ => {}
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Coord(k) => write!(f, "x{}", k + 1),
            Expr::U => write!(f, "u"),
            Expr::Neg(e) => write!(f, "-({e})"),
            Expr::Bin(op, a, b) => {
                let s = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                write!(f, "({a} {s} {b})")
            }
            Expr::Unary(func, e) => {
                let name = match func {
                    UnaryFn::Exp => "exp",
                    UnaryFn::Sin => "sin",
                    UnaryFn::Cos => "cos",
                    UnaryFn::Abs => "abs",
                };
                write!(f, "{name}({e})")
            }
            Expr::MinMax(is_max, args) => {
                write!(f, "{}(", if *is_max { "max" } else { "min" })?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
            Expr::SumCoords => write!(f, "sum()"),
            Expr::SqNorm => write!(f, "sqnorm()"),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn fail<T>(&self, message: &str) -> Result<T> {
        Err(Error::Parse {
            offset: self.pos,
            message: message.to_string(),
        })
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(|c| c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.as_bytes().get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            self.fail(&format!("expected '{}'", c as char))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat(b'+') {
                BinOp::Add
            } else if self.eat(b'-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat(b'*') {
                BinOp::Mul
            } else if self.eat(b'/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                while self.peek().is_some_and(|c| c.is_ascii_digit() || c == b'.') {
                    self.pos += 1;
                }
                if matches!(self.peek(), Some(b'e' | b'E')) {
                    let save = self.pos;
                    self.pos += 1;
                    if matches!(self.peek(), Some(b'+' | b'-')) {
                        self.pos += 1;
                    }
                    if self.peek().is_some_and(|c| c.is_ascii_digit()) {
                        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                            self.pos += 1;
                        }
                    } else {
                        self.pos = save;
                    }
                }
                match self.src[start..self.pos].parse::<f64>() {
                    Ok(v) => Ok(Expr::Const(v)),
                    Err(_) => {
                        self.pos = start;
                        self.fail("malformed number")
                    }
                }
            }
            Some(c) if c.is_ascii_alphabetic() => {
                while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == b'_') {
                    self.pos += 1;
                }
                let ident = &self.src[start..self.pos];
                self.ident(ident, start)
            }
            _ => self.fail("expected a number, variable, function call or '('"),
        }
    }

    fn ident(&mut self, ident: &str, start: usize) -> Result<Expr> {
        if ident == "u" {
            return Ok(Expr::U);
        }
        if let Some(idx) = ident.strip_prefix('x') {
            return match idx.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(Expr::Coord(k - 1)),
                _ => {
                    self.pos = start;
                    self.fail("coordinates are written x1, x2, ...")
                }
            };
        }
        let unary = match ident {
            "exp" => Some(UnaryFn::Exp),
            "sin" => Some(UnaryFn::Sin),
            "cos" => Some(UnaryFn::Cos),
            "abs" => Some(UnaryFn::Abs),
            _ => None,
        };
        self.expect(b'(')?;
        if let Some(f) = unary {
            let arg = self.expr()?;
            self.expect(b')')?;
            return Ok(Expr::Unary(f, Box::new(arg)));
        }
        match ident {
            "min" | "max" => {
                let mut args = vec![self.expr()?];
                while self.eat(b',') {
                    args.push(self.expr()?);
                }
                self.expect(b')')?;
                Ok(Expr::MinMax(ident == "max", args))
            }
            "sum" | "sqnorm" => {
                self.expect(b')')?;
                Ok(if ident == "sum" {
                    Expr::SumCoords
                } else {
                    Expr::SqNorm
                })
            }
            _ => {
                self.pos = start;
                self.fail(&format!("unknown function '{ident}'"))
            }
        }
    }
}
