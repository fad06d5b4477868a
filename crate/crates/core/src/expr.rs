//! Arithmetic expressions over the coordinates, evaluated in complex
//! arithmetic and required to be real.
//!
//! Variables: `x1 y1 x2 y2` (real parts and imaginary parts), `z1 z2`,
//! `z` (= `z1`), `i`, `pi`. Operators `+ - * / ^`. Functions: `abs2`, `abs`,
//! `re`, `im`, `conj`, `pow`, `exp`, `sqrt`, `ln`.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::RealFn;

#[derive(Clone, Debug, PartialEq)]
enum Ast {
    Num(f64),
    Coord(usize),
    Z(usize),
    I,
    Neg(Box<Ast>),
    Bin(char, Box<Ast>, Box<Ast>),
    Call(Func, Vec<Ast>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Func {
    Abs2,
    Abs,
    Re,
    Im,
    Conj,
    Pow,
    Exp,
    Sqrt,
    Ln,
}

impl Func {
    fn lookup(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "abs2" => (Func::Abs2, 1),
            "abs" => (Func::Abs, 1),
            "re" => (Func::Re, 1),
            "im" => (Func::Im, 1),
            "conj" => (Func::Conj, 1),
            "pow" => (Func::Pow, 2),
            "exp" => (Func::Exp, 1),
            "sqrt" => (Func::Sqrt, 1),
            "ln" => (Func::Ln, 1),
            _ => return None,
        })
    }
}

/// A parsed expression for points of C^n (real coordinates `x1, y1, ...`).
#[derive(Clone, Debug)]
pub struct Expr {
    ast: Ast,
    n: usize,
    source: String,
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    n: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            pos: self.pos,
            msg: msg.into(),
        })
    }

    fn skip(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip();
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

    fn expr(&mut self) -> Result<Ast> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => '+',
                Some(b'-') => '-',
                _ => return Ok(lhs),
            };
            self.pos += 1;
            lhs = Ast::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<Ast> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => '*',
                Some(b'/') => '/',
                _ => return Ok(lhs),
            };
            self.pos += 1;
            lhs = Ast::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Ast> {
        if self.eat(b'-') {
            return Ok(Ast::Neg(Box::new(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Ast> {
        let base = self.atom()?;
        if self.eat(b'^') {
            return Ok(Ast::Bin('^', Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Ast> {
        match self.peek() {
            None => self.err("unexpected end of input"),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return self.err("expected `)`");
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            Some(c) => self.err(format!("unexpected `{}`", c as char)),
        }
    }

    fn number(&mut self) -> Result<Ast> {
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            if self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        match text.parse::<f64>() {
            Ok(v) => Ok(Ast::Num(v)),
            Err(_) => {
                self.pos = start;
                self.err(format!("bad number `{text}`"))
            }
        }
    }

    fn ident(&mut self) -> Result<Ast> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        let coord = |c: &str, j: usize| -> Option<usize> {
            name.strip_prefix(c)
                .and_then(|d| d.parse::<usize>().ok())
                .filter(|&k| k >= 1)
                .map(|k| 2 * (k - 1) + j)
        };
        if let Some((f, arity)) = Func::lookup(name) {
            if !self.eat(b'(') {
                return self.err(format!("`{name}` needs `(`"));
            }
            let mut args = vec![self.expr()?];
            while self.eat(b',') {
                args.push(self.expr()?);
            }
            if !self.eat(b')') {
                return self.err("expected `)`");
            }
            if args.len() != arity {
                return self.err(format!("`{name}` takes {arity} argument(s)"));
            }
            return Ok(Ast::Call(f, args));
        }
        let ast = match name {
            "i" => Ast::I,
            "pi" => Ast::Num(std::f64::consts::PI),
            "z" => Ast::Z(0),
            "x" => Ast::Coord(0),
            "y" => Ast::Coord(1),
            _ => {
                if let Some(k) = coord("x", 0).or_else(|| coord("y", 1)) {
                    Ast::Coord(k)
                } else if let Some(k) = coord("z", 0) {
                    Ast::Z(k / 2)
                } else {
                    self.pos = start;
                    return self.err(format!("unknown name `{name}`"));
                }
            }
        };
        let limit = match &ast {
            Ast::Coord(k) => Some(*k),
            Ast::Z(j) => Some(2 * j),
            _ => None,
        };
        if limit.is_some_and(|k| k >= 2 * self.n) {
            self.pos = start;
            return self.err(format!("`{name}` is out of range for n = {}", self.n));
        }
        Ok(ast)
    }
}

fn eval(ast: &Ast, p: &[f64]) -> Complex64 {
    let c = |x: f64| Complex64::new(x, 0.0);
    match ast {
        Ast::Num(v) => c(*v),
        Ast::Coord(k) => c(p[*k]),
        Ast::Z(j) => Complex64::new(p[2 * j], p[2 * j + 1]),
        Ast::I => Complex64::new(0.0, 1.0),
        Ast::Neg(a) => -eval(a, p),
        Ast::Bin(op, a, b) => {
            let (x, y) = (eval(a, p), eval(b, p));
            match op {
                '+' => x + y,
                '-' => x - y,
                '*' => x * y,
                '/' => x / y,
                _ => power(x, y),
            }
        }
        Ast::Call(f, args) => {
            let x = eval(&args[0], p);
            match f {
                Func::Abs2 => c(x.norm_sqr()),
                Func::Abs => c(x.norm()),
                Func::Re => c(x.re),
                Func::Im => c(x.im),
                Func::Conj => x.conj(),
                Func::Pow => power(x, eval(&args[1], p)),
                Func::Exp => x.exp(),
                Func::Sqrt => {
                    if x.im == 0.0 && x.re >= 0.0 {
                        c(x.re.sqrt())
                    } else {
                        x.sqrt()
                    }
                }
                Func::Ln => x.ln(),
            }
        }
    }
}

/// Real powers stay real (so `x^2` of a negative `x` is exact); integer
/// exponents of complex bases use repeated multiplication.
fn power(x: Complex64, y: Complex64) -> Complex64 {
    if y.im == 0.0 {
        if x.im == 0.0 && (x.re >= 0.0 || y.re.fract() == 0.0) {
            return Complex64::new(x.re.powf(y.re), 0.0);
        }
        if y.re.fract() == 0.0 && y.re.abs() <= 64.0 {
            return x.powi(y.re as i32);
        }
    }
    x.powc(y)
}

impl Expr {
    pub fn parse(source: &str, n: usize) -> Result<Self> {
        let mut p = Parser {
            src: source.as_bytes(),
            pos: 0,
            n,
        };
        let ast = p.expr()?;
        if p.peek().is_some() {
            return p.err("trailing input");
        }
        Ok(Self {
            ast,
            n,
            source: source.to_string(),
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Real value at `p`, or NaN when the result has a non-negligible imaginary part.
    pub fn eval(&self, p: &[f64]) -> f64 {
        let v = eval(&self.ast, p);
        if v.im.abs() <= 1e-9 * (1.0 + v.re.abs()) {
            v.re
        } else {
            f64::NAN
        }
    }

    pub fn into_fn(self) -> RealFn {
        Arc::new(move |p: &[f64]| self.eval(p))
    }
}
