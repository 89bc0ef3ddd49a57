//! A small closed-form expression grammar over coordinates x1, x2, x3:
//! +, -, *, /, ^, sin, cos, exp, numeric literals, parentheses, and unary
//! minus. Used for boundary data, fidelity data, and manufactured exact
//! fields, so expressions are differentiable symbolically (general powers
//! introduce an internal logarithm node that the parser never produces).
//!
//! The parser is hand-rolled recursive descent with an explicit depth limit;
//! it must be total on arbitrary input (it is a fuzz target).

use std::fmt;
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ExprError {
    #[error("unexpected character '{ch}' at byte {pos}")]
    UnexpectedChar { ch: char, pos: usize },
    #[error("malformed number at byte {pos}")]
    BadNumber { pos: usize },
    #[error("unknown identifier '{name}' at byte {pos}")]
    UnknownIdent { name: String, pos: usize },
    #[error("unexpected end of expression")]
    UnexpectedEnd,
    #[error("unexpected token at byte {pos}")]
    UnexpectedToken { pos: usize },
    #[error("expression nesting exceeds the depth limit")]
    TooDeep,
    #[error("trailing input at byte {pos}")]
    TrailingInput { pos: usize },
}

const MAX_DEPTH: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Coordinate x{axis+1}.
    Coord(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
    /// Internal: produced only by differentiation of general powers.
    Ln(Box<Expr>),
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Coord(a) => write!(f, "x{}", a + 1),
            Expr::Add(l, r) => write!(f, "({l} + {r})"),
            Expr::Sub(l, r) => write!(f, "({l} - {r})"),
            Expr::Mul(l, r) => write!(f, "({l} * {r})"),
            Expr::Div(l, r) => write!(f, "({l} / {r})"),
            Expr::Pow(l, r) => write!(f, "({l} ^ {r})"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Sin(e) => write!(f, "sin({e})"),
            Expr::Cos(e) => write!(f, "cos({e})"),
            Expr::Exp(e) => write!(f, "exp({e})"),
            Expr::Ln(e) => write!(f, "ln({e})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<(Token, usize)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'+' => {
                out.push((Token::Plus, i));
                i += 1;
            }
            b'-' => {
                out.push((Token::Minus, i));
                i += 1;
            }
            b'*' => {
                out.push((Token::Star, i));
                i += 1;
            }
            b'/' => {
                out.push((Token::Slash, i));
                i += 1;
            }
            b'^' => {
                out.push((Token::Caret, i));
                i += 1;
            }
            b'(' => {
                out.push((Token::LParen, i));
                i += 1;
            }
            b')' => {
                out.push((Token::RParen, i));
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_digit() || bytes[i] == b'.' || bytes[i] == b'e'
                        || bytes[i] == b'E'
                        || ((bytes[i] == b'+' || bytes[i] == b'-')
                            && i > start
                            && (bytes[i - 1] == b'e' || bytes[i - 1] == b'E')))
                {
                    i += 1;
                }
                let text = &src[start..i];
                let value: f64 =
                    text.parse().map_err(|_| ExprError::BadNumber { pos: start })?;
                if !value.is_finite() {
                    return Err(ExprError::BadNumber { pos: start });
                }
                out.push((Token::Num(value), start));
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                out.push((Token::Ident(src[start..i].to_string()), start));
            }
            _ => {
                let ch = src[i..].chars().next().unwrap_or('?');
                return Err(ExprError::UnexpectedChar { ch, pos: i });
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|t| &t.0)
    }

    fn here(&self) -> usize {
        self.tokens.get(self.pos).map(|t| t.1).unwrap_or(usize::MAX)
    }

    fn advance(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|t| t.0.clone());
        self.pos += 1;
        t
    }

    fn expr(&mut self, depth: usize) -> Result<Expr, ExprError> {
        if depth > MAX_DEPTH {
            return Err(ExprError::TooDeep);
        }
        let mut lhs = self.term(depth + 1)?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.advance();
                    let rhs = self.term(depth + 1)?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
                }
                Some(Token::Minus) => {
                    self.advance();
                    let rhs = self.term(depth + 1)?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self, depth: usize) -> Result<Expr, ExprError> {
        if depth > MAX_DEPTH {
            return Err(ExprError::TooDeep);
        }
        let mut lhs = self.factor(depth + 1)?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.advance();
                    let rhs = self.factor(depth + 1)?;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
                }
                Some(Token::Slash) => {
                    self.advance();
                    let rhs = self.factor(depth + 1)?;
                    lhs = Expr::Div(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self, depth: usize) -> Result<Expr, ExprError> {
        if depth > MAX_DEPTH {
            return Err(ExprError::TooDeep);
        }
        if matches!(self.peek(), Some(Token::Minus)) {
            self.advance();
            return Ok(Expr::Neg(Box::new(self.factor(depth + 1)?)));
        }
        self.power(depth + 1)
    }

    fn power(&mut self, depth: usize) -> Result<Expr, ExprError> {
        if depth > MAX_DEPTH {
            return Err(ExprError::TooDeep);
        }
        let base = self.atom(depth + 1)?;
        if matches!(self.peek(), Some(Token::Caret)) {
            self.advance();
            // right-associative, and unary minus binds below the exponent
            let exponent = self.factor(depth + 1)?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self, depth: usize) -> Result<Expr, ExprError> {
        if depth > MAX_DEPTH {
            return Err(ExprError::TooDeep);
        }
        let pos = self.here();
        match self.advance() {
            Some(Token::Num(v)) => Ok(Expr::Const(v)),
            Some(Token::LParen) => {
                let inner = self.expr(depth + 1)?;
                match self.advance() {
                    Some(Token::RParen) => Ok(inner),
                    Some(_) => Err(ExprError::UnexpectedToken { pos: self.here() }),
                    None => Err(ExprError::UnexpectedEnd),
                }
            }
            Some(Token::Ident(name)) => match name.as_str() {
                "x1" => Ok(Expr::Coord(0)),
                "x2" => Ok(Expr::Coord(1)),
                "x3" => Ok(Expr::Coord(2)),
                "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                "sin" | "cos" | "exp" => {
                    match self.advance() {
                        Some(Token::LParen) => {}
                        Some(_) => return Err(ExprError::UnexpectedToken { pos: self.here() }),
                        None => return Err(ExprError::UnexpectedEnd),
                    }
                    let arg = self.expr(depth + 1)?;
                    match self.advance() {
                        Some(Token::RParen) => {}
                        Some(_) => return Err(ExprError::UnexpectedToken { pos: self.here() }),
                        None => return Err(ExprError::UnexpectedEnd),
                    }
                    Ok(match name.as_str() {
                        "sin" => Expr::Sin(Box::new(arg)),
                        "cos" => Expr::Cos(Box::new(arg)),
                        _ => Expr::Exp(Box::new(arg)),
                    })
                }
                _ => Err(ExprError::UnknownIdent { name, pos }),
            },
            Some(_) => Err(ExprError::UnexpectedToken { pos }),
            None => Err(ExprError::UnexpectedEnd),
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ExprError> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr(0)?;
        if p.pos != p.tokens.len() {
            return Err(ExprError::TrailingInput { pos: p.here() });
        }
        Ok(e)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Coord(a) => x.get(*a).copied().unwrap_or(0.0),
            Expr::Add(l, r) => l.eval(x) + r.eval(x),
            Expr::Sub(l, r) => l.eval(x) - r.eval(x),
            Expr::Mul(l, r) => l.eval(x) * r.eval(x),
            Expr::Div(l, r) => l.eval(x) / r.eval(x),
            Expr::Pow(l, r) => l.eval(x).powf(r.eval(x)),
            Expr::Neg(e) => -e.eval(x),
            Expr::Sin(e) => e.eval(x).sin(),
            Expr::Cos(e) => e.eval(x).cos(),
            Expr::Exp(e) => e.eval(x).exp(),
            Expr::Ln(e) => e.eval(x).ln(),
        }
    }

    /// Symbolic partial derivative with respect to coordinate `axis`.
    pub fn diff(&self, axis: usize) -> Expr {
        use Expr::*;
        match self {
            Const(_) => Const(0.0),
            Coord(a) => Const(if *a == axis { 1.0 } else { 0.0 }),
            Add(l, r) => Add(Box::new(l.diff(axis)), Box::new(r.diff(axis))),
            Sub(l, r) => Sub(Box::new(l.diff(axis)), Box::new(r.diff(axis))),
            Mul(l, r) => Add(
                Box::new(Mul(Box::new(l.diff(axis)), r.clone())),
                Box::new(Mul(l.clone(), Box::new(r.diff(axis)))),
            ),
            Div(l, r) => Div(
                Box::new(Sub(
                    Box::new(Mul(Box::new(l.diff(axis)), r.clone())),
                    Box::new(Mul(l.clone(), Box::new(r.diff(axis)))),
                )),
                Box::new(Mul(r.clone(), r.clone())),
            ),
            Pow(base, expo) => match expo.as_ref() {
                Const(c) => Mul(
                    Box::new(Mul(
                        Box::new(Const(*c)),
                        Box::new(Pow(base.clone(), Box::new(Const(c - 1.0)))),
                    )),
                    Box::new(base.diff(axis)),
                ),
                _ => {
                    // d(u^v) = u^v (v' ln u + v u'/u)
                    let u = base.clone();
                    let v = expo.clone();
                    Mul(
                        Box::new(Pow(u.clone(), v.clone())),
                        Box::new(Add(
                            Box::new(Mul(Box::new(expo.diff(axis)), Box::new(Ln(u.clone())))),
                            Box::new(Div(
                                Box::new(Mul(v, Box::new(base.diff(axis)))),
                                u,
                            )),
                        )),
                    )
                }
            },
            Neg(e) => Neg(Box::new(e.diff(axis))),
            Sin(e) => Mul(Box::new(Cos(e.clone())), Box::new(e.diff(axis))),
            Cos(e) => Neg(Box::new(Mul(Box::new(Sin(e.clone())), Box::new(e.diff(axis))))),
            Exp(e) => Mul(Box::new(Exp(e.clone())), Box::new(e.diff(axis))),
            Ln(e) => Div(Box::new(e.diff(axis)), e.clone()),
        }
    }
}

/// A vector-valued expression (one component per spatial dimension).
#[derive(Debug, Clone)]
pub struct VectorExpr {
    pub components: Vec<Expr>,
}

impl VectorExpr {
    pub fn parse(sources: &[String]) -> Result<Self, ExprError> {
        let components =
            sources.iter().map(|s| Expr::parse(s)).collect::<Result<Vec<_>, _>>()?;
        Ok(Self { components })
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| c.eval(x)).collect()
    }

    /// Symbolic gradients per component.
    pub fn gradients(&self, dim: usize) -> Vec<Vec<Expr>> {
        self.components
            .iter()
            .map(|c| (0..dim).map(|a| c.diff(a)).collect())
            .collect()
    }
}

impl crate::diag::SmoothField for (VectorExpr, Vec<Vec<Expr>>) {
    fn value(&self, x: &[f64]) -> [f64; 3] {
        let v = self.0.eval(x);
        let mut out = [0.0; 3];
        out[..v.len().min(3)].copy_from_slice(&v[..v.len().min(3)]);
        out
    }
    fn grad(&self, x: &[f64]) -> [[f64; 3]; 3] {
        let mut g = [[0.0; 3]; 3];
        for (i, row) in self.1.iter().enumerate().take(3) {
            for (j, e) in row.iter().enumerate().take(3) {
                g[i][j] = e.eval(x);
            }
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn parses_and_evaluates_basic_arithmetic() {
        let e = Expr::parse("2 + 3 * 4 - 6 / 2").unwrap();
        assert_eq!(e.eval(&[]), 11.0);
        let e = Expr::parse("2 ^ 3 ^ 2").unwrap(); // right assoc
        assert_eq!(e.eval(&[]), 512.0);
        let e = Expr::parse("-(x1 + 1) * x2").unwrap();
        assert_eq!(e.eval(&[2.0, 5.0]), -15.0);
        let e = Expr::parse("sin(pi / 2)").unwrap();
        assert_relative_eq!(e.eval(&[]), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn reports_errors_with_positions() {
        assert!(matches!(Expr::parse("x1 +"), Err(ExprError::UnexpectedEnd)));
        assert!(matches!(Expr::parse("foo(1)"), Err(ExprError::UnknownIdent { .. })));
        assert!(matches!(Expr::parse("1 $ 2"), Err(ExprError::UnexpectedChar { .. })));
        assert!(matches!(Expr::parse("1 2"), Err(ExprError::TrailingInput { .. })));
        assert!(matches!(Expr::parse("1..2"), Err(ExprError::BadNumber { .. })));
        assert!(matches!(Expr::parse("sin x1"), Err(ExprError::UnexpectedToken { .. })));
    }

    #[test]
    fn deep_nesting_is_rejected_not_overflowed() {
        let mut s = String::new();
        for _ in 0..100_000 {
            s.push('(');
        }
        s.push('1');
        assert!(matches!(Expr::parse(&s), Err(ExprError::TooDeep)));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let cases = [
            "sin(2*x1) * cos(x2)",
            "exp(x1 * x2) + x1 ^ 3",
            "(x1 + x2) ^ 2.5",
            "x1 / (1 + x2 ^ 2)",
            "x1 ^ x2",
        ];
        for src in cases {
            let e = Expr::parse(src).unwrap();
            for axis in 0..2 {
                let d = e.diff(axis);
                for x in [[0.4, 0.8], [1.2, 0.3], [0.9, 1.7]] {
                    let h = 1e-6;
                    let mut xp = x;
                    let mut xm = x;
                    xp[axis] += h;
                    xm[axis] -= h;
                    let fd = (e.eval(&xp) - e.eval(&xm)) / (2.0 * h);
                    let an = d.eval(&x);
                    assert!(
                        (fd - an).abs() <= 1e-6 * (1.0 + fd.abs().max(an.abs())),
                        "{src} d/dx{axis} at {x:?}: {fd} vs {an}"
                    );
                }
            }
        }
    }

    #[test]
    fn evaluation_is_total_on_division_by_zero() {
        let e = Expr::parse("1 / x1").unwrap();
        assert!(e.eval(&[0.0]).is_infinite());
        let e = Expr::parse("(-1) ^ 0.5").unwrap();
        assert!(e.eval(&[]).is_nan());
    }
}
