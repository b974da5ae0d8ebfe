//! Scalar expression language used for matrix entries and nonlinear terms.
//!
//! Grammar (EBNF, whitespace-insensitive):
//!
//! ```text
//! expr    := term (("+" | "-") term)*          ; left associative
//! term    := unary (("*" | "/") unary)*        ; left associative
//! unary   := "-" unary | power
//! power   := atom ("^" unary)?                 ; right associative, binds tighter than unary "-"
//! atom    := number | ident | ident "(" expr ("," expr)* ")" | "(" expr ")"
//! ```
//!
//! Identifiers are either variables (`t`, `z1..zn`, `w1..wn`, `x1..`, `y1..`),
//! the named constants `pi` and `e`, or one of the built-in functions
//! `sin cos exp tanh abs sign` (one argument) and `min max` (two arguments).
//! Evaluation follows IEEE-754 double semantics and is deterministic.

use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Tanh,
    Abs,
    Sign,
    Min,
    Max,
}

impl Func {
    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Tanh => "tanh",
            Func::Abs => "abs",
            Func::Sign => "sign",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "tanh" => Func::Tanh,
            "abs" => Func::Abs,
            "sign" => Func::Sign,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }
}

/// Parsed expression tree. Named constants are folded into literals at parse time.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown function `{name}` at offset {offset}")]
    UnknownFunction { offset: usize, name: String },
    #[error("function `{name}` expects {expected} argument(s), got {got} (offset {offset})")]
    Arity {
        offset: usize,
        name: String,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("non-finite result in `{context}`")]
    NonFinite { context: String },
}

/// Variable lookup used by [`Expr::eval`].
pub trait VarResolver {
    fn resolve(&self, name: &str) -> Option<f64>;
}

impl<F: Fn(&str) -> Option<f64>> VarResolver for F {
    fn resolve(&self, name: &str) -> Option<f64> {
        self(name)
    }
}

struct Tokenizer<'a> {
    src: &'a [u8],
    pos: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

impl<'a> Tokenizer<'a> {
    fn new(src: &'a str) -> Self {
        Tokenizer {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    /// Returns the next token together with its starting byte offset.
    fn next(&mut self) -> Result<(Tok, usize), ParseError> {
        self.skip_ws();
        let start = self.pos;
        if self.pos >= self.src.len() {
            return Ok((Tok::End, start));
        }
        let c = self.src[self.pos];
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            b'0'..=b'9' | b'.' => {
                let mut end = self.pos;
                while end < self.src.len()
                    && (self.src[end].is_ascii_digit() || self.src[end] == b'.')
                {
                    end += 1;
                }
                // exponent suffix like 1e-3 / 2.5E+4
                if end < self.src.len() && (self.src[end] == b'e' || self.src[end] == b'E') {
                    let mut e = end + 1;
                    if e < self.src.len() && (self.src[e] == b'+' || self.src[e] == b'-') {
                        e += 1;
                    }
                    if e < self.src.len() && self.src[e].is_ascii_digit() {
                        while e < self.src.len() && self.src[e].is_ascii_digit() {
                            e += 1;
                        }
                        end = e;
                    }
                }
                let text = std::str::from_utf8(&self.src[self.pos..end]).unwrap();
                let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
                    offset: start,
                    message: format!("invalid number `{text}`"),
                })?;
                self.pos = end;
                return Ok((Tok::Num(value), start));
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let mut end = self.pos;
                while end < self.src.len()
                    && (self.src[end].is_ascii_alphanumeric() || self.src[end] == b'_')
                {
                    end += 1;
                }
                let text = std::str::from_utf8(&self.src[self.pos..end]).unwrap();
                self.pos = end;
                return Ok((Tok::Ident(text.to_string()), start));
            }
            other => {
                return Err(ParseError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{}`", other as char),
                })
            }
        };
        self.pos += 1;
        Ok((tok, start))
    }
}

struct Parser<'a> {
    toks: Tokenizer<'a>,
    peeked: Option<(Tok, usize)>,
}

impl<'a> Parser<'a> {
    fn peek(&mut self) -> Result<&(Tok, usize), ParseError> {
        if self.peeked.is_none() {
            self.peeked = Some(self.toks.next()?);
        }
        Ok(self.peeked.as_ref().unwrap())
    }

    fn bump(&mut self) -> Result<(Tok, usize), ParseError> {
        match self.peeked.take() {
            Some(t) => Ok(t),
            None => self.toks.next(),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek()?.0 {
                Tok::Plus => {
                    self.bump()?;
                    let rhs = self.term()?;
                    lhs = Expr::Bin(BinOp::Add, Box::new(lhs), Box::new(rhs));
                }
                Tok::Minus => {
                    self.bump()?;
                    let rhs = self.term()?;
                    lhs = Expr::Bin(BinOp::Sub, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek()?.0 {
                Tok::Star => {
                    self.bump()?;
                    let rhs = self.unary()?;
                    lhs = Expr::Bin(BinOp::Mul, Box::new(lhs), Box::new(rhs));
                }
                Tok::Slash => {
                    self.bump()?;
                    let rhs = self.unary()?;
                    lhs = Expr::Bin(BinOp::Div, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if matches!(self.peek()?.0, Tok::Minus) {
            self.bump()?;
            let inner = self.unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if matches!(self.peek()?.0, Tok::Caret) {
            self.bump()?;
            let exponent = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let (tok, offset) = self.bump()?;
        match tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Ident(name) => {
                if matches!(self.peek()?.0, Tok::LParen) {
                    self.bump()?;
                    let mut args = vec![self.expr()?];
                    loop {
                        let (tok, off) = self.bump()?;
                        match tok {
                            Tok::Comma => args.push(self.expr()?),
                            Tok::RParen => break,
                            _ => {
                                return Err(ParseError::Syntax {
                                    offset: off,
                                    message: "expected `,` or `)` in argument list".into(),
                                })
                            }
                        }
                    }
                    let func =
                        Func::from_name(&name).ok_or_else(|| ParseError::UnknownFunction {
                            offset,
                            name: name.clone(),
                        })?;
                    if args.len() != func.arity() {
                        return Err(ParseError::Arity {
                            offset,
                            name,
                            expected: func.arity(),
                            got: args.len(),
                        });
                    }
                    Ok(Expr::Call(func, args))
                } else {
                    match name.as_str() {
                        "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                        "e" => Ok(Expr::Num(std::f64::consts::E)),
                        _ => Ok(Expr::Var(name)),
                    }
                }
            }
            Tok::LParen => {
                let inner = self.expr()?;
                let (tok, off) = self.bump()?;
                if tok != Tok::RParen {
                    return Err(ParseError::Syntax {
                        offset: off,
                        message: "expected `)`".into(),
                    });
                }
                Ok(inner)
            }
            Tok::End => Err(ParseError::Syntax {
                offset,
                message: "unexpected end of input".into(),
            }),
            other => Err(ParseError::Syntax {
                offset,
                message: format!("unexpected token {other:?}"),
            }),
        }
    }
}

/// Parses `src` into an [`Expr`], reporting errors with byte offsets.
pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let mut parser = Parser {
        toks: Tokenizer::new(src),
        peeked: None,
    };
    let e = parser.expr()?;
    let (tok, offset) = parser.bump()?;
    if tok != Tok::End {
        return Err(ParseError::Syntax {
            offset,
            message: format!("trailing input starting with {tok:?}"),
        });
    }
    Ok(e)
}

impl Expr {
    /// Evaluates the expression with all free variables supplied by `vars`.
    pub fn eval(&self, vars: &dyn VarResolver) -> Result<f64, EvalError> {
        let v = self.eval_inner(vars)?;
        if !v.is_finite() {
            return Err(EvalError::NonFinite {
                context: self.to_string(),
            });
        }
        Ok(v)
    }

    fn eval_inner(&self, vars: &dyn VarResolver) -> Result<f64, EvalError> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Var(name) => vars
                .resolve(name)
                .ok_or_else(|| EvalError::Unbound(name.clone()))?,
            Expr::Neg(inner) => -inner.eval_inner(vars)?,
            Expr::Bin(op, a, b) => {
                let a = a.eval_inner(vars)?;
                let b = b.eval_inner(vars)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call(func, args) => {
                let x = args[0].eval_inner(vars)?;
                match func {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Tanh => x.tanh(),
                    Func::Abs => x.abs(),
                    Func::Sign => {
                        if x > 0.0 {
                            1.0
                        } else if x < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    }
                    Func::Min => x.min(args[1].eval_inner(vars)?),
                    Func::Max => x.max(args[1].eval_inner(vars)?),
                }
            }
        })
    }

    /// Collects every variable name referenced by the expression.
    pub fn variables(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(name) => out.push(name.clone()),
            Expr::Neg(inner) => inner.collect_vars(out),
            Expr::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Call(_, args) => {
                for a in args {
                    a.collect_vars(out);
                }
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Bin(BinOp::Pow, ..) => 4,
            _ => 5,
        }
    }
}

impl fmt::Display for Expr {
    /// Canonical form: minimal parentheses, so `parse(print(e)) == e`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn write_child(f: &mut fmt::Formatter<'_>, child: &Expr, need: u8) -> fmt::Result {
            if child.precedence() < need {
                write!(f, "({child})")
            } else {
                write!(f, "{child}")
            }
        }
        match self {
            Expr::Num(v) => {
                if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) {
                    // keep literals nonnegative so reparsing yields Neg nodes consistently
                    write!(f, "({v})")
                } else {
                    write!(f, "{v}")
                }
            }
            Expr::Var(name) => write!(f, "{name}"),
            Expr::Neg(inner) => {
                write!(f, "-")?;
                write_child(f, inner, 3)
            }
            Expr::Bin(op, a, b) => {
                let (sym, prec) = match op {
                    BinOp::Add => ("+", 1),
                    BinOp::Sub => ("-", 1),
                    BinOp::Mul => ("*", 2),
                    BinOp::Div => ("/", 2),
                    BinOp::Pow => ("^", 4),
                };
                match op {
                    BinOp::Pow => {
                        // left child must bind tighter (left-open exponent chains stay right-assoc)
                        write_child(f, a, 5)?;
                        write!(f, "{sym}")?;
                        write_child(f, b, 3)
                    }
                    BinOp::Sub | BinOp::Div => {
                        write_child(f, a, prec)?;
                        write!(f, "{sym}")?;
                        write_child(f, b, prec + 1)
                    }
                    _ => {
                        write_child(f, a, prec)?;
                        write!(f, "{sym}")?;
                        write_child(f, b, prec)
                    }
                }
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bind<'a>(pairs: &'a [(&'a str, f64)]) -> impl Fn(&str) -> Option<f64> + 'a {
        move |name: &str| {
            pairs
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, v)| *v)
        }
    }

    #[test]
    fn parses_products_and_sums() {
        let e = parse("sin(t)*z1 + 0.5*w1").unwrap();
        let expected = Expr::Bin(
            BinOp::Add,
            Box::new(Expr::Bin(
                BinOp::Mul,
                Box::new(Expr::Call(Func::Sin, vec![Expr::Var("t".into())])),
                Box::new(Expr::Var("z1".into())),
            )),
            Box::new(Expr::Bin(
                BinOp::Mul,
                Box::new(Expr::Num(0.5)),
                Box::new(Expr::Var("w1".into())),
            )),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn power_is_right_associative() {
        let e = parse("2^3^2").unwrap();
        let v = e.eval(&bind(&[])).unwrap();
        assert_eq!(v, 512.0);
    }

    #[test]
    fn unary_minus_binds_below_power() {
        let v = parse("-2^2").unwrap().eval(&bind(&[])).unwrap();
        assert_eq!(v, -4.0);
        let v = parse("(-2)^2").unwrap().eval(&bind(&[])).unwrap();
        assert_eq!(v, 4.0);
    }

    #[test]
    fn syntax_error_carries_offset() {
        match parse("z1 +") {
            Err(ParseError::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn arity_mismatch_reported() {
        match parse("min(1)") {
            Err(ParseError::Arity { expected, got, .. }) => {
                assert_eq!(expected, 2);
                assert_eq!(got, 1);
            }
            other => panic!("expected arity error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_function_reported() {
        assert!(matches!(
            parse("foo(1)"),
            Err(ParseError::UnknownFunction { .. })
        ));
    }

    #[test]
    fn eval_basics() {
        assert_eq!(parse("sin(t)").unwrap().eval(&bind(&[("t", 0.0)])).unwrap(), 0.0);
        let v = parse("0.01*sin(z1)")
            .unwrap()
            .eval(&bind(&[("z1", 2.0)]))
            .unwrap();
        assert!((v - 0.01 * 2.0_f64.sin()).abs() < 1e-15);
        assert!((v - 0.0090930).abs() < 1e-7);
    }

    #[test]
    fn division_by_zero_is_nonfinite_error() {
        match parse("1/t").unwrap().eval(&bind(&[("t", 0.0)])) {
            Err(EvalError::NonFinite { .. }) => {}
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn unbound_variable_reported() {
        assert_eq!(
            parse("q7").unwrap().eval(&bind(&[])),
            Err(EvalError::Unbound("q7".into()))
        );
    }

    #[test]
    fn named_constants_fold() {
        let v = parse("cos(pi)").unwrap().eval(&bind(&[])).unwrap();
        assert!((v + 1.0).abs() < 1e-15);
        assert_eq!(parse("e").unwrap(), Expr::Num(std::f64::consts::E));
    }

    #[test]
    fn print_parse_roundtrip_is_idempotent() {
        for src in [
            "sin(t)*z1 + 0.5*w1",
            "2^3^2",
            "-(a+b)*c",
            "a-(b-c)",
            "a/(b*c)/d",
            "-t^2",
            "min(max(t,1),2)",
            "1e-3*t + 2.5E+2",
        ] {
            let once = parse(src).unwrap();
            let printed = once.to_string();
            let twice = parse(&printed).unwrap();
            assert_eq!(once, twice, "roundtrip failed for `{src}` -> `{printed}`");
            assert_eq!(printed, twice.to_string());
        }
    }
}
