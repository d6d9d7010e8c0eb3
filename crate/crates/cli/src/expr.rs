//! A small arithmetic language over one variable `x`, used for model
//! coefficients and test functions in experiment configs.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?          right associative
//! atom    := number | 'x' | 'pi' | 'e' | call | '(' expr ')'
//! call    := name '(' expr (',' expr)* ')'
//! ```
//!
//! So `-x^2` is `-(x^2)` and `2^-1` is `0.5`. Functions: `sin`, `cos`,
//! `exp`, `ln`, `sqrt`, `abs` and `piecewise(c, a, b)`, which is `a` when
//! `c ≥ 0` and `b` otherwise.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("unexpected character `{ch}` at offset {pos}")]
    UnexpectedChar { ch: char, pos: usize },
    #[error("unexpected end of expression")]
    UnexpectedEnd,
    #[error("unexpected token `{token}` at offset {pos}")]
    UnexpectedToken { token: String, pos: usize },
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("function `{name}` takes {expected} argument(s), got {got}")]
    Arity { name: String, expected: usize, got: usize },
    #[error("invalid number `{0}`")]
    InvalidNumber(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Piecewise,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "piecewise" => Func::Piecewise,
            _ => return None,
        })
    }

    fn arity(self) -> usize {
        if self == Func::Piecewise {
            3
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    X,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

impl Node {
    fn eval(&self, x: f64) -> f64 {
        match self {
            Node::Num(v) => *v,
            Node::X => x,
            Node::Neg(a) => -a.eval(x),
            Node::Add(a, b) => a.eval(x) + b.eval(x),
            Node::Sub(a, b) => a.eval(x) - b.eval(x),
            Node::Mul(a, b) => a.eval(x) * b.eval(x),
            Node::Div(a, b) => a.eval(x) / b.eval(x),
            Node::Pow(a, b) => a.eval(x).powf(b.eval(x)),
            Node::Call(f, args) => {
                let v = args[0].eval(x);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Ln => v.ln(),
                    Func::Sqrt => v.sqrt(),
                    Func::Abs => v.abs(),
                    Func::Piecewise => {
                        if v >= 0.0 {
                            args[1].eval(x)
                        } else {
                            args[2].eval(x)
                        }
                    }
                }
            }
        }
    }

    fn uses_x(&self) -> bool {
        match self {
            Node::Num(_) => false,
            Node::X => true,
            Node::Neg(a) => a.uses_x(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                a.uses_x() || b.uses_x()
            }
            Node::Call(_, args) => args.iter().any(Node::uses_x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<(Token, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            // exponent part, e.g. 1e-5; `e` alone after a number is not Euler's number
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let v = f64::from_str(text).map_err(|_| ParseError::InvalidNumber(text.to_string()))?;
            out.push((Token::Num(v), start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Token::Ident(src[start..i].to_string()), start));
        } else if "+-*/^(),".contains(c) {
            out.push((Token::Op(c), i));
            i += 1;
        } else {
            let ch = src[i..].chars().next().unwrap_or(c);
            return Err(ParseError::UnexpectedChar { ch, pos: i });
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
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn next(&mut self) -> Result<(Token, usize), ParseError> {
        let t = self.tokens.get(self.pos).cloned().ok_or(ParseError::UnexpectedEnd)?;
        self.pos += 1;
        Ok(t)
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek() == Some(&Token::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, op: char) -> Result<(), ParseError> {
        let (tok, pos) = self.next()?;
        if tok == Token::Op(op) {
            Ok(())
        } else {
            Err(unexpected(&tok, pos))
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.atom()?;
        if self.eat('^') {
            return Ok(Node::Pow(Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        let (tok, pos) = self.next()?;
        match tok {
            Token::Num(v) => Ok(Node::Num(v)),
            Token::Op('(') => {
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            Token::Ident(name) => match name.as_str() {
                "x" => Ok(Node::X),
                "pi" => Ok(Node::Num(std::f64::consts::PI)),
                "e" => Ok(Node::Num(std::f64::consts::E)),
                _ => {
                    let func = Func::lookup(&name).ok_or_else(|| ParseError::UnknownIdentifier(name.clone()))?;
                    self.expect('(')?;
                    let mut args = vec![self.expr()?];
                    while self.eat(',') {
                        args.push(self.expr()?);
                    }
                    self.expect(')')?;
                    if args.len() != func.arity() {
                        return Err(ParseError::Arity { name, expected: func.arity(), got: args.len() });
                    }
                    Ok(Node::Call(func, args))
                }
            },
            other => Err(unexpected(&other, pos)),
        }
    }
}

fn unexpected(tok: &Token, pos: usize) -> ParseError {
    let token = match tok {
        Token::Num(v) => v.to_string(),
        Token::Ident(s) => s.clone(),
        Token::Op(c) => c.to_string(),
    };
    ParseError::UnexpectedToken { token, pos }
}

/// A parsed expression. Keeps its source text for display and
/// serialization.
#[derive(Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self, ParseError> {
        let tokens = tokenize(src)?;
        let mut parser = Parser { tokens, pos: 0 };
        let root = parser.expr()?;
        if let Some((tok, pos)) = parser.tokens.get(parser.pos) {
            return Err(unexpected(tok, *pos));
        }
        Ok(Self { source: src.to_string(), root })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.root.eval(x)
    }

    /// Value of an expression that does not mention `x`.
    pub fn constant(&self) -> Option<f64> {
        (!self.root.uses_x()).then(|| self.root.eval(f64::NAN))
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl FromStr for Expr {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expr::parse(s)
    }
}

impl serde::Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> serde::Deserialize<'de> for Expr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Expr::parse(&s).map_err(|e| serde::de::Error::custom(format!("`{s}`: {e}")))
    }
}
