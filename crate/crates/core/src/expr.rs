//! Arithmetic expressions for stock-flow rate and auxiliary definitions.
//!
//! Grammar: `+ - * /`, unary minus, parentheses, names, numeric literals.
//! `×` and `÷` are accepted as aliases. No conditionals, no function calls.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Ref(String),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("at offset {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unknown name `{0}`")]
    UnknownName(String),
}

impl Expr {
    pub fn num(v: f64) -> Self {
        Expr::Num(v)
    }

    pub fn name(n: impl Into<String>) -> Self {
        Expr::Ref(n.into())
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Self {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    /// Names referenced, in first-occurrence order, without duplicates.
    pub fn references(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_refs(&mut out);
        out
    }

    fn collect_refs<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Num(_) => {}
            Expr::Ref(n) => {
                if !out.contains(&n.as_str()) {
                    out.push(n);
                }
            }
            Expr::Neg(e) => e.collect_refs(out),
            Expr::Binary(_, a, b) => {
                a.collect_refs(out);
                b.collect_refs(out);
            }
        }
    }

    /// Evaluates with IEEE semantics; division by zero yields ±inf or NaN.
    pub fn eval(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<f64, EvalError> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Ref(n) => lookup(n).ok_or_else(|| EvalError::UnknownName(n.clone()))?,
            Expr::Neg(e) => -e.eval(lookup)?,
            Expr::Binary(op, a, b) => {
                let (x, y) = (a.eval(lookup)?, b.eval(lookup)?);
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => x / y,
                }
            }
        })
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(op, ..) => op.precedence(),
            _ => 3,
        }
    }

    pub fn all_literals_finite(&self) -> bool {
        match self {
            Expr::Num(v) => v.is_finite(),
            Expr::Ref(_) => true,
            Expr::Neg(e) => e.all_literals_finite(),
            Expr::Binary(_, a, b) => a.all_literals_finite() && b.all_literals_finite(),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Ref(n) => f.write_str(n),
            Expr::Neg(e) => {
                if e.precedence() < 3 || matches!(**e, Expr::Num(_) | Expr::Neg(_)) {
                    write!(f, "-({e})")
                } else {
                    write!(f, "-{e}")
                }
            }
            Expr::Binary(op, a, b) => {
                let p = op.precedence();
                if a.precedence() < p {
                    write!(f, "({a})")?;
                } else {
                    write!(f, "{a}")?;
                }
                write!(f, " {} ", op.symbol())?;
                // right operand keeps its grouping so the tree round-trips exactly
                if b.precedence() <= p {
                    write!(f, "({b})")
                } else {
                    write!(f, "{b}")
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Name(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let mut toks = Vec::new();
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (off, c) = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '+' | '-' | '*' | '/' => {
                toks.push((off, Tok::Op(c)));
                i += 1;
            }
            '×' => {
                toks.push((off, Tok::Op('*')));
                i += 1;
            }
            '÷' => {
                toks.push((off, Tok::Op('/')));
                i += 1;
            }
            '−' => {
                toks.push((off, Tok::Op('-')));
                i += 1;
            }
            '(' => {
                toks.push((off, Tok::LParen));
                i += 1;
            }
            ')' => {
                toks.push((off, Tok::RParen));
                i += 1;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].1.is_ascii_digit() || chars[i].1 == '.') {
                    i += 1;
                }
                if i < chars.len() && matches!(chars[i].1, 'e' | 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && matches!(chars[j].1, '+' | '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].1.is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].1.is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let end = chars.get(i).map_or(src.len(), |&(o, _)| o);
                let text = &src[off..end];
                let v: f64 = text.parse().map_err(|_| ParseError {
                    offset: chars[start].0,
                    message: format!("invalid number `{text}`"),
                })?;
                toks.push((off, Tok::Num(v)));
            }
            c if c.is_alphabetic() || c == '_' => {
                while i < chars.len()
                    && (chars[i].1.is_alphanumeric() || matches!(chars[i].1, '_' | '.'))
                {
                    i += 1;
                }
                let end = chars.get(i).map_or(src.len(), |&(o, _)| o);
                toks.push((off, Tok::Name(src[off..end].to_string())));
            }
            other => {
                return Err(ParseError {
                    offset: off,
                    message: format!("unexpected character `{other}`"),
                });
            }
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if let Some(Tok::Op('-')) = self.peek() {
            self.pos += 1;
            if let Some(Tok::Num(v)) = self.peek() {
                let v = *v;
                self.pos += 1;
                return Ok(Expr::Num(-v));
            }
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Some(Tok::Name(n)) => {
                self.pos += 1;
                Ok(Expr::Ref(n))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(&Tok::RParen) {
                    return self.err("expected `)`");
                }
                self.pos += 1;
                Ok(e)
            }
            Some(t) => self.err(format!("unexpected token {t:?}")),
            None => self.err("unexpected end of expression"),
        }
    }
}

pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
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

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn product_of_literal_and_name() {
        assert_eq!(
            parse_expr("0.01 * V_Mono").unwrap(),
            Expr::bin(BinOp::Mul, Expr::num(0.01), Expr::name("V_Mono"))
        );
    }

    #[test]
    fn precedence_and_parens() {
        let e = parse_expr("(V * 1.36 + 250) / (V * 1.36)").unwrap();
        let v = e.eval(&|n| (n == "V").then_some(2500.0)).unwrap();
        assert!((v - (1.0 + 250.0 / 3400.0)).abs() < 1e-15);
        assert_eq!(
            parse_expr("-0.9 * r + 1.9")
                .unwrap()
                .eval(&|_| Some(1.0))
                .unwrap(),
            1.9 - 0.9
        );
        assert_eq!(
            parse_expr("2 × 3 ÷ 4").unwrap().eval(&|_| None).unwrap(),
            1.5
        );
    }

    #[test]
    fn errors_carry_offsets() {
        assert_eq!(parse_expr("1 + ").unwrap_err().offset, 4);
        assert_eq!(parse_expr("a $ b").unwrap_err().offset, 2);
        assert!(parse_expr("(a").is_err());
        assert!(parse_expr("a b").is_err());
        assert_eq!(
            parse_expr("x").unwrap().eval(&|_| None),
            Err(EvalError::UnknownName("x".into()))
        );
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0u32..10_000).prop_map(|v| Expr::Num(v as f64 / 7.0)),
            "[a-z][a-z0-9_]{0,3}".prop_map(Expr::Ref),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                inner
                    .clone()
                    .prop_filter("no negated literal", |e| !matches!(e, Expr::Num(_)))
                    .prop_map(|e| Expr::Neg(Box::new(e))),
                (0..4u8, inner.clone(), inner).prop_map(|(o, a, b)| {
                    let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div][o as usize];
                    Expr::bin(op, a, b)
                }),
            ]
        })
    }

    proptest! {
        #[test]
        fn display_parse_round_trip(e in arb_expr()) {
            let text = e.to_string();
            prop_assert_eq!(parse_expr(&text).unwrap(), e);
        }
    }
}
