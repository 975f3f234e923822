//! Numeric placeholder expressions.
//!
//! Grammar (standard precedence, left associative):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | primary
//! primary := number
//!          | '[' signed ',' signed ']'          uniform range sample
//!          | 'round' '(' expr (',' integer)? ')'
//!          | identifier                          previously bound tag
//!          | '(' expr ')'
//! ```
//!
//! `×`, `÷` and `−` are accepted as aliases of `*`, `/` and `-`.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::BoundValue;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NumericExpr {
    Literal(f64),
    /// Uniform draw from `[lo, hi]`. `integral` ranges round the draw to the
    /// nearest integer.
    Range { lo: f64, hi: f64, integral: bool },
    Ref(String),
    Neg(Box<NumericExpr>),
    Binary {
        op: BinOp,
        lhs: Box<NumericExpr>,
        rhs: Box<NumericExpr>,
    },
    Round { expr: Box<NumericExpr>, digits: u32 },
}

impl fmt::Display for NumericExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NumericExpr::Literal(v) => write!(f, "{v}"),
            NumericExpr::Range { lo, hi, integral } => {
                if *integral {
                    write!(f, "[{lo}, {hi}]")
                } else {
                    write!(f, "[{lo:?}, {hi:?}]")
                }
            }
            NumericExpr::Ref(name) => f.write_str(name),
            NumericExpr::Neg(inner) => write!(f, "-({inner})"),
            NumericExpr::Binary { op, lhs, rhs } => write!(f, "({lhs} {} {rhs})", op.symbol()),
            NumericExpr::Round { expr, digits } => write!(f, "round({expr}, {digits})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("column {column}: {message}")]
pub struct ExprSyntaxError {
    /// 1-based character column inside the expression source.
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("division by zero in `{0}`")]
    DivisionByZero(String),
    #[error("unresolved reference `{0}`")]
    UnresolvedReference(String),
    #[error("reference `{0}` is bound to a phrase, not a number")]
    NotNumeric(String),
    #[error("non-finite result in `{0}`")]
    NonFinite(String),
}

/// Source of range draws. The default implementation wraps a seeded RNG;
/// tests can pin the draw.
pub trait RangeSampler {
    fn draw(&mut self, lo: f64, hi: f64, integral: bool) -> f64;
}

/// Continuous uniform draw, rounded for integral ranges.
pub struct RngSampler<'a, R: Rng>(pub &'a mut R);

impl<R: Rng> RangeSampler for RngSampler<'_, R> {
    fn draw(&mut self, lo: f64, hi: f64, integral: bool) -> f64 {
        if lo == hi {
            return lo;
        }
        let v = self.0.random_range(lo..=hi);
        if integral {
            v.round().clamp(lo, hi)
        } else {
            v
        }
    }
}

impl NumericExpr {
    pub fn parse(src: &str) -> Result<NumericExpr, ExprSyntaxError> {
        let mut parser = Parser::new(src);
        let expr = parser.expr()?;
        parser.skip_ws();
        if let Some(c) = parser.peek() {
            return Err(parser.error(format!("unexpected `{c}`")));
        }
        Ok(expr)
    }

    /// Tag names referenced by this expression, in order of first use.
    pub fn references(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_refs(&mut out);
        out
    }

    fn collect_refs<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            NumericExpr::Ref(name) => {
                if !out.contains(&name.as_str()) {
                    out.push(name);
                }
            }
            NumericExpr::Neg(inner) | NumericExpr::Round { expr: inner, .. } => {
                inner.collect_refs(out)
            }
            NumericExpr::Binary { lhs, rhs, .. } => {
                lhs.collect_refs(out);
                rhs.collect_refs(out);
            }
            NumericExpr::Literal(_) | NumericExpr::Range { .. } => {}
        }
    }

    /// Every `(lo, hi)` range literal in the expression.
    pub fn ranges(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        self.visit(&mut |node| {
            if let NumericExpr::Range { lo, hi, .. } = node {
                out.push((*lo, *hi));
            }
        });
        out
    }

    fn visit<F: FnMut(&NumericExpr)>(&self, f: &mut F) {
        f(self);
        match self {
            NumericExpr::Neg(inner) | NumericExpr::Round { expr: inner, .. } => inner.visit(f),
            NumericExpr::Binary { lhs, rhs, .. } => {
                lhs.visit(f);
                rhs.visit(f);
            }
            NumericExpr::Literal(_) | NumericExpr::Range { .. } | NumericExpr::Ref(_) => {}
        }
    }

    pub fn eval(
        &self,
        bindings: &BTreeMap<String, BoundValue>,
        sampler: &mut dyn RangeSampler,
    ) -> Result<f64, EvalError> {
        let value = match self {
            NumericExpr::Literal(v) => *v,
            NumericExpr::Range { lo, hi, integral } => sampler.draw(*lo, *hi, *integral),
            NumericExpr::Ref(name) => match bindings.get(name) {
                Some(BoundValue::Number(v)) => *v,
                Some(BoundValue::Phrase(p)) => p
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| EvalError::NotNumeric(name.clone()))?,
                None => return Err(EvalError::UnresolvedReference(name.clone())),
            },
            NumericExpr::Neg(inner) => -inner.eval(bindings, sampler)?,
            NumericExpr::Binary { op, lhs, rhs } => {
                let l = lhs.eval(bindings, sampler)?;
                let r = rhs.eval(bindings, sampler)?;
                match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div => {
                        if r == 0.0 {
                            return Err(EvalError::DivisionByZero(self.to_string()));
                        }
                        l / r
                    }
                }
            }
            NumericExpr::Round { expr, digits } => {
                let v = expr.eval(bindings, sampler)?;
                let scale = 10f64.powi(*digits as i32);
                (v * scale).round() / scale
            }
        };
        if !value.is_finite() {
            return Err(EvalError::NonFinite(self.to_string()));
        }
        Ok(value)
    }
}

/// Renders a resolved number: integers without a fractional part, other
/// values with at most six decimals and no trailing zeros.
pub fn format_number(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        let r = v.round();
        if r == 0.0 {
            return "0".to_string();
        }
        return format!("{r:.0}");
    }
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn new(src: &str) -> Self {
        Parser {
            chars: src.chars().collect(),
            pos: 0,
        }
    }

    fn error(&self, message: impl Into<String>) -> ExprSyntaxError {
        ExprSyntaxError {
            column: self.pos + 1,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ExprSyntaxError> {
        if self.eat(c) {
            Ok(())
        } else {
            match self.peek() {
                Some(found) => Err(self.error(format!("expected `{c}`, found `{found}`"))),
                None => Err(self.error(format!("expected `{c}`, found end of expression"))),
            }
        }
    }

    fn additive_op(&mut self) -> Option<BinOp> {
        self.skip_ws();
        let op = match self.peek()? {
            '+' => BinOp::Add,
            '-' | '−' => BinOp::Sub,
            _ => return None,
        };
        self.pos += 1;
        Some(op)
    }

    fn multiplicative_op(&mut self) -> Option<BinOp> {
        self.skip_ws();
        let op = match self.peek()? {
            '*' | '×' => BinOp::Mul,
            '/' | '÷' => BinOp::Div,
            _ => return None,
        };
        self.pos += 1;
        Some(op)
    }

    fn expr(&mut self) -> Result<NumericExpr, ExprSyntaxError> {
        let mut lhs = self.term()?;
        while let Some(op) = self.additive_op() {
            let rhs = self.term()?;
            lhs = NumericExpr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<NumericExpr, ExprSyntaxError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.multiplicative_op() {
            let rhs = self.unary()?;
            lhs = NumericExpr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<NumericExpr, ExprSyntaxError> {
        if self.eat('-') || self.eat('−') {
            return Ok(NumericExpr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<NumericExpr, ExprSyntaxError> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.error("unexpected end of expression")),
            Some('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            Some('[') => {
                self.pos += 1;
                let (lo, lo_int) = self.signed_number()?;
                self.expect(',')?;
                let (hi, hi_int) = self.signed_number()?;
                self.expect(']')?;
                if lo > hi {
                    return Err(self.error(format!("empty range [{lo}, {hi}]")));
                }
                Ok(NumericExpr::Range {
                    lo,
                    hi,
                    integral: lo_int && hi_int,
                })
            }
            Some(c) if c.is_ascii_digit() || c == '.' => {
                let (v, _) = self.number()?;
                Ok(NumericExpr::Literal(v))
            }
            Some(c) if c.is_alphabetic() || c == '_' => {
                let start = self.pos;
                let name = self.identifier();
                if name == "round" && self.eat('(') {
                    let inner = self.expr()?;
                    let digits = if self.eat(',') {
                        self.skip_ws();
                        let (d, integral) = self.number()?;
                        if !integral || d > 12.0 {
                            return Err(self.error("round digits must be an integer in 0..=12"));
                        }
                        d as u32
                    } else {
                        0
                    };
                    self.expect(')')?;
                    return Ok(NumericExpr::Round {
                        expr: Box::new(inner),
                        digits,
                    });
                }
                if name.is_empty() {
                    self.pos = start;
                    return Err(self.error("expected identifier"));
                }
                Ok(NumericExpr::Ref(name))
            }
            Some(c) => Err(self.error(format!("unexpected `{c}`"))),
        }
    }

    fn identifier(&mut self) -> String {
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| c.is_alphanumeric() || c == '_')
        {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn signed_number(&mut self) -> Result<(f64, bool), ExprSyntaxError> {
        self.skip_ws();
        let negative = self.eat('-') || self.eat('−');
        self.skip_ws();
        let (v, integral) = self.number()?;
        Ok((if negative { -v } else { v }, integral))
    }

    /// Returns the value and whether it was written without a fractional part.
    fn number(&mut self) -> Result<(f64, bool), ExprSyntaxError> {
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_digit() || c == '.' || c == '_')
        {
            self.pos += 1;
        }
        let text: String = self.chars[start..self.pos]
            .iter()
            .filter(|c| **c != '_')
            .collect();
        if text.is_empty() {
            return Err(self.error("expected number"));
        }
        let v = text.parse::<f64>().map_err(|_| ExprSyntaxError {
            column: start + 1,
            message: format!("invalid number `{text}`"),
        })?;
        Ok((v, !text.contains('.')))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Pinned(f64);

    impl RangeSampler for Pinned {
        fn draw(&mut self, _lo: f64, _hi: f64, _integral: bool) -> f64 {
            self.0
        }
    }

    fn eval_with(src: &str, bindings: &[(&str, f64)], pinned: f64) -> Result<f64, EvalError> {
        let expr = NumericExpr::parse(src).unwrap();
        let map = bindings
            .iter()
            .map(|(k, v)| (k.to_string(), BoundValue::Number(*v)))
            .collect();
        expr.eval(&map, &mut Pinned(pinned))
    }

    #[test]
    fn literal_evaluates_to_itself() {
        assert_eq!(eval_with("100", &[], 0.0).unwrap(), 100.0);
    }

    #[test]
    fn pinned_range_divided_by_hundred() {
        // hand evaluation: 62.5 / 100
        assert_eq!(eval_with("[50, 75] / 100", &[], 62.5).unwrap(), 0.625);
    }

    #[test]
    fn reference_minus_constant() {
        assert_eq!(eval_with("percentage1 - 10", &[("percentage1", 60.0)], 0.0).unwrap(), 50.0);
        assert_eq!(eval_with("percentage1 − 10", &[("percentage1", 60.0)], 0.0).unwrap(), 50.0);
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval_with("2 + 3 * 4", &[], 0.0).unwrap(), 14.0);
        assert_eq!(eval_with("20 - 5 - 3", &[], 0.0).unwrap(), 12.0);
        assert_eq!(eval_with("64 / 4 / 2", &[], 0.0).unwrap(), 8.0);
        assert_eq!(eval_with("(2 + 3) × 4", &[], 0.0).unwrap(), 20.0);
        assert_eq!(eval_with("-3 + 10 ÷ 4", &[], 0.0).unwrap(), -0.5);
    }

    #[test]
    fn round_directive() {
        assert_eq!(eval_with("round(10 / 3, 2)", &[], 0.0).unwrap(), 3.33);
        assert_eq!(eval_with("round(7.6)", &[], 0.0).unwrap(), 8.0);
    }

    #[test]
    fn division_by_zero_is_an_error() {
        let err = eval_with("x / (y - y)", &[("x", 1.0), ("y", 3.0)], 0.0).unwrap_err();
        assert!(matches!(err, EvalError::DivisionByZero(_)));
    }

    #[test]
    fn unresolved_reference_is_an_error() {
        let err = eval_with("missing + 1", &[], 0.0).unwrap_err();
        assert_eq!(err, EvalError::UnresolvedReference("missing".into()));
    }

    #[test]
    fn range_integrality_follows_endpoint_spelling() {
        match NumericExpr::parse("[1, 5]").unwrap() {
            NumericExpr::Range { integral, .. } => assert!(integral),
            other => panic!("{other:?}"),
        }
        match NumericExpr::parse("[1.0, 5]").unwrap() {
            NumericExpr::Range { integral, .. } => assert!(!integral),
            other => panic!("{other:?}"),
        }
        match NumericExpr::parse("[-5, -1]").unwrap() {
            NumericExpr::Range { lo, hi, .. } => assert_eq!((lo, hi), (-5.0, -1.0)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_errors_report_columns() {
        let err = NumericExpr::parse("3 + * 4").unwrap_err();
        assert_eq!(err.column, 5);
        let err = NumericExpr::parse("[75, 50]").unwrap_err();
        assert!(err.message.contains("empty range"));
        assert!(NumericExpr::parse("(1 + 2").is_err());
        assert!(NumericExpr::parse("1 2").is_err());
    }

    #[test]
    fn references_in_first_use_order() {
        let expr = NumericExpr::parse("b * a + b - [1, 2]").unwrap();
        assert_eq!(expr.references(), vec!["b", "a"]);
        assert_eq!(expr.ranges(), vec![(1.0, 2.0)]);
    }

    #[test]
    fn number_formatting() {
        assert_eq!(format_number(60.0), "60");
        assert_eq!(format_number(0.625), "0.625");
        assert_eq!(format_number(0.1 + 0.2), "0.3");
        assert_eq!(format_number(-0.0), "0");
        assert_eq!(format_number(-12.5), "-12.5");
    }
}
