//! Closed arithmetic expressions over member utilities, used for custom rewards.
//!
//! Expressions are written in prefix form:
//!
//! ```text
//! expr   := number
//!         | (utility MEMBER ALT)
//!         | (+ expr expr...) | (* expr expr...) | (- expr expr) | (neg expr)
//!         | (pow expr k)                      k a non-negative integer literal
//!         | (min expr expr...) | (max expr expr...)
//!         | (sum-over-members expr)           binds `member` inside expr
//!         | (if-positive cond then else)
//! MEMBER := `member` | member index
//! ALT    := `alt` (the alternative being scored) | alternative index
//! number := integer | p/q | decimal
//! ```
//!
//! Every well-formed expression is total on profiles large enough for the
//! indices it mentions: no division, no negative powers.

use std::fmt;

use thiserror::Error;

use crate::model::Profile;
use crate::scalar::{format_rational, parse_rational, pow, Rational, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("unexpected end of expression")]
    UnexpectedEnd,
    #[error("unexpected `{token}` at offset {offset}")]
    Unexpected { token: String, offset: usize },
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("`{op}` expects {expected} operands, got {found}")]
    Arity {
        op: &'static str,
        expected: &'static str,
        found: usize,
    },
    #[error("`member` used outside sum-over-members")]
    UnboundMember,
    #[error("invalid number `{0}`")]
    Number(String),
    #[error("invalid exponent `{0}`: expected a non-negative integer")]
    Exponent(String),
    #[error("trailing input after expression at offset {0}")]
    Trailing(usize),
    #[error("member index {index} out of range for {count} members")]
    MemberOutOfRange { index: usize, count: usize },
    #[error("alternative index {index} out of range for {count} alternatives")]
    AlternativeOutOfRange { index: usize, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemberRef {
    Bound,
    Index(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AltRef {
    Scored,
    Index(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(Rational),
    Utility(MemberRef, AltRef),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, u32),
    Min(Vec<Expr>),
    Max(Vec<Expr>),
    SumOverMembers(Box<Expr>),
    IfPositive(Box<Expr>, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn parse(text: &str) -> Result<Self, ExprError> {
        let tokens = tokenize(text);
        let mut parser = Parser {
            tokens: &tokens,
            pos: 0,
        };
        let expr = parser.expr(false)?;
        if let Some(tok) = parser.tokens.get(parser.pos) {
            return Err(ExprError::Trailing(tok.offset));
        }
        Ok(expr)
    }

    /// `Σ_i U_i(alt)`.
    pub fn utilitarian() -> Self {
        Expr::SumOverMembers(Box::new(Expr::Utility(MemberRef::Bound, AltRef::Scored)))
    }

    /// `Σ_i U_i(alt)^k`.
    pub fn sum_of_powers(k: u32) -> Self {
        Expr::SumOverMembers(Box::new(Expr::Pow(
            Box::new(Expr::Utility(MemberRef::Bound, AltRef::Scored)),
            k,
        )))
    }

    /// `U_member(alt)`.
    pub fn dictator(member: usize) -> Self {
        Expr::Utility(MemberRef::Index(member), AltRef::Scored)
    }

    /// Evaluates the expression for alternative `alt` of `profile`.
    pub fn eval<S: Scalar>(&self, profile: &Profile<S>, alt: usize) -> Result<S, ExprError> {
        self.eval_in(profile, alt, None)
    }

    fn eval_in<S: Scalar>(
        &self,
        profile: &Profile<S>,
        alt: usize,
        bound: Option<usize>,
    ) -> Result<S, ExprError> {
        let fold = |items: &[Expr], init: S, op: fn(S, S) -> S| -> Result<S, ExprError> {
            items
                .iter()
                .try_fold(init, |acc, e| Ok(op(acc, e.eval_in(profile, alt, bound)?)))
        };
        let extremum = |items: &[Expr], pick_new: fn(&S, &S) -> bool| -> Result<S, ExprError> {
            let mut best = items[0].eval_in(profile, alt, bound)?;
            for e in &items[1..] {
                let v = e.eval_in(profile, alt, bound)?;
                if pick_new(&v, &best) {
                    best = v;
                }
            }
            Ok(best)
        };
        match self {
            Expr::Const(c) => Ok(S::from_rational(c)),
            Expr::Utility(member, which) => {
                let i = match member {
                    MemberRef::Bound => bound.ok_or(ExprError::UnboundMember)?,
                    MemberRef::Index(i) => *i,
                };
                let x = match which {
                    AltRef::Scored => alt,
                    AltRef::Index(x) => *x,
                };
                if i >= profile.num_members() {
                    return Err(ExprError::MemberOutOfRange {
                        index: i,
                        count: profile.num_members(),
                    });
                }
                if x >= profile.num_alternatives() {
                    return Err(ExprError::AlternativeOutOfRange {
                        index: x,
                        count: profile.num_alternatives(),
                    });
                }
                Ok(profile.utility(i, x).clone())
            }
            Expr::Add(items) => fold(items, S::zero(), |a, b| a + b),
            Expr::Mul(items) => fold(items, S::one(), |a, b| a * b),
            Expr::Sub(a, b) => {
                Ok(a.eval_in(profile, alt, bound)? - b.eval_in(profile, alt, bound)?)
            }
            Expr::Neg(a) => Ok(-a.eval_in(profile, alt, bound)?),
            Expr::Pow(a, k) => Ok(pow(&a.eval_in(profile, alt, bound)?, *k)),
            Expr::Min(items) => extremum(items, |v, best| v < best),
            Expr::Max(items) => extremum(items, |v, best| v > best),
            Expr::SumOverMembers(body) => (0..profile.num_members())
                .try_fold(S::zero(), |acc, i| Ok(acc + body.eval_in(profile, alt, Some(i))?)),
            Expr::IfPositive(cond, then, otherwise) => {
                if cond.eval_in(profile, alt, bound)?.is_positive() {
                    then.eval_in(profile, alt, bound)
                } else {
                    otherwise.eval_in(profile, alt, bound)
                }
            }
        }
    }

    /// Largest member and alternative indices mentioned literally.
    pub fn max_indices(&self) -> (Option<usize>, Option<usize>) {
        let mut member = None;
        let mut alt = None;
        self.visit(&mut |e| {
            if let Expr::Utility(m, a) = e {
                if let MemberRef::Index(i) = m {
                    member = member.max(Some(*i));
                }
                if let AltRef::Index(x) = a {
                    alt = alt.max(Some(*x));
                }
            }
        });
        (member, alt)
    }

    fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Const(_) | Expr::Utility(..) => {}
            Expr::Add(items) | Expr::Mul(items) | Expr::Min(items) | Expr::Max(items) => {
                items.iter().for_each(|e| e.visit(f))
            }
            Expr::Sub(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::SumOverMembers(a) => a.visit(f),
            Expr::IfPositive(a, b, c) => {
                a.visit(f);
                b.visit(f);
                c.visit(f);
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |f: &mut fmt::Formatter<'_>, op: &str, items: &[Expr]| {
            write!(f, "({op}")?;
            for e in items {
                write!(f, " {e}")?;
            }
            write!(f, ")")
        };
        match self {
            Expr::Const(c) => write!(f, "{}", format_rational(c)),
            Expr::Utility(m, a) => {
                write!(f, "(utility ")?;
                match m {
                    MemberRef::Bound => write!(f, "member")?,
                    MemberRef::Index(i) => write!(f, "{i}")?,
                }
                match a {
                    AltRef::Scored => write!(f, " alt)"),
                    AltRef::Index(x) => write!(f, " {x})"),
                }
            }
            Expr::Add(items) => list(f, "+", items),
            Expr::Mul(items) => list(f, "*", items),
            Expr::Min(items) => list(f, "min", items),
            Expr::Max(items) => list(f, "max", items),
            Expr::Sub(a, b) => write!(f, "(- {a} {b})"),
            Expr::Neg(a) => write!(f, "(neg {a})"),
            Expr::Pow(a, k) => write!(f, "(pow {a} {k})"),
            Expr::SumOverMembers(a) => write!(f, "(sum-over-members {a})"),
            Expr::IfPositive(a, b, c) => write!(f, "(if-positive {a} {b} {c})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Token {
    text: String,
    offset: usize,
}

fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    for (offset, ch) in text.char_indices() {
        if ch == '(' || ch == ')' || ch.is_whitespace() {
            if !current.is_empty() {
                tokens.push(Token {
                    text: std::mem::take(&mut current),
                    offset: start,
                });
            }
            if !ch.is_whitespace() {
                tokens.push(Token {
                    text: ch.to_string(),
                    offset,
                });
            }
        } else {
            if current.is_empty() {
                start = offset;
            }
            current.push(ch);
        }
    }
    if !current.is_empty() {
        tokens.push(Token {
            text: current,
            offset: start,
        });
    }
    tokens
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
}

impl Parser<'_> {
    fn next(&mut self) -> Result<&Token, ExprError> {
        let tok = self.tokens.get(self.pos).ok_or(ExprError::UnexpectedEnd)?;
        self.pos += 1;
        Ok(tok)
    }

    fn peek_is(&self, text: &str) -> bool {
        self.tokens.get(self.pos).is_some_and(|t| t.text == text)
    }

    fn unexpected(tok: &Token) -> ExprError {
        ExprError::Unexpected {
            token: tok.text.clone(),
            offset: tok.offset,
        }
    }

    fn expr(&mut self, in_scope: bool) -> Result<Expr, ExprError> {
        let tok = self.next()?.clone();
        match tok.text.as_str() {
            "(" => {}
            ")" => return Err(Self::unexpected(&tok)),
            literal => {
                return parse_rational(literal)
                    .map(Expr::Const)
                    .map_err(|_| ExprError::Number(literal.to_string()))
            }
        }
        let op = self.next()?.clone();
        let expr = match op.text.as_str() {
            "utility" => {
                let member = match self.next()?.text.as_str() {
                    "member" if in_scope => MemberRef::Bound,
                    "member" => return Err(ExprError::UnboundMember),
                    other => MemberRef::Index(
                        other
                            .parse()
                            .map_err(|_| ExprError::Number(other.to_string()))?,
                    ),
                };
                let alt = match self.next()?.text.as_str() {
                    "alt" => AltRef::Scored,
                    other => AltRef::Index(
                        other
                            .parse()
                            .map_err(|_| ExprError::Number(other.to_string()))?,
                    ),
                };
                Expr::Utility(member, alt)
            }
            "+" => Expr::Add(self.operands("+", 1, in_scope)?),
            "*" => Expr::Mul(self.operands("*", 1, in_scope)?),
            "min" => Expr::Min(self.operands("min", 1, in_scope)?),
            "max" => Expr::Max(self.operands("max", 1, in_scope)?),
            "-" => {
                let mut items = self.exact("-", 2, in_scope)?;
                let b = items.pop().unwrap();
                let a = items.pop().unwrap();
                Expr::Sub(Box::new(a), Box::new(b))
            }
            "neg" => Expr::Neg(Box::new(self.exact("neg", 1, in_scope)?.remove(0))),
            "pow" => {
                let base = self.expr(in_scope)?;
                let k = self.next()?.text.clone();
                let k = k.parse::<u32>().map_err(|_| ExprError::Exponent(k))?;
                Expr::Pow(Box::new(base), k)
            }
            "sum-over-members" => {
                Expr::SumOverMembers(Box::new(self.exact("sum-over-members", 1, true)?.remove(0)))
            }
            "if-positive" => {
                let mut items = self.exact("if-positive", 3, in_scope)?;
                let c = items.pop().unwrap();
                let b = items.pop().unwrap();
                let a = items.pop().unwrap();
                Expr::IfPositive(Box::new(a), Box::new(b), Box::new(c))
            }
            "(" | ")" => return Err(Self::unexpected(&op)),
            other => return Err(ExprError::UnknownOperator(other.to_string())),
        };
        let close = self.next()?;
        if close.text != ")" {
            return Err(Self::unexpected(close));
        }
        Ok(expr)
    }

    fn operands(
        &mut self,
        op: &'static str,
        min: usize,
        in_scope: bool,
    ) -> Result<Vec<Expr>, ExprError> {
        let mut items = Vec::new();
        while self.pos < self.tokens.len() && !self.peek_is(")") {
            items.push(self.expr(in_scope)?);
        }
        if items.len() < min {
            return Err(ExprError::Arity {
                op,
                expected: "at least one",
                found: items.len(),
            });
        }
        Ok(items)
    }

    fn exact(&mut self, op: &'static str, n: usize, in_scope: bool) -> Result<Vec<Expr>, ExprError> {
        let items = self.operands(op, 0, in_scope)?;
        if items.len() != n {
            let expected = match n {
                1 => "exactly one",
                2 => "exactly two",
                _ => "exactly three",
            };
            return Err(ExprError::Arity {
                op,
                expected,
                found: items.len(),
            });
        }
        Ok(items)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;

    fn profile(rows: &[&[i64]]) -> Profile<Rational> {
        Profile::new(
            rows.iter()
                .map(|r| r.iter().map(|&v| rat(v, 1)).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn sum_of_cubes_parses_and_evaluates() {
        let e = Expr::parse("(sum-over-members (pow (utility member alt) 3))").unwrap();
        assert_eq!(e, Expr::sum_of_powers(3));
        let u = profile(&[&[2, 0], &[0, 1]]);
        assert_eq!(e.eval(&u, 0).unwrap(), rat(8, 1));
        assert_eq!(e.eval(&u, 1).unwrap(), rat(1, 1));
    }

    #[test]
    fn operators() {
        let u = profile(&[&[3, -1, 2], &[1, 4, -5]]);
        let cases = [
            ("(+ 1 2 1/2)", rat(7, 2)),
            ("(* (utility 0 alt) (utility 1 alt) 2)", rat(6, 1)),
            ("(- (utility 0 2) 0.5)", rat(3, 2)),
            ("(neg (utility 1 2))", rat(5, 1)),
            ("(min (utility 0 alt) (utility 1 alt))", rat(1, 1)),
            ("(max (utility 0 1) (utility 1 1) -7)", rat(4, 1)),
            ("(if-positive (utility 1 2) 10 20)", rat(20, 1)),
            ("(pow -2 3)", rat(-8, 1)),
            ("(pow 5 0)", rat(1, 1)),
        ];
        for (text, expected) in cases {
            assert_eq!(Expr::parse(text).unwrap().eval(&u, 0).unwrap(), expected, "{text}");
        }
    }

    #[test]
    fn display_round_trips() {
        for text in [
            "(sum-over-members (pow (utility member alt) 3))",
            "(if-positive (sum-over-members (utility member 2)) (sum-over-members (utility member alt)) (neg (sum-over-members (utility member alt))))",
            "(+ (* 2 (utility 0 alt)) -3/4 (min 1 2) (max 3) (- 1 2))",
        ] {
            let e = Expr::parse(text).unwrap();
            assert_eq!(e.to_string(), text);
            assert_eq!(Expr::parse(&e.to_string()).unwrap(), e);
        }
    }

    #[test]
    fn parse_errors() {
        assert_eq!(Expr::parse("(utility member alt)"), Err(ExprError::UnboundMember));
        assert_eq!(Expr::parse("(frob 1)"), Err(ExprError::UnknownOperator("frob".into())));
        assert_eq!(Expr::parse("(+ 1 2"), Err(ExprError::UnexpectedEnd));
        assert_eq!(Expr::parse("(pow 2 -1)"), Err(ExprError::Exponent("-1".into())));
        assert!(matches!(Expr::parse("(- 1)"), Err(ExprError::Arity { op: "-", .. })));
        assert!(matches!(Expr::parse("(+)"), Err(ExprError::Arity { op: "+", .. })));
        assert_eq!(Expr::parse("1 2"), Err(ExprError::Trailing(2)));
        assert_eq!(Expr::parse("x"), Err(ExprError::Number("x".into())));
        assert!(matches!(Expr::parse(")"), Err(ExprError::Unexpected { .. })));
    }

    #[test]
    fn out_of_range_index_is_an_error() {
        let u = profile(&[&[1, 2]]);
        assert_eq!(
            Expr::dictator(1).eval(&u, 0),
            Err(ExprError::MemberOutOfRange { index: 1, count: 1 })
        );
        assert_eq!(
            Expr::parse("(utility 0 5)").unwrap().eval(&u, 0),
            Err(ExprError::AlternativeOutOfRange { index: 5, count: 2 })
        );
        assert_eq!(Expr::parse("(utility 3 5)").unwrap().max_indices(), (Some(3), Some(5)));
    }
}
