//! Expression trees over arithmetic primitives and field references.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::wm::{parse_number, render_number, Action, Operator, Role, Token, WorkingMemory};
use crate::Rational;

/// A composition of arithmetic primitives whose leaves are field
/// references or a literal constant. A bare field reference is the `copy`
/// primitive.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Field(Role),
    Const(Rational),
    Apply(Operator, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn apply(op: Operator, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Apply(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Field(_) | Expr::Const(_) => 0,
            Expr::Apply(_, l, r) => 1 + l.depth().max(r.depth()),
        }
    }

    /// Field roles referenced by the expression (its free variables).
    pub fn roles(&self) -> BTreeSet<Role> {
        let mut out = BTreeSet::new();
        self.collect_roles(&mut out);
        out
    }

    fn collect_roles(&self, out: &mut BTreeSet<Role>) {
        match self {
            Expr::Field(r) => {
                out.insert(*r);
            }
            Expr::Const(_) => {}
            Expr::Apply(_, l, r) => {
                l.collect_roles(out);
                r.collect_roles(out);
            }
        }
    }

    /// Leaf roles in left-to-right order, with repeats.
    pub fn leaves(&self) -> Vec<Role> {
        match self {
            Expr::Field(r) => vec![*r],
            Expr::Const(_) => vec![],
            Expr::Apply(_, l, r) => {
                let mut v = l.leaves();
                v.extend(r.leaves());
                v
            }
        }
    }

    /// Evaluates with `lookup` supplying field values. Missing fields,
    /// overflow, and division by zero all yield `None`.
    pub fn eval_with<S, F>(&self, lookup: &F) -> Option<S>
    where
        S: Scalar,
        F: Fn(Role) -> Option<S>,
    {
        match self {
            Expr::Field(r) => lookup(*r),
            Expr::Const(c) => {
                // Constants are small literals; fractional ones go through division.
                let n = S::from_int(*c.numer());
                let d = S::from_int(*c.denom());
                n.try_div(&d)
            }
            Expr::Apply(op, l, r) => {
                let a = l.eval_with(lookup)?;
                let b = r.eval_with(lookup)?;
                match op {
                    Operator::Add => a.try_add(&b),
                    Operator::Subtract => a.try_sub(&b),
                    Operator::Multiply => a.try_mul(&b),
                    Operator::Divide => a.try_div(&b),
                }
            }
        }
    }

    /// Evaluates against the numeric fields of a working memory.
    pub fn eval(&self, wm: &WorkingMemory) -> Option<Rational> {
        self.eval_with(&|role| wm.number(role).copied())
    }

    /// Canonical form: operands of commutative operators sorted.
    pub fn normalize(&self) -> Expr {
        match self {
            Expr::Apply(op, l, r) => {
                let (l, r) = (l.normalize(), r.normalize());
                if op.is_commutative() && r < l {
                    Expr::apply(*op, r, l)
                } else {
                    Expr::apply(*op, l, r)
                }
            }
            leaf => leaf.clone(),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Field(r) => f.write_str(r.name()),
            Expr::Const(c) => write!(f, "(const {})", render_number(c)),
            Expr::Apply(op, l, r) => write!(f, "({} {} {})", op.keyword(), l, r),
        }
    }
}

impl FromStr for Expr {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let tokens = tokenize(s);
        let mut pos = 0;
        let expr = parse_expr(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(format!("trailing input in `{s}`"));
        }
        Ok(expr)
    }
}

fn tokenize(s: &str) -> Vec<String> {
    s.replace('(', " ( ")
        .replace(')', " ) ")
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn parse_expr(tokens: &[String], pos: &mut usize) -> Result<Expr, String> {
    let tok = tokens.get(*pos).ok_or("unexpected end of expression")?;
    *pos += 1;
    if tok != "(" {
        return tok.parse::<Role>().map(Expr::Field);
    }
    let head = tokens.get(*pos).ok_or("missing operator")?.clone();
    *pos += 1;
    let expr = if head == "const" {
        let lit = tokens.get(*pos).ok_or("missing constant")?;
        *pos += 1;
        Expr::Const(parse_number(lit).ok_or_else(|| format!("bad constant `{lit}`"))?)
    } else {
        let op = Operator::from_keyword(&head).ok_or_else(|| format!("unknown operator `{head}`"))?;
        let l = parse_expr(tokens, pos)?;
        let r = parse_expr(tokens, pos)?;
        Expr::apply(op, l, r)
    };
    match tokens.get(*pos) {
        Some(t) if t == ")" => {
            *pos += 1;
            Ok(expr)
        }
        _ => Err("missing `)`".into()),
    }
}

/// What a skill does when it fires: compute a value, or perform one of the
/// non-numeric interface actions.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Procedure {
    Input(Expr),
    CheckBox,
    PressDone,
}

impl Procedure {
    pub fn action(&self) -> Action {
        match self {
            Procedure::Input(_) => Action::InputValue,
            Procedure::CheckBox => Action::CheckBox,
            Procedure::PressDone => Action::PressDone,
        }
    }

    pub fn expr(&self) -> Option<&Expr> {
        match self {
            Procedure::Input(e) => Some(e),
            _ => None,
        }
    }

    pub fn roles(&self) -> BTreeSet<Role> {
        self.expr().map(Expr::roles).unwrap_or_default()
    }

    /// The token this procedure would enter in `wm`, if it can be computed.
    pub fn output(&self, wm: &WorkingMemory) -> Option<Option<Token>> {
        match self {
            Procedure::Input(e) => e.eval(wm).map(|v| Some(Token::Number(v))),
            Procedure::CheckBox | Procedure::PressDone => Some(None),
        }
    }
}

impl fmt::Display for Procedure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Procedure::Input(e) => write!(f, "{e}"),
            Procedure::CheckBox => f.write_str("(check)"),
            Procedure::PressDone => f.write_str("(done)"),
        }
    }
}

impl FromStr for Procedure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "(check)" => Ok(Procedure::CheckBox),
            "(done)" => Ok(Procedure::PressDone),
            other => other.parse().map(Procedure::Input),
        }
    }
}

impl Serialize for Procedure {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Procedure {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
