//! Box-and-arrows tutor.
//!
//! Easy items show a first-row expression `a op1 b` and a box in the second
//! row for its value. Hard items add a second-row expression with one given
//! number, an operator, and the box, plus an arrow target `t`; the box must
//! make the second row evaluate to `t`. All first- and second-row numbers
//! and the target are visible.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{GenerationError, ProblemScript, ProblemType, Step};
use crate::expr::Expr;
use crate::scalar::Scalar;
use crate::wm::{is_whole, Operator, Role, Token};
use crate::Rational;

/// Rejection-sampling budget per item.
pub const MAX_DRAWS: usize = 10_000;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Hard,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    Constrained,
    Unconstrained,
}

impl Constraint {
    pub fn name(self) -> &'static str {
        match self {
            Constraint::Constrained => "constrained",
            Constraint::Unconstrained => "unconstrained",
        }
    }
}

impl std::fmt::Display for Constraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.name())
    }
}

/// Where the box sits in the second row of a hard item.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxPosition {
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoxGenConfig {
    /// Inclusive range for every visible number and the answer.
    pub operand: (i64, i64),
    /// Box positions hard items may use.
    pub positions: Vec<BoxPosition>,
    pub max_draws: usize,
}

impl Default for BoxGenConfig {
    fn default() -> Self {
        BoxGenConfig {
            operand: (1, 30),
            positions: vec![BoxPosition::Left, BoxPosition::Right],
            max_draws: MAX_DRAWS,
        }
    }
}

/// Visible fields of a box item in layout order.
pub fn box_layout(script: &ProblemScript) -> Vec<Role> {
    let mut roles: Vec<Role> = script
        .givens
        .keys()
        .copied()
        .chain(script.steps.iter().map(|s| s.role))
        .filter(|r| *r != Role::Done)
        .collect();
    roles.sort();
    roles.dedup();
    roles.push(Role::Done);
    roles
}

/// Depth-0 copies and depth-1 applications of the four primitives over
/// distinct visible numbers that produce `answer`. Commutative applications
/// are counted once per unordered pair.
pub fn candidate_procedures(visible: &[(Role, Rational)], answer: &Rational) -> Vec<Expr> {
    let mut out: Vec<Expr> = visible
        .iter()
        .filter(|(_, v)| v == answer)
        .map(|(r, _)| Expr::Field(*r))
        .collect();
    for op in Operator::ALL {
        for (i, (ri, vi)) in visible.iter().enumerate() {
            for (j, (rj, vj)) in visible.iter().enumerate() {
                if i == j || (op.is_commutative() && j < i) {
                    continue;
                }
                let value = match op {
                    Operator::Add => vi.try_add(vj),
                    Operator::Subtract => vi.try_sub(vj),
                    Operator::Multiply => vi.try_mul(vj),
                    Operator::Divide => vi.try_div(vj),
                };
                if value.as_ref() == Some(answer) {
                    out.push(Expr::apply(op, Expr::Field(*ri), Expr::Field(*rj)));
                }
            }
        }
    }
    out
}

fn apply(op: Operator, a: i64, b: i64) -> Option<Rational> {
    let (a, b) = (Rational::from_integer(a), Rational::from_integer(b));
    match op {
        Operator::Add => a.try_add(&b),
        Operator::Subtract => a.try_sub(&b),
        Operator::Multiply => a.try_mul(&b),
        Operator::Divide => a.try_div(&b),
    }
}

fn as_int(v: &Rational) -> i64 {
    *v.numer()
}

/// Samples a box-and-arrows item by rejection against the candidate
/// oracle.
///
/// Constrained hard items have exactly one candidate procedure and a
/// first-row value that is not an integer, so the easy rule cannot produce a
/// whole-number answer. Unconstrained hard items have at least two
/// candidates and a whole-number first-row value.
pub fn gen_box_problem<R: Rng + ?Sized>(
    difficulty: Difficulty,
    constraint: Constraint,
    problem_id: &str,
    cfg: &BoxGenConfig,
    rng: &mut R,
) -> Result<ProblemScript, GenerationError> {
    let (lo, hi) = cfg.operand;
    if lo < 1 || lo > hi {
        return Err(GenerationError::Config(format!("bad operand range {:?}", cfg.operand)));
    }
    if cfg.positions.is_empty() {
        return Err(GenerationError::Config("no box positions allowed".into()));
    }
    let in_range = |v: &Rational| v.is_integer() && (lo..=hi).contains(&as_int(v));
    for _ in 0..cfg.max_draws {
        let a = rng.gen_range(lo..=hi);
        let b = rng.gen_range(lo..=hi);
        let op1 = *Operator::ALL.choose(rng).expect("non-empty");
        let first_row = apply(op1, a, b).expect("operands are non-zero");
        let mut givens: BTreeMap<Role, Token> = [
            (Role::Row1Left, Token::int(a)),
            (Role::Row1Op, Token::Symbol(op1)),
            (Role::Row1Right, Token::int(b)),
        ]
        .into_iter()
        .collect();

        if difficulty == Difficulty::Easy {
            if !in_range(&first_row) {
                continue;
            }
            let steps = vec![Step::input(Role::Row2Right, as_int(&first_row)), Step::done()];
            return Ok(script(problem_id, ProblemType::BoxEasy, givens, steps, constraint));
        }

        let op2 = *Operator::ALL.choose(rng).expect("non-empty");
        let position = *cfg.positions.choose(rng).expect("non-empty");
        let given = rng.gen_range(lo..=hi);
        let answer = rng.gen_range(lo..=hi);
        let target = match position {
            BoxPosition::Right => apply(op2, given, answer),
            BoxPosition::Left => apply(op2, answer, given),
        };
        let Some(target) = target.filter(in_range) else {
            continue;
        };
        let (given_role, box_role) = match position {
            BoxPosition::Left => (Role::Row2Right, Role::Row2Left),
            BoxPosition::Right => (Role::Row2Left, Role::Row2Right),
        };
        givens.insert(given_role, Token::int(given));
        givens.insert(Role::Row2Op, Token::Symbol(op2));
        givens.insert(Role::ArrowTarget, Token::Number(target));

        let visible: Vec<(Role, Rational)> = givens
            .iter()
            .filter_map(|(r, t)| t.as_number().map(|v| (*r, *v)))
            .collect();
        let candidates = candidate_procedures(&visible, &Rational::from_integer(answer)).len();
        let accepted = match constraint {
            Constraint::Constrained => candidates == 1 && !first_row.is_integer(),
            Constraint::Unconstrained => candidates >= 2 && is_whole(&first_row),
        };
        if accepted {
            let steps = vec![Step::input(box_role, answer), Step::done()];
            return Ok(script(problem_id, ProblemType::BoxHard, givens, steps, constraint));
        }
    }
    Err(GenerationError::Unsatisfiable {
        constraint: constraint.to_string(),
        draws: cfg.max_draws,
    })
}

fn script(
    problem_id: &str,
    problem_type: ProblemType,
    givens: BTreeMap<Role, Token>,
    steps: Vec<Step>,
    constraint: Constraint,
) -> ProblemScript {
    ProblemScript {
        problem_id: problem_id.to_string(),
        problem_type,
        givens,
        steps,
        condition_tags: vec![constraint.name().to_string()],
    }
}
